use crate::error::{contract, Result};

/// Dense `(channels, depth, height, width)` tensor, row-major with width
/// fastest. Depth is the temporal axis.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    shape: [usize; 4],
    data: Vec<f32>,
}

impl Tensor4 {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(contract!("tensor dims must be >= 1, got {shape:?}"));
        }
        if data.len() != shape.iter().product::<usize>() {
            return Err(contract!(
                "tensor {shape:?} needs {} values, got {}",
                shape.iter().product::<usize>(),
                data.len()
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn from_fn(shape: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f32) -> Self {
        let [c, d, h, w] = shape;
        let mut data = Vec::with_capacity(c * d * h * w);
        for ci in 0..c {
            for z in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ci, z, y, x));
                    }
                }
            }
        }
        Self { shape, data }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    #[inline]
    pub fn index(&self, c: usize, z: usize, y: usize, x: usize) -> usize {
        let [_, d, h, w] = self.shape;
        ((c * d + z) * h + y) * w + x
    }

    #[inline]
    pub fn get(&self, c: usize, z: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(c, z, y, x)]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Copy with `pad` zeros on both sides of the depth, height and width axes.
    pub fn zero_padded(&self, pad: [usize; 3]) -> Tensor4 {
        if pad == [0; 3] {
            return self.clone();
        }
        let [c, d, h, w] = self.shape;
        let shape = [c, d + 2 * pad[0], h + 2 * pad[1], w + 2 * pad[2]];
        let mut out = Tensor4::zeros(shape);
        for ci in 0..c {
            for z in 0..d {
                for y in 0..h {
                    let src = self.index(ci, z, y, 0);
                    let dst = out.index(ci, z + pad[0], y + pad[1], pad[2]);
                    out.data[dst..dst + w].copy_from_slice(&self.data[src..src + w]);
                }
            }
        }
        out
    }

    /// The same values viewed as `(len, 1, 1, 1)`.
    pub fn flattened(self) -> Tensor4 {
        Tensor4 {
            shape: [self.data.len(), 1, 1, 1],
            data: self.data,
        }
    }
}
