//! Forward passes for 3D convolution, 3D max pooling and dense layers.

use rayon::prelude::*;

use super::tensor::Tensor4;
use crate::error::{contract, Result};

/// 3D convolution with tanh activation. Kernel order is `(temporal, height,
/// width)`; weights are laid out `[out][in][t][h][w]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    pub in_maps: usize,
    pub out_maps: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvLayer {
    pub fn new(in_maps: usize, out_maps: usize, kernel: [usize; 3], weights: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let layer = Self {
            in_maps,
            out_maps,
            kernel,
            stride: [1; 3],
            padding: [0; 3],
            weights,
            bias,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn kernel_volume(&self) -> usize {
        self.kernel.iter().product()
    }

    pub fn fan_in(&self) -> usize {
        self.in_maps * self.kernel_volume()
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(contract!("conv kernel and stride dims must be >= 1"));
        }
        let need = self.out_maps * self.fan_in();
        if self.weights.len() != need {
            return Err(contract!("conv weights: expected {need}, got {}", self.weights.len()));
        }
        if self.bias.len() != self.out_maps {
            return Err(contract!("conv bias: expected {}, got {}", self.out_maps, self.bias.len()));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        if input[0] != self.in_maps {
            return Err(contract!("conv expects {} input maps, got {}", self.in_maps, input[0]));
        }
        Ok([
            self.out_maps,
            window_out(input[1], self.kernel[0], self.stride[0], self.padding[0])?,
            window_out(input[2], self.kernel[1], self.stride[1], self.padding[1])?,
            window_out(input[3], self.kernel[2], self.stride[2], self.padding[2])?,
        ])
    }
}

pub(crate) fn window_out(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = len + 2 * pad;
    if padded < k {
        return Err(contract!("axis of length {len} (padding {pad}) is shorter than kernel {k}"));
    }
    Ok((padded - k) / stride + 1)
}

/// Largest f32 below 1.
const BELOW_ONE: f32 = 1.0 - f32::EPSILON / 2.0;

/// tanh rounded to f32, kept inside the open interval (-1, 1).
fn tanh_f32(x: f64) -> f32 {
    (x.tanh() as f32).clamp(-BELOW_ONE, BELOW_ONE)
}

/// `out(j,z,y,x) = tanh(b_j + sum_{m,r,p,q} w[j,m,r,p,q] * in(m, z*s+r, y*s+p, x*s+q))`
/// over the zero-padded input. Accumulation runs in f64.
pub fn conv3d_forward(input: &Tensor4, layer: &ConvLayer) -> Result<Tensor4> {
    layer.validate()?;
    let out_shape = layer.output_shape(input.shape())?;
    let src = input.zero_padded(layer.padding);
    let [_, pd, ph, pw] = src.shape();
    let [_, od, oh, ow] = out_shape;
    let [kr, kp, kq] = layer.kernel;
    let [sz, sy, sx] = layer.stride;
    let plane = od * oh * ow;
    let data = src.as_slice();
    let mut out = vec![0.0f32; out_shape[0] * plane];

    out.par_chunks_mut(plane).enumerate().for_each(|(j, dst)| {
        let mut acc = vec![layer.bias[j] as f64; plane];
        let mut taps = vec![0.0f64; kq];
        for m in 0..layer.in_maps {
            let wbase = (j * layer.in_maps + m) * kr * kp * kq;
            for r in 0..kr {
                for p in 0..kp {
                    let wrow = &layer.weights[wbase + (r * kp + p) * kq..][..kq];
                    for (t, &w) in taps.iter_mut().zip(wrow) {
                        *t = w as f64;
                    }
                    if taps.iter().all(|&t| t == 0.0) {
                        continue;
                    }
                    for z in 0..od {
                        for y in 0..oh {
                            let row = ((m * pd + z * sz + r) * ph + y * sy + p) * pw;
                            let acc_row = &mut acc[(z * oh + y) * ow..(z * oh + y + 1) * ow];
                            if sx == 1 && kq == 3 {
                                let (t0, t1, t2) = (taps[0], taps[1], taps[2]);
                                let src = &data[row..row + ow + 2];
                                for (x, a) in acc_row.iter_mut().enumerate() {
                                    *a += t0 * src[x] as f64 + t1 * src[x + 1] as f64 + t2 * src[x + 2] as f64;
                                }
                            } else {
                                for (x, a) in acc_row.iter_mut().enumerate() {
                                    let base = row + x * sx;
                                    let mut s = 0.0;
                                    for (q, &t) in taps.iter().enumerate() {
                                        s += t * data[base + q] as f64;
                                    }
                                    *a += s;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (d, a) in dst.iter_mut().zip(&acc) {
            *d = tanh_f32(*a);
        }
    });
    Tensor4::from_vec(out_shape, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolLayer {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl PoolLayer {
    pub fn new(kernel: [usize; 3], stride: [usize; 3]) -> Self {
        Self {
            kernel,
            stride,
            padding: [0; 3],
        }
    }

    pub fn output_shape(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(contract!("pool kernel and stride dims must be >= 1"));
        }
        Ok([
            input[0],
            window_out(input[1], self.kernel[0], self.stride[0], self.padding[0])?,
            window_out(input[2], self.kernel[1], self.stride[1], self.padding[1])?,
            window_out(input[3], self.kernel[2], self.stride[2], self.padding[2])?,
        ])
    }
}

/// Per-channel windowed maximum. Padded cells never win.
pub fn maxpool3d(input: &Tensor4, pool: &PoolLayer) -> Result<Tensor4> {
    let out_shape = pool.output_shape(input.shape())?;
    let [_, d, h, w] = input.shape();
    let [c, od, oh, ow] = out_shape;
    let [kr, kp, kq] = pool.kernel;
    let [sz, sy, sx] = pool.stride;
    let [pz, py, px] = pool.padding;
    let mut out = Vec::with_capacity(out_shape.iter().product());
    for ch in 0..c {
        for z in 0..od {
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    for r in 0..kr {
                        let Some(iz) = (z * sz + r).checked_sub(pz).filter(|&v| v < d) else { continue };
                        for p in 0..kp {
                            let Some(iy) = (y * sy + p).checked_sub(py).filter(|&v| v < h) else { continue };
                            for q in 0..kq {
                                let Some(ix) = (x * sx + q).checked_sub(px).filter(|&v| v < w) else { continue };
                                best = best.max(input.get(ch, iz, iy, ix));
                            }
                        }
                    }
                    out.push(best);
                }
            }
        }
    }
    Tensor4::from_vec(out_shape, out)
}

/// Dense layer with tanh activation; weights are `[out][in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseLayer {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs || self.bias.len() != self.outputs {
            return Err(contract!(
                "dense layer {}->{} has {} weights and {} biases",
                self.inputs,
                self.outputs,
                self.weights.len(),
                self.bias.len()
            ));
        }
        Ok(())
    }
}

pub fn dense_forward(input: &[f32], layer: &DenseLayer) -> Result<Vec<f32>> {
    layer.validate()?;
    if input.len() != layer.inputs {
        return Err(contract!("dense layer expects {} inputs, got {}", layer.inputs, input.len()));
    }
    Ok(layer
        .weights
        .par_chunks(layer.inputs)
        .zip(&layer.bias)
        .map(|(row, &b)| {
            let s = row
                .iter()
                .zip(input)
                .fold(b as f64, |acc, (&w, &v)| acc + w as f64 * v as f64);
            tanh_f32(s)
        })
        .collect())
}
