//! Layer stacks, seeded initialisation, the weight file, and feature
//! extraction.
//!
//! Weight file layout (all little-endian):
//!
//! ```text
//! [u32 layer_count][u32 c][u32 d][u32 h][u32 w]        input shape
//! per layer:
//!   [u32 kind]                                         0 conv, 1 pool, 2 flatten, 3 dense
//!   conv:  [u32 in][u32 out][u32 k x3][u32 stride x3][u32 pad x3]
//!          [f32 weights, out*in*kt*kh*kw][f32 bias, out]
//!   pool:  [u32 k x3][u32 stride x3][u32 pad x3]
//!   dense: [u32 in][u32 out][f32 weights, out*in][f32 bias, out]
//! ```
//!
//! Layer names are not stored; loaded layers are named by kind and position.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{conv3d_forward, dense_forward, maxpool3d, ConvLayer, DenseLayer, PoolLayer};
use super::tensor::Tensor4;
use super::FeatureVector;
use crate::dmm::Clip;
use crate::binio::Reader;
use crate::error::{contract, Error, Result};

/// Shape-only description of a layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        maps: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    },
    Pool {
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    },
    Flatten,
    Dense {
        units: usize,
    },
}

/// Input shape plus an ordered, named list of layer shapes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input: [usize; 4],
    pub layers: Vec<(String, LayerKind)>,
}

fn conv(maps: usize, pad: usize) -> LayerKind {
    LayerKind::Conv {
        maps,
        kernel: [3; 3],
        stride: [1; 3],
        padding: [pad; 3],
    }
}

fn pool(k: [usize; 3]) -> LayerKind {
    LayerKind::Pool {
        kernel: k,
        stride: k,
        padding: [0; 3],
    }
}

impl Architecture {
    /// The C3D stack: eight 3x3x3 convolutions (64, 128, 256, 256, 512, 512,
    /// 512, 512 maps), five max pools (the first 1x2x2, the rest 2x2x2) and
    /// two 4096-unit dense layers, on a `3 x frames x size x size` input.
    /// Convolutions pad by one so the temporal axis survives all pools; a
    /// pool whose input has a single frame left keeps it (1x2x2), which lets
    /// clip lengths other than 16 run through the same stack.
    pub fn c3d(frames: usize, size: usize) -> Self {
        let mut depth = frames;
        let mut temporal_pool = |first: bool| {
            let k = if first || depth < 2 { 1 } else { 2 };
            depth /= k;
            pool([k, 2, 2])
        };
        let layers = vec![
            ("conv1a", conv(64, 1)),
            ("pool1", temporal_pool(true)),
            ("conv2a", conv(128, 1)),
            ("pool2", temporal_pool(false)),
            ("conv3a", conv(256, 1)),
            ("conv3b", conv(256, 1)),
            ("pool3", temporal_pool(false)),
            ("conv4a", conv(512, 1)),
            ("conv4b", conv(512, 1)),
            ("pool4", temporal_pool(false)),
            ("conv5a", conv(512, 1)),
            ("conv5b", conv(512, 1)),
            ("pool5", temporal_pool(false)),
            ("flatten", LayerKind::Flatten),
            ("fc6", LayerKind::Dense { units: 4096 }),
            ("fc7", LayerKind::Dense { units: 4096 }),
        ];
        Self {
            input: [3, frames, size, size],
            layers: layers.into_iter().map(|(n, k)| (n.to_string(), k)).collect(),
        }
    }

    /// A small valid-convolution stack: one conv per entry of `maps`, each
    /// followed by a pool (1x2x2 after the first, 2x2x2 afterwards), then a
    /// single dense layer.
    pub fn compact(frames: usize, height: usize, width: usize, maps: &[usize], fc: usize) -> Self {
        let mut layers = Vec::new();
        for (i, &m) in maps.iter().enumerate() {
            layers.push((format!("conv{}", i + 1), conv(m, 0)));
            let k = if i == 0 { [1, 2, 2] } else { [2, 2, 2] };
            layers.push((format!("pool{}", i + 1), pool(k)));
        }
        layers.push(("flatten".into(), LayerKind::Flatten));
        layers.push(("fc1".into(), LayerKind::Dense { units: fc }));
        Self {
            input: [3, frames, height, width],
            layers,
        }
    }

    /// Output shape after every layer, in order.
    pub fn infer_shapes(&self) -> Result<Vec<[usize; 4]>> {
        let mut shape = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (name, kind) in &self.layers {
            shape = kind_output(kind, shape).map_err(|e| contract!("layer {name}: {e}"))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }
}

fn kind_output(kind: &LayerKind, input: [usize; 4]) -> Result<[usize; 4]> {
    use super::layers::window_out;
    match *kind {
        LayerKind::Conv { maps, kernel, stride, padding } => Ok([
            maps,
            window_out(input[1], kernel[0], stride[0], padding[0])?,
            window_out(input[2], kernel[1], stride[1], padding[1])?,
            window_out(input[3], kernel[2], stride[2], padding[2])?,
        ]),
        LayerKind::Pool { kernel, stride, padding } => PoolLayer { kernel, stride, padding }.output_shape(input),
        LayerKind::Flatten => Ok([input.iter().product(), 1, 1, 1]),
        LayerKind::Dense { units } => {
            if input[1..] != [1, 1, 1] {
                return Err(contract!("dense layer needs a flattened input, got {input:?}"));
            }
            Ok([units, 1, 1, 1])
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Pool(PoolLayer),
    Flatten,
    Dense(DenseLayer),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedLayer {
    pub name: String,
    pub layer: Layer,
}

/// A layer stack with concrete weights.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkSpec {
    pub input: [usize; 4],
    pub layers: Vec<NamedLayer>,
}

impl NetworkSpec {
    /// Weights and biases drawn from `uniform(-s, s)` with `s = 1/sqrt(fan_in)`.
    pub fn seeded(arch: &Architecture, seed: u64) -> Result<Self> {
        let shapes = arch.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prev = arch.input;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for ((name, kind), &shape) in arch.layers.iter().zip(&shapes) {
            let layer = match *kind {
                LayerKind::Conv { maps, kernel, stride, padding } => {
                    let fan_in = prev[0] * kernel.iter().product::<usize>();
                    let (weights, bias) = uniform_params(&mut rng, fan_in, maps);
                    Layer::Conv(ConvLayer {
                        in_maps: prev[0],
                        out_maps: maps,
                        kernel,
                        stride,
                        padding,
                        weights,
                        bias,
                    })
                }
                LayerKind::Pool { kernel, stride, padding } => Layer::Pool(PoolLayer { kernel, stride, padding }),
                LayerKind::Flatten => Layer::Flatten,
                LayerKind::Dense { units } => {
                    let (weights, bias) = uniform_params(&mut rng, prev[0], units);
                    Layer::Dense(DenseLayer {
                        inputs: prev[0],
                        outputs: units,
                        weights,
                        bias,
                    })
                }
            };
            layers.push(NamedLayer { name: name.clone(), layer });
            prev = shape;
        }
        Ok(Self { input: arch.input, layers })
    }

    pub fn infer_shapes(&self) -> Result<Vec<[usize; 4]>> {
        let mut shape = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            shape = layer_output(&l.layer, shape).map_err(|e| contract!("layer {}: {e}", l.name))?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Runs the stack on `input`, returning each layer's output. Stops after
    /// layer `until` (inclusive) when given.
    pub fn forward_trace(&self, input: &Tensor4, until: Option<usize>) -> Result<Vec<Tensor4>> {
        if input.shape() != self.input {
            return Err(contract!("network expects input {:?}, got {:?}", self.input, input.shape()));
        }
        let last = until.unwrap_or(self.layers.len().saturating_sub(1));
        let mut outs: Vec<Tensor4> = Vec::with_capacity(last + 1);
        for l in self.layers.iter().take(last + 1) {
            let x = outs.last().unwrap_or(input);
            let y = apply(&l.layer, x).map_err(|e| contract!("layer {}: {e}", l.name))?;
            outs.push(y);
        }
        Ok(outs)
    }

    fn first_dense(&self) -> Option<usize> {
        self.layers.iter().position(|l| matches!(l.layer, Layer::Dense(_)))
    }

    /// Activations of the first dense layer for `input`.
    pub fn features(&self, input: &Tensor4) -> Result<Vec<f32>> {
        let idx = self
            .first_dense()
            .ok_or_else(|| contract!("network has no dense layer to read features from"))?;
        let mut x = None::<Tensor4>;
        if input.shape() != self.input {
            return Err(contract!("network expects input {:?}, got {:?}", self.input, input.shape()));
        }
        for l in &self.layers[..=idx] {
            let y = apply(&l.layer, x.as_ref().unwrap_or(input)).map_err(|e| contract!("layer {}: {e}", l.name))?;
            x = Some(y);
        }
        Ok(x.expect("at least one layer ran").into_vec())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?);
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        f.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put = |v: usize, out: &mut Vec<u8>| out.extend_from_slice(&(v as u32).to_le_bytes());
        put(self.layers.len(), &mut out);
        for d in self.input {
            put(d, &mut out);
        }
        let floats = |vals: &[f32], out: &mut Vec<u8>| {
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for l in &self.layers {
            match &l.layer {
                Layer::Conv(c) => {
                    put(0, &mut out);
                    put(c.in_maps, &mut out);
                    put(c.out_maps, &mut out);
                    for v in c.kernel.iter().chain(&c.stride).chain(&c.padding) {
                        put(*v, &mut out);
                    }
                    floats(&c.weights, &mut out);
                    floats(&c.bias, &mut out);
                }
                Layer::Pool(p) => {
                    put(1, &mut out);
                    for v in p.kernel.iter().chain(&p.stride).chain(&p.padding) {
                        put(*v, &mut out);
                    }
                }
                Layer::Flatten => put(2, &mut out),
                Layer::Dense(d) => {
                    put(3, &mut out);
                    put(d.inputs, &mut out);
                    put(d.outputs, &mut out);
                    floats(&d.weights, &mut out);
                    floats(&d.bias, &mut out);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "weight file");
        let count = r.u32()?;
        let input = [r.u32()?, r.u32()?, r.u32()?, r.u32()?];
        let mut layers = Vec::with_capacity(count);
        for i in 0..count {
            let (name, layer) = match r.u32()? {
                0 => {
                    let (in_maps, out_maps) = (r.u32()?, r.u32()?);
                    let kernel = r.triple()?;
                    let stride = r.triple()?;
                    let padding = r.triple()?;
                    let weights = r.f32s(in_maps * out_maps * kernel.iter().product::<usize>())?;
                    let bias = r.f32s(out_maps)?;
                    let c = ConvLayer { in_maps, out_maps, kernel, stride, padding, weights, bias };
                    c.validate()?;
                    ("conv", Layer::Conv(c))
                }
                1 => {
                    let kernel = r.triple()?;
                    let stride = r.triple()?;
                    let padding = r.triple()?;
                    ("pool", Layer::Pool(PoolLayer { kernel, stride, padding }))
                }
                2 => ("flatten", Layer::Flatten),
                3 => {
                    let (inputs, outputs) = (r.u32()?, r.u32()?);
                    let weights = r.f32s(inputs * outputs)?;
                    let bias = r.f32s(outputs)?;
                    ("dense", Layer::Dense(DenseLayer { inputs, outputs, weights, bias }))
                }
                k => return Err(Error::Parse(format!("unknown layer kind {k} at layer {i}"))),
            };
            layers.push(NamedLayer {
                name: format!("{name}{i}"),
                layer,
            });
        }
        r.finish()?;
        let net = Self { input, layers };
        net.infer_shapes()?;
        Ok(net)
    }
}

fn uniform_params(rng: &mut ChaCha8Rng, fan_in: usize, outputs: usize) -> (Vec<f32>, Vec<f32>) {
    let s = 1.0 / (fan_in as f32).sqrt();
    let weights = (0..fan_in * outputs).map(|_| rng.random_range(-s..s)).collect();
    let bias = (0..outputs).map(|_| rng.random_range(-s..s)).collect();
    (weights, bias)
}

fn layer_output(layer: &Layer, input: [usize; 4]) -> Result<[usize; 4]> {
    match layer {
        Layer::Conv(c) => c.output_shape(input),
        Layer::Pool(p) => p.output_shape(input),
        Layer::Flatten => Ok([input.iter().product(), 1, 1, 1]),
        Layer::Dense(d) => {
            if input[1..] != [1, 1, 1] || input[0] != d.inputs {
                return Err(contract!("dense layer expects [{}, 1, 1, 1], got {input:?}", d.inputs));
            }
            Ok([d.outputs, 1, 1, 1])
        }
    }
}

fn apply(layer: &Layer, x: &Tensor4) -> Result<Tensor4> {
    match layer {
        Layer::Conv(c) => conv3d_forward(x, c),
        Layer::Pool(p) => maxpool3d(x, p),
        Layer::Flatten => Ok(x.clone().flattened()),
        Layer::Dense(d) => {
            layer_output(layer, x.shape())?;
            let y = dense_forward(x.as_slice(), d)?;
            Tensor4::from_vec([d.outputs, 1, 1, 1], y)
        }
    }
}

/// Channels-first tensor `(3, frames, height, width)` with intensities in [0, 1].
pub fn clip_tensor(clip: &Clip) -> Tensor4 {
    let (w, h) = clip.dims();
    let frames = clip.frames();
    Tensor4::from_fn([3, frames.len(), h, w], |c, z, y, x| frames[z].get(x, y)[c] as f32 / 255.0)
}

/// First dense-layer activations of `net` on `clip`.
pub fn extract_features(clip: &Clip, net: &NetworkSpec) -> Result<FeatureVector> {
    let values = net.features(&clip_tensor(clip))?;
    Ok(FeatureVector::new(values))
}
