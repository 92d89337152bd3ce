//! Forward-only 3D convolutional feature extraction.

mod layers;
mod network;
mod tensor;

pub use layers::{conv3d_forward, dense_forward, maxpool3d, ConvLayer, DenseLayer, PoolLayer};
pub use network::{clip_tensor, extract_features, Architecture, Layer, LayerKind, NamedLayer, NetworkSpec};
pub use tensor::Tensor4;

use crate::dmm::Window;
use crate::error::{contract, Result};

/// Where a feature vector came from: the producing stream, its temporal
/// window and view angle (for depth streams), and the clip's end index.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub stream: String,
    pub window: Option<Window>,
    pub angle: Option<f64>,
    pub clip_end: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub provenance: Provenance,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>) -> Self {
        Self {
            values,
            provenance: Provenance::default(),
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `xy ∥ yz ∥ xz` for three plane features of the same window, angle and clip.
pub fn concat_views(xy: &FeatureVector, yz: &FeatureVector, xz: &FeatureVector) -> Result<FeatureVector> {
    let key = |f: &FeatureVector| (f.provenance.window, f.provenance.angle, f.provenance.clip_end);
    if key(xy) != key(yz) || key(xy) != key(xz) {
        return Err(contract!(
            "cannot concatenate views of different provenance: {:?}, {:?}, {:?}",
            key(xy),
            key(yz),
            key(xz)
        ));
    }
    let mut values = Vec::with_capacity(xy.len() + yz.len() + xz.len());
    values.extend_from_slice(&xy.values);
    values.extend_from_slice(&yz.values);
    values.extend_from_slice(&xz.values);
    Ok(FeatureVector {
        values,
        provenance: Provenance {
            stream: format!("{}|{}|{}", xy.provenance.stream, yz.provenance.stream, xz.provenance.stream),
            ..xy.provenance.clone()
        },
    })
}
