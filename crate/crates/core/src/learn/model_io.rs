//! Per-stream model file.
//!
//! Little-endian layout: magic `MVDM`, version u32, class count u32, labels
//! u32 each, feature dim u32, lambda f64, epochs u32, seed u64, weights f32
//! (class-major), biases f32, PCA flag u32, then if set: input dim u32,
//! k u32, mean f32, components f32 (row-major), explained f32; finally the
//! feature scale f32.

use std::fs;
use std::path::Path;

use super::{PcaModel, SvmModel, SvmParams};
use crate::binio::{put_f32s, put_u32, Reader};
use crate::error::{contract, Error, Result};

const MAGIC: &[u8; 4] = b"MVDM";
const VERSION: usize = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct StreamModel {
    pub pca: Option<PcaModel>,
    /// Multiplies the (projected) features before the SVM.
    pub scale: f32,
    pub svm: SvmModel,
}

/// Reciprocal RMS norm of `xs`, so the scaled set has unit mean squared
/// norm. 1 for an empty or all-zero set.
pub fn unit_rms_scale(xs: &[Vec<f32>]) -> f32 {
    let total: f64 = xs.iter().flatten().map(|&v| v as f64 * v as f64).sum();
    if xs.is_empty() || total == 0.0 {
        return 1.0;
    }
    (xs.len() as f64 / total).sqrt() as f32
}

impl StreamModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = MAGIC.to_vec();
        put_u32(&mut out, VERSION);
        let svm = &self.svm;
        put_u32(&mut out, svm.labels.len());
        for &l in &svm.labels {
            put_u32(&mut out, l as usize);
        }
        put_u32(&mut out, svm.dim());
        out.extend_from_slice(&svm.params.lambda.to_le_bytes());
        put_u32(&mut out, svm.params.epochs);
        out.extend_from_slice(&svm.params.seed.to_le_bytes());
        for w in &svm.weights {
            put_f32s(&mut out, w);
        }
        put_f32s(&mut out, &svm.biases);
        match &self.pca {
            None => put_u32(&mut out, 0),
            Some(p) => {
                put_u32(&mut out, 1);
                put_u32(&mut out, p.dim());
                put_u32(&mut out, p.k());
                put_f32s(&mut out, &p.mean);
                for c in &p.components {
                    put_f32s(&mut out, c);
                }
                put_f32s(&mut out, &p.explained);
            }
        }
        put_f32s(&mut out, &[self.scale]);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model file");
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported model file version {version}")));
        }
        let classes = r.u32()?;
        let labels = (0..classes).map(|_| r.u32().map(|l| l as u32)).collect::<Result<Vec<_>>>()?;
        let dim = r.u32()?;
        let lambda = r.f64()?;
        let epochs = r.u32()?;
        let seed = r.u64()?;
        let weights = (0..classes).map(|_| r.f32s(dim)).collect::<Result<Vec<_>>>()?;
        let biases = r.f32s(classes)?;
        let pca = match r.u32()? {
            0 => None,
            1 => {
                let d = r.u32()?;
                let k = r.u32()?;
                let mean = r.f32s(d)?;
                let components = (0..k).map(|_| r.f32s(d)).collect::<Result<Vec<_>>>()?;
                let explained = r.f32s(k)?;
                if k != dim {
                    return Err(Error::Format(format!("PCA yields {k} values but the SVM expects {dim}")));
                }
                Some(PcaModel { mean, components, explained })
            }
            f => return Err(Error::Format(format!("bad PCA flag {f}"))),
        };
        let scale = r.f32s(1)?[0];
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Format(format!("bad feature scale {scale}")));
        }
        r.finish()?;
        Ok(Self {
            pca,
            scale,
            svm: SvmModel {
                labels,
                weights,
                biases,
                params: SvmParams { lambda, epochs, seed },
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// PCA projection (when present) and scaling: the SVM input.
    pub fn reduce(&self, v: &[f32]) -> Result<Vec<f32>> {
        let mut x = match &self.pca {
            Some(p) => p.project(v)?,
            None if v.len() == self.svm.dim() => v.to_vec(),
            None => return Err(contract!("model expects {} values, got {}", self.svm.dim(), v.len())),
        };
        x.iter_mut().for_each(|a| *a *= self.scale);
        Ok(x)
    }
}
