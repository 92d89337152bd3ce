//! One-vs-rest linear SVMs trained with Pegasos-style stochastic subgradient
//! descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::score::{softmax, ScoreMode, ScoreVector};
use crate::error::{contract, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    /// Regularisation strength, > 0.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 20,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    /// Sorted class labels; row `c` of `weights` scores `labels[c]`.
    pub labels: Vec<u32>,
    pub weights: Vec<Vec<f32>>,
    pub biases: Vec<f32>,
    pub params: SvmParams,
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn margins(&self, v: &[f32]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(contract!("SVM expects {} values, got {}", self.dim(), v.len()));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, &b)| {
                w.iter()
                    .zip(v)
                    .fold(b as f64, |acc, (&wi, &xi)| acc + wi as f64 * xi as f64)
            })
            .collect())
    }

    /// Index into `labels` of the largest margin; ties go to the lower index.
    pub fn predict_index(&self, v: &[f32]) -> Result<usize> {
        Ok(super::argmax(&self.margins(v)?))
    }
}

/// The bias is learned as the weight of a constant feature of value 1 and
/// is regularised together with the other weights.
pub fn svm_train(samples: &[Vec<f32>], labels: &[u32], params: &SvmParams) -> Result<SvmModel> {
    if samples.len() != labels.len() {
        return Err(contract!("{} samples but {} labels", samples.len(), labels.len()));
    }
    if !(params.lambda > 0.0) {
        return Err(contract!("SVM lambda must be > 0, got {}", params.lambda));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(contract!("SVM training needs at least 2 classes, got {}", classes.len()));
    }
    let d = samples[0].len();
    if samples.iter().any(|s| s.len() != d) {
        return Err(contract!("SVM samples must share one length"));
    }
    let xs: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().map(|&v| v as f64).chain([1.0]).collect())
        .collect();
    let radius = 1.0 / params.lambda.sqrt();

    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for (ci, &class) in classes.iter().enumerate() {
        let ys: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(ci as u64));
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let mut w = vec![0.0f64; d + 1];
        let mut t = 0u64;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (params.lambda * t as f64);
                let margin = ys[i] * w.iter().zip(&xs[i]).map(|(a, b)| a * b).sum::<f64>();
                let shrink = 1.0 - eta * params.lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wk, xk) in w.iter_mut().zip(&xs[i]) {
                        *wk += eta * ys[i] * xk;
                    }
                }
                let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w.iter_mut().for_each(|v| *v *= s);
                }
            }
        }
        biases.push(w[d] as f32);
        w.truncate(d);
        weights.push(w.into_iter().map(|v| v as f32).collect());
    }
    Ok(SvmModel {
        labels: classes,
        weights,
        biases,
        params: *params,
    })
}

/// Softmax over the per-class margins, or the margins themselves.
pub fn svm_score(model: &SvmModel, v: &[f32], mode: ScoreMode) -> Result<ScoreVector> {
    let margins = model.margins(v)?;
    Ok(match mode {
        ScoreMode::Softmax => ScoreVector::normalized(softmax(&margins)),
        ScoreMode::Raw => ScoreVector::raw(margins),
    })
}
