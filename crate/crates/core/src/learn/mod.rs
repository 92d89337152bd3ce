//! PCA, one-vs-rest linear SVMs, score fusion and the model file.

mod eigen;
mod model_io;
mod pca;
mod score;
mod svm;

pub use eigen::{jacobi_eigen, SymmetricEigen};
pub use model_io::{unit_rms_scale, StreamModel};
pub use pca::{pca_fit, PcaModel, PcaTarget};
pub use score::{exact_mean, exact_sum, fuse_scores, softmax, ScoreMode, ScoreVector};
pub use svm::{svm_score, svm_train, SvmModel, SvmParams};

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
