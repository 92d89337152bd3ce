use super::eigen::jacobi_eigen;
use crate::error::{contract, Error, Result};

const JACOBI_TOL: f64 = 1e-10;

/// How many principal components to keep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PcaTarget {
    /// Smallest count whose explained-variance fraction reaches the value.
    Variance(f64),
    Components(usize),
}

impl Default for PcaTarget {
    fn default() -> Self {
        PcaTarget::Variance(0.95)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f32>,
    /// `k` orthonormal rows, strongest first.
    pub components: Vec<Vec<f32>>,
    /// Fraction of total variance carried by each kept component.
    pub explained: Vec<f32>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, v: &[f32]) -> Result<Vec<f32>> {
        if v.len() != self.dim() {
            return Err(contract!("PCA expects {} values, got {}", self.dim(), v.len()));
        }
        Ok(self
            .components
            .iter()
            .map(|c| {
                c.iter()
                    .zip(v.iter().zip(&self.mean))
                    .map(|(&ci, (&x, &m))| ci as f64 * (x as f64 - m as f64))
                    .sum::<f64>() as f32
            })
            .collect())
    }

    pub fn reconstruct(&self, p: &[f32]) -> Result<Vec<f32>> {
        if p.len() != self.k() {
            return Err(contract!("PCA reconstruction expects {} values, got {}", self.k(), p.len()));
        }
        let mut out: Vec<f64> = self.mean.iter().map(|&m| m as f64).collect();
        for (c, &coef) in self.components.iter().zip(p) {
            for (o, &ci) in out.iter_mut().zip(c) {
                *o += coef as f64 * ci as f64;
            }
        }
        Ok(out.into_iter().map(|v| v as f32).collect())
    }
}

/// Principal components of the sample covariance.
///
/// When samples are fewer than dimensions the eigenvectors come from the
/// `n x n` Gram matrix and are mapped back, which yields the same non-zero
/// spectrum at a fraction of the cost.
pub fn pca_fit(samples: &[Vec<f32>], target: PcaTarget) -> Result<PcaModel> {
    let n = samples.len();
    if n < 2 {
        return Err(contract!("PCA needs at least 2 samples, got {n}"));
    }
    let d = samples[0].len();
    if d == 0 || samples.iter().any(|s| s.len() != d) {
        return Err(contract!("PCA samples must share a non-zero length"));
    }
    let mut mean = vec![0.0f64; d];
    for s in samples {
        for (m, &v) in mean.iter_mut().zip(s) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| s.iter().zip(&mean).map(|(&v, &m)| v as f64 - m).collect())
        .collect();
    let denom = (n - 1) as f64;

    let (values, vectors) = if d <= n {
        let mut cov = vec![0.0; d * d];
        for row in &centred {
            for i in 0..d {
                let ri = row[i];
                if ri == 0.0 {
                    continue;
                }
                for j in i..d {
                    cov[i * d + j] += ri * row[j];
                }
            }
        }
        for i in 0..d {
            for j in i..d {
                let v = cov[i * d + j] / denom;
                cov[i * d + j] = v;
                cov[j * d + i] = v;
            }
        }
        let e = jacobi_eigen(&cov, d, JACOBI_TOL);
        (e.values, e.vectors)
    } else {
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>() / denom;
                gram[i * n + j] = v;
                gram[j * n + i] = v;
            }
        }
        let e = jacobi_eigen(&gram, n, JACOBI_TOL);
        let total: f64 = e.values.iter().filter(|&&l| l > 0.0).sum();
        let mut values = Vec::new();
        let mut vectors = Vec::new();
        for (l, u) in e.values.iter().zip(&e.vectors) {
            if *l <= 1e-12 * total {
                break;
            }
            let scale = 1.0 / (l * denom).sqrt();
            let mut v = vec![0.0; d];
            for (row, &ui) in centred.iter().zip(u) {
                for (vk, &x) in v.iter_mut().zip(row) {
                    *vk += ui * x;
                }
            }
            v.iter_mut().for_each(|x| *x *= scale);
            let lead = v.iter().copied().fold(0.0f64, |b, x| if x.abs() > b.abs() { x } else { b });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            values.push(*l);
            vectors.push(v);
        }
        (values, vectors)
    };

    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Rank("all samples are identical; covariance has rank 0".into()));
    }
    let fractions: Vec<f64> = values.iter().map(|v| v.max(0.0) / total).collect();
    let k = match target {
        PcaTarget::Components(k) => {
            if k == 0 {
                return Err(contract!("PCA needs at least one component"));
            }
            k.min(vectors.len())
        }
        PcaTarget::Variance(frac) => {
            if !(frac > 0.0 && frac <= 1.0) {
                return Err(contract!("variance target must be in (0, 1], got {frac}"));
            }
            let mut acc = 0.0;
            let mut k = fractions.len();
            for (i, f) in fractions.iter().enumerate() {
                acc += f;
                if acc >= frac - 1e-9 {
                    k = i + 1;
                    break;
                }
            }
            k
        }
    };
    Ok(PcaModel {
        mean: mean.into_iter().map(|m| m as f32).collect(),
        components: vectors[..k]
            .iter()
            .map(|v| v.iter().map(|&x| x as f32).collect())
            .collect(),
        explained: fractions[..k].iter().map(|&f| f as f32).collect(),
    })
}
