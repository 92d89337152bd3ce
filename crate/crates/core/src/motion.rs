//! Dense optical flow and the motion-magnitude weighting maps.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::grid::Grid;

/// Per-pixel displacement from the first frame to the second, in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub ox: Grid<f64>,
    pub oy: Grid<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowParams {
    pub iterations: usize,
    /// Weight of the smoothness term relative to brightness constancy,
    /// for intensities scaled into [0, 1].
    pub smoothness: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            iterations: 100,
            smoothness: 0.02,
        }
    }
}

/// Single-level Horn–Schunck flow.
///
/// Both frames are divided by their common absolute maximum first, so the
/// smoothness weight does not depend on the units of the input (millimetres,
/// occupancy, 8-bit intensity). Gradients are central differences averaged
/// over the two frames with replicated borders; the update is a Jacobi sweep
/// against the 4-neighbour mean.
pub fn estimate_flow(a: &Grid<f64>, b: &Grid<f64>, params: &FlowParams) -> Result<FlowField> {
    if a.dims() != b.dims() {
        return Err(contract!(
            "flow frames differ in size: {:?} vs {:?}",
            a.dims(),
            b.dims()
        ));
    }
    let (w, h) = a.dims();
    if w < 2 || h < 2 {
        return Err(contract!("flow needs frames of at least 2x2, got {w}x{h}"));
    }
    let peak = a
        .as_slice()
        .iter()
        .chain(b.as_slice())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let a = a.as_slice();
    let b = b.as_slice();
    let at = |img: &[f64], x: usize, y: usize| img[y * w + x] * scale;

    let n = w * h;
    let mut ix = vec![0.0; n];
    let mut iy = vec![0.0; n];
    let mut it = vec![0.0; n];
    for y in 0..h {
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let i = y * w + x;
            ix[i] = 0.25 * (at(a, xr, y) - at(a, xl, y) + at(b, xr, y) - at(b, xl, y));
            iy[i] = 0.25 * (at(a, x, yd) - at(a, x, yu) + at(b, x, yd) - at(b, x, yu));
            it[i] = at(b, x, y) - at(a, x, y);
        }
    }

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u_next = vec![0.0; n];
    let mut v_next = vec![0.0; n];
    for _ in 0..params.iterations {
        for y in 0..h {
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            for x in 0..w {
                let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
                let i = y * w + x;
                let u_avg = 0.25 * ((u[y * w + xl] + u[y * w + xr]) + (u[yu * w + x] + u[yd * w + x]));
                let v_avg = 0.25 * ((v[y * w + xl] + v[y * w + xr]) + (v[yu * w + x] + v[yd * w + x]));
                let common = (ix[i] * u_avg + iy[i] * v_avg + it[i])
                    / (params.smoothness + ix[i] * ix[i] + iy[i] * iy[i]);
                u_next[i] = u_avg - ix[i] * common;
                v_next[i] = v_avg - iy[i] * common;
            }
        }
        std::mem::swap(&mut u, &mut u_next);
        std::mem::swap(&mut v, &mut v_next);
    }
    Ok(FlowField {
        ox: Grid::from_vec(w, h, u)?,
        oy: Grid::from_vec(w, h, v)?,
    })
}

/// Motion-magnitude map `g >= 0`; `normalized` maps lie in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct MagnitudeMap {
    pub g: Grid<f64>,
    pub normalized: bool,
}

impl MagnitudeMap {
    pub fn uniform(width: usize, height: usize, value: f64) -> Self {
        Self {
            g: Grid::new(width, height, value),
            normalized: (0.0..=1.0).contains(&value),
        }
    }
}

/// Squared flow magnitude `ox^2 + oy^2` (no square root).
pub fn flow_magnitude(flow: &FlowField) -> MagnitudeMap {
    let (w, h) = flow.ox.dims();
    let g = flow
        .ox
        .as_slice()
        .iter()
        .zip(flow.oy.as_slice())
        .map(|(x, y)| x * x + y * y)
        .collect();
    MagnitudeMap {
        g: Grid::from_vec(w, h, g).expect("flow components share dims"),
        normalized: false,
    }
}

const NORM_EPS: f64 = 1e-12;

pub fn normalize_magnitude(m: &MagnitudeMap) -> MagnitudeMap {
    normalize_by(m, m.g.max_value())
}

fn normalize_by(m: &MagnitudeMap, max: f64) -> MagnitudeMap {
    let g = if max < NORM_EPS {
        m.g.map(|_| 0.0)
    } else {
        m.g.map(|v| v / max)
    };
    MagnitudeMap { g, normalized: true }
}

/// How magnitude maps are scaled into [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Each consecutive-frame pair by its own maximum.
    #[default]
    PerPair,
    /// Every pair by the maximum over the whole sequence.
    Global,
}

pub fn normalize_sequence(maps: &[MagnitudeMap], mode: Normalization) -> Vec<MagnitudeMap> {
    match mode {
        Normalization::PerPair => maps.iter().map(normalize_magnitude).collect(),
        Normalization::Global => {
            let max = maps
                .iter()
                .map(|m| m.g.max_value())
                .fold(f64::NEG_INFINITY, f64::max);
            maps.iter().map(|m| normalize_by(m, max)).collect()
        }
    }
}

/// Normalized flow-magnitude weights for every consecutive pair of `frames`;
/// entry `k` belongs to the pair `(k, k + 1)`.
pub fn motion_weights(frames: &[&Grid<f64>], params: &FlowParams, mode: Normalization) -> Result<Vec<MagnitudeMap>> {
    let raw = frames
        .windows(2)
        .map(|p| estimate_flow(p[0], p[1], params).map(|f| flow_magnitude(&f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize_sequence(&raw, mode))
}
