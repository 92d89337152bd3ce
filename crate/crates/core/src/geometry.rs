//! Depth lifting, virtual-camera rotation, z-buffered reprojection, and the
//! three orthogonal Cartesian projections used by depth motion maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::videoio::DepthFrame;

/// Pinhole intrinsics with square pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub const KINECT_FOCAL_320: f64 = 285.63;

    pub fn new(focal: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::Config(format!("focal length must be > 0, got {focal}")));
        }
        Ok(Self { focal, cx, cy })
    }

    /// Kinect-v1 scale intrinsics. The focal length is quoted for 320 px wide
    /// frames and scaled linearly for other widths.
    pub fn kinect_default(width: usize, height: usize) -> Self {
        Self {
            focal: Self::KINECT_FOCAL_320 * width as f64 / 320.0,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }
}

/// Camera-centred points in millimetres (x right, y down, z forward).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, offset: [f64; 3]) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + offset[0], p[1] + offset[1], p[2] + offset[2]])
                .collect(),
        }
    }
}

/// Yaw `alpha` about the vertical axis followed by pitch `beta` about the
/// horizontal axis, both in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl RotationSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(-180.0..=180.0).contains(&v) {
                return Err(Error::Config(format!("{name}={v} outside [-180, 180]")));
            }
        }
        Ok(Self { alpha, beta })
    }

    pub fn yaw(alpha: f64) -> Self {
        Self { alpha, beta: 0.0 }
    }

    pub fn is_identity(&self) -> bool {
        self.alpha == 0.0 && self.beta == 0.0
    }

    pub fn inverse_yaw(&self) -> Self {
        Self {
            alpha: -self.alpha,
            beta: -self.beta,
        }
    }

    /// `R_pitch(beta) * R_yaw(alpha)`, row-major.
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (sa, ca) = self.alpha.to_radians().sin_cos();
        let (sb, cb) = self.beta.to_radians().sin_cos();
        let yaw = [[ca, 0.0, sa], [0.0, 1.0, 0.0], [-sa, 0.0, ca]];
        let pitch = [[1.0, 0.0, 0.0], [0.0, cb, -sb], [0.0, sb, cb]];
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| pitch[i][k] * yaw[k][j]).sum();
            }
        }
        m
    }
}

pub fn depth_to_points(frame: &DepthFrame, intr: &Intrinsics) -> PointCloud {
    let mut points = Vec::with_capacity(frame.nonzero_count());
    for v in 0..frame.height() {
        for u in 0..frame.width() {
            let d = frame.depth.get(u, v);
            if d == 0 {
                continue;
            }
            let z = d as f64;
            points.push([
                (u as f64 - intr.cx) * z / intr.focal,
                (v as f64 - intr.cy) * z / intr.focal,
                z,
            ]);
        }
    }
    PointCloud { points }
}

pub fn rotate_points(cloud: &PointCloud, spec: &RotationSpec) -> PointCloud {
    let m = spec.matrix();
    PointCloud {
        points: cloud
            .points
            .iter()
            .map(|p| {
                [
                    m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
                    m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
                    m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
                ]
            })
            .collect(),
    }
}

/// Forward projection with a z-buffer: the nearest point wins each pixel and
/// pixels that receive no point stay 0. No hole filling.
pub fn project_points(cloud: &PointCloud, intr: &Intrinsics, width: usize, height: usize) -> DepthFrame {
    let mut depth = Grid::new(width, height, 0u32);
    for p in &cloud.points {
        let z = p[2];
        if !(z >= 0.5) || !z.is_finite() {
            continue;
        }
        let u = (intr.focal * p[0] / z + intr.cx).round();
        let v = (intr.focal * p[1] / z + intr.cy).round();
        if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
            continue;
        }
        let (u, v) = (u as usize, v as usize);
        let zq = z.round().min(u32::MAX as f64) as u32;
        let cur = depth.get(u, v);
        if cur == 0 || zq < cur {
            depth.set(u, v, zq);
        }
    }
    DepthFrame::new(depth, 0)
}

/// Single 3x3 median pass over empty pixels that have at least five
/// non-empty neighbours. Pixels that already hold a reading are untouched.
pub fn fill_holes(frame: &DepthFrame) -> DepthFrame {
    let src = &frame.depth;
    let (w, h) = src.dims();
    let mut out = src.clone();
    let mut neigh = Vec::with_capacity(8);
    for y in 0..h {
        for x in 0..w {
            if src.get(x, y) != 0 {
                continue;
            }
            neigh.clear();
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let d = src.get(nx as usize, ny as usize);
                    if d != 0 {
                        neigh.push(d);
                    }
                }
            }
            if neigh.len() >= 5 {
                neigh.sort_unstable();
                out.set(x, y, neigh[(neigh.len() - 1) / 2]);
            }
        }
    }
    DepthFrame::new(out, frame.index)
}

pub fn points_to_depth(cloud: &PointCloud, intr: &Intrinsics, width: usize, height: usize) -> DepthFrame {
    fill_holes(&project_points(cloud, intr, width, height))
}

/// Renders `frame` from a virtual camera rotated by `rot` about `pivot`.
///
/// The identity rotation returns the frame untouched: no resampling happens,
/// so there are no reprojection holes to fill.
pub fn synthesize_view(frame: &DepthFrame, intr: &Intrinsics, rot: &RotationSpec, pivot: [f64; 3]) -> DepthFrame {
    if rot.is_identity() {
        return frame.clone();
    }
    let centred = depth_to_points(frame, intr).translated([-pivot[0], -pivot[1], -pivot[2]]);
    let rotated = rotate_points(&centred, rot).translated(pivot);
    let mut out = points_to_depth(&rotated, intr, frame.width(), frame.height());
    out.index = frame.index;
    out
}

/// Centroid of the lifted points of `frame`, or `None` for an empty frame.
pub fn centroid(frame: &DepthFrame, intr: &Intrinsics) -> Option<[f64; 3]> {
    let cloud = depth_to_points(frame, intr);
    if cloud.is_empty() {
        return None;
    }
    let n = cloud.len() as f64;
    let mut c = [0.0; 3];
    for p in &cloud.points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    Some(c.map(|v| v / n))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Plane {
    Xy,
    Yz,
    Xz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Yz, Plane::Xz];

    pub fn as_str(&self) -> &'static str {
        match self {
            Plane::Xy => "xy",
            Plane::Yz => "yz",
            Plane::Xz => "xz",
        }
    }
}

impl fmt::Display for Plane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(Plane::Xy),
            "yz" => Ok(Plane::Yz),
            "xz" => Ok(Plane::Xz),
            other => Err(Error::Config(format!("unknown plane {other:?}"))),
        }
    }
}

/// Quantization of the depth axis for the side and top projections.
/// Bin `k` covers depths `[k * size_mm, (k + 1) * size_mm)`; deeper readings
/// fall outside the map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinParams {
    pub size_mm: u32,
    pub count: usize,
}

impl Default for BinParams {
    fn default() -> Self {
        Self {
            size_mm: 10,
            count: 500,
        }
    }
}

impl BinParams {
    #[inline]
    pub fn bin_of(&self, depth: u32) -> Option<usize> {
        if depth == 0 {
            return None;
        }
        let b = (depth / self.size_mm) as usize;
        (b < self.count).then_some(b)
    }
}

/// A projected map. `xy` is the depth image itself; `yz` is indexed
/// `(zbin, y)` with depth bins along the columns; `xz` is indexed `(x, zbin)`
/// with depth bins along the rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedMap {
    pub plane: Plane,
    pub angle: f64,
    pub grid: Grid<f64>,
    pub bins: BinParams,
}

pub fn project_cartesian(frame: &DepthFrame, bins: &BinParams) -> Result<[ProjectedMap; 3]> {
    if bins.count == 0 || bins.size_mm == 0 {
        return Err(Error::Config("depth bins need count >= 1 and size >= 1 mm".into()));
    }
    let (w, h) = (frame.width(), frame.height());
    let xy = frame.depth.map(|d| d as f64);
    let mut yz = Grid::new(bins.count, h, 0.0);
    let mut xz = Grid::new(w, bins.count, 0.0);
    for y in 0..h {
        for x in 0..w {
            if let Some(b) = bins.bin_of(frame.depth.get(x, y)) {
                yz.set(b, y, 1.0);
                xz.set(x, b, 1.0);
            }
        }
    }
    let map = |plane, grid| ProjectedMap {
        plane,
        angle: 0.0,
        grid,
        bins: *bins,
    };
    Ok([map(Plane::Xy, xy), map(Plane::Yz, yz), map(Plane::Xz, xz)])
}
