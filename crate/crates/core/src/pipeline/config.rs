use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dmm::Window;
use crate::error::{Error, Result};
use crate::geometry::{BinParams, Intrinsics, Plane};
use crate::learn::{PcaTarget, ScoreMode, SvmParams};
use crate::motion::{FlowParams, Normalization};
use crate::neural::Architecture;

/// Feature extractor architecture shared by every network of the plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NetworkConfig {
    C3d,
    Compact { conv_maps: Vec<usize>, fc: usize },
}

impl NetworkConfig {
    pub fn architecture(&self, frames: usize, width: usize, height: usize) -> Result<Architecture> {
        match self {
            NetworkConfig::C3d => {
                if width != height {
                    return Err(Error::Config(format!("the C3D stack needs a square render size, got {width}x{height}")));
                }
                Ok(Architecture::c3d(frames, width))
            }
            NetworkConfig::Compact { conv_maps, fc } => {
                if conv_maps.is_empty() || *fc == 0 {
                    return Err(Error::Config("compact network needs conv maps and fc > 0".into()));
                }
                Ok(Architecture::compact(frames, height, width, conv_maps, *fc))
            }
        }
    }
}

/// Rotation centre for view synthesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PivotMode {
    /// Centroid of the first non-empty frame of each sequence.
    #[default]
    Auto,
    Fixed([f64; 3]),
}

/// How the three plane streams of one window and angle feed their classifiers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlaneFusion {
    /// Every plane stream sees the `xy ∥ yz ∥ xz` feature concatenation.
    #[default]
    Concat,
    /// Every plane stream sees only its own plane's features.
    Score,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PcaConfig {
    pub variance: f64,
    /// Overrides `variance` when set.
    pub components: Option<usize>,
}

impl Default for PcaConfig {
    fn default() -> Self {
        Self {
            variance: 0.95,
            components: None,
        }
    }
}

impl PcaConfig {
    pub fn target(&self) -> PcaTarget {
        match self.components {
            Some(k) => PcaTarget::Components(k),
            None => PcaTarget::Variance(self.variance),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        let p = SvmParams::default();
        Self {
            lambda: p.lambda,
            epochs: p.epochs,
            seed: p.seed,
        }
    }
}

impl SvmConfig {
    pub fn params(&self) -> SvmParams {
        SvmParams {
            lambda: self.lambda,
            epochs: self.epochs,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub poses: Vec<String>,
    pub planes: Vec<Plane>,
    /// View angles in degrees.
    pub angles: Vec<f64>,
    /// Pitch applied with every synthesized view, in degrees.
    pub pitch: f64,
    pub depth_windows: Vec<Window>,
    /// Clip lengths of the RGB streams.
    pub rgb_windows: Vec<usize>,
    /// Clip length of the depth streams.
    pub dmm_clip: usize,
    /// `[width, height]` of rendered frames.
    pub render_size: [usize; 2],
    pub network: NetworkConfig,
    /// Network seed; each network derives its own seed from it.
    pub seed: u64,
    /// Load `<key>.weights` files from here instead of seeding networks.
    pub weights_dir: Option<PathBuf>,
    /// Defaults to the Kinect intrinsics scaled to the frame width.
    pub intrinsics: Option<Intrinsics>,
    pub bins: BinParams,
    pub pivot: PivotMode,
    /// `false` feeds every angle the unrotated sequence.
    pub view_synthesis: bool,
    pub flow: FlowParams,
    pub normalization: Normalization,
    pub noise_floor: f64,
    pub plane_fusion: PlaneFusion,
    pub pca: PcaConfig,
    pub svm: SvmConfig,
    pub score_mode: ScoreMode,
    /// Feed jet-rendered depth frames to the RGB streams (depth-only datasets).
    pub depth_as_rgb: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            poses: vec!["sitting".into(), "standing".into()],
            planes: Plane::ALL.to_vec(),
            angles: (-3..=3).map(|k| k as f64 * 15.0).collect(),
            pitch: 0.0,
            depth_windows: vec![Window::Frames(5), Window::Frames(10), Window::All],
            rgb_windows: vec![10, 16, 25],
            dmm_clip: 16,
            render_size: [112, 112],
            network: NetworkConfig::C3d,
            seed: 1,
            weights_dir: None,
            intrinsics: None,
            bins: BinParams::default(),
            pivot: PivotMode::Auto,
            view_synthesis: true,
            flow: FlowParams::default(),
            normalization: Normalization::default(),
            noise_floor: 0.0,
            plane_fusion: PlaneFusion::default(),
            pca: PcaConfig::default(),
            svm: SvmConfig::default(),
            score_mode: ScoreMode::default(),
            depth_as_rgb: false,
        }
    }
}

impl PipelineConfig {
    /// Laptop-sized settings for the synthetic dataset: three views, two
    /// depth windows, two RGB windows, 32x32 renders and a two-conv network.
    pub fn desk() -> Self {
        Self {
            angles: vec![-30.0, 0.0, 30.0],
            depth_windows: vec![Window::Frames(5), Window::All],
            rgb_windows: vec![10, 16],
            render_size: [32, 32],
            network: NetworkConfig::Compact {
                conv_maps: vec![8, 16],
                fc: 64,
            },
            bins: BinParams { size_mm: 40, count: 80 },
            ..Self::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if self.poses.is_empty() || self.planes.is_empty() || self.angles.is_empty() || self.depth_windows.is_empty() {
            return err("poses, planes, angles and depth windows must all be non-empty".into());
        }
        if !all_distinct(self.poses.iter()) || !all_distinct(self.planes.iter()) || !all_distinct(self.depth_windows.iter()) {
            return err("poses, planes and depth windows must not repeat".into());
        }
        if !all_distinct(self.angles.iter().map(|a| a.to_bits())) || !all_distinct(self.rgb_windows.iter()) {
            return err("angles and RGB windows must not repeat".into());
        }
        if let Some(p) = self.poses.iter().find(|p| p.is_empty() || p.contains(['/', '\t', ' '])) {
            return err(format!("bad pose name {p:?}"));
        }
        for &a in self.angles.iter().chain([&self.pitch]) {
            if !(-180.0..=180.0).contains(&a) {
                return err(format!("angle {a} outside [-180, 180]"));
            }
        }
        if self.depth_windows.iter().any(|w| matches!(w, Window::Frames(n) if *n < 2)) {
            return err("depth windows must be >= 2 frames or all".into());
        }
        if self.rgb_windows.iter().any(|&r| r < 2) {
            return err("RGB windows must be >= 2 frames".into());
        }
        if self.dmm_clip == 0 {
            return err("dmm_clip must be >= 1".into());
        }
        let [w, h] = self.render_size;
        if w < 8 || h < 8 {
            return err(format!("render size {w}x{h} is below 8x8"));
        }
        if self.plane_fusion == PlaneFusion::Concat && self.planes.len() != 3 {
            return err("concat plane fusion needs all three planes".into());
        }
        if !(self.pca.variance > 0.0 && self.pca.variance <= 1.0) || self.pca.components == Some(0) {
            return err("PCA variance must be in (0, 1] and components >= 1".into());
        }
        if !(self.svm.lambda > 0.0) || self.svm.epochs == 0 {
            return err("SVM lambda must be > 0 and epochs >= 1".into());
        }
        if !(self.noise_floor >= 0.0) {
            return err("noise floor must be >= 0".into());
        }
        if self.bins.size_mm == 0 || self.bins.count == 0 {
            return err("depth bins need count >= 1 and size >= 1 mm".into());
        }
        for frames in std::iter::once(self.dmm_clip).chain(self.rgb_windows.iter().copied()) {
            self.network
                .architecture(frames, w, h)?
                .infer_shapes()
                .map_err(|e| Error::Config(format!("network for {frames}-frame clips: {e}")))?;
        }
        Ok(())
    }
}

fn all_distinct<T: Ord>(items: impl Iterator<Item = T>) -> bool {
    let mut seen = BTreeSet::new();
    items.into_iter().all(|i| seen.insert(i))
}
