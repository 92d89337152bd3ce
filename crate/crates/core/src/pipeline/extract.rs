use std::collections::BTreeMap;
use std::path::Path;

use log::warn;

use super::dataset::{mask_outside, Sample, SampleMeta};
use super::streams::{build_streams, StreamId, StreamKind};
use super::{PipelineConfig, PivotMode, PlaneFusion};
use crate::dmm::{clip_ends, letterbox, render_grid, render_template, stack_clip, Accumulator, DmmTemplate, Window};
use crate::error::{Error, Result};
use crate::geometry::{centroid, project_cartesian, synthesize_view, Intrinsics, Plane, ProjectedMap, RotationSpec};
use crate::grid::{Grid, RgbImage};
use crate::motion::{motion_weights, MagnitudeMap};
use crate::neural::{concat_views, extract_features, FeatureVector, NetworkSpec, Provenance};
use crate::videoio::DepthFrame;

/// One network per modality and clip length.
#[derive(Clone, Debug)]
pub struct NetworkBank {
    nets: BTreeMap<String, NetworkSpec>,
}

pub fn dmm_network_key(frames: usize) -> String {
    format!("dmm-l{frames}")
}

pub fn rgb_network_key(frames: usize) -> String {
    format!("rgb-l{frames}")
}

/// 64-bit FNV-1a, used to derive stable per-network seeds.
pub(crate) fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl NetworkBank {
    /// Seeds every network from `cfg.seed` and its key, or loads
    /// `<key>.weights` from `cfg.weights_dir`.
    pub fn build(cfg: &PipelineConfig) -> Result<Self> {
        let [w, h] = cfg.render_size;
        let mut lengths: Vec<(String, usize)> = vec![(dmm_network_key(cfg.dmm_clip), cfg.dmm_clip)];
        lengths.extend(cfg.rgb_windows.iter().map(|&r| (rgb_network_key(r), r)));
        let mut nets = BTreeMap::new();
        for (key, frames) in lengths {
            let arch = cfg.network.architecture(frames, w, h)?;
            let net = match &cfg.weights_dir {
                Some(dir) => {
                    let net = NetworkSpec::load(dir.join(format!("{key}.weights")))?;
                    if net.input != arch.input {
                        return Err(Error::Config(format!(
                            "{key}.weights expects input {:?}, the config needs {:?}",
                            net.input, arch.input
                        )));
                    }
                    net
                }
                None => NetworkSpec::seeded(&arch, cfg.seed.wrapping_add(fnv1a(&key)))?,
            };
            nets.insert(key, net);
        }
        Ok(Self { nets })
    }

    pub fn get(&self, key: &str) -> Result<&NetworkSpec> {
        self.nets
            .get(key)
            .ok_or_else(|| Error::State(format!("no network {key} in the bank")))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (key, net) in &self.nets {
            net.save(dir.join(format!("{key}.weights")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StreamFeatures {
    /// One vector per clip, in clip order.
    Clips(Vec<FeatureVector>),
    /// The stream's input is missing from the sample.
    Absent(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleFeatures {
    pub meta: SampleMeta,
    /// Keyed by full stream id; only streams of the sample's pose bank.
    pub streams: BTreeMap<String, StreamFeatures>,
    /// Why the sample was skipped, if it was.
    pub skipped: Option<String>,
}

impl SampleFeatures {
    pub fn clips(&self, id: &StreamId) -> Option<&[FeatureVector]> {
        match self.streams.get(&id.to_string()) {
            Some(StreamFeatures::Clips(c)) => Some(c),
            _ => None,
        }
    }
}

pub fn intrinsics_for(cfg: &PipelineConfig, width: usize, height: usize) -> Intrinsics {
    cfg.intrinsics.unwrap_or_else(|| Intrinsics::kinect_default(width, height))
}

/// Depth frames with everything outside the crop boxes zeroed.
pub fn masked_depth(sample: &Sample) -> Vec<DepthFrame> {
    let frames = sample.depth.frames();
    match &sample.crops {
        Some(crops) => frames
            .iter()
            .zip(crops)
            .map(|(f, c)| DepthFrame::new(mask_outside(&f.depth, c), f.index))
            .collect(),
        None => frames.to_vec(),
    }
}

pub fn pivot_for(frames: &[DepthFrame], intr: &Intrinsics, mode: PivotMode) -> [f64; 3] {
    match mode {
        PivotMode::Fixed(p) => p,
        PivotMode::Auto => frames.iter().find_map(|f| centroid(f, intr)).unwrap_or([0.0; 3]),
    }
}

/// The sequence as seen from the virtual camera at `angle`.
pub fn view_sequence(frames: &[DepthFrame], intr: &Intrinsics, angle: f64, cfg: &PipelineConfig, pivot: [f64; 3]) -> Result<Vec<DepthFrame>> {
    let rot = RotationSpec::new(angle, cfg.pitch)?;
    if !cfg.view_synthesis || rot.is_identity() {
        return Ok(frames.to_vec());
    }
    Ok(frames.iter().map(|f| synthesize_view(f, intr, &rot, pivot)).collect())
}

/// Projected maps of one plane and their motion weights.
pub struct PlaneMotion {
    pub maps: Vec<ProjectedMap>,
    pub weights: Vec<MagnitudeMap>,
}

pub fn plane_motion(frames: &[DepthFrame], plane: Plane, angle: f64, cfg: &PipelineConfig) -> Result<PlaneMotion> {
    let idx = Plane::ALL.iter().position(|&p| p == plane).expect("plane listed");
    let maps = frames
        .iter()
        .map(|f| {
            let [a, b, c] = project_cartesian(f, &cfg.bins)?;
            let mut m = [a, b, c].into_iter().nth(idx).expect("three maps");
            m.angle = angle;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let grids: Vec<&Grid<f64>> = maps.iter().map(|m| &m.grid).collect();
    let weights = motion_weights(&grids, &cfg.flow, cfg.normalization)?;
    Ok(PlaneMotion { maps, weights })
}

impl PlaneMotion {
    /// Region-adaptive templates for start indices `0..limit` (or every
    /// admissible start).
    pub fn templates(&self, window: Window, limit: Option<usize>, noise_floor: f64) -> Result<Vec<DmmTemplate>> {
        let acc = Accumulator { noise_floor };
        let count = window.template_count(self.maps.len());
        (0..limit.map_or(count, |l| l.min(count)))
            .map(|t| acc.ramdmm(&self.maps, &self.weights, t, window))
            .collect()
    }
}

/// Rendered frames to feature vectors, one per tiled clip.
fn clip_features(rendered: &[RgbImage], lambda: usize, net: &NetworkSpec, provenance: &Provenance) -> Result<Vec<FeatureVector>> {
    clip_ends(rendered.len(), lambda)
        .map(|end| {
            let clip = stack_clip(rendered, end, lambda)?;
            Ok(extract_features(&clip, net)?.with_provenance(Provenance {
                clip_end: end,
                ..provenance.clone()
            }))
        })
        .collect()
}

fn too_short(sample: &Sample, cfg: &PipelineConfig) -> Option<String> {
    let n = sample.depth.len();
    if n < 2 {
        return Some(format!("{} depth frames; motion needs at least 2", n));
    }
    for w in &cfg.depth_windows {
        if let Window::Frames(k) = w {
            if n < k + 1 {
                return Some(format!("{n} depth frames cannot fill a {k}-frame window"));
            }
        }
        if w.template_count(n) < cfg.dmm_clip {
            return Some(format!(
                "window {w} yields {} templates, fewer than the {}-frame clip",
                w.template_count(n),
                cfg.dmm_clip
            ));
        }
    }
    let rgb_len = if cfg.depth_as_rgb { Some(n) } else { sample.rgb.as_ref().map(|r| r.len()) };
    if let Some(len) = rgb_len {
        if let Some(r) = cfg.rgb_windows.iter().find(|&&r| len < r) {
            return Some(format!("{len} RGB frames cannot fill a {r}-frame clip"));
        }
    }
    None
}

/// Features of every stream in the sample's pose bank.
///
/// Depth streams: crop, synthesize the view, project, weight by motion,
/// accumulate over the window, render, tile into clips, extract. RGB streams
/// tile the (cropped, letterboxed) colour frames directly. Samples too short
/// for the configured windows are returned with `skipped` set.
pub fn extract_sample(sample: &Sample, cfg: &PipelineConfig, bank: &NetworkBank) -> Result<SampleFeatures> {
    let meta = sample.meta.clone();
    if !cfg.poses.contains(&meta.pose) {
        return Err(Error::Config(format!(
            "sample {} has pose {:?}, not one of {:?}",
            meta.name, meta.pose, cfg.poses
        )));
    }
    let mut out = SampleFeatures {
        meta,
        streams: BTreeMap::new(),
        skipped: None,
    };
    if let Some(reason) = too_short(sample, cfg) {
        warn!("skipping {}: {reason}", out.meta.name);
        out.skipped = Some(reason);
        return Ok(out);
    }
    let plan = build_streams(cfg)?;
    let bank_ids: Vec<&StreamId> = plan.bank(&out.meta.pose).collect();
    let [rw, rh] = cfg.render_size;
    let lambda = cfg.dmm_clip;
    let dmm_net = bank.get(&dmm_network_key(lambda))?;

    let frames = masked_depth(sample);
    let (w, h) = sample.depth.dims();
    let intr = intrinsics_for(cfg, w, h);
    let pivot = pivot_for(&frames, &intr, cfg.pivot);
    let clip_count = |window: &Window| window.template_count(frames.len()) / lambda;

    let mut per_plane: BTreeMap<(Plane, usize, usize), Vec<FeatureVector>> = BTreeMap::new();
    for (ai, &angle) in cfg.angles.iter().enumerate() {
        let view = view_sequence(&frames, &intr, angle, cfg, pivot)?;
        for &plane in &cfg.planes {
            let motion = plane_motion(&view, plane, angle, cfg)?;
            for (wi, window) in cfg.depth_windows.iter().enumerate() {
                let templates = motion.templates(*window, Some(clip_count(window) * lambda), cfg.noise_floor)?;
                let rendered = templates
                    .iter()
                    .map(|t| render_template(t, rw, rh))
                    .collect::<Result<Vec<_>>>()?;
                let id = StreamId {
                    pose: out.meta.pose.clone(),
                    kind: StreamKind::Dmm { plane, window: *window, angle },
                };
                let provenance = Provenance {
                    stream: id.to_string(),
                    window: Some(*window),
                    angle: Some(angle),
                    clip_end: 0,
                };
                per_plane.insert((plane, wi, ai), clip_features(&rendered, lambda, dmm_net, &provenance)?);
            }
        }
    }

    for id in &bank_ids {
        let StreamKind::Dmm { plane, window, angle } = id.kind else {
            continue;
        };
        let wi = cfg.depth_windows.iter().position(|w| *w == window).expect("configured window");
        let ai = cfg.angles.iter().position(|a| a.to_bits() == angle.to_bits()).expect("configured angle");
        let feats = match cfg.plane_fusion {
            PlaneFusion::Score => per_plane[&(plane, wi, ai)].clone(),
            PlaneFusion::Concat => {
                let [xy, yz, xz] = Plane::ALL.map(|p| &per_plane[&(p, wi, ai)]);
                xy.iter()
                    .zip(yz)
                    .zip(xz)
                    .map(|((a, b), c)| {
                        let mut f = concat_views(a, b, c)?;
                        f.provenance.stream = id.to_string();
                        Ok(f)
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        out.streams.insert(id.to_string(), StreamFeatures::Clips(feats));
    }

    let rgb_frames: Option<Vec<RgbImage>> = if cfg.depth_as_rgb {
        Some(
            frames
                .iter()
                .map(|f| render_grid(&f.depth.map(|d| d as f64), rw, rh))
                .collect::<Result<_>>()?,
        )
    } else {
        sample.rgb.as_ref().map(|seq| {
            seq.frames()
                .iter()
                .enumerate()
                .map(|(i, f)| {
                    let img = match sample.crops.as_ref().and_then(|c| c.get(i)) {
                        Some(c) if f.image.dims() == (w, h) => mask_outside(&f.image, c),
                        _ => f.image.clone(),
                    };
                    letterbox(&img, rw, rh)
                })
                .collect()
        })
    };
    for id in &bank_ids {
        let StreamKind::Rgb { frames: r } = id.kind else {
            continue;
        };
        let feats = match &rgb_frames {
            None => StreamFeatures::Absent("sample has no RGB sequence".into()),
            Some(rendered) => {
                let provenance = Provenance {
                    stream: id.to_string(),
                    ..Provenance::default()
                };
                StreamFeatures::Clips(clip_features(rendered, r, bank.get(&rgb_network_key(r))?, &provenance)?)
            }
        };
        out.streams.insert(id.to_string(), feats);
    }
    Ok(out)
}
