//! Desk-scale synthetic action dataset: a textured box moving in front of a
//! depth + colour camera.
//!
//! Each action is a distinct motion of the box. Subjects vary the box size,
//! colours, speed and amplitude; cameras orbit the scene centre in yaw steps,
//! so camera `c` sees the scene rotated by `c * camera_step_deg` about the
//! pivot exactly as view synthesis would rotate it.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{write_manifest, Sample, SampleMeta, SampleRecord};
use super::extract::fnv1a;
use crate::error::{contract, Error, Result};
use crate::geometry::{fill_holes, Intrinsics, RotationSpec};
use crate::grid::{Grid, RgbImage};
use crate::videoio::{write_depth_bin, write_rgb_sequence, DepthFrame, DepthSequence, RgbSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    /// Left-to-right slide.
    Translate,
    /// Vertical bobbing.
    Oscillate,
    /// Swing along an arc while turning to face the path.
    Arc,
    Static,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Translate, Action::Oscillate, Action::Arc, Action::Static];

    pub fn name(&self) -> &'static str {
        match self {
            Action::Translate => "translate",
            Action::Oscillate => "oscillate",
            Action::Arc => "arc",
            Action::Static => "static",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown action {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseLevel {
    /// Gaussian depth noise on valid pixels.
    pub depth_sigma_mm: f64,
    /// Probability that a valid depth pixel reads 0.
    pub dropout: f64,
    /// Gaussian noise per colour channel, in intensity levels.
    pub rgb_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub actions: Vec<Action>,
    pub subjects: u32,
    pub cameras: u32,
    pub camera_step_deg: f64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Subject `s` takes pose `poses[(s / 2) % poses.len()]`.
    pub poses: Vec<String>,
    /// Distance from the camera to the scene centre.
    pub distance_mm: f64,
    pub noise: NoiseLevel,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            actions: vec![Action::Translate, Action::Oscillate, Action::Arc],
            subjects: 6,
            cameras: 2,
            camera_step_deg: 30.0,
            frames: 40,
            width: 64,
            height: 48,
            poses: vec!["standing".into(), "sitting".into()],
            distance_mm: 2000.0,
            noise: NoiseLevel {
                depth_sigma_mm: 8.0,
                dropout: 0.01,
                rgb_sigma: 6.0,
            },
            seed: 42,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.actions.len() < 2 || self.subjects < 2 {
            return Err(contract!("synthetic data needs at least 2 actions and 2 subjects"));
        }
        if self.cameras == 0 || self.frames < 2 || self.width < 8 || self.height < 8 || self.poses.is_empty() {
            return Err(contract!("synthetic data needs cameras, >= 2 frames, >= 8x8 pixels and a pose"));
        }
        if !(self.distance_mm > 0.0) || !(0.0..1.0).contains(&self.noise.dropout) {
            return Err(contract!("distance must be > 0 and dropout in [0, 1)"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics::kinect_default(self.width, self.height)
    }

    pub fn pose_of(&self, subject: u32) -> &str {
        &self.poses[(subject as usize / 2) % self.poses.len()]
    }

    pub fn pivot(&self) -> [f64; 3] {
        [0.0, 0.0, self.distance_mm]
    }
}

#[derive(Clone, Copy, Debug)]
struct ScenePoint {
    pos: [f64; 3],
    color: [f64; 3],
}

/// One subject performing one action, noise-free.
#[derive(Clone, Debug)]
pub struct Scene {
    points: Vec<ScenePoint>,
    action: Action,
    frames: usize,
    speed: f64,
    amplitude: f64,
    phase: f64,
    centre: [f64; 3],
}

const SPACING_MM: f64 = 10.0;

fn subject_rng(seed: u64, subject: u32) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&format!("subject{subject}")))
}

impl Scene {
    pub fn new(spec: &SynthSpec, subject: u32, action: Action) -> Self {
        let mut rng = subject_rng(spec.seed, subject);
        let sitting = spec.pose_of(subject) == "sitting";
        let w = rng.random_range(280.0..340.0);
        let h = if sitting { rng.random_range(340.0..400.0) } else { rng.random_range(520.0..600.0) };
        let d = rng.random_range(160.0..220.0);
        let base_y = if sitting { 130.0 } else { -40.0 };
        let centre = [
            rng.random_range(-60.0..60.0),
            base_y + rng.random_range(-30.0..30.0),
            spec.distance_mm + rng.random_range(-80.0..80.0),
        ];
        let hue: [f64; 3] = [rng.random_range(0.3..1.0), rng.random_range(0.3..1.0), rng.random_range(0.3..1.0)];
        let speed = rng.random_range(0.8..1.2);
        let amplitude = rng.random_range(0.8..1.2);
        let phase = rng.random_range(0.0..0.25);
        Self {
            points: box_points(w, h, d, hue),
            action,
            frames: spec.frames,
            speed,
            amplitude,
            phase,
            centre,
        }
    }

    /// Box yaw (degrees) and offset from its rest position at frame `t`.
    fn pose_at(&self, t: usize) -> (f64, [f64; 3]) {
        let s = t as f64 / (self.frames - 1).max(1) as f64;
        let (k, a) = (self.speed, self.amplitude);
        match self.action {
            Action::Translate => (0.0, [a * 600.0 * k * (s - 0.5), 0.0, 0.0]),
            Action::Oscillate => {
                let y = a * 160.0 * (std::f64::consts::TAU * (1.5 * k * s + self.phase)).sin();
                (0.0, [0.0, y, 0.0])
            }
            Action::Arc => {
                let theta = (2.0 * s - 1.0) * k * 50.0f64.to_radians();
                let r = a * 350.0;
                (theta.to_degrees(), [r * theta.sin(), 0.0, -r * (1.0 - theta.cos())])
            }
            Action::Static => (0.0, [0.0; 3]),
        }
    }

    /// Depth and colour frames seen from a camera whose view is the scene
    /// rotated by `yaw` degrees about `pivot`.
    pub fn render(&self, t: usize, yaw: f64, pivot: [f64; 3], intr: &Intrinsics, width: usize, height: usize) -> (DepthFrame, RgbImage) {
        let (box_yaw, offset) = self.pose_at(t);
        let local = RotationSpec::yaw(box_yaw).matrix();
        let cam = RotationSpec::yaw(yaw).matrix();
        let mul = |m: &[[f64; 3]; 3], p: [f64; 3]| {
            [0, 1, 2].map(|r| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2])
        };
        let mut zbuf = vec![f64::INFINITY; width * height];
        let mut colour = vec![[0u8; 3]; width * height];
        for sp in &self.points {
            let p = mul(&local, sp.pos);
            let world = [0, 1, 2].map(|k| p[k] + self.centre[k] + offset[k] - pivot[k]);
            let r = mul(&cam, world);
            let q = [0, 1, 2].map(|k| r[k] + pivot[k]);
            if q[2] <= 0.0 {
                continue;
            }
            let u = (intr.focal * q[0] / q[2] + intr.cx).round();
            let v = (intr.focal * q[1] / q[2] + intr.cy).round();
            if u < 0.0 || v < 0.0 || u >= width as f64 || v >= height as f64 {
                continue;
            }
            let i = v as usize * width + u as usize;
            if q[2] < zbuf[i] {
                zbuf[i] = q[2];
                colour[i] = sp.color.map(|c| (c * 255.0).round().clamp(0.0, 255.0) as u8);
            }
        }
        let depth = Grid::from_vec(width, height, zbuf.iter().map(|&z| if z.is_finite() { z.round() as u32 } else { 0 }).collect())
            .expect("sized buffer");
        let frame = fill_holes(&DepthFrame::new(depth, t));
        (frame, Grid::from_vec(width, height, colour).expect("sized buffer"))
    }
}

/// Surface samples of a `w x h x d` box centred at the origin. The front
/// face carries a shallow relief and every face a checker texture.
fn box_points(w: f64, h: f64, d: f64, hue: [f64; 3]) -> Vec<ScenePoint> {
    let steps = |len: f64| (len / SPACING_MM).ceil() as usize;
    let grid = |len: f64, i: usize, n: usize| -len / 2.0 + len * i as f64 / n as f64;
    let checker = |a: f64, b: f64| if ((a / 60.0).floor() + (b / 60.0).floor()) as i64 % 2 == 0 { 1.0 } else { 0.55 };
    let shade = |face: f64, c: f64| hue.map(|h| (h * face * c).min(1.0));
    let mut pts = Vec::new();
    let (nw, nh, nd) = (steps(w), steps(h), steps(d));
    for i in 0..=nw {
        for j in 0..=nh {
            let (x, y) = (grid(w, i, nw), grid(h, j, nh));
            let relief = 12.0 * (std::f64::consts::TAU * x / 100.0).sin() * (std::f64::consts::TAU * y / 100.0).cos();
            pts.push(ScenePoint {
                pos: [x, y, -d / 2.0 + relief],
                color: shade(1.0, checker(x, y)),
            });
            pts.push(ScenePoint {
                pos: [x, y, d / 2.0],
                color: shade(0.5, checker(x, y)),
            });
        }
    }
    for i in 0..=nd {
        for j in 0..=nh {
            let (z, y) = (grid(d, i, nd), grid(h, j, nh));
            for x in [-w / 2.0, w / 2.0] {
                pts.push(ScenePoint {
                    pos: [x, y, z],
                    color: shade(0.75, checker(z, y)),
                });
            }
        }
        for j in 0..=nw {
            let (z, x) = (grid(d, i, nd), grid(w, j, nw));
            for y in [-h / 2.0, h / 2.0] {
                pts.push(ScenePoint {
                    pos: [x, y, z],
                    color: shade(0.9, checker(x, z)),
                });
            }
        }
    }
    pts
}

pub fn sample_name(action: usize, subject: u32, camera: u32) -> String {
    format!("a{action:02}_s{subject:02}_c{camera:02}")
}

/// Every (action, subject, camera) sample in memory, in that nesting order.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let intr = spec.intrinsics();
    let (w, h) = (spec.width, spec.height);
    let depth_noise = Normal::new(0.0, spec.noise.depth_sigma_mm.max(0.0)).map_err(|e| contract!("{e}"))?;
    let rgb_noise = Normal::new(0.0, spec.noise.rgb_sigma.max(0.0)).map_err(|e| contract!("{e}"))?;
    let mut out = Vec::new();
    for (ai, &action) in spec.actions.iter().enumerate() {
        for subject in 0..spec.subjects {
            let scene = Scene::new(spec, subject, action);
            for camera in 0..spec.cameras {
                let name = sample_name(ai, subject, camera);
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ fnv1a(&name));
                let yaw = camera as f64 * spec.camera_step_deg;
                let mut depths = Vec::with_capacity(spec.frames);
                let mut images = Vec::with_capacity(spec.frames);
                for t in 0..spec.frames {
                    let (frame, img) = scene.render(t, yaw, spec.pivot(), &intr, w, h);
                    depths.push(frame.depth.map(|d| {
                        if d == 0 {
                            return 0;
                        }
                        let noisy = (d as f64 + depth_noise.sample(&mut rng)).round().max(1.0) as u32;
                        if rng.random::<f64>() < spec.noise.dropout {
                            0
                        } else {
                            noisy
                        }
                    }));
                    images.push(img.map(|px| px.map(|c| (c as f64 + rgb_noise.sample(&mut rng)).round().clamp(0.0, 255.0) as u8)));
                }
                let meta = SampleMeta {
                    name,
                    label: ai as u32,
                    subject,
                    camera,
                    pose: spec.pose_of(subject).to_string(),
                    repetition: 0,
                };
                out.push(Sample::new(
                    meta,
                    DepthSequence::from_grids(depths)?,
                    Some(RgbSequence::from_images(images)?),
                    None,
                )?);
            }
        }
    }
    Ok(out)
}

/// Writes `depth/<name>.bin`, `rgb/<name>/f####.ppm` and `manifest.tsv`
/// under `dir` and returns the records.
pub fn generate_synthetic_dataset(spec: &SynthSpec, dir: &Path) -> Result<Vec<SampleRecord>> {
    let samples = generate_synthetic(spec)?;
    let depth_dir = dir.join("depth");
    fs::create_dir_all(&depth_dir).map_err(|e| Error::io(&depth_dir, e))?;
    let mut records = Vec::with_capacity(samples.len());
    for s in &samples {
        let depth = depth_dir.join(format!("{}.bin", s.meta.name));
        write_depth_bin(&s.depth, &depth)?;
        let rgb = match &s.rgb {
            Some(seq) => {
                let p = dir.join("rgb").join(&s.meta.name);
                write_rgb_sequence(seq, &p)?;
                Some(p)
            }
            None => None,
        };
        records.push(SampleRecord {
            depth,
            rgb,
            label: s.meta.label,
            subject: s.meta.subject,
            camera: s.meta.camera,
            pose: s.meta.pose.clone(),
            crops: None,
            repetition: s.meta.repetition,
        });
    }
    write_manifest(&records, &dir.join("manifest.tsv"))?;
    Ok(records)
}
