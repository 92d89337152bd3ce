//! Depth motion map accumulation and rendering into network input frames.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{contract, Error, Result};
use crate::geometry::{Plane, ProjectedMap};
use crate::grid::{Grid, RgbImage};
use crate::motion::MagnitudeMap;

/// Temporal extent of a motion map: a fixed number of frame differences, or
/// everything from the start index to the end of the sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Window {
    Frames(usize),
    All,
}

impl Window {
    /// Number of frame differences summed when starting at `t` over `diffs`
    /// available differences.
    pub fn effective(&self, t: usize, diffs: usize) -> usize {
        match self {
            Window::Frames(n) => *n,
            Window::All => diffs.saturating_sub(t),
        }
    }

    /// Start indices that admit a full window over `maps` frames.
    pub fn template_count(&self, maps: usize) -> usize {
        let diffs = maps.saturating_sub(1);
        match self {
            Window::Frames(n) if *n >= 1 => (diffs + 1).saturating_sub(*n),
            Window::Frames(_) => 0,
            Window::All => diffs,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Window::Frames(n) => write!(f, "{n}"),
            Window::All => f.write_str("all"),
        }
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Window::All);
        }
        s.parse()
            .map(Window::Frames)
            .map_err(|_| Error::Config(format!("bad window {s:?}; expected a frame count or \"all\"")))
    }
}

impl Serialize for Window {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Window::Frames(n) => s.serialize_u64(*n as u64),
            Window::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for Window {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(Window::Frames(n as usize)),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Accumulated motion energy for one plane, window, view angle and start index.
#[derive(Clone, Debug, PartialEq)]
pub struct DmmTemplate {
    pub plane: Plane,
    pub window: Window,
    pub angle: f64,
    pub start: usize,
    pub grid: Grid<f64>,
}

/// Accumulation settings. `noise_floor` zeroes absolute differences at or
/// below it before weighting; the default of 0 keeps every difference.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Accumulator {
    pub noise_floor: f64,
}

impl Accumulator {
    pub fn dmm(&self, maps: &[ProjectedMap], t: usize, window: Window) -> Result<DmmTemplate> {
        self.accumulate(maps, None, t, window)
    }

    pub fn ramdmm(&self, maps: &[ProjectedMap], weights: &[MagnitudeMap], t: usize, window: Window) -> Result<DmmTemplate> {
        if weights.len() + 1 != maps.len() {
            return Err(contract!(
                "{} maps need {} weight maps (one per consecutive pair), got {}",
                maps.len(),
                maps.len().saturating_sub(1),
                weights.len()
            ));
        }
        self.accumulate(maps, Some(weights), t, window)
    }

    fn accumulate(&self, maps: &[ProjectedMap], weights: Option<&[MagnitudeMap]>, t: usize, window: Window) -> Result<DmmTemplate> {
        let first = maps
            .first()
            .ok_or_else(|| contract!("cannot accumulate an empty map sequence"))?;
        let diffs = maps.len() - 1;
        let span = window.effective(t, diffs);
        if span == 0 || t + span > diffs {
            return Err(contract!(
                "window {window} from t={t} needs {} frames, only {} available",
                t + span + 1,
                maps.len()
            ));
        }
        let dims = first.grid.dims();
        if let Some(m) = maps.iter().find(|m| m.grid.dims() != dims || m.plane != first.plane) {
            return Err(contract!(
                "maps disagree: {} {:?} vs {} {:?}",
                first.plane,
                dims,
                m.plane,
                m.grid.dims()
            ));
        }
        if let Some(ws) = weights {
            if let Some(w) = ws.iter().find(|w| w.g.dims() != dims) {
                return Err(contract!("weight map is {:?}, maps are {:?}", w.g.dims(), dims));
            }
        }
        let mut acc = vec![0.0; dims.0 * dims.1];
        for k in t..t + span {
            let prev = maps[k].grid.as_slice();
            let next = maps[k + 1].grid.as_slice();
            match weights {
                None => {
                    for ((a, p), n) in acc.iter_mut().zip(prev).zip(next) {
                        let d = (n - p).abs();
                        if d > self.noise_floor {
                            *a += d;
                        }
                    }
                }
                Some(ws) => {
                    let g = ws[k].g.as_slice();
                    for (((a, p), n), g) in acc.iter_mut().zip(prev).zip(next).zip(g) {
                        let d = (n - p).abs();
                        if d > self.noise_floor {
                            *a += d * g;
                        }
                    }
                }
            }
        }
        Ok(DmmTemplate {
            plane: first.plane,
            window,
            angle: first.angle,
            start: t,
            grid: Grid::from_vec(dims.0, dims.1, acc)?,
        })
    }
}

/// Sum of absolute consecutive differences over `window` differences from `t`.
pub fn accumulate_dmm(maps: &[ProjectedMap], t: usize, window: Window) -> Result<DmmTemplate> {
    Accumulator::default().dmm(maps, t, window)
}

/// Like [`accumulate_dmm`] with each difference `(k, k+1)` scaled by `weights[k]`.
pub fn accumulate_ramdmm(maps: &[ProjectedMap], weights: &[MagnitudeMap], t: usize, window: Window) -> Result<DmmTemplate> {
    Accumulator::default().ramdmm(maps, weights, t, window)
}

/// Jet colormap: blue, cyan, green, yellow, red over `u` in [0, 1].
pub fn jet(u: f64) -> [u8; 3] {
    let u = if u.is_nan() { 0.0 } else { u.clamp(0.0, 1.0) };
    let ch = |c: f64| ((1.5 - (4.0 * u - c).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0), ch(2.0), ch(1.0)]
}

/// Min-max scaled, jet-coloured rendering of `grid`, resized into an
/// `out_w x out_h` frame with aspect preserved and zero padding.
pub fn render_grid(grid: &Grid<f64>, out_w: usize, out_h: usize) -> Result<RgbImage> {
    if out_w < 8 || out_h < 8 {
        return Err(contract!("render size must be at least 8x8, got {out_w}x{out_h}"));
    }
    if grid.is_empty() {
        return Err(contract!("cannot render an empty grid"));
    }
    let (lo, hi) = (grid.min_value(), grid.max_value());
    let range = hi - lo;
    let coloured = grid.map(|v| {
        if range > 0.0 {
            jet((v - lo) / range)
        } else {
            jet(0.0)
        }
    });
    Ok(letterbox(&coloured, out_w, out_h))
}

pub fn render_template(tpl: &DmmTemplate, out_w: usize, out_h: usize) -> Result<RgbImage> {
    render_grid(&tpl.grid, out_w, out_h)
}

/// Aspect-preserving bilinear resize centred in an `out_w x out_h` black frame.
pub fn letterbox(img: &RgbImage, out_w: usize, out_h: usize) -> RgbImage {
    let (w, h) = img.dims();
    let scale = (out_w as f64 / w as f64).min(out_h as f64 / h as f64);
    let nw = ((w as f64 * scale).round() as usize).clamp(1, out_w);
    let nh = ((h as f64 * scale).round() as usize).clamp(1, out_h);
    let resized = resize_bilinear(img, nw, nh);
    let (ox, oy) = ((out_w - nw) / 2, (out_h - nh) / 2);
    let mut out = Grid::new(out_w, out_h, [0u8; 3]);
    for y in 0..nh {
        for x in 0..nw {
            out.set(x + ox, y + oy, resized.get(x, y));
        }
    }
    out
}

/// Bilinear resampling with pixel-centre alignment and clamped borders.
pub fn resize_bilinear(img: &RgbImage, out_w: usize, out_h: usize) -> RgbImage {
    let (w, h) = img.dims();
    if (w, h) == (out_w, out_h) {
        return img.clone();
    }
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    Grid::from_fn(out_w, out_h, |x, y| {
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let mut px = [0u8; 3];
        for (c, out) in px.iter_mut().enumerate() {
            let top = img.get(x0, y0)[c] as f64 * (1.0 - tx) + img.get(x1, y0)[c] as f64 * tx;
            let bot = img.get(x0, y1)[c] as f64 * (1.0 - tx) + img.get(x1, y1)[c] as f64 * tx;
            *out = (top * (1.0 - ty) + bot * ty).round() as u8;
        }
        px
    })
}

/// `lambda` consecutive frames of identical size, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    frames: Vec<RgbImage>,
}

impl Clip {
    pub fn new(frames: Vec<RgbImage>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| contract!("a clip needs at least one frame"))?;
        if frames.iter().any(|f| f.dims() != first.dims()) {
            return Err(contract!("clip frames differ in size"));
        }
        Ok(Self { frames })
    }

    pub fn frames(&self) -> &[RgbImage] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// `(width, height)` of each frame.
    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

/// The `lambda` frames ending at `t` (inclusive), oldest first.
pub fn stack_clip(rendered: &[RgbImage], t: usize, lambda: usize) -> Result<Clip> {
    if lambda == 0 {
        return Err(contract!("clip length must be >= 1"));
    }
    if t >= rendered.len() || t + 1 < lambda {
        return Err(contract!(
            "clip of {lambda} ending at {t} needs frames {}..={t}, have {}",
            (t + 1).saturating_sub(lambda),
            rendered.len()
        ));
    }
    Clip::new(rendered[t + 1 - lambda..=t].to_vec())
}

/// End indices of clips tiling `count` frames with stride `lambda`.
pub fn clip_ends(count: usize, lambda: usize) -> impl Iterator<Item = usize> {
    (1..=count / lambda.max(1)).map(move |k| k * lambda - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BinParams;
    use crate::motion::MagnitudeMap;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn maps(values: &[Vec<f64>], w: usize) -> Vec<ProjectedMap> {
        values
            .iter()
            .map(|v| ProjectedMap {
                plane: Plane::Xy,
                angle: 15.0,
                grid: Grid::from_vec(w, v.len() / w, v.clone()).unwrap(),
                bins: BinParams::default(),
            })
            .collect()
    }

    fn weights(values: &[f64]) -> Vec<MagnitudeMap> {
        values
            .iter()
            .map(|&v| MagnitudeMap { g: Grid::new(1, 1, v), normalized: true })
            .collect()
    }

    #[test]
    fn static_sequence_is_zero() {
        let m = maps(&vec![vec![4.0, 2.0, 9.0, 1.0]; 6], 2);
        let tpl = accumulate_dmm(&m, 0, Window::All).unwrap();
        assert!(tpl.grid.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_arithmetic() {
        let m = maps(&[vec![0.0], vec![3.0], vec![5.0]], 1);
        let tpl = accumulate_dmm(&m, 0, Window::Frames(2)).unwrap();
        assert_eq!(tpl.grid.as_slice(), &[5.0]);
        assert_eq!(tpl.angle, 15.0);
        let weighted = accumulate_ramdmm(&m, &weights(&[0.5, 1.0]), 0, Window::Frames(2)).unwrap();
        assert_eq!(weighted.grid.as_slice(), &[3.5]);
    }

    #[test]
    fn window_past_end_names_frames() {
        let m = maps(&[vec![0.0], vec![3.0], vec![5.0]], 1);
        let err = accumulate_dmm(&m, 1, Window::Frames(2)).unwrap_err().to_string();
        assert!(err.contains("only 3 available"), "{err}");
    }

    #[test]
    fn misaligned_weights() {
        let m = maps(&[vec![0.0], vec![3.0], vec![5.0]], 1);
        assert!(accumulate_ramdmm(&m, &weights(&[1.0]), 0, Window::All).is_err());
    }

    #[test]
    fn all_window_runs_to_end() {
        let m = maps(&[vec![0.0], vec![1.0], vec![3.0], vec![6.0]], 1);
        assert_eq!(accumulate_dmm(&m, 1, Window::All).unwrap().grid.get(0, 0), 5.0);
        assert_eq!(Window::All.template_count(4), 3);
        assert_eq!(Window::Frames(2).template_count(4), 2);
    }

    #[test]
    fn noise_floor_drops_small_differences() {
        let m = maps(&[vec![0.0, 0.0], vec![0.5, 4.0]], 2);
        let acc = Accumulator { noise_floor: 1.0 };
        assert_eq!(acc.dmm(&m, 0, Window::All).unwrap().grid.as_slice(), &[0.0, 4.0]);
    }

    #[test]
    fn unit_and_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<Vec<f64>> = (0..8).map(|_| (0..6).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let m = maps(&vals, 3);
        let ones: Vec<_> = (0..7).map(|_| MagnitudeMap::uniform(3, 2, 1.0)).collect();
        let zeros: Vec<_> = (0..7).map(|_| MagnitudeMap::uniform(3, 2, 0.0)).collect();
        assert_eq!(
            accumulate_ramdmm(&m, &ones, 1, Window::Frames(5)).unwrap(),
            accumulate_dmm(&m, 1, Window::Frames(5)).unwrap()
        );
        let z = accumulate_ramdmm(&m, &zeros, 0, Window::All).unwrap();
        assert!(z.grid.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn window_parsing() {
        assert_eq!("ALL".parse::<Window>().unwrap(), Window::All);
        assert_eq!("10".parse::<Window>().unwrap(), Window::Frames(10));
        assert!("ten".parse::<Window>().is_err());
    }

    #[test]
    fn jet_endpoints() {
        assert_eq!(jet(0.0), [0, 0, 128]);
        assert_eq!(jet(0.5), [128, 255, 128]);
        assert_eq!(jet(1.0), [128, 0, 0]);
    }

    #[test]
    fn zero_template_renders_dark_blue() {
        let img = render_grid(&Grid::new(10, 10, 0.0), 16, 16).unwrap();
        assert!(img.as_slice().iter().all(|&p| p == [0, 0, 128]));
    }

    #[test]
    fn maximum_renders_red() {
        let mut g = Grid::new(8, 8, 0.0);
        g.set(3, 3, 5.0);
        let img = render_grid(&g, 8, 8).unwrap();
        assert_eq!(img.get(3, 3), [128, 0, 0]);
    }

    #[test]
    fn wide_grid_gets_horizontal_bands() {
        let g = Grid::from_fn(32, 18, |x, y| (x + y) as f64 + 1.0);
        let img = render_grid(&g, 32, 32).unwrap();
        // 32x18 fits as 32x18, centred: rows 7..25 hold content
        for y in 0..32 {
            let row_black = (0..32).all(|x| img.get(x, y) == [0, 0, 0]);
            assert_eq!(row_black, !(7..25).contains(&y), "row {y}");
        }
    }

    #[test]
    fn render_size_guard() {
        assert!(render_grid(&Grid::new(4, 4, 1.0), 7, 8).is_err());
    }

    #[test]
    fn render_invariant_to_positive_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid::from_fn(20, 14, |_, _| rng.random_range(0.0..50.0));
        let scaled = g.map(|v| 7.3 * v);
        assert_eq!(render_grid(&g, 24, 24).unwrap(), render_grid(&scaled, 24, 24).unwrap());
    }

    fn labelled(n: usize) -> Vec<RgbImage> {
        (0..n).map(|i| Grid::new(2, 2, [i as u8, 0, 0])).collect()
    }

    #[test]
    fn clip_examples() {
        let t = labelled(3);
        let c = stack_clip(&t, 2, 2).unwrap();
        assert_eq!(c.frames(), &t[1..3]);
        assert_eq!(stack_clip(&t, 0, 1).unwrap().frames(), &t[0..1]);
        let long = labelled(20);
        let c = stack_clip(&long, 19, 16).unwrap();
        assert_eq!(c.frames(), &long[4..20]);
        assert!(stack_clip(&long, 14, 16).is_err());
    }

    #[test]
    fn clip_tiling() {
        assert_eq!(clip_ends(35, 16).collect::<Vec<_>>(), vec![15, 31]);
        assert_eq!(clip_ends(15, 16).count(), 0);
    }

    proptest! {
        #[test]
        fn telescoping_windows(
            seed in any::<u64>(),
            t in 0usize..4,
            a in 1usize..6,
            b in 1usize..6,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = t + a + b + 1;
            let vals: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.random_range(0..1000) as f64).collect()).collect();
            let m = maps(&vals, 2);
            let left = accumulate_dmm(&m, t, Window::Frames(a)).unwrap();
            let right = accumulate_dmm(&m, t + a, Window::Frames(b)).unwrap();
            let whole = accumulate_dmm(&m, t, Window::Frames(a + b)).unwrap();
            for i in 0..4 {
                prop_assert_eq!(left.grid.as_slice()[i] + right.grid.as_slice()[i], whole.grid.as_slice()[i]);
            }
        }

        #[test]
        fn weighted_never_exceeds_plain(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<Vec<f64>> = (0..7).map(|_| (0..6).map(|_| rng.random_range(-50.0..50.0)).collect()).collect();
            let m = maps(&vals, 3);
            let w: Vec<_> = (0..6)
                .map(|_| MagnitudeMap { g: Grid::from_fn(3, 2, |_, _| rng.random_range(0.0..=1.0)), normalized: true })
                .collect();
            let plain = accumulate_dmm(&m, 0, Window::All).unwrap();
            let weighted = accumulate_ramdmm(&m, &w, 0, Window::All).unwrap();
            for (p, q) in plain.grid.as_slice().iter().zip(weighted.grid.as_slice()) {
                prop_assert!(q <= p);
            }
        }
    }
}
