//! Sample records, the dataset manifest and train/test protocols.
//!
//! Manifest lines are tab-separated: depth path, RGB directory or `-`,
//! label, subject id, camera id, pose, then optionally a crop-box file (or
//! `-`) and a repetition index. Relative paths resolve against the
//! manifest's directory. Crop-box files hold one `x y width height` line per
//! frame.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::videoio::{read_depth_bin, read_rgb_sequence, DepthSequence, RgbSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropBox {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl CropBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && y >= self.y && x < self.x + self.width && y < self.y + self.height
    }

    fn fits(&self, w: usize, h: usize) -> bool {
        self.width > 0 && self.height > 0 && self.x + self.width <= w && self.y + self.height <= h
    }
}

/// Zeroes every cell outside `crop`.
pub fn mask_outside<T: Copy + Default>(grid: &Grid<T>, crop: &CropBox) -> Grid<T> {
    Grid::from_fn(grid.width(), grid.height(), |x, y| {
        if crop.contains(x, y) {
            grid.get(x, y)
        } else {
            T::default()
        }
    })
}

pub fn parse_crop_boxes(text: &str) -> Result<Vec<CropBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|f| f.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("crop line {}: {e}", i + 1)))?;
            match v[..] {
                [x, y, width, height] => Ok(CropBox { x, y, width, height }),
                _ => Err(Error::Parse(format!("crop line {}: expected 4 fields, got {}", i + 1, v.len()))),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub depth: PathBuf,
    pub rgb: Option<PathBuf>,
    pub label: u32,
    pub subject: u32,
    pub camera: u32,
    pub pose: String,
    pub crops: Option<PathBuf>,
    pub repetition: u32,
}

/// Labels and identities of a sample, without its data.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleMeta {
    pub name: String,
    pub label: u32,
    pub subject: u32,
    pub camera: u32,
    pub pose: String,
    pub repetition: u32,
}

impl SampleRecord {
    pub fn meta(&self) -> SampleMeta {
        SampleMeta {
            name: self
                .depth
                .file_stem()
                .map_or_else(|| self.depth.display().to_string(), |s| s.to_string_lossy().into_owned()),
            label: self.label,
            subject: self.subject,
            camera: self.camera,
            pose: self.pose.clone(),
            repetition: self.repetition,
        }
    }
}

/// A record with its sequences in memory.
#[derive(Clone, Debug)]
pub struct Sample {
    pub meta: SampleMeta,
    pub depth: DepthSequence,
    pub rgb: Option<RgbSequence>,
    pub crops: Option<Vec<CropBox>>,
}

impl Sample {
    pub fn new(meta: SampleMeta, depth: DepthSequence, rgb: Option<RgbSequence>, crops: Option<Vec<CropBox>>) -> Result<Self> {
        if let Some(c) = &crops {
            let (w, h) = depth.dims();
            if c.len() != depth.len() {
                return Err(Error::Format(format!("{} crop boxes for {} frames", c.len(), depth.len())));
            }
            if let Some((i, b)) = c.iter().enumerate().find(|(_, b)| !b.fits(w, h)) {
                return Err(Error::Format(format!("crop box {i} {b:?} leaves the {w}x{h} frame")));
            }
        }
        Ok(Self { meta, depth, rgb, crops })
    }
}

pub fn load_sample(rec: &SampleRecord) -> Result<Sample> {
    let depth = read_depth_bin(&rec.depth)?;
    let rgb = rec.rgb.as_ref().map(read_rgb_sequence).transpose()?;
    let crops = match &rec.crops {
        Some(p) => Some(parse_crop_boxes(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?),
        None => None,
    };
    Sample::new(rec.meta(), depth, rgb, crops)
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<SampleRecord>> {
    let resolve = |f: &str| -> PathBuf {
        let p = Path::new(f);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let optional = |f: Option<&&str>| f.filter(|f| **f != "-").map(|f| resolve(f));
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(6..=8).contains(&fields.len()) {
            return Err(Error::Parse(format!("manifest line {}: expected 6 to 8 fields, got {}", i + 1, fields.len())));
        }
        let num = |k: usize, what: &str| {
            fields[k]
                .trim()
                .parse::<u32>()
                .map_err(|e| Error::Parse(format!("manifest line {}: bad {what} {:?}: {e}", i + 1, fields[k])))
        };
        out.push(SampleRecord {
            depth: resolve(fields[0]),
            rgb: optional(fields.get(1)),
            label: num(2, "label")?,
            subject: num(3, "subject")?,
            camera: num(4, "camera")?,
            pose: fields[5].trim().to_string(),
            crops: optional(fields.get(6)),
            repetition: if fields.len() == 8 { num(7, "repetition")? } else { 0 },
        });
    }
    Ok(out)
}

pub fn read_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Paths under `base` are written relative to it.
pub fn format_manifest(records: &[SampleRecord], base: &Path) -> String {
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).display().to_string();
    records
        .iter()
        .map(|r| {
            format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                rel(&r.depth),
                r.rgb.as_deref().map_or("-".into(), rel),
                r.label,
                r.subject,
                r.camera,
                r.pose,
                r.crops.as_deref().map_or("-".into(), rel),
                r.repetition
            )
        })
        .collect()
}

pub fn write_manifest(records: &[SampleRecord], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new("."));
    fs::write(path, format_manifest(records, base)).map_err(|e| Error::io(path, e))
}

/// Train/test protocol.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Split {
    /// Train on the listed subjects; test on `test`, or on every other subject.
    CrossSubject { train: BTreeSet<u32>, test: Option<BTreeSet<u32>> },
    CrossView { train: BTreeSet<u32>, test: Option<BTreeSet<u32>> },
    /// Repetitions with `repetition % 3 == 0` train, the rest test.
    OneThird,
    /// Repetitions with `repetition % 3 != 0` train, the rest test.
    TwoThirds,
}

impl Split {
    /// `Some(true)` for training, `Some(false)` for testing, `None` when the
    /// sample takes no part.
    pub fn side(&self, meta: &SampleMeta) -> Option<bool> {
        let by_id = |id: u32, train: &BTreeSet<u32>, test: &Option<BTreeSet<u32>>| {
            if train.contains(&id) {
                Some(true)
            } else {
                match test {
                    Some(t) if !t.contains(&id) => None,
                    _ => Some(false),
                }
            }
        };
        match self {
            Split::CrossSubject { train, test } => by_id(meta.subject, train, test),
            Split::CrossView { train, test } => by_id(meta.camera, train, test),
            Split::OneThird => Some(meta.repetition % 3 == 0),
            Split::TwoThirds => Some(meta.repetition % 3 != 0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Split::CrossSubject { train, test: Some(test) } | Split::CrossView { train, test: Some(test) } => {
                if let Some(id) = train.intersection(test).next() {
                    return Err(Error::Protocol(format!("id {id} is on both sides of the split")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Indices of the train and test samples. Errors when the split overlaps,
    /// leaves the train side empty, or a class has no training sample.
    pub fn partition(&self, metas: &[&SampleMeta]) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate()?;
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, m) in metas.iter().enumerate() {
            match self.side(m) {
                Some(true) => train.push(i),
                Some(false) => test.push(i),
                None => {}
            }
        }
        if train.is_empty() {
            return Err(Error::Protocol(format!("split {self} leaves no training samples")));
        }
        let trained: BTreeSet<u32> = train.iter().map(|&i| metas[i].label).collect();
        if let Some(m) = metas.iter().find(|m| !trained.contains(&m.label)) {
            return Err(Error::Protocol(format!("class {} is absent from the training side of {self}", m.label)));
        }
        Ok((train, test))
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids = |s: &BTreeSet<u32>| s.iter().map(u32::to_string).collect::<Vec<_>>().join(";");
        match self {
            Split::CrossSubject { train, test } | Split::CrossView { train, test } => {
                let name = if matches!(self, Split::CrossSubject { .. }) { "cross-subject" } else { "cross-view" };
                write!(f, "{name}[train={}", ids(train))?;
                if let Some(t) = test {
                    write!(f, " test={}", ids(t))?;
                }
                write!(f, "]")
            }
            Split::OneThird => write!(f, "one-third"),
            Split::TwoThirds => write!(f, "two-thirds"),
        }
    }
}

/// Protocol name without id sets, as given on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    CrossSubject,
    CrossView,
    OneThird,
    TwoThirds,
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-subject" => Ok(Protocol::CrossSubject),
            "cross-view" => Ok(Protocol::CrossView),
            "one-third" => Ok(Protocol::OneThird),
            "two-thirds" => Ok(Protocol::TwoThirds),
            _ => Err(Error::Parse(format!(
                "unknown split {s:?}; expected cross-subject, cross-view, one-third or two-thirds"
            ))),
        }
    }
}

impl Protocol {
    /// Builds the split. Without explicit training ids, every id but the
    /// largest trains (leave-one-out on the last subject or camera).
    pub fn split(self, train: Option<BTreeSet<u32>>, test: Option<BTreeSet<u32>>, metas: &[&SampleMeta]) -> Result<Split> {
        let default_train = |ids: BTreeSet<u32>| -> Result<BTreeSet<u32>> {
            let last = *ids.iter().next_back().ok_or_else(|| Error::Protocol("empty dataset".into()))?;
            Ok(ids.into_iter().filter(|&i| i != last).collect())
        };
        Ok(match self {
            Protocol::CrossSubject => Split::CrossSubject {
                train: match train {
                    Some(t) => t,
                    None => default_train(metas.iter().map(|m| m.subject).collect())?,
                },
                test,
            },
            Protocol::CrossView => Split::CrossView {
                train: match train {
                    Some(t) => t,
                    None => default_train(metas.iter().map(|m| m.camera).collect())?,
                },
                test,
            },
            Protocol::OneThird => Split::OneThird,
            Protocol::TwoThirds => Split::TwoThirds,
        })
    }
}
