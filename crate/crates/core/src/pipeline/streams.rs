use std::fmt;

use super::PipelineConfig;
use crate::dmm::Window;
use crate::error::{Error, Result};
use crate::geometry::Plane;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StreamKind {
    Dmm { plane: Plane, window: Window, angle: f64 },
    Rgb { frames: usize },
}

impl fmt::Display for StreamKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StreamKind::Dmm { plane, window, angle } => write!(f, "dmm/{plane}/w{window}/a{angle}"),
            StreamKind::Rgb { frames } => write!(f, "rgb/r{frames}"),
        }
    }
}

/// One classifier slot: a pose bank plus a depth or RGB stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamId {
    pub pose: String,
    pub kind: StreamKind,
}

impl StreamId {
    /// The id without its pose bank, shared by the same stream of every bank.
    pub fn key(&self) -> String {
        self.kind.to_string()
    }

    pub fn is_dmm(&self) -> bool {
        matches!(self.kind, StreamKind::Dmm { .. })
    }

    /// File-name form of the id.
    pub fn file_stem(&self) -> String {
        self.to_string().replace('/', "_")
    }
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.pose, self.kind)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamPlan {
    pub streams: Vec<StreamId>,
}

impl StreamPlan {
    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn bank<'a>(&'a self, pose: &'a str) -> impl Iterator<Item = &'a StreamId> + 'a {
        self.streams.iter().filter(move |s| s.pose == pose)
    }
}

/// Every (pose, plane, window, angle) depth stream followed by the pose's
/// RGB streams, pose by pose.
pub fn build_streams(cfg: &PipelineConfig) -> Result<StreamPlan> {
    if cfg.poses.is_empty() || cfg.planes.is_empty() || cfg.angles.is_empty() || cfg.depth_windows.is_empty() {
        return Err(Error::Config("poses, planes, angles and depth windows must all be non-empty".into()));
    }
    let mut streams = Vec::new();
    for pose in &cfg.poses {
        for &plane in &cfg.planes {
            for &window in &cfg.depth_windows {
                for &angle in &cfg.angles {
                    streams.push(StreamId {
                        pose: pose.clone(),
                        kind: StreamKind::Dmm { plane, window, angle },
                    });
                }
            }
        }
        for &frames in &cfg.rgb_windows {
            streams.push(StreamId {
                pose: pose.clone(),
                kind: StreamKind::Rgb { frames },
            });
        }
    }
    Ok(StreamPlan { streams })
}
