use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::extract::SampleFeatures;
use super::streams::{build_streams, StreamId, StreamPlan};
use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::learn::{fuse_scores, pca_fit, svm_score, svm_train, unit_rms_scale, StreamModel};

/// A stream plan with a PCA + SVM model for every stream that had data.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPlan {
    pub config: PipelineConfig,
    pub plan: StreamPlan,
    /// Sorted class labels; score vectors follow this order.
    pub classes: Vec<u32>,
    /// Keyed by full stream id.
    pub models: BTreeMap<String, StreamModel>,
    /// Sequence-level training accuracy per stream.
    pub train_accuracy: BTreeMap<String, f64>,
}

fn train_stream(id: &StreamId, samples: &[&SampleFeatures], classes: &[u32], cfg: &PipelineConfig) -> Result<Option<(StreamModel, f64)>> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    // Clip ranges of each training sequence.
    let mut spans = Vec::new();
    for s in samples.iter().filter(|s| s.meta.pose == id.pose) {
        if let Some(clips) = s.clips(id) {
            let start = xs.len();
            for c in clips {
                xs.push(c.values.clone());
                ys.push(s.meta.label);
            }
            if !clips.is_empty() {
                spans.push((start..xs.len(), s.meta.label));
            }
        }
    }
    if xs.is_empty() {
        return Ok(None);
    }
    let present: BTreeSet<u32> = ys.iter().copied().collect();
    if let Some(missing) = classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::Protocol(format!("class {missing} has no training data in stream {id}")));
    }
    let pca = if xs.len() >= 2 {
        match pca_fit(&xs, cfg.pca.target()) {
            Ok(p) => Some(p),
            Err(Error::Rank(m)) => {
                warn!("stream {id}: {m}; training without PCA");
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let mut reduced = match &pca {
        Some(p) => xs.iter().map(|x| p.project(x)).collect::<Result<Vec<_>>>()?,
        None => xs,
    };
    let scale = unit_rms_scale(&reduced);
    reduced.iter_mut().flatten().for_each(|a| *a *= scale);
    let svm = svm_train(&reduced, &ys, &cfg.svm.params())?;
    let mut correct = 0;
    for (span, label) in &spans {
        let scores = reduced[span.clone()]
            .iter()
            .map(|x| svm_score(&svm, x, cfg.score_mode))
            .collect::<Result<Vec<_>>>()?;
        correct += usize::from(svm.labels[fuse_scores(&scores)?.argmax()] == *label);
    }
    Ok(Some((StreamModel { pca, scale, svm }, correct as f64 / spans.len() as f64)))
}

/// Fits every stream on the given (training) samples. Streams whose pose
/// bank has no samples stay untrained.
pub fn train_features(samples: &[&SampleFeatures], cfg: &PipelineConfig) -> Result<TrainedPlan> {
    cfg.validate()?;
    let plan = build_streams(cfg)?;
    let usable: Vec<&SampleFeatures> = samples.iter().copied().filter(|s| s.skipped.is_none()).collect();
    if usable.is_empty() {
        return Err(Error::Protocol("no usable training samples".into()));
    }
    let classes: Vec<u32> = usable.iter().map(|s| s.meta.label).collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::Protocol(format!("training needs at least 2 classes, got {}", classes.len())));
    }
    let results = plan
        .streams
        .par_iter()
        .map(|id| train_stream(id, &usable, &classes, cfg))
        .collect::<Vec<_>>();
    let mut models = BTreeMap::new();
    let mut train_accuracy = BTreeMap::new();
    for (id, r) in plan.streams.iter().zip(results) {
        match r? {
            Some((model, acc)) => {
                info!("trained {id}: training accuracy {acc:.3}");
                models.insert(id.to_string(), model);
                train_accuracy.insert(id.to_string(), acc);
            }
            None => warn!("stream {id} has no training data"),
        }
    }
    Ok(TrainedPlan {
        config: cfg.clone(),
        plan,
        classes,
        models,
        train_accuracy,
    })
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    classes: Vec<u32>,
    train_accuracy: BTreeMap<String, f64>,
    config: PipelineConfig,
}

impl TrainedPlan {
    pub fn is_trained(&self) -> bool {
        !self.models.is_empty()
    }

    /// Writes `plan.toml` and one `models/<stream>.model` file per trained stream.
    pub fn save(&self, dir: &Path) -> Result<()> {
        let models = dir.join("models");
        fs::create_dir_all(&models).map_err(|e| Error::io(&models, e))?;
        let file = PlanFile {
            classes: self.classes.clone(),
            train_accuracy: self.train_accuracy.clone(),
            config: self.config.clone(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?;
        let path = dir.join("plan.toml");
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        for id in &self.plan.streams {
            if let Some(m) = self.models.get(&id.to_string()) {
                m.save(&models.join(format!("{}.model", id.file_stem())))?;
            }
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("plan.toml");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: PlanFile = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        file.config.validate()?;
        let plan = build_streams(&file.config)?;
        let mut models = BTreeMap::new();
        for id in &plan.streams {
            let p = dir.join("models").join(format!("{}.model", id.file_stem()));
            if p.exists() {
                models.insert(id.to_string(), StreamModel::load(&p)?);
            }
        }
        Ok(Self {
            config: file.config,
            plan,
            classes: file.classes,
            models,
            train_accuracy: file.train_accuracy,
        })
    }
}
