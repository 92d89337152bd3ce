use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::extract::{SampleFeatures, StreamFeatures};
use super::train::TrainedPlan;
use crate::error::{contract, Error, Result};
use crate::learn::{fuse_scores, svm_score, ScoreMode, ScoreVector, StreamModel};

#[derive(Clone, Debug, PartialEq)]
pub struct Classification {
    pub label: u32,
    /// Final fused scores, in class order.
    pub scores: ScoreVector,
    pub dmm: ScoreVector,
    pub rgb: Option<ScoreVector>,
    /// Sequence-level score of each stream, keyed by pose-free stream key.
    pub streams: BTreeMap<String, ScoreVector>,
}

fn clip_score(model: &StreamModel, values: &[f32], mode: ScoreMode) -> Result<ScoreVector> {
    svm_score(&model.svm, &model.reduce(values)?, mode)
}

/// Scores every stream of the sample's pose bank, averages each stream's
/// clip scores, then fuses the depth streams, the RGB streams, and finally
/// the two halves. Without RGB scores the depth fusion is the result.
pub fn classify_features(sf: &SampleFeatures, plan: &TrainedPlan) -> Result<Classification> {
    if !plan.is_trained() {
        return Err(Error::State("the stream plan has not been trained".into()));
    }
    if let Some(reason) = &sf.skipped {
        return Err(contract!("sample {} was skipped: {reason}", sf.meta.name));
    }
    let mode = plan.config.score_mode;
    let mut dmm = Vec::new();
    let mut rgb = Vec::new();
    let mut streams = BTreeMap::new();
    for id in plan.plan.bank(&sf.meta.pose) {
        let clips = match sf.streams.get(&id.to_string()) {
            Some(StreamFeatures::Clips(c)) if !c.is_empty() => c,
            _ => continue,
        };
        let model = plan
            .models
            .get(&id.to_string())
            .ok_or_else(|| Error::State(format!("stream {id} is untrained")))?;
        let scores = clips
            .iter()
            .map(|c| clip_score(model, &c.values, mode))
            .collect::<Result<Vec<_>>>()?;
        let s = fuse_scores(&scores)?;
        if id.is_dmm() {
            dmm.push(s.clone());
        } else {
            rgb.push(s.clone());
        }
        streams.insert(id.key(), s);
    }
    if dmm.is_empty() {
        return Err(contract!("sample {} produced no depth stream scores", sf.meta.name));
    }
    let dmm = fuse_scores(&dmm)?;
    let rgb = if rgb.is_empty() { None } else { Some(fuse_scores(&rgb)?) };
    let scores = match &rgb {
        Some(r) => fuse_scores(&[r.clone(), dmm.clone()])?,
        None => dmm.clone(),
    };
    Ok(Classification {
        label: plan.classes[scores.argmax()],
        scores,
        dmm,
        rgb,
        streams,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub classes: Vec<u32>,
    /// `counts[truth][prediction]`.
    pub counts: Vec<Vec<usize>>,
    /// Row-normalized `counts` in percent.
    pub confusion: Vec<Vec<f64>>,
    /// `None` for classes without test samples.
    pub per_class: Vec<Option<f64>>,
    pub overall: f64,
    pub samples: usize,
    pub skipped: usize,
    /// Accuracy of each stream on its own, keyed by pose-free stream key.
    pub stream_accuracy: BTreeMap<String, f64>,
}

impl EvalReport {
    /// Builds the report from `(truth, prediction)` class indices.
    pub fn from_predictions(split: String, classes: Vec<u32>, pairs: &[(usize, usize)]) -> Self {
        let n = classes.len();
        let mut counts = vec![vec![0usize; n]; n];
        for &(t, p) in pairs {
            counts[t][p] += 1;
        }
        let confusion = counts
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter()
                    .map(|&c| if total == 0 { 0.0 } else { 100.0 * c as f64 / total as f64 })
                    .collect()
            })
            .collect();
        let per_class = counts
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| row[i] as f64 / total as f64)
            })
            .collect();
        let correct = pairs.iter().filter(|(t, p)| t == p).count();
        Self {
            split,
            classes,
            counts,
            confusion,
            per_class,
            overall: if pairs.is_empty() { 0.0 } else { correct as f64 / pairs.len() as f64 },
            samples: pairs.len(),
            skipped: 0,
            stream_accuracy: BTreeMap::new(),
        }
    }

    pub fn best_stream(&self) -> Option<(&str, f64)> {
        self.stream_accuracy
            .iter()
            .fold(None, |best: Option<(&str, f64)>, (k, &v)| match best {
                Some((_, b)) if b >= v => best,
                _ => Some((k.as_str(), v)),
            })
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split: {}", self.split);
        let _ = writeln!(s, "samples: {} (skipped {})", self.samples, self.skipped);
        let _ = writeln!(s, "overall accuracy: {:.2}%", 100.0 * self.overall);
        let _ = write!(s, "\n{:>10}", "truth\\pred");
        for c in &self.classes {
            let _ = write!(s, "{c:>8}");
        }
        let _ = writeln!(s, "{:>10}", "acc");
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{:>10}", self.classes[i]);
            for v in row {
                let _ = write!(s, "{v:>8.2}");
            }
            match self.per_class[i] {
                Some(a) => {
                    let _ = writeln!(s, "{:>9.2}%", 100.0 * a);
                }
                None => {
                    let _ = writeln!(s, "{:>10}", "-");
                }
            }
        }
        if !self.stream_accuracy.is_empty() {
            let _ = writeln!(s, "\nsingle-stream accuracy:");
            for (k, v) in &self.stream_accuracy {
                let _ = writeln!(s, "  {k:<28}{:>7.2}%", 100.0 * v);
            }
        }
        s
    }

    /// Split, accuracies, then the confusion matrix in row percent.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split,{}", self.split);
        let _ = writeln!(s, "samples,{}", self.samples);
        let _ = writeln!(s, "skipped,{}", self.skipped);
        let _ = writeln!(s, "overall_accuracy,{:.6}", self.overall);
        let _ = write!(s, "truth\\pred");
        for c in &self.classes {
            let _ = write!(s, ",{c}");
        }
        let _ = writeln!(s, ",accuracy");
        for (i, row) in self.confusion.iter().enumerate() {
            let _ = write!(s, "{}", self.classes[i]);
            for v in row {
                let _ = write!(s, ",{v:.2}");
            }
            match self.per_class[i] {
                Some(a) => {
                    let _ = writeln!(s, ",{a:.6}");
                }
                None => {
                    let _ = writeln!(s, ",");
                }
            }
        }
        for (k, v) in &self.stream_accuracy {
            let _ = writeln!(s, "stream,{k},{v:.6}");
        }
        s
    }
}

/// Classifies every usable sample, tallying the fused decision and each
/// stream's own decision.
pub fn evaluate_features(samples: &[&SampleFeatures], plan: &TrainedPlan, split: &str) -> Result<EvalReport> {
    let usable: Vec<&SampleFeatures> = samples.iter().copied().filter(|s| s.skipped.is_none()).collect();
    if usable.is_empty() {
        return Err(Error::Protocol(format!("split {split} has no usable test samples")));
    }
    let index = |label: u32| {
        plan.classes
            .iter()
            .position(|&c| c == label)
            .ok_or_else(|| Error::Protocol(format!("test class {label} was never trained")))
    };
    let mut pairs = Vec::with_capacity(usable.len());
    let mut stream_hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for s in &usable {
        let truth = index(s.meta.label)?;
        let c = classify_features(s, plan)?;
        pairs.push((truth, index(c.label)?));
        for (key, score) in &c.streams {
            let e = stream_hits.entry(key.clone()).or_default();
            e.0 += usize::from(score.argmax() == truth);
            e.1 += 1;
        }
    }
    let mut report = EvalReport::from_predictions(split.to_string(), plan.classes.clone(), &pairs);
    report.skipped = samples.len() - usable.len();
    report.stream_accuracy = stream_hits
        .into_iter()
        .map(|(k, (hit, n))| (k, hit as f64 / n as f64))
        .collect();
    Ok(report)
}
