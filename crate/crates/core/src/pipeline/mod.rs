//! Stream enumeration and the end-to-end extract / train / evaluate flow.

mod config;
mod dataset;
mod eval;
mod extract;
mod streams;
mod synth;
mod train;

pub use config::{NetworkConfig, PcaConfig, PipelineConfig, PivotMode, PlaneFusion, SvmConfig};
pub use dataset::{
    format_manifest, load_sample, mask_outside, parse_crop_boxes, parse_manifest, read_manifest, write_manifest, CropBox,
    Protocol, Sample, SampleMeta, SampleRecord, Split,
};
pub use eval::{classify_features, evaluate_features, Classification, EvalReport};
pub use extract::{
    dmm_network_key, extract_sample, intrinsics_for, masked_depth, pivot_for, plane_motion, rgb_network_key,
    view_sequence, NetworkBank, PlaneMotion, SampleFeatures, StreamFeatures,
};
pub use streams::{build_streams, StreamId, StreamKind, StreamPlan};
pub use synth::{generate_synthetic, generate_synthetic_dataset, sample_name, Action, NoiseLevel, Scene, SynthSpec};
pub use train::{train_features, TrainedPlan};

use log::info;

use crate::error::Result;

pub fn extract_all(samples: &[Sample], cfg: &PipelineConfig, bank: &NetworkBank) -> Result<Vec<SampleFeatures>> {
    samples
        .iter()
        .map(|s| {
            info!("extracting {}", s.meta.name);
            extract_sample(s, cfg, bank)
        })
        .collect()
}

fn metas(records: &[SampleRecord]) -> Vec<SampleMeta> {
    records.iter().map(SampleRecord::meta).collect()
}

fn extract_records(records: &[&SampleRecord], cfg: &PipelineConfig, bank: &NetworkBank) -> Result<Vec<SampleFeatures>> {
    records.iter().map(|r| extract_sample(&load_sample(r)?, cfg, bank)).collect()
}

/// Extracts and trains on the training side of `split`.
pub fn train(dataset: &[SampleRecord], split: &Split, cfg: &PipelineConfig) -> Result<TrainedPlan> {
    cfg.validate()?;
    let m = metas(dataset);
    let (train_idx, _) = split.partition(&m.iter().collect::<Vec<_>>())?;
    let bank = NetworkBank::build(cfg)?;
    let recs: Vec<&SampleRecord> = train_idx.iter().map(|&i| &dataset[i]).collect();
    let feats = extract_records(&recs, cfg, &bank)?;
    train_features(&feats.iter().collect::<Vec<_>>(), cfg)
}

/// Evaluates `plan` on the test side of `split`.
pub fn evaluate(dataset: &[SampleRecord], split: &Split, plan: &TrainedPlan) -> Result<EvalReport> {
    let m = metas(dataset);
    let (_, test_idx) = split.partition(&m.iter().collect::<Vec<_>>())?;
    let bank = NetworkBank::build(&plan.config)?;
    let recs: Vec<&SampleRecord> = test_idx.iter().map(|&i| &dataset[i]).collect();
    let feats = extract_records(&recs, &plan.config, &bank)?;
    evaluate_features(&feats.iter().collect::<Vec<_>>(), plan, &split.to_string())
}

pub fn classify(rec: &SampleRecord, plan: &TrainedPlan) -> Result<Classification> {
    let bank = NetworkBank::build(&plan.config)?;
    classify_features(&extract_sample(&load_sample(rec)?, &plan.config, &bank)?, plan)
}

/// Extracts every sample once, trains on the training side of `split` and
/// evaluates on its test side.
pub fn run_split(samples: &[Sample], split: &Split, cfg: &PipelineConfig) -> Result<(TrainedPlan, EvalReport)> {
    cfg.validate()?;
    let (train_idx, test_idx) = split.partition(&samples.iter().map(|s| &s.meta).collect::<Vec<_>>())?;
    let bank = NetworkBank::build(cfg)?;
    let feats = extract_all(samples, cfg, &bank)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| &feats[i]).collect::<Vec<_>>();
    let plan = train_features(&pick(&train_idx), cfg)?;
    let report = evaluate_features(&pick(&test_idx), &plan, &split.to_string())?;
    Ok((plan, report))
}
