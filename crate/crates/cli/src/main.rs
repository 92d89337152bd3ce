use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use mvdmm::dmm::{render_template, Window};
use mvdmm::geometry::Plane;
use mvdmm::pipeline::{
    classify_features, evaluate, extract_sample, generate_synthetic_dataset, intrinsics_for, load_sample,
    masked_depth, pivot_for, plane_motion, read_manifest, view_sequence, Action, NetworkBank, NoiseLevel, PipelineConfig,
    Protocol, SampleMeta, SampleRecord, StreamFeatures, SynthSpec, TrainedPlan,
};
use mvdmm::videoio::{write_image, Image};

#[derive(Parser)]
#[command(name = "mvdmm", version, about = "Multi-view depth motion map action recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic action dataset with a manifest.
    Synth(SynthArgs),
    /// Extract per-stream clip features to CSV.
    Extract(ExtractArgs),
    /// Train per-stream PCA + SVM models.
    Train(TrainArgs),
    /// Evaluate a trained plan on the test side of a split.
    Eval(EvalArgs),
    /// Classify every record of a manifest with a trained plan.
    Classify(ClassifyArgs),
    /// Export rendered depth motion map templates as images.
    RenderDmm(RenderArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Pipeline config (TOML). Defaults to the full-size configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated view angles in degrees, e.g. -30,0,30.
    #[arg(long, allow_hyphen_values = true)]
    angles: Option<String>,
    /// Comma-separated depth windows, e.g. 5,10,all.
    #[arg(long)]
    windows: Option<String>,
    /// Restrict the plan to one pose bank; other samples are ignored.
    #[arg(long)]
    pose_bank: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(a) = &self.angles {
            cfg.angles = parse_list(a, "angle")?;
        }
        if let Some(w) = &self.windows {
            cfg.depth_windows = parse_list::<Window>(w, "window")?;
        }
        if let Some(p) = &self.pose_bank {
            if !cfg.poses.contains(p) {
                bail!("pose bank {p:?} is not one of {:?}", cfg.poses);
            }
            cfg.poses = vec![p.clone()];
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SplitArgs {
    /// cross-subject, cross-view, one-third or two-thirds.
    #[arg(long, default_value = "cross-subject")]
    split: String,
    /// Training subject (or camera) ids, comma-separated.
    #[arg(long)]
    train_ids: Option<String>,
    /// Test ids; defaults to every id not used for training.
    #[arg(long)]
    test_ids: Option<String>,
}

impl SplitArgs {
    fn split(&self, records: &[SampleRecord]) -> Result<mvdmm::pipeline::Split> {
        let protocol: Protocol = self.split.parse()?;
        let ids = |s: &Option<String>| s.as_deref().map(|v| parse_list::<u32>(v, "id").map(BTreeSet::from_iter)).transpose();
        let metas: Vec<SampleMeta> = records.iter().map(SampleRecord::meta).collect();
        Ok(protocol.split(ids(&self.train_ids)?, ids(&self.test_ids)?, &metas.iter().collect::<Vec<_>>())?)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Comma-separated actions: translate, oscillate, arc, static.
    #[arg(long, default_value = "translate,oscillate,arc")]
    actions: String,
    #[arg(long, default_value_t = 6)]
    subjects: u32,
    #[arg(long, default_value_t = 2)]
    cameras: u32,
    #[arg(long, default_value_t = 40)]
    frames: usize,
    /// Depth noise sigma in mm.
    #[arg(long)]
    depth_noise: Option<f64>,
    /// Depth dropout probability.
    #[arg(long)]
    dropout: Option<f64>,
    /// RGB noise sigma in intensity levels.
    #[arg(long)]
    rgb_noise: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for the trained plan.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    split: SplitArgs,
    /// Trained plan directory.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Write the report CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Depth sequence (.bin).
    #[arg(long)]
    depth: PathBuf,
    #[arg(long, default_value = "xy")]
    plane: String,
    #[arg(long, default_value = "5")]
    window: String,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    angle: f64,
    /// Output image size as WIDTHxHEIGHT.
    #[arg(long, default_value = "256x256")]
    size: String,
    /// Output directory for t####.ppm images.
    #[arg(long)]
    out: PathBuf,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|s| s.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} {s:?}: {e}")))
        .collect()
}

fn in_bank(cfg: &PipelineConfig, records: Vec<SampleRecord>) -> Vec<SampleRecord> {
    records.into_iter().filter(|r| cfg.poses.contains(&r.pose)).collect()
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = SynthSpec {
        actions: parse_list::<Action>(&a.actions, "action")?,
        subjects: a.subjects,
        cameras: a.cameras,
        frames: a.frames,
        seed: a.seed,
        ..SynthSpec::default()
    };
    let n = spec.noise;
    spec.noise = NoiseLevel {
        depth_sigma_mm: a.depth_noise.unwrap_or(n.depth_sigma_mm),
        dropout: a.dropout.unwrap_or(n.dropout),
        rgb_sigma: a.rgb_noise.unwrap_or(n.rgb_sigma),
    };
    let records = generate_synthetic_dataset(&spec, &a.out)?;
    let cfg_path = a.out.join("desk.toml");
    fs::write(&cfg_path, PipelineConfig::desk().to_toml_string()).with_context(|| cfg_path.display().to_string())?;
    println!("wrote {} samples and {}", records.len(), a.out.join("manifest.tsv").display());
    Ok(())
}

fn extract(a: &ExtractArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let records = in_bank(&cfg, read_manifest(&a.manifest)?);
    let bank = NetworkBank::build(&cfg)?;
    let mut out = std::io::BufWriter::new(fs::File::create(&a.out).with_context(|| a.out.display().to_string())?);
    writeln!(out, "sample,label,stream,clip_end,values")?;
    for r in &records {
        let f = extract_sample(&load_sample(r)?, &cfg, &bank)?;
        if let Some(reason) = &f.skipped {
            eprintln!("skipped {}: {reason}", f.meta.name);
        }
        for (stream, feats) in &f.streams {
            if let StreamFeatures::Clips(clips) = feats {
                for c in clips {
                    let values: Vec<String> = c.values.iter().map(|v| v.to_string()).collect();
                    writeln!(out, "{},{},{},{},{}", f.meta.name, f.meta.label, stream, c.provenance.clip_end, values.join(" "))?;
                }
            }
        }
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let records = in_bank(&cfg, read_manifest(&a.manifest)?);
    let split = a.split.split(&records)?;
    info!("training on {split}");
    let plan = mvdmm::pipeline::train(&records, &split, &cfg)?;
    plan.save(&a.out)?;
    let worst = plan.train_accuracy.values().copied().fold(f64::INFINITY, f64::min);
    println!(
        "trained {} of {} streams (lowest training accuracy {:.3}) into {}",
        plan.models.len(),
        plan.plan.len(),
        worst,
        a.out.display()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let plan = TrainedPlan::load(&a.plan)?;
    let records = in_bank(&plan.config, read_manifest(&a.manifest)?);
    let split = a.split.split(&records)?;
    let report = evaluate(&records, &split, &plan)?;
    write!(io::stdout().lock(), "{}", report.to_table())?;
    if let Some(p) = &a.out {
        fs::write(p, report.to_csv()).with_context(|| p.display().to_string())?;
    }
    Ok(())
}

fn classify(a: &ClassifyArgs) -> Result<()> {
    let plan = TrainedPlan::load(&a.plan)?;
    let bank = NetworkBank::build(&plan.config)?;
    let records = in_bank(&plan.config, read_manifest(&a.manifest)?);
    let mut out = io::stdout().lock();
    writeln!(out, "sample\ttruth\tpredicted\tscores")?;
    for r in &records {
        let f = extract_sample(&load_sample(r)?, &plan.config, &bank)?;
        if let Some(reason) = &f.skipped {
            writeln!(out, "{}\t{}\t-\tskipped: {reason}", f.meta.name, r.label)?;
            continue;
        }
        let c = classify_features(&f, &plan)?;
        let scores: Vec<String> = c.scores.values.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(out, "{}\t{}\t{}\t{}", f.meta.name, r.label, c.label, scores.join(" "))?;
    }
    Ok(())
}

fn render_dmm(a: &RenderArgs) -> Result<()> {
    let cfg = a.cfg.load()?;
    let plane: Plane = a.plane.parse()?;
    let window: Window = a.window.parse()?;
    let (w, h) = a
        .size
        .split_once('x')
        .and_then(|(w, h)| Some((w.parse::<usize>().ok()?, h.parse::<usize>().ok()?)))
        .context("size must look like 256x256")?;
    let seq = mvdmm::videoio::read_depth_bin(&a.depth)?;
    let sample = mvdmm::pipeline::Sample::new(
        SampleMeta {
            name: a.depth.display().to_string(),
            label: 0,
            subject: 0,
            camera: 0,
            pose: cfg.poses[0].clone(),
            repetition: 0,
        },
        seq,
        None,
        None,
    )?;
    let frames = masked_depth(&sample);
    let (fw, fh) = sample.depth.dims();
    let intr = intrinsics_for(&cfg, fw, fh);
    let view = view_sequence(&frames, &intr, a.angle, &cfg, pivot_for(&frames, &intr, cfg.pivot))?;
    let templates = plane_motion(&view, plane, a.angle, &cfg)?.templates(window, None, cfg.noise_floor)?;
    fs::create_dir_all(&a.out).with_context(|| a.out.display().to_string())?;
    for t in &templates {
        write_image(&Image::Color(render_template(t, w, h)?), a.out.join(format!("t{:04}.ppm", t.start)))?;
    }
    println!("wrote {} templates to {}", templates.len(), a.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Classify(a) => classify(a),
        Command::RenderDmm(a) => render_dmm(a),
    };
    // a closed pipe (e.g. `| head`) is not an error
    match result {
        Err(e) if e.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) => Ok(()),
        r => r,
    }
}
