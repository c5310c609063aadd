use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use serde_json::json;
use svcforge::diffusion::{
    finetune_cln, linear_schedule, pseudo_speaker_embedding, sample, train_toy, ConditionSet,
    FinetuneConfig, NoiseSchedule, ToyConfig, ToyDenoiser, TrainConfig, TrainExample,
};
use svcforge::Tensor;

use crate::util::{derive_seed, json_bytes, par_map, read_json, usage, CliError, CliResult, Outputs};

#[derive(Debug, Subcommand)]
pub enum DdpmCommand {
    /// Train a toy denoiser from scratch.
    Train(TrainArgs),
    /// Adapt only the conditional layer norm to one target speaker.
    Finetune(FinetuneArgs),
    /// Draw samples with classifier-free guidance.
    Sample(SampleArgs),
}

#[derive(Debug, Args)]
struct ScheduleArgs {
    /// β at the first diffusion step (dimensionless).
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    /// β at the last diffusion step (dimensionless).
    #[arg(long, default_value_t = 0.02)]
    beta_end: f64,
}

impl ScheduleArgs {
    fn build(&self, steps: usize) -> CliResult<NoiseSchedule> {
        Ok(linear_schedule(steps, self.beta_start, self.beta_end)?)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training examples, JSON Lines of `{x0: [..], cond: {..}}`.
    #[arg(long)]
    data: PathBuf,
    /// Output model directory.
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed (integer) for initialization and training draws.
    #[arg(long)]
    seed: u64,
    /// Optimizer steps (count).
    #[arg(long, default_value_t = 500)]
    steps: u64,
    /// Diffusion steps of the noise schedule (count).
    #[arg(long, default_value_t = 100)]
    diffusion_steps: usize,
    /// Hidden width (units).
    #[arg(long, default_value_t = 32)]
    hidden: usize,
    /// Learning rate (per step).
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    /// Examples per step (count).
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    /// Probability of dropping the speaker for guidance training (probability).
    #[arg(long, default_value_t = 0.1)]
    p_uncond: f64,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Pre-trained model directory.
    #[arg(long)]
    model: PathBuf,
    /// Target speaker examples, JSON Lines of `{x0, cond}`.
    #[arg(long)]
    data: PathBuf,
    /// Output model directory.
    #[arg(long)]
    out_dir: PathBuf,
    /// Seed (integer) for training draws and, unless given, the pseudo speaker.
    #[arg(long)]
    seed: u64,
    /// Seed (integer) of the unit-norm pseudo speaker embedding.
    #[arg(long)]
    speaker_seed: Option<u64>,
    /// CLN update iterations (count).
    #[arg(long, default_value_t = 500)]
    iterations: u64,
    /// Diffusion steps of the noise schedule (count).
    #[arg(long, default_value_t = 100)]
    diffusion_steps: usize,
    /// Learning rate (per iteration).
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    /// Examples per iteration (count).
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Model directory.
    #[arg(long)]
    model: PathBuf,
    /// Conditioning JSON `{linguistic, log_f0_vuv, loudness, speaker_embedding}`;
    /// defaults to all-zero features.
    #[arg(long)]
    cond: Option<PathBuf>,
    /// Use the pseudo speaker embedding with this seed (integer).
    #[arg(long)]
    speaker_seed: Option<u64>,
    /// Classifier-free guidance scale (dimensionless; 1 = conditional only).
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    guidance_scale: f64,
    /// Diffusion steps of the reverse chain (count).
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Number of samples (count).
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Seed (integer); sample k uses a seed derived from this and k.
    #[arg(long)]
    seed: u64,
    /// Output SVCF tensor `[count, x_dim]`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    schedule: ScheduleArgs,
}

fn read_examples(path: &Path) -> CliResult<Vec<TrainExample>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let ex: TrainExample = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(ex);
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{} has no examples", path.display())));
    }
    Ok(out)
}

/// Model tensors plus a copy of the loss history, all committed together.
fn model_outputs(model: &ToyDenoiser, dir: &Path, history: &impl serde::Serialize) -> CliResult<Outputs> {
    let staging = tempdir_near(dir)?;
    model.save(&staging)?;
    let mut out = Outputs::default();
    let mut names: Vec<_> = std::fs::read_dir(&staging)
        .map_err(|e| CliError::Internal(e.to_string()))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name())
        .collect();
    names.sort();
    for name in names {
        let bytes = std::fs::read(staging.join(&name)).map_err(|e| CliError::Internal(e.to_string()))?;
        out.add(dir.join(&name), bytes);
    }
    let _ = std::fs::remove_dir_all(&staging);
    out.add(dir.join("history.json"), json_bytes(history)?);
    Ok(out)
}

fn tempdir_near(dir: &Path) -> CliResult<PathBuf> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into());
    let p = dir.with_file_name(format!(".{name}.staging-{}", std::process::id()));
    std::fs::create_dir_all(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    Ok(p)
}

fn run_train(a: TrainArgs) -> CliResult<serde_json::Value> {
    let data = read_examples(&a.data)?;
    let first = &data[0];
    let speaker_dim = first
        .cond
        .speaker_embedding
        .as_ref()
        .map(Vec::len)
        .ok_or_else(|| CliError::Data("first example has no speaker embedding".into()))?;
    let cfg = ToyConfig {
        x_dim: first.x0.len(),
        linguistic_dim: first.cond.linguistic.len(),
        hidden: a.hidden,
        speaker_dim,
    };
    let sched = a.schedule.build(a.diffusion_steps)?;
    let model = ToyDenoiser::new(cfg, derive_seed(a.seed, 0))?;
    let tc = TrainConfig {
        steps: a.steps,
        lr: a.lr,
        p_uncond: a.p_uncond,
        batch_size: a.batch_size,
        seed: derive_seed(a.seed, 1),
    };
    let (trained, report) = train_toy(&model, &data, &sched, &tc, None)?;
    let written = model_outputs(&trained, &a.out_dir, &report)?.commit()?;
    let l2 = report.l2_history();
    let k = l2.len().min(50);
    let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    Ok(json!({
        "command": "ddpm train",
        "config": cfg,
        "parameters": trained.num_params(),
        "steps": a.steps,
        "uncond_evaluations": report.uncond_evaluations,
        "mean_l2_first": mean(&l2[..k]),
        "mean_l2_last": mean(&l2[l2.len() - k..]),
        "backbone_sha256": trained.backbone_digest(),
        "written": written,
    }))
}

fn run_finetune(a: FinetuneArgs) -> CliResult<serde_json::Value> {
    let model = ToyDenoiser::load(&a.model)?;
    let data = read_examples(&a.data)?;
    let sched = a.schedule.build(a.diffusion_steps)?;
    let target = pseudo_speaker_embedding(a.speaker_seed.unwrap_or(a.seed), model.config().speaker_dim)?;
    let fc = FinetuneConfig {
        iterations: a.iterations,
        lr: a.lr,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let (tuned, history) = finetune_cln(&model, &data, &sched, &fc, &target)?;
    if tuned.backbone_digest() != model.backbone_digest() {
        return Err(CliError::Internal("fine-tuning changed non-CLN parameters".into()));
    }
    let written = model_outputs(&tuned, &a.out_dir, &history)?.commit()?;
    Ok(json!({
        "command": "ddpm finetune",
        "iterations": a.iterations,
        "final_l2": history.last(),
        "target_embedding": target,
        "backbone_sha256": tuned.backbone_digest(),
        "cln_sha256_before": model.cln_digest(),
        "cln_sha256_after": tuned.cln_digest(),
        "written": written,
    }))
}

fn run_sample(a: SampleArgs) -> CliResult<serde_json::Value> {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let model = ToyDenoiser::load(&a.model)?;
    let sched = a.schedule.build(a.steps)?;
    let mut cond = match &a.cond {
        Some(p) => read_json::<ConditionSet>(p)?,
        None => ConditionSet::empty(model.config().linguistic_dim),
    };
    if let Some(s) = a.speaker_seed {
        cond.speaker_embedding = Some(pseudo_speaker_embedding(s, model.config().speaker_dim)?);
    }
    cond.validate()?;
    let seeds: Vec<u64> = (0..a.count as u64).map(|k| derive_seed(a.seed, k)).collect();
    let dim = model.config().x_dim;
    let rows = par_map(&seeds, |_, &s| Ok(sample(&model, &sched, &cond, a.guidance_scale, dim, s)?))?;
    let flat: Vec<f64> = rows.concat();
    let mut out = Outputs::default();
    out.add(a.out.clone(), Tensor::from_f64(vec![a.count, dim], &flat)?.encode());
    let written = out.commit()?;
    let means: Vec<f64> = (0..dim)
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
        .collect();
    Ok(json!({
        "command": "ddpm sample",
        "count": a.count,
        "guidance_scale": a.guidance_scale,
        "steps": a.steps,
        "mean": means,
        "written": written,
    }))
}

pub fn run(c: DdpmCommand) -> CliResult<serde_json::Value> {
    match c {
        DdpmCommand::Train(a) => run_train(a),
        DdpmCommand::Finetune(a) => run_finetune(a),
        DdpmCommand::Sample(a) => run_sample(a),
    }
}
