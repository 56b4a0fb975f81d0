//! `blocksing`: data preparation, training, synthesis and evaluation.
//!
//! Exit codes: 0 success, 1 usage, 2 data or format error, 3 numerical
//! failure or a failed self-check.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use blocksing::evaluation::{
    evaluate_mcd, export_listening_test, w1_sweep, ListeningModel, ProbeConfig, LISTENING_HEADER,
};
use blocksing::features::{generate_synthetic_dataset, write_container, Dataset, Split, SyntheticSpec};
use blocksing::inference::{synthesize_song, SongConditions, SynthOptions};
use blocksing::model::{model_gradcheck, Checkpoint};
use blocksing::nn::gradcheck::{run_suite, CheckReport};
use blocksing::training::{objective, Trainer};
use blocksing::vocoder::write_wav;
use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigFile, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "blocksing", version, about = "Block-wise adversarial singing synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze a directory of recordings and annotations into a dataset.
    Prepare(PrepareArgs),
    /// Write a synthetic dataset with known per-phoneme templates.
    Synthdata(SynthdataArgs),
    /// Train a model, or resume a run.
    Train(TrainArgs),
    /// Synthesize one song, optionally with another singer's identity.
    Synth(SynthArgs),
    /// Mean mel-cepstral distortion over a split.
    EvalMcd(EvalArgs),
    /// Render the listening-test stimuli of one or more models.
    ExportListening(ListeningArgs),
    /// Finite-difference check of the autodiff ops and the networks.
    Gradcheck(SeedArgs),
    /// Critic estimate of the Wasserstein-1 distance on shifted Gaussians.
    W1probe(ProbeArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// Corpus root: one directory per singer with `<song>.wav` and `<song>.txt`.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Run configuration; only the `analysis` table is used.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Songs per singer kept out of training.
    #[arg(long, default_value_t = 1)]
    held_out: usize,
}

#[derive(Debug, Args)]
struct SynthdataArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    singers: usize,
    /// Vocabulary size including silence.
    #[arg(long, default_value_t = 8)]
    phonemes: usize,
    #[arg(long, default_value_t = 8)]
    songs: usize,
    #[arg(long, default_value_t = 1024)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    held_out: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Dataset directory written by `prepare` or `synthdata`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory: config.json, log.jsonl, checkpoints/ and reports/.
    #[arg(long)]
    run: PathBuf,
    /// TOML or JSON file with `train`, `model` and `analysis` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Adversarial objective.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Continue from `checkpoints/latest.gsc` of the run directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    run: PathBuf,
    /// Defaults to `checkpoints/latest.gsc` of the run.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Defaults to the run's dataset.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    song: String,
    /// Target singer id; defaults to the song's own singer.
    #[arg(long)]
    singer: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the generated features to this container.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `train` or `held-out`.
    #[arg(long, default_value = "held-out")]
    split: Split,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ListeningArgs {
    /// `name=run_dir`, repeatable. Uses each run's latest checkpoint.
    #[arg(long = "model", required = true)]
    models: Vec<String>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Samples per distribution.
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Standard deviation of both clouds.
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
}

/// A self-check that ran to completion but did not pass.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 3;
    }
    match err.downcast_ref::<blocksing::Error>() {
        Some(blocksing::Error::Numerical(_)) => 3,
        Some(blocksing::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Prepare(a) => prepare(a),
        Command::Synthdata(a) => synthdata(a),
        Command::Train(a) => train(a),
        Command::Synth(a) => synth(a),
        Command::EvalMcd(a) => eval_mcd(a),
        Command::ExportListening(a) => export_listening(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::W1probe(a) => w1probe(a),
    }
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let cfg = ConfigFile::load(a.config.as_deref())?;
    let data = blocksing::features::prepare_corpus(&a.corpus, &cfg.analysis, a.held_out)?;
    data.save(&a.out)?;
    println!(
        "{} songs, {} singers, {} phonemes -> {}",
        data.songs.len(),
        data.n_singers(),
        data.n_phonemes(),
        a.out.display()
    );
    Ok(())
}

fn synthdata(a: SynthdataArgs) -> Result<()> {
    let mut spec = SyntheticSpec::new(a.seed, a.singers, a.phonemes, a.songs, a.frames);
    spec.held_out = a.held_out;
    let synth = generate_synthetic_dataset(&spec)?;
    synth.dataset.save(&a.out)?;
    println!(
        "{} songs x {} frames, separation ratio {:.1} -> {}",
        a.songs,
        a.frames,
        synth.separation_ratio(),
        a.out.display()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    fs::create_dir_all(&a.run).with_context(|| format!("creating {}", a.run.display()))?;
    let ckpt_dir = a.run.join("checkpoints");
    let log_path = a.run.join("log.jsonl");

    let (mut run_cfg, ckpt) = if a.resume {
        let run_cfg = RunConfig::load(&a.run)?;
        let ckpt = Checkpoint::load(ckpt_dir.join("latest.gsc"))?;
        (run_cfg, Some(ckpt))
    } else {
        let file = ConfigFile::load(a.config.as_deref())?;
        let data_dir = a.data.clone().context("--data is required for a new run")?;
        let data = Dataset::load(&data_dir)?;
        let model = file.model.build(data.n_phonemes(), data.n_singers());
        let run_cfg = RunConfig {
            data_dir,
            train: file.train,
            model,
            analysis: file.analysis,
        };
        (run_cfg, None)
    };
    if let Some(d) = a.data {
        run_cfg.data_dir = d;
    }
    if let Some(m) = a.mode {
        run_cfg.train.mode = m;
    }
    if let Some(e) = a.epochs {
        run_cfg.train.epochs = e;
    }
    if let Some(s) = a.seed {
        run_cfg.train.seed = s;
    }
    objective(&run_cfg.train.mode)?;
    run_cfg.train.validate()?;
    run_cfg.model.validate()?;
    run_cfg.save(&a.run)?;

    let data = Dataset::load(&run_cfg.data_dir)?;
    let trainer = match ckpt {
        Some(ck) => Trainer::resume(&data, ck, run_cfg.train.clone())?,
        None => Trainer::new(&data, run_cfg.model.clone(), run_cfg.train.clone())?,
    };
    let mut trainer = trainer.with_checkpoint_dir(&ckpt_dir).with_log_path(&log_path);
    let start = trainer.epoch;
    trainer.run()?;
    match trainer.log.epoch_mcd().last() {
        Some(mcd) if trainer.epoch > start => {
            println!("epochs {start}..{} done, train MCD {mcd:.3} dB", trainer.epoch)
        }
        _ => println!("nothing to do: run already at epoch {}", trainer.epoch),
    }
    Ok(())
}

struct LoadedModel {
    ckpt: Checkpoint,
    data: Dataset,
    run: RunConfig,
}

fn load_model(a: &ModelArgs) -> Result<LoadedModel> {
    let run = RunConfig::load(&a.run)?;
    let path = a
        .checkpoint
        .clone()
        .unwrap_or_else(|| a.run.join("checkpoints").join("latest.gsc"));
    let ckpt = Checkpoint::load(&path)?;
    let data = Dataset::load(a.data.as_deref().unwrap_or(&run.data_dir))?;
    Ok(LoadedModel { ckpt, data, run })
}

fn synth(a: SynthArgs) -> Result<()> {
    let m = load_model(&a.model)?;
    let song = m
        .data
        .song(&a.song)
        .ok_or_else(|| blocksing::Error::Validation(format!("no song `{}`", a.song)))?;
    let mut conds = SongConditions::from_song(song);
    if let Some(id) = &a.singer {
        let idx = m
            .data
            .singers
            .index_of(id)
            .ok_or_else(|| blocksing::Error::Validation(format!("no singer `{id}`")))?;
        conds = conds.with_singer(idx);
    }
    let mut opts = SynthOptions::new(&m.ckpt.config, a.seed);
    opts.pad_phoneme = m.data.vocab.silence_id();
    let (features, wave) = synthesize_song(
        &m.ckpt.params,
        &m.ckpt.config,
        Some(&m.data.norm_stats),
        &conds,
        &opts,
        &m.run.analysis,
    )?;
    write_wav(&a.out, &wave)?;
    if let Some(p) = &a.features {
        write_container(&features, p)?;
    }
    println!("{} frames, {:.2} s -> {}", features.n_frames(), wave.duration_s(), a.out.display());
    Ok(())
}

fn eval_mcd(a: EvalArgs) -> Result<()> {
    let m = load_model(&a.model)?;
    let name = a.model.run.file_name().map_or("model".into(), |n| n.to_string_lossy().into_owned());
    let report = evaluate_mcd(&m.ckpt.params, &m.ckpt.config, &m.data, a.split, &name, a.seed)?;
    let dir = a.model.run.join("reports");
    fs::create_dir_all(&dir)?;
    let split = match a.split {
        Split::Train => "train",
        Split::HeldOut => "held-out",
    };
    let path = dir.join(format!("mcd_{split}.json"));
    fs::write(&path, serde_json::to_string_pretty(&report)?)?;
    for s in &report.songs {
        println!("{:<24} {:>7} frames {:>9.3} dB", s.song, s.frames, s.mcd_db);
    }
    println!("mean {:.3} dB over {} songs -> {}", report.mean_db, report.songs.len(), path.display());
    Ok(())
}

fn export_listening(a: ListeningArgs) -> Result<()> {
    let data = Dataset::load(&a.data)?;
    let mut loaded = Vec::new();
    for spec in &a.models {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| blocksing::Error::Config(format!("expected name=run_dir, got `{spec}`")))?;
        let run = RunConfig::load(Path::new(dir))?;
        let ckpt = Checkpoint::load(Path::new(dir).join("checkpoints").join("latest.gsc"))?;
        loaded.push((name.to_string(), ckpt, run));
    }
    let models: Vec<ListeningModel<'_>> = loaded
        .iter()
        .map(|(name, ck, _)| ListeningModel {
            name: name.clone(),
            params: &ck.params,
            config: &ck.config,
        })
        .collect();
    let vocoder = &loaded[0].2.analysis;
    let rows = export_listening_test(&models, &data, vocoder, &a.out, a.seed)?;
    println!("{LISTENING_HEADER}");
    println!("{} stimuli -> {}", rows.len(), a.out.display());
    Ok(())
}

fn print_checks(reports: &[CheckReport]) -> bool {
    println!("{:<36} {:>7} {:>12} {:>10}  result", "check", "coords", "max rel err", "tolerance");
    for r in reports {
        println!(
            "{:<36} {:>7} {:>12.3e} {:>10.0e}  {}",
            r.name,
            r.coords,
            r.max_rel_err,
            r.tolerance,
            if r.passed { "ok" } else { "FAIL" }
        );
    }
    reports.iter().all(|r| r.passed)
}

fn gradcheck(a: SeedArgs) -> Result<()> {
    let mut reports = run_suite(a.seed)?;
    reports.extend(model_gradcheck(a.seed)?);
    if !print_checks(&reports) {
        bail!(CheckFailed("gradient check failed".into()));
    }
    Ok(())
}

fn w1probe(a: ProbeArgs) -> Result<()> {
    let cfg = ProbeConfig {
        seed: a.seed,
        steps: a.steps,
        ..ProbeConfig::default()
    };
    let report = w1_sweep(a.n, a.spread, &cfg)?;
    println!("{:>8} {:>12} {:>12}", "shift", "critic gap", "empirical");
    for r in &report.rows {
        println!("{:>8.2} {:>12.4e} {:>12.4}", r.shift, r.gap, r.oracle);
    }
    println!(
        "spearman {:.3}, identical-distribution gap {:.3e}",
        report.spearman, report.identical_gap
    );
    if !report.passed() {
        bail!(CheckFailed("critic gap does not track the distance".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_map_to_usage() {
        let e = anyhow::Error::from(blocksing::Error::Config("x".into()));
        assert_eq!(exit_code(&e), 1);
        let e = anyhow::Error::from(blocksing::Error::Numerical("x".into()));
        assert_eq!(exit_code(&e), 3);
        let e = anyhow::Error::from(blocksing::Error::Format("x".into()));
        assert_eq!(exit_code(&e), 2);
        assert_eq!(exit_code(&anyhow::anyhow!(CheckFailed("x".into()))), 3);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
