// SPDX-License-Identifier: MIT OR Apache-2.0

//! `argre`: corpus generation, reward training, edited evaluation and
//! ablation sweeps on the planted generator.
//!
//! Exit codes: 0 success, 1 runtime error, 2 usage error. `ARGRE_THREADS`
//! caps the worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use argre::checkpoint::Checkpoint;
use argre::eval::{
    evaluate, generate_corpus, reports_to_csv, run_sweep, train_reward, CorpusSettings,
    EditSettings, EvalSettings, PipelineConfig, RunReport, Sweep, TrainedReward,
};
use argre::plantedlm::{PlantedConfig, PlantedModel};
use argre::reprstore::{read_dump, write_dump};
use argre::rewardnet::TrainConfig;
use argre::{Error, Result};
use clap::{Args, Parser, Subcommand};

const EXIT_RUNTIME: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "argre",
    version,
    about = "Reward-guided representation editing toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a paired toxic/non-toxic corpus from the planted generator.
    GenCorpus(GenCorpusArgs),
    /// Train a token-level reward model on a corpus dump.
    Train(TrainArgs),
    /// Compare base and edited generations for a trained checkpoint.
    EditEval(EditEvalArgs),
    /// Run the full pipeline over a one-parameter grid.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct PlantedArgs {
    /// Vocabulary size of the planted generator.
    #[arg(long, default_value_t = 64)]
    vocab_size: usize,
    /// Hidden dimension of the planted generator.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Per-step Gaussian noise.
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f32,
    /// Seed for the generator's embeddings and planted direction.
    #[arg(long, default_value_t = 0)]
    model_seed: u64,
}

impl PlantedArgs {
    fn config(&self) -> PlantedConfig {
        PlantedConfig {
            vocab_size: self.vocab_size,
            dim: self.dim,
            noise_sigma: self.noise_sigma,
            seed: self.model_seed,
            ..PlantedConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pairs: u32,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    prompt_len: u32,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    resp_len: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    planted: PlantedArgs,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Interpolated trajectories per annotation pair.
    #[arg(long, default_value_t = 7)]
    n_in: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    #[arg(long, default_value_t = 5e-4)]
    lr: f32,
    #[arg(long, default_value_t = 0.05)]
    beta_r: f32,
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u32).range(1..))]
    hidden: u32,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    batch_pairs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
struct EditArgs {
    #[arg(long, default_value_t = 1.0)]
    beta: f32,
    #[arg(long, default_value_t = 0.5)]
    eta: f32,
    /// Refinement iterations; 0 keeps only the steering step.
    #[arg(long, default_value_t = 5)]
    iters: usize,
}

impl EditArgs {
    fn settings(&self) -> EditSettings {
        EditSettings {
            beta: self.beta,
            eta: self.eta,
            iters: self.iters,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct EvalArgs {
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u32).range(1..))]
    prompts: u32,
    #[arg(long = "eval-prompt-len", default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    eval_prompt_len: u32,
    #[arg(long, default_value_t = 128)]
    max_new: usize,
}

#[derive(Args, Debug)]
struct EditEvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[command(flatten)]
    eval: EvalArgs,
    #[command(flatten)]
    edit: EditArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report destination. The CSV row goes to stdout.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// `n_in:0,1,3,7,15` or `eta:0,0.1,0.25,0.5,0.75,1.0`.
    #[arg(long, value_parser = parse_sweep)]
    sweep: Sweep,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pairs: u32,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..))]
    prompt_len: u32,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u32).range(1..))]
    resp_len: u32,
    #[arg(long, default_value_t = 7)]
    n_in: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    #[arg(long, default_value_t = 5e-4)]
    lr: f32,
    #[arg(long, default_value_t = 0.05)]
    beta_r: f32,
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u32).range(1..))]
    hidden: u32,
    #[command(flatten)]
    eval: EvalArgs,
    #[command(flatten)]
    edit: EditArgs,
    /// Root seed; model, corpus, training and evaluation seeds derive
    /// from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append the wall-clock throughput columns.
    #[arg(long)]
    with_timing: bool,
    #[arg(long, default_value_t = 64)]
    vocab_size: usize,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f32,
}

fn parse_sweep(s: &str) -> std::result::Result<Sweep, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn cmd_gen_corpus(args: GenCorpusArgs) -> Result<()> {
    let planted = args.planted.config();
    let model = PlantedModel::new(planted.clone())?;
    let corpus = CorpusSettings {
        pairs: args.pairs as usize,
        prompt_len: args.prompt_len as usize,
        resp_len: args.resp_len as usize,
        seed: args.seed,
    };
    let pairs = generate_corpus(&model, &corpus)?;
    let manifest = write_dump(&pairs, model.dim(), &planted.model_tag(), &args.out)?;
    eprintln!(
        "wrote {} pairs (dim {}, M={}, T={}) to {}",
        manifest.count_pairs,
        manifest.dim,
        corpus.prompt_len,
        corpus.resp_len,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let (manifest, pairs) = read_dump(&args.dump)?;
    let cfg = TrainConfig {
        beta_r: args.beta_r,
        lr: args.lr,
        epochs: args.epochs as usize,
        batch_pairs: args.batch_pairs as usize,
        seed: args.seed,
        ..TrainConfig::default()
    };
    eprintln!(
        "training on {} pairs: n_in={} beta_r={} lr={} hidden={} epochs={} batch_pairs={}",
        pairs.len(),
        args.n_in,
        cfg.beta_r,
        cfg.lr,
        args.hidden,
        cfg.epochs,
        cfg.batch_pairs
    );
    let trained = train_reward(&pairs, args.n_in, args.hidden as usize, &cfg)?;
    for (i, loss) in trained.epoch_losses.iter().enumerate() {
        eprintln!("epoch {} loss {loss:.6}", i + 1);
    }
    eprintln!(
        "r_mean_plus {:.6} over {} tokens",
        trained.stats.r_mean_plus, trained.stats.token_count
    );
    trained.to_checkpoint(&manifest.model_tag).save(&args.out)?;
    eprintln!("wrote checkpoint {}", args.out.display());
    Ok(())
}

fn cmd_edit_eval(args: EditEvalArgs) -> Result<()> {
    let ck = Checkpoint::load(&args.ckpt)?;
    let model_tag = ck.header.model_tag.clone();
    if model_tag.is_empty() {
        return Err(Error::InvalidConfig(
            "checkpoint carries no model tag; the generator cannot be reconstructed".into(),
        ));
    }
    let planted = PlantedConfig::from_model_tag(&model_tag)?;
    let model = PlantedModel::new(planted.clone())?;
    let trained = TrainedReward::from_checkpoint(ck)?;
    let edit = args.edit.settings();
    let eval = EvalSettings {
        prompts: args.eval.prompts as usize,
        prompt_len: args.eval.eval_prompt_len as usize,
        max_new: args.eval.max_new,
        seed: args.seed,
    };
    let config = serde_json::json!({
        "checkpoint": args.ckpt.display().to_string(),
        "planted": planted,
        "n_in": trained.n_in,
        "hidden": trained.net.hidden(),
        "train": trained.train,
        "r_mean_plus": trained.stats.r_mean_plus,
        "edit": edit,
        "eval": eval,
    });
    let report = evaluate(
        &model,
        &trained.net,
        &trained.edit_config(&edit),
        &eval,
        config,
    )?;
    summarize(&report);
    if let Some(path) = &args.report {
        write_file(path, &serde_json::to_vec_pretty(&report)?)?;
    }
    print!("{}", reports_to_csv(std::slice::from_ref(&report), true));
    Ok(())
}

fn summarize(r: &RunReport) {
    eprintln!(
        "{}toxic {:.4} -> {:.4} (reduction {:.1}%), nll {:.4} -> {:.4}, steered {:.1}% of tokens, mean gap {:.4}, tokens/s {:.0} -> {:.0} (ratio {:.3})",
        if r.label.is_empty() { String::new() } else { format!("[{}] ", r.label) },
        r.toxic_rate_base,
        r.toxic_rate_edited,
        100.0 * r.relative_reduction,
        r.mean_nll_base,
        r.mean_nll_edited,
        100.0 * r.steer_applied_fraction,
        r.mean_gap,
        r.tokens_per_second_base,
        r.tokens_per_second_edited,
        r.token_rate_ratio
    );
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let sweep = args.sweep.clone();
    let mut cfg = PipelineConfig::seeded(args.seed);
    cfg.planted.vocab_size = args.vocab_size;
    cfg.planted.dim = args.dim;
    cfg.planted.noise_sigma = args.noise_sigma;
    cfg.corpus.pairs = args.pairs as usize;
    cfg.corpus.prompt_len = args.prompt_len as usize;
    cfg.corpus.resp_len = args.resp_len as usize;
    cfg.n_in = args.n_in;
    cfg.hidden = args.hidden as usize;
    cfg.train.epochs = args.epochs as usize;
    cfg.train.lr = args.lr;
    cfg.train.beta_r = args.beta_r;
    cfg.edit = args.edit.settings();
    cfg.eval.prompts = args.eval.prompts as usize;
    cfg.eval.prompt_len = args.eval.eval_prompt_len as usize;
    cfg.eval.max_new = args.eval.max_new;
    let reports = run_sweep(&cfg, &sweep)?;
    reports.iter().for_each(summarize);
    let csv = reports_to_csv(&reports, args.with_timing);
    match &args.out {
        Some(path) => write_file(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(raw) = std::env::var("ARGRE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("ARGRE_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::GenCorpus(a) => cmd_gen_corpus(a),
        Command::Train(a) => cmd_train(a),
        Command::EditEval(a) => cmd_edit_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
