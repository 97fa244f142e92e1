use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use streamslu::harness::{
    cmd_eval, cmd_gen, cmd_stream, cmd_train, cmd_verify, commands::append_metrics, EvalTarget, ExperimentConfig,
    VerifyOptions,
};

#[derive(Parser)]
#[command(name = "streamslu", version, about = "Streaming intent and slot recognition on synthetic speech features")]
struct Cli {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the decoding threshold for CTL heads.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Single worker, no wall-clock fields: reproducible metrics.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the one- and two-command corpora and their speaker splits.
    Gen,
    /// Train a model and write checkpoint, CMVN stats and metrics.
    Train,
    /// Exact-match accuracy on a test split.
    Eval {
        /// Commands per test utterance (1 or 2).
        #[arg(long, default_value_t = 1)]
        labels: usize,
        /// Directory holding model.ckpt and cmvn.feat; defaults to the
        /// config's output directory.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Score the nearest-template classifier instead of a model.
        #[arg(long, conflicts_with = "model")]
        oracle: bool,
    },
    /// Decode one feature file chunk by chunk, printing events as JSON lines.
    Stream {
        input: PathBuf,
        #[arg(long, default_value_t = 16)]
        chunk: usize,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the oracle, gradient and prefix-consistency suites.
    Verify {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Flip the CTL gradient sign to confirm the suite catches it.
        #[arg(long)]
        mutate_ctl: bool,
    },
}

fn config(cli: &Cli) -> streamslu::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.theta {
        cfg.theta = t;
    }
    cfg.deterministic |= cli.deterministic;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> streamslu::Result<ExitCode> {
    if let Cmd::Verify { trials, mutate_ctl } = &cli.cmd {
        let report = cmd_verify(&VerifyOptions {
            seed: cli.seed.unwrap_or(0),
            oracle_trials: *trials,
            mutate_ctl: *mutate_ctl,
            ..VerifyOptions::default()
        });
        println!("{report}");
        return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(2) });
    }
    let cfg = config(cli)?;
    match &cli.cmd {
        Cmd::Gen => {
            for p in cmd_gen(&cfg)? {
                println!("{}", p.display());
            }
        }
        Cmd::Train => {
            let out = cmd_train(&cfg)?;
            for r in out.records.iter().filter(|r| r.split == "test") {
                println!("{}", serde_json::to_string(r)?);
            }
            if out.skipped > 0 {
                eprintln!("{} training utterances had targets longer than the model output", out.skipped);
            }
        }
        Cmd::Eval { labels, model, oracle } => {
            let target = if *oracle {
                EvalTarget::Oracle
            } else {
                EvalTarget::Checkpoint(model.clone().unwrap_or_else(|| cfg.paths.out_dir.clone()))
            };
            let r = cmd_eval(&cfg, &target, *labels)?;
            if let EvalTarget::Checkpoint(dir) = &target {
                append_metrics(dir, std::slice::from_ref(&r))?;
            }
            println!("{}", serde_json::to_string(&r)?);
        }
        Cmd::Stream { input, chunk, model } => {
            let dir = model.clone().unwrap_or_else(|| cfg.paths.out_dir.clone());
            cmd_stream(&cfg, &dir, input, *chunk, io::stdout().lock())?;
        }
        Cmd::Verify { .. } => unreachable!(),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
