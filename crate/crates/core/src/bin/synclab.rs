use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use synclab::harness_cli::{
    cmd_eval, cmd_experiment, cmd_report, cmd_sample, cmd_synth, cmd_train, configure_threads, exit_code,
    resolve_config, CommandReport, Overrides, SampleOptions, EXIT_USAGE,
};
use synclab::sync_metrics::ScoreMode;
use synclab::Error;

#[derive(Parser)]
#[command(name = "synclab", version, about = "Synthetic audio-synchronized video lab")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    w_audio: Option<f64>,
    #[arg(long, global = true)]
    w_text: Option<f64>,
    /// Training steps.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Peak matching tolerance in milliseconds.
    #[arg(long, global = true)]
    delta_ms: Option<f64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// `oracle` or `external:<cmd>`.
    #[arg(long, global = true)]
    backend: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    F1,
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Write the training dataset to <out>/dataset.
    Synth,
    /// Train one model; writes <out>/train.
    Train,
    /// Sample the held-out clips from a checkpoint into <out>/samples.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Block to bypass; repeatable.
        #[arg(long = "skip-block")]
        skip_block: Vec<usize>,
        /// Sample the off-sync model.
        #[arg(long)]
        offsync: bool,
        /// Also write block-skip probes.
        #[arg(long)]
        probe: bool,
    },
    /// Score sampled videos (or the held-out clips themselves).
    Eval {
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Run experiments by name, or `all`.
    Experiment {
        #[arg(required = true)]
        names: Vec<String>,
    },
    /// Summarize the checks of a run directory.
    Report {
        /// Run directory; defaults to --out.
        dir: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> synclab::Result<CommandReport> {
    configure_threads()?;
    let c = cli.common;
    let ov = Overrides {
        seed: c.seed,
        out: c.out.clone(),
        w_audio: c.w_audio,
        w_text: c.w_text,
        steps: c.steps,
        delta_ms: c.delta_ms,
        mode: c.mode.map(|m| match m {
            Mode::F1 => ScoreMode::F1,
            Mode::Paper => ScoreMode::Paper,
        }),
        backend: c.backend,
    };
    if let Command::Report { dir } = &cli.command {
        let dir = dir
            .clone()
            .or(c.out)
            .ok_or_else(|| Error::Usage("report needs a run directory or --out".into()))?;
        return cmd_report(&dir);
    }
    let cfg = resolve_config(c.config.as_deref(), &ov)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Sample {
            checkpoint,
            skip_block,
            offsync,
            probe,
        } => cmd_sample(
            &cfg,
            &checkpoint,
            &SampleOptions {
                offsync,
                skip_blocks: skip_block,
                probe,
            },
        ),
        Command::Eval { samples } => cmd_eval(&cfg, samples.as_deref()).map(|(r, rep)| {
            for a in &rep.aggregates {
                println!("{} mean {:.2} ci95 {:.2} (n={})", a.metric, 100.0 * a.mean, 100.0 * a.ci95, a.n);
            }
            r
        }),
        Command::Experiment { names } => cmd_experiment(&cfg, &names).map(|(r, _)| r),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let result = run(cli);
    match &result {
        Ok(r) => {
            for c in &r.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for a in &r.artifacts {
                eprintln!("wrote {}", a.display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
