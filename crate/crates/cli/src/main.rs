use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use eqn_cli::{
    cmd_annotate, cmd_eval, cmd_init, cmd_pearson, cmd_run, cmd_synth, exit_code, init_threads, CliConfig, EvalOptions,
    Overrides,
};
use eqn_core::eval::{Policy, StdKind};
use eqn_core::pipeline::Mode;
use eqn_core::Result;

#[derive(Parser)]
#[command(name = "eqn", version, about = "Full-label emotion intensity annotation")]
struct Cli {
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Coeqn,
    Eqn,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    OracleK,
    Threshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum StdArg {
    Population,
    Sample,
}

#[derive(Subcommand)]
enum Command {
    /// Expand a compact CSV into full-label form.
    Init {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and annotate; writes a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "eqn")]
        mode: ModeArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Annotate a CSV with a saved checkpoint.
    Annotate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Run config whose featurizer must match the checkpoint.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics and hit table for an annotated CSV.
    Eval {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "oracle-k")]
        policy: PolicyArg,
        #[arg(long, default_value_t = eqn_core::labelspace::DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_enum, default_value = "population")]
        std: StdArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pearson correlation heatmap of an annotated CSV.
    Pearson {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic corpus with known latent intensities.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        latent: PathBuf,
        /// Defaults to `<out>` with a `.vocab.txt` extension.
        #[arg(long)]
        vocab_out: Option<PathBuf>,
    },
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Init { input, vocab, out } => cmd_init(&input, &vocab, &out).map(drop),
        Command::Run {
            config,
            mode,
            seed,
            threshold,
            out,
        } => {
            let mut cfg = CliConfig::load(&config)?;
            Overrides { seed, threshold }.apply(&mut cfg.pipeline)?;
            let mode = match mode {
                ModeArg::Coeqn => Mode::Coeqn,
                ModeArg::Eqn => Mode::Eqn,
            };
            let dir = cmd_run(&cfg, mode, out.as_deref())?;
            println!("{}", dir.display());
            Ok(())
        }
        Command::Annotate {
            checkpoint,
            input,
            vocab,
            config,
            out,
        } => {
            let cfg = config.as_deref().map(CliConfig::load).transpose()?;
            let fcfg = cfg.as_ref().map(|c| &c.pipeline.featurizer);
            cmd_annotate(&checkpoint, &input, vocab.as_deref(), fcfg, &out).map(drop)
        }
        Command::Eval {
            input,
            vocab,
            policy,
            threshold,
            std,
            out,
        } => {
            let opts = EvalOptions {
                policy: match policy {
                    PolicyArg::OracleK => Policy::OracleK,
                    PolicyArg::Threshold => Policy::Threshold,
                },
                threshold,
                std_kind: match std {
                    StdArg::Population => StdKind::Population,
                    StdArg::Sample => StdKind::Sample,
                },
            };
            cmd_eval(&input, vocab.as_deref(), &opts, &out).map(drop)
        }
        Command::Pearson { input, vocab, out } => cmd_pearson(&input, vocab.as_deref(), &out).map(drop),
        Command::Synth {
            spec,
            seed,
            out,
            latent,
            vocab_out,
        } => cmd_synth(&spec, seed, &out, &latent, vocab_out.as_deref()).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("EQN_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    init_threads(cli.threads);
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
