use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gravcomp::evaluation::Method;
use gravcomp_cli::{cmd_evaluate, cmd_sample, cmd_train, exit, CliError, EvalMode, Experiment, Overrides};

#[derive(Parser)]
#[command(name = "gravcomp", version, about = "Learned gravity compensation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw training, validation and test data and the biased teachers.
    Sample {
        #[command(flatten)]
        common: Common,
    },
    /// Train a compensation model on the sampled data.
    Train {
        #[command(flatten)]
        common: Common,
        /// `lfs` (learning from scratch) or `pkd` (distillation).
        #[arg(long)]
        method: Method,
    },
    /// Evaluate models offline, by drift test, or as a learning curve.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// `offline`, `drift` or `curve`.
        #[arg(long)]
        mode: EvalMode,
        /// Model files to evaluate (default: every trained model in the output directory).
        #[arg(long)]
        model: Vec<PathBuf>,
    },
}

fn setup(common: &Common) -> Result<Experiment, CliError> {
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Experiment::from_file(
        &common.config,
        &Overrides {
            seed: common.seed,
            out: common.out.clone(),
        },
    )
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Sample { common } => cmd_sample(&setup(&common)?),
        Command::Train { common, method } => cmd_train(&setup(&common)?, method),
        Command::Evaluate {
            common,
            mode,
            model,
        } => cmd_evaluate(&setup(&common)?, mode, &model),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
