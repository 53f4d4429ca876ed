mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{read_settings, RunConfig, Setting};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sgnn_core::Error),
    #[error("{0}")]
    Oracle(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(sgnn_core::Error::InvalidArgument(_)) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Oracle(_) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "sgnn", version, about = "Sampling-based GCN training and estimator checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model and write metrics.csv, params.txt and summary.csv.
    Train(Common),
    /// Score a saved parameter file with full-neighbourhood inference.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Parameter file written by `train`.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Split to score: train, val or test.
        #[arg(long)]
        split: Option<String>,
    },
    /// Run the estimator and oracle battery on synthetic graphs.
    Lab {
        #[command(flatten)]
        common: Common,
        /// Random instances per check.
        #[arg(long)]
        instances: Option<usize>,
        /// Monte-Carlo trials per instance.
        #[arg(long)]
        trials: Option<usize>,
        /// Replace the estimator under test by a biased one.
        #[arg(long)]
        inject_bias: bool,
    },
    /// Train twice, with optimistic and pessimistic HW initialization.
    AblateInit {
        #[command(flatten)]
        common: Common,
        /// HW initial value of the pessimistic run.
        #[arg(long)]
        pessimistic_init: Option<f64>,
    },
    /// Convert a LINQS citation dataset to the CSV layout `train` reads.
    Prepare {
        /// `<name>.content` file.
        #[arg(long)]
        content: PathBuf,
        /// `<name>.cites` file.
        #[arg(long)]
        cites: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        val: usize,
        #[arg(long, default_value_t = 1000)]
        test: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (edges.csv, features.csv, labels.csv, splits.csv).
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// layerwise, subgraph-node, subgraph-edge, uniform or degree.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Dataset name whose recommended settings to start from.
    #[arg(long)]
    preset: Option<String>,
    /// Any config key, as KEY=VALUE. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn settings(&self) -> Result<Vec<Setting>, CliError> {
        let mut s = match &self.config {
            Some(path) => read_settings(path)?,
            None => Vec::new(),
        };
        let path = |p: &PathBuf| p.display().to_string();
        let flags = [
            ("dataset", self.dataset.as_ref().map(path)),
            ("sampler", self.sampler.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(path)),
            ("epochs", self.epochs.map(|v| v.to_string())),
            ("preset", self.preset.clone()),
        ];
        s.extend(flags.into_iter().filter_map(|(k, v)| v.map(|v| Setting::flag(k, v))));
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, found '{kv}'")))?;
            s.push(Setting {
                key: k.trim().to_string(),
                value: v.trim().to_string(),
                origin: format!("--set {kv}"),
            });
        }
        Ok(s)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("SGNN_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("SGNN_THREADS must be a positive integer, found '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Train(common) => commands::train(&RunConfig::resolve(&common.settings()?)?),
        Command::Eval { common, params, split } => {
            let mut s = common.settings()?;
            s.extend(params.map(|p| Setting::flag("params", p.display())));
            s.extend(split.map(|v| Setting::flag("split", v)));
            commands::eval(&RunConfig::resolve(&s)?)
        }
        Command::Lab {
            common,
            instances,
            trials,
            inject_bias,
        } => {
            let mut s = common.settings()?;
            s.extend(instances.map(|v| Setting::flag("lab_instances", v)));
            s.extend(trials.map(|v| Setting::flag("lab_trials", v)));
            if inject_bias {
                s.push(Setting::flag("inject_bias", true));
            }
            commands::lab(&RunConfig::resolve(&s)?)
        }
        Command::AblateInit {
            common,
            pessimistic_init,
        } => {
            let mut s = common.settings()?;
            s.extend(pessimistic_init.map(|v| Setting::flag("pessimistic_init", v)));
            commands::ablate_init(&RunConfig::resolve(&s)?)
        }
        Command::Prepare {
            content,
            cites,
            out,
            val,
            test,
            seed,
        } => commands::prepare(&content, &cites, &out, sgnn_core::linqs::RandomSplit { val, test, seed }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
