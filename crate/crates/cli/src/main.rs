use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mdpabs::config::PipelineConfig;
use mdpabs::metrics::MetricKind;
use mdpabs::model::KMethod;
use mdpabs::pipeline::{Overrides, Stage, Workspace};
use mdpabs::Error;

#[derive(Parser)]
#[command(name = "mdpabs", version, about = "Abstract MDPs from recorded trajectories")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, validate and split the trajectory file.
    Ingest(Flags),
    /// Interval refinement and clustering into abstract states.
    Abstract(Flags),
    /// Estimate the abstract MDP.
    Build(Flags),
    /// Write the PRISM model and property files.
    ExportPrism(Flags),
    /// Evaluate the configured properties on the abstract MDP.
    Check(Flags),
    /// Compare verified and empirical property values.
    Gap(Flags),
    /// Compression ratio and MAE for every metric and k method.
    Eval(Flags),
    /// Train the tabular learner with and without guidance.
    Guide(Flags),
    /// Summarize all artifacts as markdown.
    Report(Flags),
}

#[derive(clap::Args)]
struct Flags {
    /// Pipeline configuration (JSON).
    #[arg(long, default_value = "mdpabs.json")]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    metric: Option<MetricArg>,
    #[arg(long = "k-method")]
    k_method: Option<KMethodArg>,
    #[arg(long)]
    horizon: Option<u32>,
}

#[derive(ValueEnum, Clone, Copy)]
enum MetricArg {
    Euclidean,
    Multistep,
    Spatiotemporal,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Euclidean => MetricKind::Euclidean,
            MetricArg::Multistep => MetricKind::Multistep,
            MetricArg::Spatiotemporal => MetricKind::Spatiotemporal,
        }
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum KMethodArg {
    Elbow,
    Silhouette,
    Gap,
    Canopy,
}

impl From<KMethodArg> for KMethod {
    fn from(k: KMethodArg) -> Self {
        match k {
            KMethodArg::Elbow => KMethod::Elbow,
            KMethodArg::Silhouette => KMethod::Silhouette,
            KMethodArg::Gap => KMethod::Gap,
            KMethodArg::Canopy => KMethod::Canopy,
        }
    }
}

impl Command {
    fn split(self) -> (Stage, Flags) {
        match self {
            Command::Ingest(f) => (Stage::Ingest, f),
            Command::Abstract(f) => (Stage::Abstract, f),
            Command::Build(f) => (Stage::Build, f),
            Command::ExportPrism(f) => (Stage::ExportPrism, f),
            Command::Check(f) => (Stage::Check, f),
            Command::Gap(f) => (Stage::Gap, f),
            Command::Eval(f) => (Stage::Eval, f),
            Command::Guide(f) => (Stage::Guide, f),
            Command::Report(f) => (Stage::Report, f),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::MissingPrerequisite(_) | Error::StalePrerequisite(_) => 2,
        _ => 3,
    }
}

fn run(stage: Stage, flags: Flags) -> Result<String, Error> {
    let mut config = PipelineConfig::load(&flags.config).map_err(|e| match e {
        Error::Io { .. } => Error::Config(vec![e.to_string()]),
        other => other,
    })?;
    Overrides {
        seed: flags.seed,
        metric: flags.metric.map(Into::into),
        k_method: flags.k_method.map(Into::into),
        horizon: flags.horizon,
    }
    .apply(&mut config);
    Workspace::new(config, &flags.out)?.run(stage)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, flags) = cli.command.split();
    match run(stage, flags) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mdpabs {}: {e}", stage.as_str());
            if let Error::Config(list) = &e {
                for v in list {
                    eprintln!("  {v}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
