//! `gate`: run, validate and report replicated GATE experiments.

mod report;
mod run;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gate_core::data::MeanMode;

use crate::spec::{DatasetSpec, ExperimentSpec};

#[derive(Debug)]
pub enum CliError {
    /// Bad spec or flags; exit status 2.
    Config(String),
    /// Failure while running or reading results; exit status 1.
    Runtime(String),
}

impl CliError {
    fn exit(self) -> ExitCode {
        match self {
            CliError::Config(m) => {
                eprintln!("configuration error:\n{m}");
                ExitCode::from(2)
            }
            CliError::Runtime(m) => {
                eprintln!("error: {m}");
                ExitCode::from(1)
            }
        }
    }
}

#[derive(Parser)]
#[command(
    name = "gate",
    version,
    about = "Greedy active learning experiments for logistic classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run replications and write results.
    Run(Box<RunArgs>),
    /// Check a spec file and print it with every default filled in.
    Validate { spec: PathBuf },
    /// Rebuild summary tables from a results directory.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment spec; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Synthetic preset.
    #[arg(long, conflicts_with = "dataset", value_parser = clap::value_parser!(u8).range(1..=3))]
    case: Option<u8>,
    /// Dataset manifest (JSON) for a CSV file.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comparison approaches, e.g. `BCD`.
    #[arg(long)]
    baselines: Option<String>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    n_q: Option<usize>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_vars: Option<usize>,
    /// Synthetic variables including the intercept.
    #[arg(long)]
    p: Option<usize>,
    /// Synthetic rows.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    test_size: Option<usize>,
    /// Feature means `redraw` per replication or `fixed` across them.
    #[arg(long)]
    mean_mode: Option<String>,
}

impl RunArgs {
    fn resolve(self) -> Result<ExperimentSpec, CliError> {
        let mut spec = match &self.spec {
            Some(path) => ExperimentSpec::from_file(path).map_err(CliError::Config)?,
            None => ExperimentSpec::default(),
        };
        if let Some(c) = self.case {
            spec.dataset = DatasetSpec::synthetic(c);
        }
        if let Some(m) = self.dataset {
            spec.dataset = DatasetSpec::Csv { manifest: m };
        }
        if let DatasetSpec::Synthetic {
            p,
            n,
            test_size,
            mean_mode,
            ..
        } = &mut spec.dataset
        {
            if let Some(v) = self.p {
                *p = v;
            }
            if let Some(v) = self.n {
                *n = v;
            }
            if let Some(v) = self.test_size {
                *test_size = v;
            }
            if let Some(v) = &self.mean_mode {
                *mean_mode = match v.as_str() {
                    "redraw" => MeanMode::Redraw,
                    "fixed" => MeanMode::Fixed,
                    other => {
                        return Err(CliError::Config(format!(
                            "--mean-mode: expected redraw or fixed, got `{other}`"
                        )))
                    }
                };
            }
        } else if self.p.is_some()
            || self.n.is_some()
            || self.test_size.is_some()
            || self.mean_mode.is_some()
        {
            return Err(CliError::Config(
                "--p, --n, --test-size and --mean-mode apply to synthetic data only".to_string(),
            ));
        }
        if let Some(v) = self.reps {
            spec.replications = v;
        }
        if let Some(v) = self.seed {
            spec.gate.seed = v;
        }
        if let Some(v) = self.threads {
            spec.threads = v;
        }
        if let Some(v) = self.out {
            spec.output_dir = v;
        }
        if let Some(v) = self.baselines {
            spec.baselines = v
                .chars()
                .filter(|c| !c.is_whitespace() && *c != ',')
                .collect();
        }
        if let Some(v) = self.n0 {
            spec.gate.n0 = v;
        }
        if let Some(v) = self.n_q {
            spec.gate.n_q = v;
        }
        if let Some(v) = self.h {
            spec.gate.h = v;
        }
        if let Some(v) = self.alpha {
            spec.gate.alpha = v;
        }
        if let Some(v) = self.epsilon {
            spec.gate.epsilon = v;
        }
        if self.max_vars.is_some() {
            spec.gate.max_vars = self.max_vars;
        }
        Ok(spec)
    }
}

fn cmd_validate(path: &std::path::Path) -> Result<String, CliError> {
    let spec = ExperimentSpec::from_file(path).map_err(CliError::Config)?;
    let v = spec.violations();
    if !v.is_empty() {
        return Err(CliError::Config(v.join("\n")));
    }
    serde_json::to_string_pretty(&spec).map_err(|e| CliError::Runtime(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => args.resolve().and_then(|spec| {
            let table = run::cmd_run(&spec)?;
            Ok(format!(
                "{table}results written to {}",
                spec.output_dir.display()
            ))
        }),
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Report { dir } => report::regenerate(&dir).map_err(CliError::Runtime),
    };
    match outcome {
        Ok(text) => {
            println!("{}", text.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => e.exit(),
    }
}
