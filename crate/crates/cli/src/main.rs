use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use psm_cli::{afriat_report, analyze_files, expand_inputs, write_cohort, AnalysisOptions, Check, CohortSpec};
use psm_core::dataset::Dataset;
use psm_core::rational;

#[derive(Parser)]
#[command(name = "psm", version, about = "Priced-survey analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rationality and preference report over dataset files.
    Analyze {
        /// Dataset files or glob patterns.
        #[arg(long, num_args = 0..)]
        input: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "garp,ccei,bronars,afriat,fit")]
        checks: Vec<Check>,
        #[arg(long, default_value_t = 1000)]
        bronars_trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Bisection tolerance for the efficiency index, as a decimal.
        #[arg(long, default_value = "0.000001")]
        ccei_tolerance: String,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the per-respondent table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Synthetic respondents from a cohort spec.
    Simulate {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Piecewise-linear utility of one consistent dataset.
    Afriat {
        #[arg(long)]
        input: PathBuf,
        /// Include the utility at every grid answer.
        #[arg(long)]
        eval_grid: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the session service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => Ok(std::io::stdout().write_all(bytes)?),
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Analyze { input, checks, bronars_trials, seed, ccei_tolerance, out, csv } => {
            let tolerance = rational::parse_decimal(&ccei_tolerance)
                .filter(rational::is_positive)
                .with_context(|| format!("invalid tolerance {ccei_tolerance}"))?;
            let options = AnalysisOptions { bronars_trials, seed, ccei_tolerance: tolerance, ..Default::default() }
                .with_checks(checks);
            let report = analyze_files(&expand_inputs(&input)?, &options);
            emit(out.as_deref(), &report.to_json()?)?;
            if let Some(path) = csv {
                let file = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                report.write_csv(file)?;
            }
            for f in &report.failures {
                eprintln!("psm: {}: {}", f.file, f.error);
            }
            Ok(if report.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Simulate { cohort, seed, out_dir } => {
            let text = std::fs::read_to_string(&cohort).with_context(|| format!("reading {}", cohort.display()))?;
            let spec: CohortSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", cohort.display()))?;
            let manifest = write_cohort(&spec, seed, &out_dir)?;
            eprintln!("psm: wrote {} respondents to {}", manifest.agents.len(), out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Afriat { input, eval_grid, out } => {
            let file = std::fs::File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let d = Dataset::from_reader(std::io::BufReader::new(file))?;
            let mut bytes = serde_json::to_vec_pretty(&afriat_report(&d, eval_grid)?)?;
            bytes.push(b'\n');
            emit(out.as_deref(), &bytes)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { port, store, host } => {
            let runtime = tokio::runtime::Runtime::new()?;
            let addr = SocketAddr::new(host, port);
            eprintln!("psm: serving on http://{addr}, events in {}", store.display());
            runtime.block_on(psm_service::serve(addr, &store))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("psm: {e:#}");
            ExitCode::FAILURE
        }
    }
}
