use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qrouter::experiments::{self, Experiment, Fault, Report};
use qrouter::output::OutputDir;
use qrouter::{Error, Params};

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Quantum router multiplexing: exact rates, Monte Carlo simulation and
/// conference-key rates for an N-party star network.
#[derive(Parser, Debug)]
#[command(name = "qrouter", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a parameter after the config file (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "out", global = true)]
    out: PathBuf,
    /// Run the analytic engine beyond its size guard.
    #[arg(long, global = true)]
    force: bool,
    /// Reduced workloads.
    #[arg(long, global = true)]
    quick: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact per-round measurement distribution and router rate.
    AnalyticRate,
    /// Monte Carlo router rate and storage-age statistics.
    Simulate,
    /// QBERs, secret fraction and key rate (joint and marginal age models).
    KeyRate,
    /// Key-rate curves of all four strategies on common random numbers.
    CompareStrategies,
    /// Key-rate curves for a list of cutoffs.
    SweepCutoff {
        /// Comma-separated cutoffs; `none` means no cutoff.
        #[arg(long, value_delimiter = ',', default_value = "8,9,10,11,12,13")]
        cutoffs: Vec<String>,
    },
    /// Run the built-in oracle checks and print a pass/fail table.
    Verify {
        #[arg(long, hide = true)]
        inject_fault: Option<Fault>,
    },
    /// Show hyperedges, bounds and matching of one configuration.
    DebugInstance {
        /// Comma-separated occupancy strings, party A first, e.g. 1010,1101,0011.
        #[arg(long, value_delimiter = ',', required = true)]
        bits: Vec<String>,
        /// Maximal connection length (defaults to the resolved parameter).
        #[arg(long)]
        w: Option<usize>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        _ => EXIT_VALIDATION,
    }
}

fn resolve_params(g: &Global) -> Result<Params, Error> {
    let mut params = Params::default();
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        })?;
        params.apply_config_str(&text)?;
    }
    for assignment in &g.overrides {
        let bad = |message: String| Error::InvalidArgument(format!("--set {assignment}: {message}"));
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| bad("expected KEY=VALUE".into()))?;
        params.set(key, value).map_err(bad)?;
    }
    Ok(params)
}

fn parse_cutoffs(list: &[String]) -> Result<Vec<Option<u32>>, Error> {
    list.iter()
        .map(|c| {
            let mut p = Params::default();
            p.set("cutoff", c)
                .map_err(|message| Error::InvalidArgument(format!("--cutoffs: {message}")))?;
            Ok(p.cutoff)
        })
        .collect()
}

fn run(cli: Cli) -> Result<Report, Error> {
    let params = resolve_params(&cli.global)?;
    if let Command::DebugInstance { bits, w } = &cli.command {
        let listing = experiments::debug_instance(bits, w.unwrap_or(params.max_conn_len))?;
        let mut report = Report {
            ok: true,
            ..Report::default()
        };
        report.lines.extend(listing.lines().map(String::from));
        return Ok(report);
    }
    params.validate()?;
    let exp = Experiment {
        params,
        out: OutputDir::new(&cli.global.out),
        force: cli.global.force,
        quick: cli.global.quick,
    };
    match cli.command {
        Command::AnalyticRate => experiments::analytic_rate(&exp),
        Command::Simulate => experiments::simulate(&exp),
        Command::KeyRate => experiments::key_rate(&exp),
        Command::CompareStrategies => experiments::compare_strategies(&exp),
        Command::SweepCutoff { cutoffs } => experiments::sweep_cutoff(&exp, &parse_cutoffs(&cutoffs)?),
        Command::Verify { inject_fault } => experiments::verify(&exp, inject_fault),
        Command::DebugInstance { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(k) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: cannot start {k} worker threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run(cli) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            if report.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_VERIFY)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
