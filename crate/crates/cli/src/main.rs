//! `hierwalk`: experiments on the hierarchical self-repelling walk.
//!
//! Exit status: 0 on success, 1 on I/O failure or a failed `validate`
//! check, 2 on invalid configuration, 3 on numerical failure.

mod commands;
mod config;
mod output;
mod validate;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use commands::Failure;
use config::{ConfigError, Params};
use output::{emit, RunInfo};

#[derive(Parser, Debug)]
#[command(name = "hierwalk", version, about = "Green's functions, RG flow, contour inversion and Monte Carlo for the hierarchical walk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Free Green's function from both series representations.
    Greens,
    /// Free and interacting heat kernels by level.
    Kernel,
    /// Coupling recursion with derivatives, from beta0 (default: critical).
    Flow,
    /// Critical killing rate.
    Critical,
    /// Contour inversion of the free Green's function against the closed form.
    Invert,
    /// End-to-end moments: theory, contour and Monte Carlo.
    Endtoend,
    /// Weighted Monte Carlo kernels and end-to-end moments.
    Mc,
    /// Quick invariant suite.
    Validate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Greens => "greens",
            Command::Kernel => "kernel",
            Command::Flow => "flow",
            Command::Critical => "critical",
            Command::Invert => "invert",
            Command::Endtoend => "endtoend",
            Command::Mc => "mc",
            Command::Validate => "validate",
        }
    }
}

/// Lists are comma separated. Unset flags fall back to the config file,
/// then to built-in defaults.
#[derive(Args, Debug)]
struct Flags {
    /// Lattice scale L >= 2.
    #[arg(long = "L", global = true)]
    l: Option<String>,
    /// Coupling modulus (list).
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// Coupling argument in radians.
    #[arg(long = "lambda-arg", global = true, allow_hyphen_values = true)]
    lambda_arg: Option<String>,
    /// Times (list).
    #[arg(long = "T", global = true)]
    t: Option<String>,
    /// Target levels N(x) (list).
    #[arg(long = "N", global = true)]
    n: Option<String>,
    /// Moment exponent in (0, 2).
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// Killing-rate moduli for `greens` (list).
    #[arg(long, global = true)]
    beta: Option<String>,
    /// Killing-rate argument in radians for `greens`.
    #[arg(long = "beta-arg", global = true, allow_hyphen_values = true)]
    beta_arg: Option<String>,
    /// Initial killing rate for `flow`, or `critical`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    beta0: Option<String>,
    /// Recursion steps for `flow`.
    #[arg(long, global = true)]
    steps: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    /// Monte Carlo paths per T; 0 skips Monte Carlo in `endtoend`.
    #[arg(long = "n-paths", global = true)]
    n_paths: Option<String>,
    /// Contour half-angle in (pi/2, 3pi/4).
    #[arg(long = "b-beta", global = true)]
    b_beta: Option<String>,
    /// Contour relative tolerance.
    #[arg(long = "rel-tol", global = true)]
    rel_tol: Option<String>,
    /// CSV output path; a `.meta.json` sidecar is written next to it.
    /// Without it the CSV goes to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

impl Flags {
    fn params(&self) -> BTreeMap<String, String> {
        let out = self.out.as_ref().map(|p| p.display().to_string());
        [
            ("L", &self.l),
            ("lambda", &self.lambda),
            ("lambda_arg", &self.lambda_arg),
            ("T", &self.t),
            ("N", &self.n),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("beta_arg", &self.beta_arg),
            ("beta0", &self.beta0),
            ("steps", &self.steps),
            ("seed", &self.seed),
            ("n_paths", &self.n_paths),
            ("b_beta", &self.b_beta),
            ("rel_tol", &self.rel_tol),
            ("out", &out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
        .collect()
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("hierwalk: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let params = match Params::merge(cli.flags.config.as_deref(), cli.flags.params()) {
        Ok(p) => p,
        Err(e) => return fail(2, e),
    };
    if let Some(n) = cli.flags.threads {
        if n == 0 {
            return fail(2, ConfigError("threads must be at least 1".into()));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return fail(1, e);
        }
    }
    let out = params.raw("out").map(PathBuf::from);
    let result = match cli.command {
        Command::Greens => commands::greens(&params),
        Command::Kernel => commands::kernel(&params),
        Command::Flow => commands::flow_cmd(&params),
        Command::Critical => commands::critical(&params),
        Command::Invert => commands::invert_cmd(&params),
        Command::Endtoend => commands::endtoend(&params),
        Command::Mc => commands::mc(&params),
        Command::Validate => Ok(validate::run()),
    };
    let table = match result {
        Ok(t) => t,
        Err(Failure::Config(e)) => return fail(2, format!("invalid configuration: {e}")),
        Err(Failure::Numeric(e)) => return fail(3, format!("numerical failure: {e}")),
    };
    let info = RunInfo {
        command: cli.command.name(),
        params: params.values(),
        threads: cli.flags.threads,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    if cli.command == Command::Validate {
        for row in &table.rows {
            println!("{} {}: {}", if row[1] == "true" { "PASS" } else { "FAIL" }, row[0], row[2]);
        }
        let passed = validate::passed(&table);
        println!("{passed} passed, {} failed", table.rows.len() - passed);
        if let Some(path) = &out {
            if let Err(e) = emit(&table, &info, Some(path)) {
                return fail(1, e);
            }
        }
        return if passed == table.rows.len() { ExitCode::SUCCESS } else { ExitCode::from(1) };
    }
    match emit(&table, &info, out.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(1, e),
    }
}
