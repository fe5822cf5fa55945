//! `isospec` command-line front end.
//!
//! Exit codes: 0 success, 1 computation error (JSON on stderr), 2 usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use isospec::BoundaryCondition;

#[derive(Debug, Parser)]
#[command(name = "isospec", version, about = "Spectral geometry of non-obtuse trapezoids")]
struct Cli {
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Seed for randomized commands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the primary output here instead of standard output. Timing goes
    /// to `<out>.meta.json`.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Bc {
    Dirichlet,
    Neumann,
}

impl From<Bc> for BoundaryCondition {
    fn from(b: Bc) -> Self {
        match b {
            Bc::Dirichlet => BoundaryCondition::Dirichlet,
            Bc::Neumann => BoundaryCondition::Neumann,
        }
    }
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Lowest eigenvalues of a domain by extrapolated finite elements.
    Spectrum {
        /// Domain JSON: `{"B", "h", "alpha", "beta"}` or `{"vertices": [[x, y], ...]}`.
        domain: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, value_enum, default_value = "dirichlet")]
        bc: Bc,
        /// Coarse mesh size; chosen from `n` when absent.
        #[arg(long)]
        mesh_size: Option<f64>,
        #[arg(long, default_value_t = 2)]
        levels: usize,
    },
    /// Area, perimeter and angle invariant from the heat trace.
    Invariants {
        spectrum: PathBuf,
        /// Boundary condition of a bare CSV spectrum.
        #[arg(long, value_enum)]
        bc: Option<Bc>,
        /// Fit window `t_min t_max`.
        #[arg(long, num_args = 2, value_names = ["T_MIN", "T_MAX"])]
        window: Option<Vec<f64>>,
        /// Use the wider window of the reconstruction pipeline.
        #[arg(long, conflicts_with = "window")]
        widened: bool,
        #[arg(long, default_value_t = isospec::heat_trace::DEFAULT_GRID)]
        grid: usize,
    },
    /// Length spectrum of closed billiard orbits, as JSON lines or CSV.
    Orbits {
        domain: PathBuf,
        #[arg(long, default_value_t = 6.0)]
        lmax: f64,
        /// Also draw the non-conical orbits here.
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Windowed wave-trace scan: the probe grid as CSV, the peaks as JSON.
    Wavetrace {
        spectrum: PathBuf,
        #[arg(long, value_enum)]
        bc: Option<Bc>,
        #[arg(long, num_args = 2, required = true, value_names = ["T_LO", "T_HI"])]
        t_range: Vec<f64>,
        /// Window width; `3 / k_ref` within `[0.03, 0.15]` when absent.
        #[arg(long)]
        sigma: Option<f64>,
        /// Reference frequency; half the largest when absent.
        #[arg(long)]
        k_ref: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        threshold: f64,
        /// Write the candidates JSON here as well.
        #[arg(long)]
        candidates: Option<PathBuf>,
    },
    /// Runs the reconstruction procedure on a spectrum.
    Reconstruct {
        spectrum: PathBuf,
        #[arg(long, value_enum)]
        bc: Option<Bc>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        significance: f64,
        #[arg(long, default_value_t = 800)]
        min_count: usize,
    },
    /// Checks whether two trapezoids can share a spectrum.
    Compare { first: PathBuf, second: PathBuf },
    /// Runs a named property suite; exits 1 when a check fails.
    Props {
        /// One of geometry, gutkin, catalog, shortest, conical, roundtrip, case2, stress.
        suite: String,
        #[arg(long, default_value_t = 100)]
        n: usize,
    },
}

/// Everything that determines the primary output; written into its header.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub format: Format,
    pub seed: u64,
    #[serde(flatten)]
    pub command: &'a Command,
}

/// A failed computation, reported as JSON on standard error.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(kind: &'static str, message: impl ToString) -> Self {
        Failure { kind, message: message.to_string() }
    }
}

/// Exits with status 2 after printing a usage message.
pub fn usage(msg: impl std::fmt::Display) -> ! {
    Cli::command().error(clap::error::ErrorKind::ValueValidation, msg).exit()
}

#[derive(Serialize)]
struct Meta {
    started_unix: f64,
    elapsed_seconds: f64,
    workers: usize,
    status: &'static str,
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            usage("--workers must be positive");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            usage(e);
        }
    }
    let started = unix_now();
    let clock = Instant::now();
    let format = cli.format.unwrap_or(match cli.command {
        Command::Wavetrace { .. } => Format::Csv,
        _ => Format::Json,
    });
    let config = RunConfig { tool: "isospec", version: env!("CARGO_PKG_VERSION"), format, seed: cli.seed, command: &cli.command };
    let result = commands::run(&config, cli.out.as_deref());
    let status = match &result {
        Ok(()) => "ok",
        Err(_) => "error",
    };
    if let Some(out) = &cli.out {
        let meta = Meta {
            started_unix: started,
            elapsed_seconds: clock.elapsed().as_secs_f64(),
            workers: rayon::current_num_threads(),
            status,
        };
        let mut path = out.clone().into_os_string();
        path.push(".meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("plain struct");
        if let Err(e) = std::fs::write(&path, text + "\n") {
            eprintln!("{}", serde_json::json!({ "error": Failure::new("io", e) }));
            return ExitCode::from(1);
        }
    }
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", serde_json::json!({ "error": f }));
            ExitCode::from(1)
        }
    }
}
