//! Command-line interface.

use std::ffi::OsString;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::adaptive::{run_with_observer, ConvergenceHistory};
use crate::benchmark::benchmark_zshape;
use crate::config::{Overrides, Problem, RunConfig};
use crate::error::{Error, Result};
use crate::invest::{certify, family_ratios, mesh_family, records_to_csv};
use crate::output::{emit_outputs, rates_text};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fembem", version, about = "Adaptive FEM-BEM coupling for the 2D Laplace transmission problem")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the adaptive algorithm on a built-in problem.
    Solve {
        /// Configuration file with `key = value` lines.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        nmax: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the mesh of every level.
        #[arg(long)]
        dump_mesh: bool,
        /// Write the per-entity indicators of every level.
        #[arg(long)]
        dump_indicators: bool,
    },
    /// Check the inverse estimates on a family of Z-shape meshes.
    VerifyInverse {
        #[arg(long, default_value_t = 6)]
        levels: usize,
        #[arg(long, default_value_t = 20)]
        densities: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        q: usize,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Fit convergence rates from a history file.
    Rates {
        #[arg(long)]
        history: PathBuf,
        #[arg(long, default_value_t = 1)]
        p: usize,
        #[arg(long, default_value_t = 0)]
        q: usize,
    },
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) | Error::Io(_) | Error::InsufficientData(_) | Error::UnknownEntity { .. } => EXIT_CONFIG,
        Error::Singular(_) | Error::InvalidMesh(_) | Error::VertexPoint(_) | Error::Dimension(_) => EXIT_NUMERICAL,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Runs the adaptive algorithm for `config` and writes all outputs.
pub fn solve(config: &RunConfig) -> Result<ConvergenceHistory> {
    let (mesh, data) = match config.problem {
        Problem::Zshape => benchmark_zshape(),
    };
    create_dir(&config.out)?;
    if config.dump_mesh {
        create_dir(&config.out.join("meshes"))?;
    }
    if config.dump_indicators {
        create_dir(&config.out.join("indicators"))?;
    }
    let mut dump_error = None;
    let history = run_with_observer(&config.adaptive(), &data, mesh, |s| {
        let level = s.record.level;
        let r = s.record;
        println!(
            "level {level:3}  N {:7}  M {:6}  rho {:.4e}  err(Omega) {:.4e}  err(Gamma) {:.4e}",
            r.n, r.m, r.rho_total, r.err_omega, r.err_gamma
        );
        let dump = || -> Result<()> {
            if config.dump_mesh {
                s.mesh.write_text(config.out.join("meshes").join(format!("level_{level:03}.txt")))?;
            }
            if config.dump_indicators {
                write(&config.out.join("indicators").join(format!("level_{level:03}.csv")), &s.report.to_csv())?;
            }
            Ok(())
        };
        match dump() {
            Ok(()) => ControlFlow::Continue(()),
            Err(e) => {
                dump_error = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = dump_error {
        return Err(e);
    }
    if let Some(stop) = history.stop {
        println!("stopped: {stop}");
    }
    emit_outputs(&history, config.p, config.q_bem, &config.out)?;
    write(&config.out.join("config.txt"), &config.to_text())?;
    Ok(history)
}

/// Returns whether the certification passed.
pub fn verify_inverse(levels: usize, densities: usize, seed: u64, p: usize, q: usize, out: &Path) -> Result<bool> {
    if !(1..=2).contains(&p) || q > 1 {
        return Err(Error::Config(format!("p = {p}, q = {q}: need p in {{1, 2}} and q in {{0, 1}}")));
    }
    create_dir(out)?;
    let meshes = mesh_family(levels)?;
    let records = family_ratios(&meshes, p, q, densities, seed)?;
    write(&out.join("inverse_ratios.csv"), &records_to_csv(&records))?;
    let report = certify(&records)?;
    println!("{}", report.summary());
    Ok(report.pass)
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Solve { config, theta, p, q, nmax, out, dump_mesh, dump_indicators } => {
            let overrides = Overrides { theta, p, q_bem: q, n_max: nmax, out, dump_mesh, dump_indicators };
            let config = RunConfig::load_with_overrides(config.as_deref(), &overrides)?;
            solve(&config)?;
            Ok(EXIT_OK)
        }
        Command::VerifyInverse { levels, densities, seed, p, q, out } => {
            Ok(if verify_inverse(levels, densities, seed, p, q, &out)? { EXIT_OK } else { EXIT_VERIFY_FAIL })
        }
        Command::Rates { history, p, q } => {
            let text = std::fs::read_to_string(&history).map_err(|e| Error::Config(format!("{}: {e}", history.display())))?;
            print!("{}", rates_text(&ConvergenceHistory::from_csv(&text)?, p, q));
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
