//! `capband`: calibrate, trace, verify and export the free-boundary minimal Möbius band.

use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use capband_core::calibrate::{band_trace, calibration_config};
use capband_core::geometry::ImmersionGrid;
use capband_core::mesh::{write_obj, Projection};
use capband_core::report::{verify, RunConfig};
use capband_core::spectral::spectrum;
use capband_core::stability::stability_report;
use capband_core::{ode, CapParams, Error};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "capband",
    version,
    about = "Free-boundary minimal Möbius band in a spherical cap"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Cap radius in radians, 0 < r <= pi/2.
    #[arg(long, global = true)]
    r: Option<f64>,

    /// Calibrated parameters (JSON from `solve`) instead of calibrating.
    #[arg(long, global = true)]
    params: Option<PathBuf>,

    /// Calibration tolerance on the boundary residual.
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,

    #[arg(long, global = true, default_value_t = 128)]
    ns: usize,

    #[arg(long, global = true, default_value_t = 128)]
    ntheta: usize,

    /// Highest Fourier mode in the spectrum.
    #[arg(long, global = true, default_value_t = 8)]
    kmax: usize,

    #[arg(long, global = true, value_enum, default_value_t = ProjectionArg::Drop0)]
    projection: ProjectionArg,

    /// Picks the sign of the perturbation in the negative control.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Calibrate (a, s_r) and print CapParams.
    Solve,
    /// Write the calibrated orbit on [0, s_r] as CSV.
    Trace,
    /// Run every certificate; exit 0 iff all pass.
    Verify,
    /// Steklov spectrum by Fourier mode.
    Spectrum,
    /// Index forms, Q-nullity and the Gram matrix.
    Index,
    /// OBJ mesh of the band.
    Mesh,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProjectionArg {
    Drop0,
    Stereo,
}

impl From<ProjectionArg> for Projection {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Drop0 => Projection::Drop0,
            ProjectionArg::Stereo => Projection::Stereo,
        }
    }
}

enum Failure {
    Usage(String),
    Numeric(Error),
    /// Report already written; the verdict was negative.
    Rejected,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Numeric(e)
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load_params(path: &PathBuf) -> Result<CapParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let p: CapParams = serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    p.validate()?;
    Ok(p)
}

fn config(cli: &Cli) -> Result<(RunConfig, Option<CapParams>), Failure> {
    let supplied = cli.params.as_ref().map(load_params).transpose()?;
    let r = match (cli.r, &supplied) {
        (Some(r), Some(p)) if (r - p.r).abs() > 1e-12 => {
            return Err(Failure::Usage(format!(
                "--r {r} disagrees with r = {} in the params file",
                p.r
            )));
        }
        (Some(r), _) => r,
        (None, Some(p)) => p.r,
        (None, None) => return Err(Failure::Usage("one of --r or --params is required".into())),
    };
    let cfg = RunConfig {
        r,
        tol: cli.tol,
        n_s: cli.ns,
        n_theta: cli.ntheta,
        k_max: cli.kmax,
        projection: cli.projection.into(),
        seed: cli.seed,
        parallel: true,
    };
    cfg.validate()?;
    Ok((cfg, supplied))
}

fn params_for(cfg: &RunConfig, supplied: Option<CapParams>) -> Result<CapParams, Failure> {
    Ok(capband_core::report::resolve_params(cfg, supplied)?)
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, Failure> {
    let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn grid(cfg: &RunConfig, params: &CapParams) -> Result<ImmersionGrid, Failure> {
    let trace = band_trace(params)?;
    Ok(ImmersionGrid::build_with(
        params,
        &trace,
        cfg.n_s,
        cfg.n_theta,
        cfg.parallel,
    )?)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let (cfg, supplied) = config(cli)?;
    match cli.command {
        Command::Solve => {
            let p = params_for(&cfg, supplied)?;
            emit(&cli.out, &json(&p)?)
        }
        Command::Trace => {
            let p = params_for(&cfg, supplied)?;
            let trace = ode::integrate(p.a, p.s_r, &calibration_config())?;
            emit(&cli.out, trace.to_csv().as_bytes())
        }
        Command::Verify => {
            let report = verify(&cfg, supplied)?;
            emit(&cli.out, &json(&report)?)?;
            if report.pass {
                Ok(())
            } else {
                Err(Failure::Rejected)
            }
        }
        Command::Spectrum => {
            let p = params_for(&cfg, supplied)?;
            let trace = band_trace(&p)?;
            emit(&cli.out, &json(&spectrum(&p, &trace, cfg.k_max)?)?)
        }
        Command::Index => {
            let p = params_for(&cfg, supplied)?;
            emit(&cli.out, &json(&stability_report(&grid(&cfg, &p)?)?)?)
        }
        Command::Mesh => {
            let p = params_for(&cfg, supplied)?;
            let g = grid(&cfg, &p)?;
            let mut buf = Vec::new();
            write_obj(&g, cfg.projection, &mut buf)?;
            emit(&cli.out, &buf)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
        Err(Failure::Rejected) => {
            eprintln!(
                "{}",
                serde_json::json!({ "error": "VerificationFailure", "message": "one or more checks failed" })
            );
            ExitCode::from(2)
        }
    }
}
