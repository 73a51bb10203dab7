//! Command-line front end for the vector perturbation BER simulator.

pub mod args;
pub mod output;

use std::process::ExitCode;

use vp_core::{sweep, BerPoint};

pub use args::{parse_args, parse_snr_grid, OutputFormat, RunSpec, UsageError};
pub use output::{emit_results, parse_csv, render_svg, to_csv, OutputError, CSV_HEADER};

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

/// Sweeps every scheme in `spec`, in order.
pub fn run(spec: &RunSpec) -> Result<Vec<BerPoint>, vp_core::SimError> {
    let mut points = Vec::new();
    for cfg in spec.configs() {
        points.extend(sweep::<f64>(&cfg, spec.workers)?);
    }
    Ok(points)
}

/// Full program: parse, simulate, write. Returns the process exit code.
pub fn main_with_args<I, S>(argv: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let spec = match parse_args(argv) {
        Ok(spec) => spec,
        Err((UsageError::Clap(text), true)) => {
            print!("{text}");
            return ExitCode::SUCCESS;
        }
        Err((e, _)) => {
            eprintln!("vpsim: {}", e.to_string().trim_end());
            eprintln!("try 'vpsim --help'");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let points = match run(&spec) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("vpsim: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    for p in &points {
        eprintln!("{p}");
    }
    match emit_results(&points, &spec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vpsim: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
