//! Command-line grammar and its translation into simulation configs.

use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use thiserror::Error;
use vp_core::{BetaErrorModel, Constellation, Scheme, SimConfig};

#[derive(Debug, Error, PartialEq)]
pub enum UsageError {
    #[error("{0}")]
    Clap(String),
    #[error("bad SNR grid '{0}': expected start:stop:step in dB with step > 0 and stop >= start")]
    SnrGrid(String),
    #[error("{0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SqrMode {
    Exact,
    Fixed,
    Adaptive,
}

/// Vector perturbation BER simulator.
///
/// Sweeps uncoded BER over an SNR grid for conventional VP, MMSE-VP and
/// robust VP, with the receivers' copy of the power scaling factor optionally
/// corrupted by a Gaussian relative error.
#[derive(Debug, Parser)]
#[command(name = "vpsim", version)]
struct Cli {
    /// Precoding scheme; repeat to sweep several (default: all three).
    #[arg(long = "scheme", value_parser = parse_scheme)]
    schemes: Vec<Scheme>,

    /// Transmit antennas.
    #[arg(long, default_value_t = 4)]
    nt: usize,

    /// Single-antenna users.
    #[arg(long, default_value_t = 2)]
    nr: usize,

    /// QAM order.
    #[arg(long = "mod", default_value_t = 16, value_parser = parse_order)]
    order: usize,

    /// SNR grid in dB, start:stop:step (stop included when on the grid) or a single value.
    #[arg(long, default_value = "0:40:5", allow_hyphen_values = true)]
    snr: String,

    /// Fixed signal-to-quantization-error ratio in dB.
    #[arg(long, allow_hyphen_values = true)]
    sqr: Option<f64>,

    /// Scaling-factor error model.
    #[arg(long = "sqr-mode", value_enum)]
    sqr_mode: Option<SqrMode>,

    /// Noise-adaptive exponent: σ_q² = (σ_n²)^exponent, one of 1, 0.6667, 0.5.
    #[arg(long)]
    exponent: Option<f64>,

    /// Frames per SNR point.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,

    /// Stop a point early after this many bit errors (0 = never).
    #[arg(long = "min-errors", default_value_t = 0)]
    min_errors: u64,

    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, default_value_t = 0)]
    workers: usize,

    /// CSV output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write an SVG plot next to the CSV.
    #[arg(long)]
    svg: bool,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

fn parse_order(s: &str) -> Result<usize, String> {
    let order: usize = s.parse().map_err(|_| format!("'{s}' is not an integer"))?;
    Constellation::<f64>::new(order).map_err(|e| e.to_string())?;
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    CsvSvg,
}

/// Everything one invocation asks for.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub nt: usize,
    pub nr: usize,
    pub order: usize,
    pub schemes: Vec<Scheme>,
    pub snr_grid_db: Vec<f64>,
    pub beta_error: BetaErrorModel,
    pub trials: u64,
    pub min_bit_errors: u64,
    pub seed: u64,
    pub workers: usize,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunSpec {
    /// One config per requested scheme, all sharing the error model and seed.
    pub fn configs(&self) -> Vec<SimConfig> {
        self.schemes
            .iter()
            .map(|&scheme| SimConfig {
                nt: self.nt,
                nr: self.nr,
                order: self.order,
                scheme,
                snr_grid_db: self.snr_grid_db.clone(),
                beta_error: self.beta_error,
                trials: self.trials,
                min_bit_errors: self.min_bit_errors,
                master_seed: self.seed,
            })
            .collect()
    }
}

/// Parses `start:stop:step` (or a single number) into an increasing grid.
pub fn parse_snr_grid(s: &str) -> Result<Vec<f64>, UsageError> {
    let bad = || UsageError::SnrGrid(s.to_string());
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad())?;
    if parts.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    match parts[..] {
        [v] => Ok(vec![v]),
        [start, stop, step] if step > 0.0 && stop >= start => {
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| start + k as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}

fn beta_error_model(cli: &Cli) -> Result<BetaErrorModel, UsageError> {
    let mode = cli.sqr_mode.unwrap_or(match (cli.sqr, cli.exponent) {
        (Some(_), _) => SqrMode::Fixed,
        (None, Some(_)) => SqrMode::Adaptive,
        (None, None) => SqrMode::Exact,
    });
    let conflict = |msg: &str| Err(UsageError::Inconsistent(msg.to_string()));
    match mode {
        SqrMode::Exact => {
            if cli.sqr.is_some() || cli.exponent.is_some() {
                return conflict("--sqr-mode exact takes neither --sqr nor --exponent");
            }
            Ok(BetaErrorModel::Exact)
        }
        SqrMode::Fixed => {
            if cli.exponent.is_some() {
                return conflict("--exponent only applies to --sqr-mode adaptive");
            }
            let Some(sqr) = cli.sqr else {
                return conflict("--sqr-mode fixed needs --sqr <dB>");
            };
            BetaErrorModel::fixed_sqr(sqr).map_err(|e| UsageError::Inconsistent(e.to_string()))
        }
        SqrMode::Adaptive => {
            if cli.sqr.is_some() {
                return conflict("--sqr cannot be combined with --sqr-mode adaptive");
            }
            BetaErrorModel::noise_adaptive(cli.exponent.unwrap_or(1.0))
                .map_err(|e| UsageError::Inconsistent(e.to_string()))
        }
    }
}

/// Parses a full argument vector (including the program name).
///
/// `--help` and `--version` come back as `Err((UsageError::Clap(text), true))`;
/// the flag is `false` for real usage errors.
pub fn parse_args<I, S>(argv: I) -> Result<RunSpec, (UsageError, bool)>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| {
        let info = is_informational(&e);
        (UsageError::Clap(e.render().to_string()), info)
    })?;
    resolve(cli).map_err(|e| (e, false))
}

fn is_informational(e: &clap::Error) -> bool {
    matches!(
        e.kind(),
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
    )
}

fn resolve(cli: Cli) -> Result<RunSpec, UsageError> {
    let beta_error = beta_error_model(&cli)?;
    let snr_grid_db = parse_snr_grid(&cli.snr)?;
    if cli.nr == 0 || cli.nr > cli.nt {
        return Err(UsageError::Inconsistent(format!(
            "need 1 <= --nr <= --nt (got --nr {} --nt {})",
            cli.nr, cli.nt
        )));
    }
    if cli.svg && cli.out.is_none() {
        return Err(UsageError::Inconsistent("--svg needs --out <path>".into()));
    }
    let mut schemes = if cli.schemes.is_empty() {
        Scheme::ALL.to_vec()
    } else {
        cli.schemes
    };
    let mut seen = Vec::new();
    schemes.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(*s);
        fresh
    });
    Ok(RunSpec {
        nt: cli.nt,
        nr: cli.nr,
        order: cli.order,
        schemes,
        snr_grid_db,
        beta_error,
        trials: cli.trials,
        min_bit_errors: cli.min_errors,
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out,
        format: if cli.svg {
            OutputFormat::CsvSvg
        } else {
            OutputFormat::Csv
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunSpec, UsageError> {
        parse_args(std::iter::once("vpsim").chain(args.iter().copied())).map_err(|(e, _)| e)
    }

    #[test]
    fn defaults() {
        let spec = parse(&[]).unwrap();
        assert_eq!((spec.nt, spec.nr, spec.order), (4, 2, 16));
        assert_eq!(spec.schemes, Scheme::ALL.to_vec());
        assert_eq!(
            spec.snr_grid_db,
            vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]
        );
        assert_eq!(spec.beta_error, BetaErrorModel::Exact);
        assert_eq!(spec.format, OutputFormat::Csv);
    }

    #[test]
    fn fixed_sqr_run() {
        let spec = parse(&[
            "--scheme",
            "robust-vp",
            "--snr",
            "0:40:5",
            "--sqr",
            "14",
            "--trials",
            "20000",
            "--seed",
            "7",
        ])
        .unwrap();
        assert_eq!(spec.schemes, vec![Scheme::RobustVp]);
        assert_eq!(spec.beta_error, BetaErrorModel::FixedSqr { sqr_db: 14.0 });
        let q: f64 = spec.beta_error.sigma_q2(0.1);
        assert!((q - 0.0398).abs() < 1e-4);
        assert_eq!((spec.trials, spec.seed), (20000, 7));
        assert_eq!(spec.configs().len(), 1);
        assert_eq!(spec.configs()[0].master_seed, 7);
    }

    #[test]
    fn adaptive_run() {
        let spec = parse(&["--sqr-mode", "adaptive", "--exponent", "0.5"]).unwrap();
        assert_eq!(
            spec.beta_error,
            BetaErrorModel::NoiseAdaptive { exponent: 0.5 }
        );
        let q: f64 = spec.beta_error.sigma_q2(1e-4);
        assert!((q - 1e-2).abs() < 1e-15);
        let spec = parse(&["--sqr-mode", "adaptive"]).unwrap();
        assert_eq!(
            spec.beta_error,
            BetaErrorModel::NoiseAdaptive { exponent: 1.0 }
        );
        let spec = parse(&["--exponent", "0.6667"]).unwrap();
        assert_eq!(
            spec.beta_error,
            BetaErrorModel::NoiseAdaptive {
                exponent: 2.0 / 3.0
            }
        );
    }

    #[test]
    fn repeated_schemes() {
        let spec = parse(&[
            "--scheme",
            "cvp",
            "--scheme",
            "robust-vp",
            "--scheme",
            "cvp",
        ])
        .unwrap();
        assert_eq!(spec.schemes, vec![Scheme::Cvp, Scheme::RobustVp]);
    }

    #[test]
    fn negative_sqr_is_a_value() {
        let spec = parse(&["--sqr", "-3"]).unwrap();
        assert_eq!(spec.beta_error, BetaErrorModel::FixedSqr { sqr_db: -3.0 });
    }

    #[test]
    fn rejected_combinations() {
        for args in [
            &["--sqr-mode", "adaptive", "--sqr", "14"][..],
            &["--sqr-mode", "exact", "--sqr", "14"],
            &["--sqr-mode", "fixed"],
            &["--sqr", "14", "--exponent", "1"],
            &["--sqr-mode", "adaptive", "--exponent", "0.7"],
            &["--nr", "5"],
            &["--nr", "0"],
            &["--svg"],
            &["--snr", "10:0:5"],
            &["--snr", "0:10:0"],
            &["--snr", "a:b:c"],
            &["--snr", "0:10"],
        ] {
            assert!(
                matches!(
                    parse(args),
                    Err(UsageError::Inconsistent(_) | UsageError::SnrGrid(_))
                ),
                "{args:?}"
            );
        }
    }

    #[test]
    fn clap_level_errors() {
        for args in [
            &["--bogus"][..],
            &["--mod", "8"],
            &["--scheme", "zf"],
            &["--trials", "0"],
            &["--sqr-mode", "sometimes"],
        ] {
            assert!(matches!(parse(args), Err(UsageError::Clap(_))), "{args:?}");
        }
        let help = parse_args(["vpsim", "--help"]).unwrap_err();
        assert!(help.1);
    }

    #[test]
    fn snr_grids() {
        assert_eq!(parse_snr_grid("0:40:5").unwrap().len(), 9);
        assert_eq!(parse_snr_grid("0:9:5").unwrap(), vec![0.0, 5.0]);
        assert_eq!(parse_snr_grid("25").unwrap(), vec![25.0]);
        assert_eq!(parse_snr_grid("0:1:0.1").unwrap().len(), 11);
        assert_eq!(parse_snr_grid("-10:-5:5").unwrap(), vec![-10.0, -5.0]);
    }
}
