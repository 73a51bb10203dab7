//! Monte Carlo BER engine.
//!
//! Every trial owns its random streams. They are keyed by
//! `(master_seed, snr index, trial index, purpose)` and seeded straight into
//! ChaCha, so a trial's draws never depend on which worker ran it or in what
//! order. Per-point totals are integer sums and therefore identical for any
//! worker count.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::norm_sqr;
use crate::link::{
    apply_channel, draw_channel, perturb_beta, receive, BetaErrorModel, ChannelRealization,
    LinkError,
};
use crate::modem::{Constellation, ModemError};
use crate::precoding::{analytic_mse, exact_mse, PerturbedFrame, PrecodingError, Scheme};
use crate::scalar::{Scalar, C};

/// Channel redraws allowed per trial before it is aborted.
pub const MAX_CHANNEL_DRAWS: usize = 16;

/// Largest tolerated fraction of aborted trials at one SNR point.
pub const MAX_ABORT_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{aborted} of {trials} trials aborted at {snr_db} dB")]
    TooManyAborts {
        snr_db: f64,
        aborted: u64,
        trials: u64,
    },
    #[error("could not build a worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Precoding(#[from] PrecodingError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Modem(#[from] ModemError),
}

/// Configuration of one BER curve.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nt: usize,
    pub nr: usize,
    pub order: usize,
    pub scheme: Scheme,
    pub snr_grid_db: Vec<f64>,
    pub beta_error: BetaErrorModel,
    /// Frames per SNR point.
    pub trials: u64,
    /// Early-stop floor; 0 disables early stopping.
    pub min_bit_errors: u64,
    pub master_seed: u64,
}

impl SimConfig {
    /// Four transmit antennas, two users, 16-QAM, 0 to 40 dB in 5 dB steps.
    pub fn new(scheme: Scheme) -> Self {
        Self {
            nt: 4,
            nr: 2,
            order: 16,
            scheme,
            snr_grid_db: (0..=8).map(|k| 5.0 * k as f64).collect(),
            beta_error: BetaErrorModel::Exact,
            trials: 10_000,
            min_bit_errors: 0,
            master_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.nr == 0 || self.nr > self.nt {
            return Err(SimError::Config(format!(
                "need 1 <= N_r <= N_t (got N_r = {}, N_t = {})",
                self.nr, self.nt
            )));
        }
        Constellation::<f64>::new(self.order)?;
        if self.trials == 0 {
            return Err(SimError::Config("trials must be at least 1".into()));
        }
        if self.snr_grid_db.is_empty() {
            return Err(SimError::Config("empty SNR grid".into()));
        }
        if self.snr_grid_db.iter().any(|s| !s.is_finite()) {
            return Err(SimError::Config("non-finite SNR".into()));
        }
        if self.snr_grid_db.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::Config(
                "SNR grid must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Number of trials between early-stop checks.
    pub fn batch_size(&self) -> u64 {
        (self.trials / 100).max(64).min(self.trials)
    }
}

/// Noise level of one point on the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnrPoint {
    pub index: usize,
    pub snr_db: f64,
    pub sigma_n2: f64,
}

impl SnrPoint {
    pub fn from_db(index: usize, snr_db: f64) -> Self {
        Self {
            index,
            snr_db,
            sigma_n2: 10f64.powf(-snr_db / 10.0),
        }
    }

    /// A point with no receiver noise at all.
    pub fn noiseless(index: usize) -> Self {
        Self {
            index,
            snr_db: f64::INFINITY,
            sigma_n2: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Stream {
    Channel = 0,
    Data = 1,
    Noise = 2,
    BetaError = 3,
}

fn stream(master_seed: u64, snr_index: usize, trial: u64, purpose: Stream) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(snr_index as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&trial.to_le_bytes());
    seed[24..].copy_from_slice(&(purpose as u64).to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Outcome of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TrialOutcome {
    pub bit_errors: u64,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialError {
    #[error("no usable channel after {draws} draws (last: {last})")]
    Aborted { draws: usize, last: PrecodingError },
    #[error(transparent)]
    Precoding(#[from] PrecodingError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Modem(#[from] ModemError),
}

/// Runs one frame end to end and counts bit errors.
///
/// Channel, precoder, random bits, perturbation search, transmit
/// normalization, channel with noise, delivered scaling factor, receiver.
/// A singular channel is redrawn from the same stream up to
/// [`MAX_CHANNEL_DRAWS`] times.
pub fn run_trial<T: Scalar>(
    cfg: &SimConfig,
    point: SnrPoint,
    trial: u64,
) -> Result<TrialOutcome, TrialError> {
    let constellation = Constellation::<T>::new(cfg.order)?;
    run_trial_with(cfg, &constellation, point, trial)
}

fn run_trial_with<T: Scalar>(
    cfg: &SimConfig,
    constellation: &Constellation<T>,
    point: SnrPoint,
    trial: u64,
) -> Result<TrialOutcome, TrialError> {
    let sigma_n2 = T::lit(point.sigma_n2);
    let sigma_q2: T = cfg.beta_error.sigma_q2(sigma_n2);

    let mut channel_rng = stream(cfg.master_seed, point.index, trial, Stream::Channel);
    let mut last = PrecodingError::Singular(f64::INFINITY);
    let mut usable = None;
    for _ in 0..MAX_CHANNEL_DRAWS {
        let channel: ChannelRealization<T> = draw_channel(cfg.nt, cfg.nr, &mut channel_rng)?;
        match cfg.scheme.precoder(channel.matrix(), sigma_n2, sigma_q2) {
            Ok(ps) => {
                usable = Some((channel, ps));
                break;
            }
            Err(e @ PrecodingError::Singular(_)) => last = e,
            Err(e) => return Err(e.into()),
        }
    }
    let (channel, precoder) = usable.ok_or(TrialError::Aborted {
        draws: MAX_CHANNEL_DRAWS,
        last,
    })?;

    let mut data_rng = stream(cfg.master_seed, point.index, trial, Stream::Data);
    let bits: Vec<bool> = (0..cfg.nr * constellation.bits_per_symbol())
        .map(|_| data_rng.gen())
        .collect();
    let data = constellation.map_bits(&bits)?;

    let frame = PerturbedFrame::build(&precoder, &data, constellation.tau())?;

    let mut noise_rng = stream(cfg.master_seed, point.index, trial, Stream::Noise);
    let y = apply_channel(&channel, &frame.transmit, sigma_n2, &mut noise_rng)?;

    let mut beta_rng = stream(cfg.master_seed, point.index, trial, Stream::BetaError);
    let beta_hat = perturb_beta(frame.beta, sigma_q2, &mut beta_rng)?;

    let rx = receive(&y, beta_hat, constellation)?;
    let bit_errors = rx.bits.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
    Ok(TrialOutcome {
        bit_errors,
        bits: bits.len() as u64,
    })
}

/// Aggregated result at one SNR point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub sigma_q2: f64,
    /// Trials actually run (fewer than configured after an early stop).
    pub trials: u64,
    pub aborted: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// 95 % normal-approximation half-width, `1.96 sqrt(p (1 - p) / bits)`.
    pub ci_half_width: f64,
}

impl BerPoint {
    fn from_counts(scheme: Scheme, snr_db: f64, sigma_q2: f64, tally: Tally) -> Self {
        let ber = if tally.bits == 0 {
            0.0
        } else {
            tally.bit_errors as f64 / tally.bits as f64
        };
        let ci_half_width = if tally.bits == 0 {
            0.0
        } else {
            1.96 * (ber * (1.0 - ber) / tally.bits as f64).sqrt()
        };
        Self {
            scheme,
            snr_db,
            sigma_q2,
            trials: tally.trials,
            aborted: tally.aborted,
            bits: tally.bits,
            bit_errors: tally.bit_errors,
            ber,
            ci_half_width,
        }
    }

    /// The normal approximation is only trusted with at least 20 errors.
    pub fn ci_reliable(&self) -> bool {
        self.bit_errors >= 20
    }

    pub fn ci_low(&self) -> f64 {
        (self.ber - self.ci_half_width).max(0.0)
    }

    pub fn ci_high(&self) -> f64 {
        (self.ber + self.ci_half_width).min(1.0)
    }
}

impl fmt::Display for BerPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:>9} {:6.2} dB  BER {:.3e} ± {:.1e}  ({} / {} bits, {} trials)",
            self.scheme.name(),
            self.snr_db,
            self.ber,
            self.ci_half_width,
            self.bit_errors,
            self.bits,
            self.trials
        )
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    trials: u64,
    aborted: u64,
    bits: u64,
    bit_errors: u64,
}

impl Tally {
    fn merge(self, o: Tally) -> Tally {
        Tally {
            trials: self.trials + o.trials,
            aborted: self.aborted + o.aborted,
            bits: self.bits + o.bits,
            bit_errors: self.bit_errors + o.bit_errors,
        }
    }
}

/// Runs every SNR point of `cfg` on a pool of `workers` threads (0 picks the
/// rayon default). Results do not depend on `workers`.
///
/// Trials run in fixed batches of [`SimConfig::batch_size`]; after each batch a
/// point may stop early once it has `min_bit_errors` errors and at least 1 %
/// of its trials.
pub fn sweep<T: Scalar>(cfg: &SimConfig, workers: usize) -> Result<Vec<BerPoint>, SimError> {
    cfg.validate()?;
    let constellation = Constellation::<T>::new(cfg.order)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| SimError::Pool(e.to_string()))?;
    let batch = cfg.batch_size();
    let min_trials = cfg.trials.div_ceil(100);

    let mut points = Vec::with_capacity(cfg.snr_grid_db.len());
    for (index, &snr_db) in cfg.snr_grid_db.iter().enumerate() {
        let point = SnrPoint::from_db(index, snr_db);
        let mut tally = Tally::default();
        let mut start = 0;
        while start < cfg.trials {
            let end = (start + batch).min(cfg.trials);
            let part = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(
                        |trial| match run_trial_with(cfg, &constellation, point, trial) {
                            Ok(o) => Tally {
                                trials: 1,
                                aborted: 0,
                                bits: o.bits,
                                bit_errors: o.bit_errors,
                            },
                            Err(_) => Tally {
                                trials: 1,
                                aborted: 1,
                                ..Tally::default()
                            },
                        },
                    )
                    .reduce(Tally::default, Tally::merge)
            });
            tally = tally.merge(part);
            start = end;
            if cfg.min_bit_errors > 0
                && tally.bit_errors >= cfg.min_bit_errors
                && tally.trials >= min_trials
            {
                break;
            }
        }
        if tally.aborted as f64 > MAX_ABORT_FRACTION * tally.trials as f64 {
            return Err(SimError::TooManyAborts {
                snr_db,
                aborted: tally.aborted,
                trials: tally.trials,
            });
        }
        let sigma_q2 = cfg.beta_error.sigma_q2(point.sigma_n2);
        points.push(BerPoint::from_counts(cfg.scheme, snr_db, sigma_q2, tally));
    }
    Ok(points)
}

/// Empirical and analytic mean square deviation `E‖β̂ y - s‖²` for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport {
    /// Sample mean over fresh noise and scaling-error draws.
    pub empirical: f64,
    /// Closed form used for the design, `‖(HP-I)s‖² + N_r β² (σ_q² + σ_n²(1+σ_q²))`.
    pub design: f64,
    /// Exact expectation, `‖(HP-I)s‖² + σ_q² ‖HPs‖² + N_r β² σ_n² (1+σ_q²)`.
    pub exact: f64,
}

impl MseReport {
    pub fn rel_err_design(&self) -> f64 {
        (self.empirical - self.design).abs() / self.design
    }

    pub fn rel_err_exact(&self) -> f64 {
        (self.empirical - self.exact).abs() / self.exact
    }

    /// Relative gap between the two closed forms.
    pub fn analytic_gap(&self) -> f64 {
        (self.design - self.exact).abs() / self.exact
    }
}

/// Estimates `E‖β̂ y - s‖²` for the data vector `u` sent over `channel` with
/// `scheme`, holding the precoder, perturbation and `β` fixed.
#[allow(clippy::too_many_arguments)]
pub fn empirical_mse<T: Scalar, R: Rng + ?Sized>(
    channel: &ChannelRealization<T>,
    u: &[C<T>],
    scheme: Scheme,
    sigma_n2: T,
    sigma_q2: T,
    tau: T,
    samples: usize,
    rng: &mut R,
) -> Result<MseReport, SimError> {
    if samples < 10_000 {
        return Err(SimError::Config(format!(
            "need at least 10^4 samples (got {samples})"
        )));
    }
    let h = channel.matrix();
    let ps = scheme.precoder(h, sigma_n2, sigma_q2)?;
    let frame = PerturbedFrame::build(&ps, u, tau)?;
    let mut acc = 0.0f64;
    for _ in 0..samples {
        let y = apply_channel(channel, &frame.transmit, sigma_n2, rng)?;
        let beta_hat = perturb_beta(frame.beta, sigma_q2, rng)?;
        let d: Vec<C<T>> = y
            .iter()
            .zip(&frame.perturbed)
            .map(|(yi, si)| yi * beta_hat - si)
            .collect();
        acc += norm_sqr(&d).as_f64();
    }
    Ok(MseReport {
        empirical: acc / samples as f64,
        design: analytic_mse(&ps, h, &frame.perturbed, frame.beta, sigma_n2, sigma_q2)?.as_f64(),
        exact: exact_mse(&ps, h, &frame.perturbed, frame.beta, sigma_n2, sigma_q2)?.as_f64(),
    })
}
