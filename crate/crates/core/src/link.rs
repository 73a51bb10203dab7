//! Broadcast link: Rayleigh channel, AWGN, scaling-factor error, receivers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::linalg::{norm_sqr, CMatrix};
use crate::modem::{wrap, Constellation, ModemError};
use crate::scalar::{Scalar, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinkError {
    #[error("need 1 <= N_r <= N_t (got N_r = {nr}, N_t = {nt})")]
    Dimension { nr: usize, nt: usize },
    #[error("transmit vector has length {got}, channel expects {expected}")]
    Length { got: usize, expected: usize },
    #[error("transmit vector must have unit norm (got {0})")]
    NotUnitPower(f64),
    #[error("noise variance must be non-negative and finite (got {0})")]
    BadVariance(f64),
    #[error("scaling factor must be positive (got {0})")]
    BadBeta(f64),
    #[error("fixed SQR must be finite (got {0})")]
    BadSqr(f64),
    #[error("noise-adaptive exponent must be 1, 2/3 or 1/2 (got {0})")]
    BadExponent(f64),
    #[error(transparent)]
    Modem(#[from] ModemError),
}

/// `N_r x N_t` channel with i.i.d. `CN(0, 1)` entries.
#[derive(Debug, Clone)]
pub struct ChannelRealization<T> {
    h: CMatrix<T>,
}

impl<T: Scalar> ChannelRealization<T> {
    pub fn new(h: CMatrix<T>) -> Result<Self, LinkError> {
        if h.rows() == 0 || h.rows() > h.cols() {
            return Err(LinkError::Dimension {
                nr: h.rows(),
                nt: h.cols(),
            });
        }
        Ok(Self { h })
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.h
    }

    pub fn users(&self) -> usize {
        self.h.rows()
    }

    pub fn antennas(&self) -> usize {
        self.h.cols()
    }
}

/// Noise level for a given SNR, `σ_n² = 10^(-snr_db / 10)` under unit transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig<T> {
    pub snr_db: f64,
    pub sigma_n2: T,
}

impl<T: Scalar> NoiseConfig<T> {
    pub fn from_snr_db(snr_db: f64) -> Self {
        Self {
            snr_db,
            sigma_n2: T::lit(10f64.powf(-snr_db / 10.0)),
        }
    }
}

/// How accurately receivers learn the scaling factor.
///
/// The relative error `g = (β - β̂) / β` is zero-mean Gaussian with variance
/// `σ_q²`, which depends on the mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaErrorModel {
    /// `β̂ = β`.
    Exact,
    /// `σ_q² = 10^(-sqr_db / 10)`, independent of SNR.
    FixedSqr { sqr_db: f64 },
    /// `σ_q² = (σ_n²)^exponent`.
    NoiseAdaptive { exponent: f64 },
}

impl BetaErrorModel {
    pub fn fixed_sqr(sqr_db: f64) -> Result<Self, LinkError> {
        if !sqr_db.is_finite() {
            return Err(LinkError::BadSqr(sqr_db));
        }
        Ok(Self::FixedSqr { sqr_db })
    }

    /// Accepts 1, 2/3 and 1/2, matching within 1e-3 so a rounded `0.6667` is 2/3.
    pub fn noise_adaptive(exponent: f64) -> Result<Self, LinkError> {
        [1.0, 2.0 / 3.0, 0.5]
            .into_iter()
            .find(|e| (exponent - e).abs() < 1e-3)
            .map(|exponent| Self::NoiseAdaptive { exponent })
            .ok_or(LinkError::BadExponent(exponent))
    }

    pub fn sigma_q2<T: Scalar>(&self, sigma_n2: T) -> T {
        match *self {
            BetaErrorModel::Exact => T::zero(),
            BetaErrorModel::FixedSqr { sqr_db } => T::lit(10f64.powf(-sqr_db / 10.0)),
            BetaErrorModel::NoiseAdaptive { exponent } => sigma_n2.powf(T::lit(exponent)),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            BetaErrorModel::Exact => "exact".to_string(),
            BetaErrorModel::FixedSqr { sqr_db } => format!("sqr={sqr_db}dB"),
            BetaErrorModel::NoiseAdaptive { exponent } => format!("adaptive^{exponent:.4}"),
        }
    }
}

fn complex_gaussian<T: Scalar, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C<T> {
    let sd = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C::new(T::lit(sd * re), T::lit(sd * im))
}

/// Fresh `N_r x N_t` Rayleigh channel; entries are drawn row by row.
pub fn draw_channel<T: Scalar, R: Rng + ?Sized>(
    nt: usize,
    nr: usize,
    rng: &mut R,
) -> Result<ChannelRealization<T>, LinkError> {
    if nr == 0 || nr > nt {
        return Err(LinkError::Dimension { nr, nt });
    }
    let h = CMatrix::from_fn(nr, nt, |_, _| complex_gaussian(rng, 1.0));
    ChannelRealization::new(h)
}

/// `y = H x + n` with `n ~ CN(0, σ_n² I)`; `x` must have unit norm within
/// 1e-9, or a few hundred ulps for narrower types.
pub fn apply_channel<T: Scalar, R: Rng + ?Sized>(
    channel: &ChannelRealization<T>,
    x: &[C<T>],
    sigma_n2: T,
    rng: &mut R,
) -> Result<Vec<C<T>>, LinkError> {
    if x.len() != channel.antennas() {
        return Err(LinkError::Length {
            got: x.len(),
            expected: channel.antennas(),
        });
    }
    if !(sigma_n2 >= T::zero() && sigma_n2.is_finite()) {
        return Err(LinkError::BadVariance(sigma_n2.as_f64()));
    }
    let power = norm_sqr(x).sqrt().as_f64();
    let tol = (256.0 * T::eps().as_f64()).max(1e-9);
    if !((power - 1.0).abs() <= tol) {
        return Err(LinkError::NotUnitPower(power));
    }
    let mut y = channel.h.matvec(x).expect("lengths checked");
    if sigma_n2 > T::zero() {
        let v = sigma_n2.as_f64();
        for yi in &mut y {
            *yi += complex_gaussian::<T, R>(rng, v);
        }
    }
    Ok(y)
}

/// Scaling factor as delivered to the receivers: `β̂ = β (1 - g)`, `g ~ N(0, σ_q²)`.
///
/// Draws with `g >= 1` would give a non-positive factor and are redrawn.
pub fn perturb_beta<T: Scalar, R: Rng + ?Sized>(
    beta: T,
    sigma_q2: T,
    rng: &mut R,
) -> Result<T, LinkError> {
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(LinkError::BadBeta(beta.as_f64()));
    }
    if !(sigma_q2 >= T::zero() && sigma_q2.is_finite()) {
        return Err(LinkError::BadVariance(sigma_q2.as_f64()));
    }
    if sigma_q2 == T::zero() {
        return Ok(beta);
    }
    let sd = sigma_q2.as_f64().sqrt();
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let g = sd * z;
        if g < 1.0 {
            let hat = beta * T::lit(1.0 - g);
            if hat > T::zero() {
                return Ok(hat);
            }
        }
    }
}

/// Receiver output for all users.
#[derive(Debug, Clone, PartialEq)]
pub struct Received<T> {
    /// `modulo(β̂ y_i, τ)` per user.
    pub symbols: Vec<C<T>>,
    pub bits: Vec<bool>,
}

/// Scale by `β̂`, fold with the modulo operator, and slice to the nearest point.
/// Each user's entry is handled on its own.
pub fn receive<T: Scalar>(
    y: &[C<T>],
    beta_hat: T,
    constellation: &Constellation<T>,
) -> Result<Received<T>, LinkError> {
    if !(beta_hat > T::zero() && beta_hat.is_finite()) {
        return Err(LinkError::BadBeta(beta_hat.as_f64()));
    }
    let tau = constellation.tau();
    let symbols = y
        .iter()
        .map(|yi| {
            let r = yi * beta_hat;
            if r.re.is_finite() && r.im.is_finite() {
                Ok(C::new(wrap(r.re, tau), wrap(r.im, tau)))
            } else {
                Err(ModemError::NonFinite)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    let bits = constellation.demap(&symbols)?;
    Ok(Received { symbols, bits })
}
