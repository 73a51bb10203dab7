//! Channel-inversion precoders for vector perturbation.
//!
//! All three schemes share one shape, `P = H^H (H H^H + alpha I)^{-1}`:
//!
//! | scheme      | alpha                                   |
//! |-------------|-----------------------------------------|
//! | `Cvp`       | 0 (zero forcing)                        |
//! | `MmseVp`    | `N_r σ_n²`                              |
//! | `RobustVp`  | `N_r (σ_q² + σ_n² (1 + σ_q²))`          |
//!
//! and the perturbation search minimizes `s^H (H H^H + alpha I)^{-1} s`
//! through a triangular factor `L` with `L^H L = (H H^H + alpha I)^{-1}`.
//! For zero forcing this quadratic form equals `‖P s‖²`, so conventional VP
//! goes through the same search path.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::lattice::{sphere_decode, LatticeError, LatticeProblem, PerturbationSolution};
use crate::linalg::{norm_sqr, CMatrix, Cholesky, LinalgError};
use crate::scalar::{Scalar, C};

/// Channels whose regularized Gram matrix has a 1-norm condition estimate
/// above this are rejected as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrecodingError {
    #[error("need 1 <= N_r <= N_t (got N_r = {rows}, N_t = {cols})")]
    Dimension { rows: usize, cols: usize },
    #[error("channel is singular (condition estimate {0:.3e})")]
    Singular(f64),
    #[error("variance must be non-negative and finite (got {0})")]
    BadVariance(f64),
    #[error("precoded vector has zero or non-finite power")]
    Degenerate,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Precoder family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// Conventional VP: zero-forcing inversion, minimum-power perturbation.
    Cvp,
    /// Joint MMSE design assuming the receiver knows the scaling factor exactly.
    MmseVp,
    /// MMSE design that also accounts for a relative scaling-factor error.
    RobustVp,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Cvp, Scheme::MmseVp, Scheme::RobustVp];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Cvp => "cvp",
            Scheme::MmseVp => "mmse-vp",
            Scheme::RobustVp => "robust-vp",
        }
    }

    /// Builds this scheme's precoder for channel `h`.
    ///
    /// `sigma_q2` is ignored by every scheme except `RobustVp`, and `sigma_n2`
    /// is ignored by `Cvp`.
    pub fn precoder<T: Scalar>(
        self,
        h: &CMatrix<T>,
        sigma_n2: T,
        sigma_q2: T,
    ) -> Result<PrecoderSet<T>, PrecodingError> {
        match self {
            Scheme::Cvp => zf_precoder(h),
            Scheme::MmseVp => mmse_precoder(h, sigma_n2),
            Scheme::RobustVp => robust_precoder(h, sigma_n2, sigma_q2),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "cvp" => Ok(Scheme::Cvp),
            "mmse-vp" | "mmse" => Ok(Scheme::MmseVp),
            "robust-vp" | "robust" => Ok(Scheme::RobustVp),
            other => Err(format!(
                "unknown scheme '{other}' (expected cvp, mmse-vp or robust-vp)"
            )),
        }
    }
}

/// Precoding matrix plus the triangular factor that drives the perturbation search.
#[derive(Debug, Clone)]
pub struct PrecoderSet<T> {
    scheme: Scheme,
    matrix: CMatrix<T>,
    alpha: T,
    factor: CMatrix<T>,
}

impl<T: Scalar> PrecoderSet<T> {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// `P`, `N_t x N_r`.
    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    /// Diagonal loading of `H H^H`.
    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// Lower-triangular `L`, positive real diagonal, `L^H L = (H H^H + alpha I)^{-1}`.
    pub fn factor(&self) -> &CMatrix<T> {
        &self.factor
    }

    pub fn users(&self) -> usize {
        self.matrix.cols()
    }
}

/// Effective regularizing variance `σ_q² + σ_n² (1 + σ_q²)` of the robust design.
pub fn effective_variance<T: Scalar>(sigma_n2: T, sigma_q2: T) -> T {
    sigma_q2 + sigma_n2 * (T::one() + sigma_q2)
}

fn check_variance<T: Scalar>(v: T) -> Result<(), PrecodingError> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(PrecodingError::BadVariance(v.as_f64()))
    }
}

fn regularized_inverse<T: Scalar>(
    h: &CMatrix<T>,
    alpha: T,
    scheme: Scheme,
) -> Result<PrecoderSet<T>, PrecodingError> {
    let (nr, nt) = (h.rows(), h.cols());
    if nr == 0 || nr > nt {
        return Err(PrecodingError::Dimension { rows: nr, cols: nt });
    }
    if !h.is_finite() {
        return Err(LinalgError::NonFinite.into());
    }
    let a = h.gram().add_scaled_identity(alpha);
    let chol = match Cholesky::new(&a) {
        Ok(c) => c,
        Err(LinalgError::NotPositiveDefinite { .. }) => {
            return Err(PrecodingError::Singular(f64::INFINITY))
        }
        Err(e) => return Err(e.into()),
    };
    let cond = chol.condition_estimate(&a)?.as_f64();
    if !(cond <= SINGULAR_CONDITION) {
        return Err(PrecodingError::Singular(cond));
    }
    // P^H = A^{-1} H since A is Hermitian
    let matrix = chol.solve(h)?.adjoint();
    let factor = chol.inverse_factor()?;
    Ok(PrecoderSet {
        scheme,
        matrix,
        alpha,
        factor,
    })
}

/// Zero-forcing precoder `P = H^H (H H^H)^{-1}` used by conventional VP.
pub fn zf_precoder<T: Scalar>(h: &CMatrix<T>) -> Result<PrecoderSet<T>, PrecodingError> {
    regularized_inverse(h, T::zero(), Scheme::Cvp)
}

/// MMSE-VP precoder `P = H^H (H H^H + N_r σ_n² I)^{-1}`.
///
/// With `sigma_n2 == 0` the regularizer vanishes and the zero-forcing set is
/// returned, singularity guard included.
pub fn mmse_precoder<T: Scalar>(
    h: &CMatrix<T>,
    sigma_n2: T,
) -> Result<PrecoderSet<T>, PrecodingError> {
    check_variance(sigma_n2)?;
    if sigma_n2.is_zero() {
        return zf_precoder(h);
    }
    let alpha = T::lit(h.rows() as f64) * sigma_n2;
    regularized_inverse(h, alpha, Scheme::MmseVp)
}

/// Robust VP precoder `P = H^H (H H^H + N_r (σ_q² + σ_n²(1 + σ_q²)) I)^{-1}`.
///
/// With `sigma_q2 == 0` this is exactly [`mmse_precoder`].
pub fn robust_precoder<T: Scalar>(
    h: &CMatrix<T>,
    sigma_n2: T,
    sigma_q2: T,
) -> Result<PrecoderSet<T>, PrecodingError> {
    check_variance(sigma_n2)?;
    check_variance(sigma_q2)?;
    if sigma_q2.is_zero() {
        return mmse_precoder(h, sigma_n2);
    }
    let alpha = T::lit(h.rows() as f64) * effective_variance(sigma_n2, sigma_q2);
    regularized_inverse(h, alpha, Scheme::RobustVp)
}

/// Lower-triangular `L` with positive real diagonal and `L^H L = A^{-1}`.
pub fn triangular_factor<T: Scalar>(a: &CMatrix<T>) -> Result<CMatrix<T>, PrecodingError> {
    Ok(Cholesky::new(a)?.inverse_factor()?)
}

/// Perturbation minimizing `‖L (u + p)‖²` over `p ∈ tau (Z + jZ)^{N_r}`.
pub fn solve_perturbation<T: Scalar>(
    ps: &PrecoderSet<T>,
    u: &[C<T>],
    tau: T,
) -> Result<PerturbationSolution<T>, PrecodingError> {
    let problem = LatticeProblem::new(ps.factor.clone(), u.to_vec(), tau)?;
    Ok(sphere_decode(&problem))
}

/// Power scaling factor `β = ‖P s‖` and unit-norm transmit vector `P s / β`.
pub fn form_transmit<T: Scalar>(
    ps: &PrecoderSet<T>,
    s: &[C<T>],
) -> Result<(T, Vec<C<T>>), PrecodingError> {
    let ps_vec = ps.matrix.matvec(s)?;
    let beta = norm_sqr(&ps_vec).sqrt();
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(PrecodingError::Degenerate);
    }
    let x = ps_vec.into_iter().map(|z| z / beta).collect();
    Ok((beta, x))
}

/// One data vector after perturbation and normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFrame<T> {
    pub data: Vec<C<T>>,
    pub perturbation: Vec<C<T>>,
    /// `data + perturbation`.
    pub perturbed: Vec<C<T>>,
    pub beta: T,
    /// Unit-norm transmit vector.
    pub transmit: Vec<C<T>>,
}

impl<T: Scalar> PerturbedFrame<T> {
    /// Searches the perturbation for `data` and forms the transmit vector.
    pub fn build(ps: &PrecoderSet<T>, data: &[C<T>], tau: T) -> Result<Self, PrecodingError> {
        let solution = solve_perturbation(ps, data, tau)?;
        let perturbed: Vec<C<T>> = data
            .iter()
            .zip(&solution.perturbation)
            .map(|(u, p)| u + p)
            .collect();
        let (beta, transmit) = form_transmit(ps, &perturbed)?;
        Ok(Self {
            data: data.to_vec(),
            perturbation: solution.perturbation,
            perturbed,
            beta,
            transmit,
        })
    }
}

/// `‖(H P - I) s‖²`, the deterministic residual interference.
pub fn residual_interference<T: Scalar>(
    ps: &PrecoderSet<T>,
    h: &CMatrix<T>,
    s: &[C<T>],
) -> Result<T, PrecodingError> {
    let hp = h.matmul(&ps.matrix)?;
    let e = hp.sub(&CMatrix::identity(hp.rows()))?;
    Ok(norm_sqr(&e.matvec(s)?))
}

/// Conditional MSE used for the design.
///
/// `‖(HP - I) s‖² + N_r β² (σ_q² + σ_n² (1 + σ_q²))`; at `σ_q² = 0` this is the
/// exact error-free MSE `‖(HP - I) s‖² + N_r β² σ_n²`.
pub fn analytic_mse<T: Scalar>(
    ps: &PrecoderSet<T>,
    h: &CMatrix<T>,
    s: &[C<T>],
    beta: T,
    sigma_n2: T,
    sigma_q2: T,
) -> Result<T, PrecodingError> {
    let nr = T::lit(h.rows() as f64);
    Ok(
        residual_interference(ps, h, s)?
            + nr * beta * beta * effective_variance(sigma_n2, sigma_q2),
    )
}

/// Expected `‖β̂ y - s‖²` for `β̂ = β (1 - g)`, `g ~ N(0, σ_q²)` independent of the noise:
/// `‖(HP - I) s‖² + σ_q² ‖H P s‖² + N_r β² σ_n² (1 + σ_q²)`.
pub fn exact_mse<T: Scalar>(
    ps: &PrecoderSet<T>,
    h: &CMatrix<T>,
    s: &[C<T>],
    beta: T,
    sigma_n2: T,
    sigma_q2: T,
) -> Result<T, PrecodingError> {
    let nr = T::lit(h.rows() as f64);
    let hps = h.matmul(&ps.matrix)?.matvec(s)?;
    Ok(residual_interference(ps, h, s)?
        + sigma_q2 * norm_sqr(&hps)
        + nr * beta * beta * sigma_n2 * (T::one() + sigma_q2))
}
