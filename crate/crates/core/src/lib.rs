//! Vector perturbation precoding for the multiuser MISO broadcast channel.
//!
//! Three precoders are provided: conventional VP (zero-forcing inversion),
//! MMSE-VP, and a robust variant whose regularization also accounts for
//! receivers that only learn a noisy copy of the power scaling factor. All
//! three feed the same closest-point search over the scaled Gaussian-integer
//! lattice. [`montecarlo`] runs the complete link and reports uncoded BER.
//!
//! The numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which is what the simulator uses.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod lattice;
pub mod linalg;
pub mod link;
pub mod modem;
pub mod montecarlo;
pub mod precoding;
pub mod scalar;

pub use lattice::{
    brute_force_perturbation, sphere_decode, LatticeError, LatticeProblem, PerturbationSolution,
};
pub use linalg::{CMatrix, Cholesky, LinalgError};
pub use link::{
    apply_channel, draw_channel, perturb_beta, receive, BetaErrorModel, ChannelRealization,
    LinkError, NoiseConfig, Received,
};
pub use modem::{modulo, Constellation, ModemError};
pub use montecarlo::{
    empirical_mse, run_trial, sweep, BerPoint, MseReport, SimConfig, SimError, SnrPoint,
    TrialOutcome,
};
pub use precoding::{
    analytic_mse, effective_variance, exact_mse, form_transmit, mmse_precoder, robust_precoder,
    solve_perturbation, triangular_factor, zf_precoder, PerturbedFrame, PrecoderSet,
    PrecodingError, Scheme,
};
pub use scalar::{Scalar, C};

pub type Complex64 = C<f64>;
pub type Matrix64 = CMatrix<f64>;
pub type Matrix32 = CMatrix<f32>;
pub type Constellation64 = Constellation<f64>;
pub type Constellation32 = Constellation<f32>;
pub type Precoder64 = PrecoderSet<f64>;
pub type Precoder32 = PrecoderSet<f32>;
pub type Channel64 = ChannelRealization<f64>;
pub type Frame64 = PerturbedFrame<f64>;
pub type Lattice64 = LatticeProblem<f64>;
pub type Solution64 = PerturbationSolution<f64>;
