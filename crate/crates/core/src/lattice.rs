//! Closest-point search over the scaled Gaussian-integer lattice `tau (Z + jZ)^N`.
//!
//! A perturbation `p` is chosen to minimize `‖L (u + p)‖²` for a lower
//! triangular generator `L` with positive real diagonal. Interleaving real and
//! imaginary parts, `(Re s_0, Im s_0, Re s_1, ...)`, turns the complex problem
//! into a `2N`-dimensional real one whose generator is again lower triangular:
//! each complex entry `l` becomes the block `[[Re l, -Im l], [Im l, Re l]]`,
//! and the diagonal blocks are `l_ii I` because `l_ii` is real.
//!
//! [`sphere_decode`] is an exact depth-first enumeration with Schnorr-Euchner
//! child ordering. [`brute_force_perturbation`] is the exhaustive oracle used
//! to check it.

use thiserror::Error;

use crate::linalg::{norm_sqr, CMatrix};
use crate::scalar::{Scalar, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("generator must be square and match the target length")]
    Dimension,
    #[error("empty problem")]
    Empty,
    #[error("generator is not lower triangular")]
    NotTriangular,
    #[error("generator diagonal entry {0} is not real and positive")]
    BadDiagonal(usize),
    #[error("lattice scale tau must be positive")]
    BadScale,
    #[error("non-finite generator or target")]
    NonFinite,
    #[error("brute-force search limited to N <= 3 (got {0})")]
    TooLarge(usize),
    #[error("coefficient bound must be at least 1")]
    BadBound,
}

/// Search instance: minimize `‖generator (target + p)‖²` over `p ∈ tau (Z + jZ)^N`.
#[derive(Debug, Clone)]
pub struct LatticeProblem<T> {
    generator: CMatrix<T>,
    target: Vec<C<T>>,
    tau: T,
}

impl<T: Scalar> LatticeProblem<T> {
    pub fn new(generator: CMatrix<T>, target: Vec<C<T>>, tau: T) -> Result<Self, LatticeError> {
        let n = target.len();
        if n == 0 {
            return Err(LatticeError::Empty);
        }
        if generator.rows() != n || generator.cols() != n {
            return Err(LatticeError::Dimension);
        }
        if !generator.is_finite()
            || target
                .iter()
                .any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(LatticeError::NonFinite);
        }
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(LatticeError::BadScale);
        }
        if !generator.is_lower_triangular() {
            return Err(LatticeError::NotTriangular);
        }
        for i in 0..n {
            let d = generator[(i, i)];
            if !(d.re > T::zero()) || d.im != T::zero() {
                return Err(LatticeError::BadDiagonal(i));
            }
        }
        Ok(Self {
            generator,
            target,
            tau,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    pub fn generator(&self) -> &CMatrix<T> {
        &self.generator
    }

    pub fn target(&self) -> &[C<T>] {
        &self.target
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    /// `‖L (u + p)‖²` evaluated directly.
    pub fn metric(&self, perturbation: &[C<T>]) -> T {
        let s: Vec<C<T>> = self
            .target
            .iter()
            .zip(perturbation)
            .map(|(u, p)| u + p)
            .collect();
        norm_sqr(
            &self
                .generator
                .matvec(&s)
                .expect("dimensions checked at construction"),
        )
    }

    fn solution_from_coefficients(&self, coeffs: &[i64]) -> PerturbationSolution<T> {
        let perturbation: Vec<C<T>> = coeffs
            .chunks(2)
            .map(|c| {
                C::new(
                    T::lit(c[0] as f64) * self.tau,
                    T::lit(c[1] as f64) * self.tau,
                )
            })
            .collect();
        let metric = self.metric(&perturbation);
        PerturbationSolution {
            perturbation,
            coefficients: coeffs.to_vec(),
            metric,
        }
    }

    /// Interleaved real generator (row-major, lower triangular) and target.
    fn real_form(&self) -> (Vec<T>, Vec<T>) {
        let n = self.dim();
        let m = 2 * n;
        let mut r = vec![T::zero(); m * m];
        for i in 0..n {
            for k in 0..=i {
                let l = self.generator[(i, k)];
                r[(2 * i) * m + 2 * k] = l.re;
                r[(2 * i + 1) * m + 2 * k + 1] = l.re;
                if k < i {
                    r[(2 * i) * m + 2 * k + 1] = -l.im;
                    r[(2 * i + 1) * m + 2 * k] = l.im;
                }
            }
        }
        let t = self.target.iter().flat_map(|z| [z.re, z.im]).collect();
        (r, t)
    }
}

/// Minimizing perturbation and its metric.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationSolution<T> {
    /// Entries in `tau (Z + jZ)`.
    pub perturbation: Vec<C<T>>,
    /// Integer coordinates `(Re p_0 / tau, Im p_0 / tau, Re p_1 / tau, ...)`.
    pub coefficients: Vec<i64>,
    /// `‖L (u + perturbation)‖²`.
    pub metric: T,
}

/// Exact closest lattice point by depth-first enumeration.
///
/// The search radius starts at the successive-rounding (Babai) point, children
/// are visited in order of increasing partial distance, and the radius only
/// shrinks on a strictly better leaf, so the first optimum found is returned.
pub fn sphere_decode<T: Scalar>(problem: &LatticeProblem<T>) -> PerturbationSolution<T> {
    let (r, t) = problem.real_form();
    let mut search = Search {
        m: t.len(),
        r: &r,
        t: &t,
        tau: problem.tau,
        coeffs: vec![0; t.len()],
        x: vec![T::zero(); t.len()],
        best: vec![0; t.len()],
        best_metric: T::infinity(),
    };
    search.babai();
    search.descend(0, T::zero());
    problem.solution_from_coefficients(&search.best)
}

struct Search<'a, T> {
    m: usize,
    r: &'a [T],
    t: &'a [T],
    tau: T,
    coeffs: Vec<i64>,
    // x_i = t_i + tau * coeffs_i along the current path
    x: Vec<T>,
    best: Vec<i64>,
    best_metric: T,
}

impl<T: Scalar> Search<'_, T> {
    /// Center (in coefficient units) and squared step weight at `level`,
    /// given the coordinates already fixed above it.
    fn level_geometry(&self, level: usize) -> (T, T) {
        let row = &self.r[level * self.m..level * self.m + level];
        let offset: T = row.iter().zip(&self.x).map(|(a, b)| *a * *b).sum();
        let diag = self.r[level * self.m + level];
        let center = (-offset / diag - self.t[level]) / self.tau;
        let step = diag * self.tau;
        (center, step * step)
    }

    fn set(&mut self, level: usize, k: i64) {
        self.coeffs[level] = k;
        self.x[level] = self.t[level] + T::lit(k as f64) * self.tau;
    }

    fn babai(&mut self) {
        let mut dist = T::zero();
        for level in 0..self.m {
            let (center, weight) = self.level_geometry(level);
            let k = center.round();
            self.set(level, k.as_f64() as i64);
            dist += weight * (k - center) * (k - center);
        }
        self.best.copy_from_slice(&self.coeffs);
        self.best_metric = dist;
    }

    fn descend(&mut self, level: usize, dist: T) {
        let (center, weight) = self.level_geometry(level);
        let first = center.round().as_f64() as i64;
        // zig-zag: alternate sides of the center, nearest first
        let mut up = first;
        let mut down = first - 1;
        loop {
            let cost = |k: i64| {
                let d = T::lit(k as f64) - center;
                weight * d * d
            };
            let (k, c) = {
                let (cu, cd) = (cost(up), cost(down));
                if cu <= cd {
                    up += 1;
                    (up - 1, cu)
                } else {
                    down -= 1;
                    (down + 1, cd)
                }
            };
            let partial = dist + c;
            if !(partial < self.best_metric) {
                return;
            }
            self.set(level, k);
            if level + 1 == self.m {
                self.best_metric = partial;
                self.best.copy_from_slice(&self.coeffs);
            } else {
                self.descend(level + 1, partial);
            }
        }
    }
}

/// Exhaustive search over per-axis coefficients in `[-coeff_bound, coeff_bound]`.
///
/// Candidates are visited in lexicographic order of the interleaved
/// coefficient tuple and only a strictly smaller metric replaces the incumbent.
pub fn brute_force_perturbation<T: Scalar>(
    problem: &LatticeProblem<T>,
    coeff_bound: i64,
) -> Result<PerturbationSolution<T>, LatticeError> {
    let n = problem.dim();
    if n > 3 {
        return Err(LatticeError::TooLarge(n));
    }
    if coeff_bound < 1 {
        return Err(LatticeError::BadBound);
    }
    let m = 2 * n;
    let width = (2 * coeff_bound + 1) as usize;
    let total = width.pow(m as u32);
    let mut coeffs = vec![0i64; m];
    let mut best: Option<PerturbationSolution<T>> = None;
    for idx in 0..total {
        let mut rest = idx;
        for c in coeffs.iter_mut().rev() {
            *c = (rest % width) as i64 - coeff_bound;
            rest /= width;
        }
        let candidate = problem.solution_from_coefficients(&coeffs);
        if best.as_ref().is_none_or(|b| candidate.metric < b.metric) {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type Cf = C<f64>;

    fn random_lower(rng: &mut impl Rng, n: usize) -> CMatrix<f64> {
        CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Cf::new(rng.gen_range(0.3..2.0), 0.0)
            } else if j < i {
                Cf::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            } else {
                Cf::new(0.0, 0.0)
            }
        })
    }

    fn random_target(rng: &mut impl Rng, n: usize, spread: f64) -> Vec<Cf> {
        (0..n)
            .map(|_| {
                Cf::new(
                    rng.gen_range(-spread..spread),
                    rng.gen_range(-spread..spread),
                )
            })
            .collect()
    }

    #[test]
    fn identity_inside_region_needs_no_shift() {
        let p = LatticeProblem::new(
            CMatrix::identity(3),
            vec![Cf::new(1.0, -3.0), Cf::new(-3.9, 3.9), Cf::new(0.0, 0.0)],
            8.0,
        )
        .unwrap();
        let sol = sphere_decode(&p);
        assert!(sol.perturbation.iter().all(|z| *z == Cf::new(0.0, 0.0)));
        assert_eq!(sol.metric, 1.0 + 9.0 + 2.0 * 3.9 * 3.9);
    }

    #[test]
    fn exact_cancellation() {
        let tau = 4.0;
        let p = LatticeProblem::new(
            CMatrix::identity(2),
            vec![Cf::new(tau, 0.0), Cf::new(0.0, 0.0)],
            tau,
        )
        .unwrap();
        let sol = sphere_decode(&p);
        assert_eq!(
            sol.perturbation,
            vec![Cf::new(-tau, 0.0), Cf::new(0.0, 0.0)]
        );
        assert_eq!(sol.metric, 0.0);
        assert_eq!(sol.coefficients, vec![-1, 0, 0, 0]);
    }

    #[test]
    fn brute_force_scalar_case() {
        let tau = 8.0;
        let p =
            LatticeProblem::new(CMatrix::identity(1), vec![Cf::new(0.6 * tau, 0.0)], tau).unwrap();
        let sol = brute_force_perturbation(&p, 2).unwrap();
        assert_eq!(sol.perturbation, vec![Cf::new(-tau, 0.0)]);
        assert!((sol.metric - (0.4 * tau) * (0.4 * tau)).abs() < 1e-12);
    }

    #[test]
    fn brute_force_zero_target() {
        let p = LatticeProblem::new(CMatrix::identity(2), vec![Cf::new(0.0, 0.0); 2], 4.0).unwrap();
        let sol = brute_force_perturbation(&p, 2).unwrap();
        assert_eq!(sol.metric, 0.0);
        assert!(sol.coefficients.iter().all(|&c| c == 0));
    }

    #[test]
    fn brute_force_limits() {
        let p = LatticeProblem::new(CMatrix::identity(4), vec![Cf::new(0.0, 0.0); 4], 4.0).unwrap();
        assert_eq!(
            brute_force_perturbation(&p, 2),
            Err(LatticeError::TooLarge(4))
        );
        let p = LatticeProblem::new(CMatrix::identity(1), vec![Cf::new(0.0, 0.0)], 4.0).unwrap();
        assert_eq!(brute_force_perturbation(&p, 0), Err(LatticeError::BadBound));
    }

    #[test]
    fn problem_validation() {
        let id = CMatrix::<f64>::identity(2);
        let u = vec![Cf::new(0.0, 0.0); 2];
        assert_eq!(
            LatticeProblem::new(id.clone(), vec![], 4.0).unwrap_err(),
            LatticeError::Empty
        );
        assert_eq!(
            LatticeProblem::new(id.clone(), vec![Cf::new(0.0, 0.0)], 4.0).unwrap_err(),
            LatticeError::Dimension
        );
        assert_eq!(
            LatticeProblem::new(id.clone(), u.clone(), 0.0).unwrap_err(),
            LatticeError::BadScale
        );
        assert_eq!(
            LatticeProblem::new(id.clone(), vec![Cf::new(f64::NAN, 0.0); 2], 4.0).unwrap_err(),
            LatticeError::NonFinite
        );
        let mut upper = id.clone();
        upper[(0, 1)] = Cf::new(0.5, 0.0);
        assert_eq!(
            LatticeProblem::new(upper, u.clone(), 4.0).unwrap_err(),
            LatticeError::NotTriangular
        );
        let mut neg = id.clone();
        neg[(1, 1)] = Cf::new(-1.0, 0.0);
        assert_eq!(
            LatticeProblem::new(neg, u.clone(), 4.0).unwrap_err(),
            LatticeError::BadDiagonal(1)
        );
        let mut cplx = id;
        cplx[(0, 0)] = Cf::new(1.0, 0.1);
        assert_eq!(
            LatticeProblem::new(cplx, u, 4.0).unwrap_err(),
            LatticeError::BadDiagonal(0)
        );
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(1..=2);
            let tau = 8.0;
            let p = LatticeProblem::new(
                random_lower(&mut rng, n),
                random_target(&mut rng, n, 4.0),
                tau,
            )
            .unwrap();
            let fast = sphere_decode(&p);
            let slow = brute_force_perturbation(&p, 2).unwrap();
            assert!((fast.metric - slow.metric).abs() <= 1e-9 * slow.metric.max(1e-300));
            assert!(
                (fast.metric - p.metric(&fast.perturbation)).abs() <= 1e-9 * fast.metric.max(1.0)
            );
        }
    }

    #[test]
    fn three_user_instances_against_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let p = LatticeProblem::new(
                random_lower(&mut rng, 3),
                random_target(&mut rng, 3, 2.0),
                4.0,
            )
            .unwrap();
            let fast = sphere_decode(&p);
            let slow = brute_force_perturbation(&p, 2).unwrap();
            assert!(fast.metric <= slow.metric * (1.0 + 1e-9));
        }
    }

    #[test]
    fn f32_search() {
        let p = LatticeProblem::<f32>::new(
            CMatrix::identity(2),
            vec![C::new(4.5f32, -4.5), C::new(0.5, 0.0)],
            4.0,
        )
        .unwrap();
        let sol = sphere_decode(&p);
        assert_eq!(sol.coefficients, vec![-1, 1, 0, 0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn never_worse_than_zero_shift(seed in any::<u64>(), n in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = LatticeProblem::new(random_lower(&mut rng, n), random_target(&mut rng, n, 20.0), 8.0).unwrap();
            let sol = sphere_decode(&p);
            prop_assert!(sol.metric <= p.metric(&vec![Cf::new(0.0, 0.0); n]) * (1.0 + 1e-12));
            prop_assert!(sol.metric >= 0.0);
            for (z, k) in sol.perturbation.iter().zip(sol.coefficients.chunks(2)) {
                prop_assert_eq!(z.re, k[0] as f64 * 8.0);
                prop_assert_eq!(z.im, k[1] as f64 * 8.0);
            }
        }

        #[test]
        fn scale_equivariance(seed in any::<u64>(), c in 0.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l = random_lower(&mut rng, 2);
            let u = random_target(&mut rng, 2, 6.0);
            let a = sphere_decode(&LatticeProblem::new(l.clone(), u.clone(), 8.0).unwrap());
            let scaled = LatticeProblem::new(l.scale(c), u, 8.0).unwrap();
            let b = sphere_decode(&scaled);
            prop_assert!((b.metric - c * c * a.metric).abs() <= 1e-9 * b.metric.max(1e-12));
            // the first solution found may differ only on an exact metric tie
            prop_assert!((scaled.metric(&a.perturbation) - b.metric).abs() <= 1e-9 * b.metric.max(1e-12));
        }

        #[test]
        fn translation_covariance(seed in any::<u64>(), shift in prop::collection::vec(-3i64..=3, 4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tau = 4.0;
            let l = random_lower(&mut rng, 2);
            let u = random_target(&mut rng, 2, 2.0);
            let v: Vec<Cf> = shift.chunks(2).map(|k| Cf::new(k[0] as f64 * tau, k[1] as f64 * tau)).collect();
            let moved: Vec<Cf> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
            let a = sphere_decode(&LatticeProblem::new(l.clone(), u, tau).unwrap());
            let b = sphere_decode(&LatticeProblem::new(l, moved, tau).unwrap());
            prop_assert!((a.metric - b.metric).abs() <= 1e-9 * a.metric.max(1e-12));
            for ((pa, pb), vv) in a.perturbation.iter().zip(&b.perturbation).zip(&v) {
                prop_assert_eq!(*pb, pa - vv);
            }
        }
    }
}
