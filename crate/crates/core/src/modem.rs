//! Square QAM on the odd-integer grid, Gray labels, and the VP modulo operator.
//!
//! Points are left unnormalized (spacing 2, coordinates in `{±1, ±3, ...}`);
//! transmit power is handled by the scaling factor in the precoder.

use thiserror::Error;

use crate::scalar::{Scalar, C};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModemError {
    #[error("unsupported QAM order {0} (expected 4, 16 or 64)")]
    UnsupportedOrder(usize),
    #[error("bit count {len} is not a multiple of {bits_per_symbol}")]
    BitLength { len: usize, bits_per_symbol: usize },
    #[error("modulo period must be positive and finite")]
    BadPeriod,
    #[error("non-finite input symbol")]
    NonFinite,
}

/// Square QAM constellation with per-axis Gray labels.
///
/// `points[label]` is the point carrying the bit pattern `label`, read MSB
/// first: the upper half of the bits selects the in-phase level and the lower
/// half the quadrature level.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<T> {
    order: usize,
    bits_per_symbol: usize,
    points: Vec<C<T>>,
    delta: T,
    c_max: T,
    tau: T,
}

impl<T: Scalar> Constellation<T> {
    pub fn new(order: usize) -> Result<Self, ModemError> {
        let side: usize = match order {
            4 => 2,
            16 => 4,
            64 => 8,
            _ => return Err(ModemError::UnsupportedOrder(order)),
        };
        let axis_bits = side.trailing_zeros() as usize;
        let level = |gray: usize| T::lit((2 * gray_to_index(gray)) as f64 - (side - 1) as f64);
        let points = (0..order)
            .map(|label| C::new(level(label >> axis_bits), level(label & (side - 1))))
            .collect();
        let delta = T::lit(2.0);
        let c_max = T::lit((side - 1) as f64);
        Ok(Self {
            order,
            bits_per_symbol: 2 * axis_bits,
            points,
            delta,
            c_max,
            tau: T::lit(2.0) * (c_max + delta / T::lit(2.0)),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn points(&self) -> &[C<T>] {
        &self.points
    }

    /// Spacing between adjacent points on one axis.
    pub fn delta(&self) -> T {
        self.delta
    }

    /// Largest per-axis coordinate magnitude.
    pub fn c_max(&self) -> T {
        self.c_max
    }

    /// Modulo period `2 (c_max + delta / 2)`.
    pub fn tau(&self) -> T {
        self.tau
    }

    fn side(&self) -> usize {
        1 << (self.bits_per_symbol / 2)
    }

    /// Maps a bit slice (one `bool` per bit) onto constellation points.
    pub fn map_bits(&self, bits: &[bool]) -> Result<Vec<C<T>>, ModemError> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(ModemError::BitLength {
                len: bits.len(),
                bits_per_symbol: self.bits_per_symbol,
            });
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|group| {
                let label = group.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
                self.points[label]
            })
            .collect())
    }

    /// Hard decision: bits of the nearest point for every symbol.
    ///
    /// Exact midpoints go to the smaller coordinate on each axis, which is the
    /// same as preferring smaller real part, then smaller imaginary part.
    pub fn demap(&self, symbols: &[C<T>]) -> Result<Vec<bool>, ModemError> {
        let mut bits = Vec::with_capacity(symbols.len() * self.bits_per_symbol);
        for z in symbols {
            let label = self.nearest_label(*z)?;
            for k in (0..self.bits_per_symbol).rev() {
                bits.push((label >> k) & 1 == 1);
            }
        }
        Ok(bits)
    }

    /// Label of the nearest constellation point.
    pub fn nearest_label(&self, z: C<T>) -> Result<usize, ModemError> {
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(ModemError::NonFinite);
        }
        let axis_bits = self.bits_per_symbol / 2;
        let i = index_to_gray(self.nearest_level(z.re));
        let q = index_to_gray(self.nearest_level(z.im));
        Ok((i << axis_bits) | q)
    }

    // level index k of coordinate 2k - (side - 1); ties round down
    fn nearest_level(&self, x: T) -> usize {
        let side = self.side();
        let t = (x + T::lit((side - 1) as f64)) / self.delta;
        let k = (t - T::lit(0.5)).ceil();
        if k <= T::zero() {
            0
        } else {
            k.as_f64().min((side - 1) as f64) as usize
        }
    }
}

fn index_to_gray(k: usize) -> usize {
    k ^ (k >> 1)
}

fn gray_to_index(mut g: usize) -> usize {
    let mut k = g;
    while g > 0 {
        g >>= 1;
        k ^= g;
    }
    k
}

/// Complex modulo: wraps both axes of `a` into `[-tau/2, tau/2)`.
pub fn modulo<T: Scalar>(a: C<T>, tau: T) -> Result<C<T>, ModemError> {
    if !(tau > T::zero() && tau.is_finite()) {
        return Err(ModemError::BadPeriod);
    }
    if !(a.re.is_finite() && a.im.is_finite()) {
        return Err(ModemError::NonFinite);
    }
    Ok(C::new(wrap(a.re, tau), wrap(a.im, tau)))
}

/// One axis of the modulo operator. Callers guarantee finite input and `tau > 0`.
pub(crate) fn wrap<T: Scalar>(x: T, tau: T) -> T {
    let half = tau / T::lit(2.0);
    let mut r = x - (x / tau + T::lit(0.5)).floor() * tau;
    // rounding in x / tau can land one period off for large |x|
    if r >= half {
        r -= tau;
    } else if r < -half {
        r += tau;
    }
    r
}

/// Membership in the half-open region `[-tau/2, tau/2)^2`.
pub fn in_region<T: Scalar>(z: C<T>, tau: T) -> bool {
    let half = tau / T::lit(2.0);
    -half <= z.re && z.re < half && -half <= z.im && z.im < half
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    type Cf = C<f64>;

    fn all_bits(c: &Constellation<f64>) -> Vec<bool> {
        let b = c.bits_per_symbol();
        (0..c.order())
            .flat_map(|label| (0..b).rev().map(move |k| (label >> k) & 1 == 1))
            .collect()
    }

    #[test]
    fn constellation_parameters() {
        for (order, c_max, tau) in [(4, 1.0, 4.0), (16, 3.0, 8.0), (64, 7.0, 16.0)] {
            let c = Constellation::<f64>::new(order).unwrap();
            assert_eq!(c.delta(), 2.0);
            assert_eq!(c.c_max(), c_max);
            assert_eq!(c.tau(), tau);
            assert_eq!(c.tau(), 2.0 * (c.c_max() + c.delta() / 2.0));
            assert_eq!(c.bits_per_symbol(), order.trailing_zeros() as usize);
            for p in c.points() {
                assert_eq!(p.re.abs() % 2.0, 1.0);
                assert_eq!(p.im.abs() % 2.0, 1.0);
                assert!(p.re.abs() < tau / 2.0 && p.im.abs() < tau / 2.0);
            }
        }
    }

    #[test]
    fn unsupported_order() {
        for order in [0, 2, 8, 32, 256] {
            assert_eq!(
                Constellation::<f64>::new(order),
                Err(ModemError::UnsupportedOrder(order))
            );
        }
    }

    #[test]
    fn labels_are_a_bijection() {
        for order in [4, 16, 64] {
            let c = Constellation::<f64>::new(order).unwrap();
            let symbols = c.map_bits(&all_bits(&c)).unwrap();
            assert_eq!(symbols.len(), order);
            let mut seen = symbols.clone();
            seen.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
            seen.dedup();
            assert_eq!(seen.len(), order);
            assert_eq!(c.demap(&symbols).unwrap(), all_bits(&c));
        }
    }

    #[test]
    fn gray_neighbours_differ_in_one_bit() {
        let c = Constellation::<f64>::new(64).unwrap();
        let pts = c.points();
        for (a, pa) in pts.iter().enumerate() {
            for (b, pb) in pts.iter().enumerate() {
                if (pa - pb).norm() == 2.0 {
                    assert_eq!((a ^ b).count_ones(), 1, "{pa} vs {pb}");
                }
            }
        }
    }

    #[test]
    fn empty_and_bad_lengths() {
        let c = Constellation::<f64>::new(16).unwrap();
        assert!(c.map_bits(&[]).unwrap().is_empty());
        assert_eq!(
            c.map_bits(&[true, false, true]),
            Err(ModemError::BitLength {
                len: 3,
                bits_per_symbol: 4
            })
        );
    }

    #[test]
    fn qpsk_labels() {
        let c = Constellation::<f64>::new(4).unwrap();
        let s = c.map_bits(&[false, false, true, true]).unwrap();
        assert_eq!(s, vec![Cf::new(-1.0, -1.0), Cf::new(1.0, 1.0)]);
    }

    #[test]
    fn small_perturbations_keep_the_label() {
        let c = Constellation::<f64>::new(16).unwrap();
        for (label, p) in c.points().iter().enumerate() {
            for (dx, dy) in [(0.99, 0.0), (-0.99, 0.99), (0.5, -0.7), (-0.01, -0.99)] {
                assert_eq!(c.nearest_label(p + Cf::new(dx, dy)).unwrap(), label);
            }
        }
    }

    #[test]
    fn midpoint_ties_go_to_smaller_coordinate() {
        let c = Constellation::<f64>::new(16).unwrap();
        let label_of = |z: Cf| c.points().iter().position(|p| *p == z).unwrap();
        // candidates (1,1) and (3,1): smaller real part wins
        assert_eq!(
            c.nearest_label(Cf::new(2.0, 1.0)).unwrap(),
            label_of(Cf::new(1.0, 1.0))
        );
        // candidates (-1,-1) and (-1,1): smaller imaginary part wins
        assert_eq!(
            c.nearest_label(Cf::new(-1.0, 0.0)).unwrap(),
            label_of(Cf::new(-1.0, -1.0))
        );
        // four-way tie at the origin
        assert_eq!(
            c.nearest_label(Cf::new(0.0, 0.0)).unwrap(),
            label_of(Cf::new(-1.0, -1.0))
        );
        // outside the grid clamps to the edge
        assert_eq!(
            c.nearest_label(Cf::new(40.0, -40.0)).unwrap(),
            label_of(Cf::new(3.0, -3.0))
        );
    }

    #[test]
    fn demap_rejects_nan() {
        let c = Constellation::<f64>::new(4).unwrap();
        assert_eq!(
            c.demap(&[Cf::new(f64::NAN, 0.0)]),
            Err(ModemError::NonFinite)
        );
    }

    #[test]
    fn modulo_examples() {
        assert_eq!(modulo(Cf::new(0.0, 0.0), 4.0).unwrap(), Cf::new(0.0, 0.0));
        let r = modulo(Cf::new(2.6, 0.0), 4.0).unwrap();
        assert!((r.re + 1.4).abs() < 1e-15 && r.im == 0.0);
        assert_eq!(
            modulo(Cf::new(2.0, -2.0), 4.0).unwrap(),
            Cf::new(-2.0, -2.0)
        );
    }

    #[test]
    fn modulo_errors() {
        assert_eq!(modulo(Cf::new(1.0, 0.0), 0.0), Err(ModemError::BadPeriod));
        assert_eq!(modulo(Cf::new(1.0, 0.0), -4.0), Err(ModemError::BadPeriod));
        assert_eq!(
            modulo(Cf::new(f64::INFINITY, 0.0), 4.0),
            Err(ModemError::NonFinite)
        );
    }

    #[test]
    fn points_are_fixed_points_of_modulo() {
        for order in [4, 16, 64] {
            let c = Constellation::<f64>::new(order).unwrap();
            for p in c.points() {
                assert_eq!(modulo(*p, c.tau()).unwrap(), *p);
            }
        }
    }

    #[test]
    fn region_boundaries() {
        assert!(in_region(Cf::new(-2.0, -2.0), 4.0));
        assert!(!in_region(Cf::new(2.0, 0.0), 4.0));
        assert!(!in_region(Cf::new(0.0, 2.0), 4.0));
        assert!(in_region(Cf::new(1.999_999_999, -2.0), 4.0));
    }

    proptest! {
        #[test]
        fn modulo_lands_in_region(re in -1e6f64..1e6, im in -1e6f64..1e6, tau in prop::sample::select(vec![4.0, 8.0, 16.0, 2.5])) {
            let r = modulo(Cf::new(re, im), tau).unwrap();
            prop_assert!(in_region(r, tau));
        }

        #[test]
        fn modulo_is_idempotent(re in -1e4f64..1e4, im in -1e4f64..1e4) {
            let once = modulo(Cf::new(re, im), 8.0).unwrap();
            prop_assert_eq!(modulo(once, 8.0).unwrap(), once);
        }

        #[test]
        fn modulo_is_periodic(re in -100f64..100.0, im in -100f64..100.0, p in -50i32..50, q in -50i32..50) {
            let tau = 8.0;
            let a = Cf::new(re, im);
            let shifted = a + Cf::new(p as f64 * tau, q as f64 * tau);
            let d = modulo(shifted, tau).unwrap() - modulo(a, tau).unwrap();
            // values within tolerance of the seam may wrap to opposite edges
            let gap = |x: f64| x.abs().min((x.abs() - tau).abs());
            prop_assert!(gap(d.re) <= 1e-12 * tau && gap(d.im) <= 1e-12 * tau);
        }

        #[test]
        fn map_demap_round_trip(bits in prop::collection::vec(any::<bool>(), 0..40).prop_map(|mut v| { v.truncate(v.len() / 6 * 6); v }), order in prop::sample::select(vec![4usize, 64])) {
            let c = Constellation::<f64>::new(order).unwrap();
            let n = bits.len() / c.bits_per_symbol() * c.bits_per_symbol();
            let bits = &bits[..n];
            prop_assert_eq!(c.demap(&c.map_bits(bits).unwrap()).unwrap(), bits.to_vec());
        }
    }
}
