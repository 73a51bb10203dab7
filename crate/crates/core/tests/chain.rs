use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vp_core::{
    apply_channel, draw_channel, modulo, perturb_beta, receive, sphere_decode, BetaErrorModel,
    Constellation, LatticeProblem, PerturbedFrame, Scalar, Scheme, SimConfig, SnrPoint, C,
};

fn noiseless_round_trip<T: Scalar>(scheme: Scheme, order: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = Constellation::<T>::new(order).unwrap();
    for _ in 0..50 {
        let ch = draw_channel::<T, _>(4, 2, &mut rng).unwrap();
        let ps = scheme
            .precoder(ch.matrix(), T::lit(0.01), T::lit(0.04))
            .unwrap();
        let bits: Vec<bool> = (0..2 * c.bits_per_symbol()).map(|_| rng.gen()).collect();
        let u = c.map_bits(&bits).unwrap();
        let frame = PerturbedFrame::build(&ps, &u, c.tau()).unwrap();
        let y = apply_channel(&ch, &frame.transmit, T::zero(), &mut rng).unwrap();
        let rx = receive(&y, frame.beta, &c).unwrap();
        if scheme == Scheme::Cvp {
            assert_eq!(rx.bits, bits);
        }
        for (r, s) in rx.symbols.iter().zip(&frame.perturbed) {
            let expected = modulo(*s, c.tau()).unwrap();
            if scheme == Scheme::Cvp {
                let tol = T::lit(1e-3);
                assert!((r - expected).norm() < tol || (r - expected).norm() > c.tau() - tol);
            }
        }
    }
}

#[test]
fn zero_forcing_chain_recovers_bits_in_both_precisions() {
    for order in [4, 16, 64] {
        noiseless_round_trip::<f64>(Scheme::Cvp, order, order as u64);
        noiseless_round_trip::<f32>(Scheme::Cvp, order, order as u64);
    }
}

#[test]
fn regularized_chains_run_in_both_precisions() {
    for scheme in [Scheme::MmseVp, Scheme::RobustVp] {
        noiseless_round_trip::<f64>(scheme, 16, 5);
        noiseless_round_trip::<f32>(scheme, 16, 5);
    }
}

#[test]
fn transmit_vector_has_unit_power_and_minimal_metric() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let c = Constellation::<f64>::new(16).unwrap();
    for _ in 0..100 {
        let ch = draw_channel::<f64, _>(4, 2, &mut rng).unwrap();
        let ps = Scheme::Cvp.precoder(ch.matrix(), 0.0, 0.0).unwrap();
        let u: Vec<C<f64>> = (0..2).map(|_| c.points()[rng.gen_range(0..16)]).collect();
        let frame = PerturbedFrame::build(&ps, &u, c.tau()).unwrap();
        let p: f64 = frame.transmit.iter().map(|z| z.norm_sqr()).sum();
        assert!((p - 1.0).abs() < 1e-12);
        let problem = LatticeProblem::new(ps.factor().clone(), u.clone(), c.tau()).unwrap();
        let best = sphere_decode(&problem).metric;
        assert!((frame.beta * frame.beta - best).abs() <= 1e-9 * best);
        assert!(best <= problem.metric(&[C::new(0.0, 0.0); 2]) + 1e-12);
    }
}

#[test]
fn scaling_error_perturbs_around_the_true_factor() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 200_000;
    let sigma_q2 = 0.0398;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let g = 1.0 - perturb_beta(2.0f64, sigma_q2, &mut rng).unwrap() / 2.0;
        sum += g;
        sq += g * g;
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    assert!(mean.abs() < 3e-3);
    assert!((var / sigma_q2 - 1.0).abs() < 0.02);
}

#[test]
fn trials_are_reproducible_through_the_public_api() {
    let cfg = SimConfig {
        beta_error: BetaErrorModel::fixed_sqr(14.0).unwrap(),
        ..SimConfig::new(Scheme::RobustVp)
    };
    let point = SnrPoint::from_db(3, 15.0);
    for trial in [0, 1, 1000, u64::MAX] {
        let a = vp_core::run_trial::<f64>(&cfg, point, trial).unwrap();
        let b = vp_core::run_trial::<f64>(&cfg, point, trial).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.bits, 8);
    }
}
