use num_complex::Complex64;
use proptest::prelude::*;

use randschro::harness::{estimate_moments, normality_test, unwrap_phases};
use randschro::limitlaw::{fbm_covariance, CriticalConfig, LimitFieldState};
use randschro::medium::MediumSpec;
use randschro::oracle::pairings;
use randschro::randfield::GridSpec;
use randschro::rng;
use randschro::solver::{init_wave, InitialPacket, Propagator};
use randschro::theory::predict_moment;

fn unit(theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, theta)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn unit_modulus_second_moment_is_one(thetas in prop::collection::vec(-10.0..10.0f64, 1..200)) {
        let z: Vec<Complex64> = thetas.iter().map(|&t| unit(t)).collect();
        let e = estimate_moments(&z, &[(1, 1), (0, 0)]).unwrap();
        prop_assert!((e[0].mean - 1.0).norm() < 1e-14);
        prop_assert!(e[0].mean.im == 0.0);
        prop_assert_eq!(e[1].mean, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn standard_error_scales_like_root_n(vals in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 2..50), reps in 2usize..5) {
        let z: Vec<Complex64> = vals.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
        let many: Vec<Complex64> = z.iter().cycle().take(z.len() * reps).copied().collect();
        let one = estimate_moments(&z, &[(1, 0)]).unwrap()[0];
        let rep = estimate_moments(&many, &[(1, 0)]).unwrap()[0];
        prop_assert!((one.mean - rep.mean).norm() < 1e-12);
        let n = z.len() as f64;
        let m = many.len() as f64;
        // Population sd is unchanged by repetition; only the n−1 correction differs.
        let expect = one.stderr * ((n - 1.0) / n * m / (m - 1.0)).sqrt() * (n / m).sqrt();
        prop_assert!((rep.stderr - expect).abs() <= 1e-10 * (1.0 + expect));
    }

    #[test]
    fn phase_extraction_recovers_slow_paths(steps in prop::collection::vec(-1.4..1.4f64, 1..60), re in 0.1..2.0f64, im in -2.0..2.0f64, noise in 0.5..1.5f64) {
        let phi = Complex64::new(re, im);
        let mut theta = Vec::with_capacity(steps.len());
        let mut acc = 0.0;
        for s in &steps {
            acc += s;
            theta.push(acc);
        }
        let vals: Vec<Complex64> = theta.iter().map(|&t| phi * noise * unit(t)).collect();
        let u = unwrap_phases(&vals, phi);
        for (a, b) in u.iter().zip(&theta) {
            prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
        }
    }

    #[test]
    fn ks_statistic_lies_in_unit_interval(x in prop::collection::vec(-5.0..5.0f64, 100..300), var in 0.1..4.0f64) {
        let k = normality_test(&x, var).unwrap();
        prop_assert!(k.statistic > 0.0 && k.statistic <= 1.0);
        prop_assert_eq!(k.pass, k.statistic < k.critical);
    }

    #[test]
    fn fbm_covariance_is_symmetric_with_exact_diagonal(ts in prop::collection::vec(0.01..3.0f64, 1..12), h in 0.1..0.95f64, s in 0.1..2.0f64) {
        let c = fbm_covariance(&ts, h, s);
        for i in 0..ts.len() {
            prop_assert!((c[(i, i)] - s * s * ts[i].powf(2.0 * h)).abs() < 1e-12);
            for j in 0..ts.len() {
                prop_assert_eq!(c[(i, j)], c[(j, i)]);
            }
        }
    }

    #[test]
    fn homogenized_second_moment_is_below_phase_limit(t in 0.05..3.0f64, xi in -3.0..3.0f64) {
        let spec = MediumSpec::medium_a();
        let phi0 = InitialPacket::gaussian(1.0, vec![0.0], 1.0).fourier(&[xi]);
        let hom = spec.classify_regime(8.0 / 3.0).unwrap();
        let frac = spec.classify_regime(2.0 / 3.0).unwrap();
        let a = predict_moment(&spec, &hom, 1, 1, t, &[xi], phi0).unwrap();
        let b = predict_moment(&spec, &frac, 1, 1, t, &[xi], phi0).unwrap();
        prop_assert!(a.re < b.re);
        prop_assert!((b.re - phi0.norm_sqr()).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn strang_steps_preserve_mass(seed in any::<u64>(), amp in 0.1..5.0f64, dt in 0.001..0.2f64, coeff in 0.1..3.0f64) {
        use rand::Rng;
        let grid = GridSpec::new(1, 256, 40.0).unwrap();
        let packet = InitialPacket::gaussian(1.5, vec![2.0], 0.7);
        let mut wave = init_wave(&packet, &grid).unwrap();
        let m0 = wave.mass();
        let mut r = rng::stream(seed, 0);
        let v: Vec<f64> = (0..grid.len()).map(|_| amp * (r.random::<f64>() - 0.5)).collect();
        let mut prop = Propagator::new(grid, coeff);
        for _ in 0..200 {
            prop.step_with_potential(&mut wave, &v, dt).unwrap();
        }
        prop_assert!((wave.mass() - m0).abs() < 1e-12 * m0);
    }

    #[test]
    fn critical_limit_respects_the_modulus_bound(seed in any::<u64>(), xi in -2.0..2.0f64) {
        let packet = InitialPacket::gaussian(1.0, vec![0.0], 1.0);
        let field = LimitFieldState::new(&MediumSpec::medium_a(), &packet, xi, 1.0, CriticalConfig::default()).unwrap();
        let bound = packet.l1_norm() * (1.0 + 1e-6);
        let mut r = rng::stream(seed, 1);
        for _ in 0..20 {
            prop_assert!(field.sample(&mut r).norm() <= bound);
        }
    }
}

#[test]
fn pairings_are_perfect_matchings_of_double_factorial_count() {
    let mut expected = 1usize;
    for k in 1..=4 {
        expected *= 2 * k - 1;
        let all = pairings(2 * k).unwrap();
        assert_eq!(all.len(), expected);
        for p in &all {
            let mut seen = vec![false; 2 * k];
            for &(l, r) in p.edges() {
                assert!(l < r);
                assert!(!seen[l] && !seen[r]);
                seen[l] = true;
                seen[r] = true;
            }
            assert!(seen.iter().all(|s| *s));
        }
    }
}
