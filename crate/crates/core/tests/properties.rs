//! Property tests for the invariants of the noise, model, propagation,
//! perturbative and oscillatory modules.

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

use hamnoise_core::evolution::{propagate, ConstantHamiltonian};
use hamnoise_core::harness::config::parse_list;
use hamnoise_core::harness::SweepParam;
use hamnoise_core::model::{self, analog_spectrum, local_schedule};
use hamnoise_core::oscillatory::{ibp_series, ibp_series_varfreq, quadrature_oracle, Analytic, VaryingFrequency};
use hamnoise_core::perturbative::{
    i_minus_exact_whitenoise, i_minus_numeric, i_plus_numeric, perr_analog, perr_general, CouplingIntegrals,
    NumericOptions, Phase,
};
use hamnoise_core::{build_path, NoiseModel, ProblemInstance, PropagatorConfig, Shape};

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.sin() / x
    }
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

// ----------------------------------------------------------------- noise

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn paths_are_symmetric_and_deterministic(n in 1usize..9, m in 1usize..40, seed in any::<u64>(), t in -50.0f64..50.0) {
        let model = NoiseModel::new(n, 0.1, 1.3, Shape::WhiteSinc, m, 0.25, seed).unwrap();
        let a = build_path(&model).unwrap();
        let h = a.eval_at(t);
        prop_assert_eq!(&h, &h.transpose());
        prop_assert!(h.iter().all(|x| x.is_finite()));
        let b = build_path(&model).unwrap();
        prop_assert_eq!(h, b.eval_at(t));
    }

    #[test]
    fn constant_snr_variance(n in 2usize..2000, e in 0.1f64..10.0) {
        let model = NoiseModel::constant_snr(n, e, 0.1, 1.0, Shape::WhiteSinc, 8, 0).unwrap();
        assert_relative_eq!(model.sigma_sq, e * e / (4.0 * n as f64), max_relative = 1e-15);
        prop_assert_eq!(model.element_variance(1, 1), 2.0 * model.element_variance(0, 1));
    }
}

// ----------------------------------------------------------------- model

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn analog_eigenvectors(n in 3usize..40, marked_frac in 0.0f64..1.0, e in 0.2f64..5.0) {
        let marked = ((n as f64 * marked_frac) as usize).min(n - 1);
        let inst = ProblemInstance::analog(n, e, marked).unwrap();
        let sp = analog_spectrum(&inst).unwrap();
        let v = sp.eigenvectors();
        let gram = v.transpose() * &v;
        prop_assert!((gram - DMatrix::<f64>::identity(n, n)).amax() < 1e-12);
        let h = model::analog_hamiltonian(&inst).unwrap();
        for k in 0..n {
            let col = v.column(k);
            let resid = (&h * col - col * sp.eigenvalues[k]).amax();
            prop_assert!(resid < 1e-10 * e);
        }
        let norm: f64 = sp.ideal_amplitudes.iter().map(|b| b.norm_sqr()).sum();
        prop_assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule_is_monotone(n in 2usize..200, delta in 0.05f64..0.9) {
        let inst = ProblemInstance::adiabatic(n, 1.0, 0, delta).unwrap();
        let s = local_schedule(&inst).unwrap();
        prop_assert_eq!(s.s_at(0.0), 0.0);
        prop_assert!((s.s_at(s.total_time) - 1.0).abs() < 1e-12);
        let mut prev = 0.0;
        for i in 1..=200 {
            let x = s.s_at(s.total_time * i as f64 / 200.0);
            prop_assert!(x > prev);
            prev = x;
        }
        assert_relative_eq!(s.total_time, inst.adiabatic_time_exact().unwrap(), max_relative = 1e-9);
    }

    #[test]
    fn ideal_success_independent_of_marked(n in 3usize..24, marked_frac in 0.0f64..1.0) {
        let marked = ((n as f64 * marked_frac) as usize).min(n - 1);
        let cfg = PropagatorConfig { tol: 1e-9, ..PropagatorConfig::default() };
        let p = |m: usize| {
            let inst = ProblemInstance::analog(n, 1.0, m).unwrap();
            let h = ConstantHamiltonian::new(model::analog_hamiltonian(&inst).unwrap());
            let psi = propagate(&h, &inst.initial_state(), inst.analog_time(), &cfg).unwrap().state;
            psi[m].norm_sqr()
        };
        prop_assert!((p(marked) - p(0)).abs() < 1e-9);
    }
}

// ----------------------------------------------------------------- propagation

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn identity_shift_is_a_global_phase(seed in any::<u64>(), shift in -20.0f64..20.0) {
        let inst = ProblemInstance::analog(6, 1.0, 0).unwrap();
        let noise = NoiseModel::constant_snr(6, 1.0, 0.2, 2.0, Shape::WhiteSinc, 32, seed).unwrap();
        let path = build_path(&noise).unwrap();
        let base = model::analog_hamiltonian(&inst).unwrap() + path.eval_at(0.7) * 0.2;
        let shifted = &base + DMatrix::<f64>::identity(6, 6) * shift;
        let cfg = PropagatorConfig::default();
        let psi0 = inst.initial_state();
        let t = inst.analog_time();
        let a = propagate(&ConstantHamiltonian::new(base), &psi0, t, &cfg).unwrap().state;
        let b = propagate(&ConstantHamiltonian::new(shifted), &psi0, t, &cfg).unwrap().state;
        let overlap = a.dotc(&b).norm_sqr();
        prop_assert!((overlap - 1.0).abs() < 1e-10);
        prop_assert!((a[0].norm_sqr() - b[0].norm_sqr()).abs() < 1e-10);
    }
}

// ----------------------------------------------------------------- integrals

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn integrals_respect_bound(w in -8.0f64..8.0, w0 in 0.01f64..10.0, t in 0.1f64..40.0, s2 in 0.001f64..2.0) {
        let bound = s2 * t * t * (1.0 + 1e-9);
        let exact = i_minus_exact_whitenoise(w, w0, t, s2);
        prop_assert!(exact.abs() <= bound, "{} > {}", exact, bound);
        let plus = i_plus_numeric(w, w0, t, s2, &sinc, NumericOptions::default());
        prop_assert!(plus.value.norm() <= bound + plus.error);
    }

    #[test]
    fn exact_matches_numeric(w in -6.0f64..6.0, w0 in 0.05f64..6.0, t in 0.5f64..30.0) {
        let exact = i_minus_exact_whitenoise(w, w0, t, 1.0);
        let num = i_minus_numeric(&Phase::Linear(w), w0, t, 1.0, &sinc, NumericOptions::default());
        prop_assert!(num.converged);
        prop_assert!((exact - num.value).abs() <= 1e-6 * exact.abs().max(1e-6 * t * t), "{} vs {}", exact, num.value);
    }

    #[test]
    fn i_minus_even_in_frequency(w in 0.0f64..6.0, w0 in 0.05f64..6.0, t in 0.5f64..30.0) {
        let a = i_minus_exact_whitenoise(w, w0, t, 1.0);
        let b = i_minus_exact_whitenoise(-w, w0, t, 1.0);
        prop_assert!((a - b).abs() <= 1e-12 * t * t);
    }
}

// ----------------------------------------------------------------- predictions

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn prediction_scales_as_epsilon_squared(n in 3usize..300, w0 in 0.05f64..20.0, eps in 0.001f64..0.2, c in 0.1f64..5.0) {
        let inst = ProblemInstance::analog(n, 1.0, 0).unwrap();
        let a = NoiseModel::constant_snr(n, 1.0, eps, w0, Shape::WhiteSinc, 8, 0).unwrap();
        let pa = perr_analog(&inst, &a).unwrap();
        let pb = perr_analog(&inst, &a.with_epsilon(c * eps)).unwrap();
        assert_relative_eq!(pb.mean_p_err, c * c * pa.mean_p_err, max_relative = 1e-12);
        prop_assert!(pa.mean_p_err >= 0.0);
        assert_relative_eq!(pa.mean_p_err, pa.breakdown.total(), max_relative = 1e-14);
    }

    /// A generic state, with weight on the degenerate level, rotated within
    /// that level by an orthogonal matrix gives the same prediction.
    #[test]
    fn degenerate_basis_invariance(
        re in prop::collection::vec(-1.0f64..1.0, 6),
        im in prop::collection::vec(-1.0f64..1.0, 6),
        angles in prop::collection::vec(-3.2f64..3.2, 6),
        w0 in 0.1f64..10.0,
    ) {
        let n = 6;
        let inst = ProblemInstance::analog(n, 1.0, 0).unwrap();
        let mut sp = analog_spectrum(&inst).unwrap();
        let noise = NoiseModel::constant_snr(n, 1.0, 0.05, w0, Shape::WhiteSinc, 8, 0).unwrap();
        let t = inst.analog_time();
        let s2 = noise.sigma_sq;
        let mut ints = CouplingIntegrals {
            i_minus: Default::default(),
            i_plus: Default::default(),
            method: hamnoise_core::perturbative::Method::NumericDouble,
            regime: hamnoise_core::perturbative::Regime::Intermediate,
            total_time: t,
            sigma_sq: s2,
            bound: 2.0 * s2 * t * t,
            converged: true,
        };
        for k in 0..n {
            for l in 0..n {
                let var = if k == l { 2.0 * s2 } else { s2 };
                let w = sp.freq(k, l);
                ints.i_minus.insert((k, l), i_minus_exact_whitenoise(w, w0, t, var));
                ints.i_plus.insert((k, l), i_plus_numeric(w, w0, t, var, &sinc, NumericOptions::default()).value);
            }
        }
        let mut b: Vec<Complex64> = re.iter().zip(&im).map(|(&x, &y)| Complex64::new(x, y)).collect();
        let norm = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        b.iter_mut().for_each(|z| *z /= norm);

        // product of Givens rotations on the four degenerate levels
        let mut r = DMatrix::<f64>::identity(4, 4);
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        for (&(i, j), &a) in pairs.iter().zip(&angles) {
            let mut g = DMatrix::<f64>::identity(4, 4);
            g[(i, i)] = a.cos();
            g[(j, j)] = a.cos();
            g[(i, j)] = -a.sin();
            g[(j, i)] = a.sin();
            r = g * r;
        }
        let deg = DVector::from_iterator(4, b[2..].iter().copied());
        let rotated = r.map(|x| Complex64::new(x, 0.0)) * deg;
        let mut b_rot = b.clone();
        b_rot[2..].copy_from_slice(rotated.as_slice());

        sp.ideal_amplitudes = b;
        let p1 = perr_general(&sp, &ints, 0.05).unwrap().mean_p_err;
        sp.ideal_amplitudes = b_rot;
        let p2 = perr_general(&sp, &ints, 0.05).unwrap().mean_p_err;
        prop_assert!((p1 - p2).abs() <= 1e-10 * p1.abs().max(1e-12), "{} vs {}", p1, p2);
    }
}

// ----------------------------------------------------------------- oscillatory

fn smooth_family(c: [f64; 3], alpha: [f64; 2]) -> impl Fn(usize, f64) -> Option<f64> + Sync {
    // c0 e^(a0 x) + c1 e^(a1 x) + c2 x^2
    move |n: usize, x: f64| {
        let poly = match n {
            0 => c[2] * x * x,
            1 => 2.0 * c[2] * x,
            2 => 2.0 * c[2],
            _ => 0.0,
        };
        Some(c[0] * alpha[0].powi(n as i32) * (alpha[0] * x).exp() + c[1] * alpha[1].powi(n as i32) * (alpha[1] * x).exp() + poly)
    }
}

proptest! {
    #![proptest_config(config(200))]

    #[test]
    fn series_agrees_with_oracle(
        c in prop::array::uniform3(-2.0f64..2.0),
        alpha in prop::array::uniform2(-1.0f64..0.5),
        a in -2.0f64..1.0,
        len in 0.5f64..4.0,
        omega in 20.0f64..200.0,
    ) {
        let b = a + len;
        let g = smooth_family(c, alpha);
        let f = Analytic(&g);
        let series = ibp_series(&f, a, b, omega, 12, 1e-11).unwrap();
        prop_assume!(series.converged);
        let value = |x: f64| g(0, x).unwrap();
        let phase = move |x: f64| omega * x;
        let oracle = quadrature_oracle(&value, a, b, &phase, omega, 1e-11).unwrap();
        let diff = (series.value - oracle.value).norm();
        prop_assert!(diff <= series.error_estimate + oracle.error + 1e-13, "{} > {} + {}", diff, series.error_estimate, oracle.error);
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn varying_series_reduces_to_constant(
        c in prop::array::uniform3(-2.0f64..2.0),
        alpha in prop::array::uniform2(-1.0f64..0.5),
        omega in 5.0f64..80.0,
        n_max in 1usize..4,
    ) {
        let g = smooth_family(c, alpha);
        let f = Analytic(&g);
        let constant = ibp_series(&f, 0.0, 2.0, omega, n_max, 0.0).unwrap();
        let phase = move |x: f64| omega * x;
        let om = move |_: f64| omega;
        let om1 = |_: f64| 0.0;
        let freq = VaryingFrequency { phase: &phase, omega: &om, omega_prime: &om1 };
        let varying = ibp_series_varfreq(&f, 0.0, 2.0, &freq, n_max, 0.0).unwrap();
        prop_assert!((constant.value - varying.value).norm() <= 1e-12 * (1.0 + constant.value.norm()));
    }
}

// ----------------------------------------------------------------- config

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn linspace_endpoints(a in -10.0f64..10.0, d in 0.1f64..10.0, n in 2usize..50) {
        let b = a + d;
        let v = parse_list(&format!("linspace({a}, {b}, {n})")).unwrap();
        prop_assert_eq!(v.len(), n);
        prop_assert!((v[0] - a).abs() < 1e-12 && (v[n - 1] - b).abs() < 1e-12);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn logspace_is_geometric(a in 0.01f64..1.0, r in 1.5f64..100.0, n in 3usize..40) {
        let v = parse_list(&format!("logspace({a}, {}, {n})", a * r)).unwrap();
        let q = v[1] / v[0];
        prop_assert!(v.windows(2).all(|w| ((w[1] / w[0]) / q - 1.0).abs() < 1e-10));
    }

    #[test]
    fn sweep_param_round_trip(i in 0usize..4) {
        let p = [SweepParam::Omega0, SweepParam::NDim, SweepParam::Epsilon, SweepParam::Delta][i];
        prop_assert_eq!(p.to_string().parse::<SweepParam>().unwrap(), p);
    }
}
