//! Acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line with the measured quantity before asserting.
//!
//! Oracles here are written independently of the library code they check:
//! a tensor Gauss-Legendre double integral, the two-level closed form of the
//! analog search, and plain sample statistics.

use std::f64::consts::PI;
use std::io::Write;

use hamnoise_core::evolution::{propagate, ConstantHamiltonian};
use hamnoise_core::harness::{self, loglog_slope, ExperimentConfig};
use hamnoise_core::model::{self, local_schedule};
use hamnoise_core::noise::{empirical_autocorrelation, eigenvalue_density_check, variance_ratio};
use hamnoise_core::oscillatory::{quadrature_oracle, AdiabaticAmplitude};
use hamnoise_core::perturbative::{i_minus_exact_whitenoise, perr_analog, perr_analog_dominant};
use hamnoise_core::{NoiseModel, ProblemInstance, PropagatorConfig, Shape, TrialContext};

/// Print outside the test harness capture so the line always shows up.
fn report(name: &str, ok: bool, detail: String) {
    let line = format!("{} {name}: {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{name}: {detail}");
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

fn config(text: &str) -> ExperimentConfig {
    let cfg = ExperimentConfig::parse(text).unwrap();
    cfg.validate().unwrap();
    cfg
}

// ----------------------------------------------------------------- noise

#[test]
fn noise_fidelity() {
    let model = NoiseModel::constant_snr(4, 1.0, 1.0, 1.0, Shape::WhiteSinc, 64, 11).unwrap();
    let taus: Vec<f64> = (0..12).map(|i| 0.5 * i as f64).collect();
    let pts = empirical_autocorrelation(&model, 10_000, &taus).unwrap();
    let mut worst = 0.0f64;
    for p in &pts {
        let expect = sinc(model.omega0 * p.tau);
        let z = if p.std_err > 0.0 { (p.value - expect).abs() / p.std_err } else { 0.0 };
        worst = worst.max(z);
    }
    let vr = variance_ratio(&model.with_seed(12), 2_000, 0.37).unwrap();
    let ratio_ok = (vr.ratio / 2.0 - 1.0).abs() < 0.05;
    report(
        "noise fidelity",
        worst < 3.0 && ratio_ok,
        format!("max |z| over 12 lags = {worst:.2} (< 3); diag/off variance ratio = {:.4} (2 +- 5%)", vr.ratio),
    );
}

#[test]
fn semicircle() {
    let model = NoiseModel::constant_snr(256, 1.0, 1.0, 1.0, Shape::WhiteSinc, 8, 5).unwrap();
    let d = eigenvalue_density_check(&model, 20, 40).unwrap();
    let lo = (d.min_eigenvalue + 1.0).abs();
    let hi = (d.max_eigenvalue - 1.0).abs();
    let edges_ok = lo <= d.bin_width && hi <= d.bin_width;
    let rel = d.sup_deviation / d.peak_density;
    report(
        "semicircle",
        edges_ok && rel < 0.1,
        format!(
            "edges {:.4}, {:.4} (bin width {:.4}); sup deviation / peak = {rel:.4} (< 0.1)",
            d.min_eigenvalue, d.max_eigenvalue, d.bin_width
        ),
    );
}

// ----------------------------------------------------------------- ideal runs

/// `|<m|psi(t)>|^2 = sin^2(E t / sqrt N) + cos^2(E t / sqrt N) / N`.
fn two_level_success(n: usize, e: f64, t: f64) -> f64 {
    let x = e * t / (n as f64).sqrt();
    x.sin().powi(2) + x.cos().powi(2) / n as f64
}

#[test]
fn ideal_analog() {
    let cfg = PropagatorConfig { tol: 1e-10, ..PropagatorConfig::default() };
    let mut worst = 0.0f64;
    let mut worst_oracle = 0.0f64;
    for n in [16usize, 64] {
        let inst = ProblemInstance::analog(n, 1.0, 0).unwrap();
        let noise = NoiseModel::constant_snr(n, 1.0, 0.0, 1.0, Shape::WhiteSinc, 8, 1).unwrap();
        let ctx = TrialContext::new(&inst, &noise, &cfg).unwrap();
        let p = ctx.ideal_final[0].norm_sqr();
        worst = worst.max((p - 1.0).abs());
        worst_oracle = worst_oracle.max((p - two_level_success(n, 1.0, ctx.total_time)).abs());
        let h = ConstantHamiltonian::new(model::analog_hamiltonian(&inst).unwrap());
        for frac in [0.25, 0.5, 0.8] {
            let t = frac * ctx.total_time;
            let psi = propagate(&h, &inst.initial_state(), t, &cfg).unwrap().state;
            worst_oracle = worst_oracle.max((psi[0].norm_sqr() - two_level_success(n, 1.0, t)).abs());
        }
    }
    report(
        "ideal analog",
        worst < 1e-8 && worst_oracle < 1e-8,
        format!("max |1 - P_m(T)| = {worst:.2e}; max deviation from two-level curve = {worst_oracle:.2e}"),
    );
}

#[test]
fn ideal_adiabatic() {
    let inst = ProblemInstance::adiabatic(32, 1.0, 0, 0.1).unwrap();
    let noise = NoiseModel::constant_snr(32, 1.0, 0.0, 1.0, Shape::WhiteSinc, 8, 1).unwrap();
    let cfg = PropagatorConfig { tol: 1e-9, ..PropagatorConfig::default() };
    let ctx = TrialContext::new(&inst, &noise, &cfg).unwrap();
    let p_bar = 1.0 - ctx.ideal_final[0].norm_sqr();
    let target = PI * 32f64.sqrt() / 0.1;
    let rel = ctx.total_time / target - 1.0;
    report(
        "ideal adiabatic",
        p_bar <= 0.01 && rel.abs() <= 0.02,
        format!("p_err = {p_bar:.3e} (<= 0.01); T = {:.3} vs pi sqrt(N)/delta = {target:.3} ({:+.2}%, limit 2%)", ctx.total_time, 100.0 * rel),
    );
}

// ----------------------------------------------------------------- integrals

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

/// `sigma^2 int_0^T int_0^T cos(w (t1 - t2)) sinc(w0 (t1 - t2)) dt1 dt2`
/// on a tensor grid of Gauss-Legendre panels.
fn double_quadrature(w: f64, w0: f64, t: f64, sigma_sq: f64) -> f64 {
    let gl = gauss_legendre(12);
    let panels = (2.0 * (w + w0) * t / PI).ceil() as usize + 2;
    let h = t / panels as f64;
    let mut nodes = Vec::with_capacity(panels * gl.len());
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for &(x, wt) in &gl {
            nodes.push((mid + 0.5 * h * x, 0.5 * h * wt));
        }
    }
    let mut total = 0.0;
    for &(t1, w1) in &nodes {
        let mut row = 0.0;
        for &(t2, w2) in &nodes {
            let u = t1 - t2;
            row += w2 * (w * u).cos() * sinc(w0 * u);
        }
        total += w1 * row;
    }
    sigma_sq * total
}

#[test]
fn exact_vs_numeric_integrals() {
    let mut grid = Vec::new();
    for &w in &[0.25, 1.0, 3.0, 7.0] {
        for &(w0, t) in &[(0.5, 8.0), (2.0, 15.0), (5.0, 4.0), (1.0, 30.0)] {
            grid.push((w, w0, t));
        }
    }
    grid.extend([(1.0 + 2e-5, 1.0, 20.0), (3.0 - 1e-5, 3.0, 10.0), (2.0, 2.0, 12.0), (0.7 + 1e-6, 0.7, 25.0)]);
    assert_eq!(grid.len(), 20);
    let mut worst = 0.0f64;
    for &(w, w0, t) in &grid {
        let exact = i_minus_exact_whitenoise(w, w0, t, 0.3);
        let oracle = double_quadrature(w, w0, t, 0.3);
        worst = worst.max((exact - oracle).abs() / oracle.abs());
    }
    report("exact vs numeric integrals", worst < 1e-6, format!("max relative deviation over 20 points = {worst:.2e}"));
}

#[test]
fn low_cutoff_time_independence() {
    let sigma_sq = 1.0 / 64.0;
    let t = 200.0;
    let a = i_minus_exact_whitenoise(1.0, 0.05, t, sigma_sq);
    let b = i_minus_exact_whitenoise(1.0, 0.05, 2.0 * t, sigma_sq);
    let change = (b / a - 1.0).abs();
    report(
        "low cut-off T independence",
        change < 0.2,
        format!("I(T = {t}) = {a:.5e}, I(2T) = {b:.5e}, relative change {change:.3} (< 0.2)"),
    );
}

// ----------------------------------------------------------------- analytic profile

fn analog_per_eps2(n: usize, omega0: f64) -> f64 {
    let inst = ProblemInstance::analog(n, 1.0, 0).unwrap();
    let noise = NoiseModel::constant_snr(n, 1.0, 0.05, omega0, Shape::WhiteSinc, 64, 1).unwrap();
    perr_analog(&inst, &noise).unwrap().per_epsilon_sq()
}

fn logspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64)).collect()
}

fn analog_dominant_per_eps2(n: usize, omega0: f64) -> f64 {
    let inst = ProblemInstance::analog(n, 1.0, 0).unwrap();
    let noise = NoiseModel::constant_snr(n, 1.0, 0.05, omega0, Shape::WhiteSinc, 64, 1).unwrap();
    perr_analog_dominant(&inst, &noise).unwrap() / (0.05 * 0.05)
}

struct Profile {
    peak: f64,
    w_peak: f64,
    low_ratio: f64,
    decays: bool,
}

fn profile(ws: &[f64], ys: &[f64]) -> Profile {
    let (imax, &peak) = ys.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
    let low = ws.iter().zip(ys).filter(|(w, _)| **w <= 0.3).map(|(_, y)| *y).fold(0.0, f64::max);
    let tail: Vec<f64> = ws.iter().zip(ys).filter(|(w, _)| **w >= 5.0).map(|(_, y)| *y).collect();
    Profile { peak, w_peak: ws[imax], low_ratio: low / peak, decays: tail.windows(2).all(|p| p[1] < p[0]) }
}

/// Checked on the degenerate-level term, the only one that grows with `N`.
/// The full formula is printed alongside; its low-cut-off floor is the
/// quasi-static dephasing of the two populated levels.
#[test]
fn cutoff_profile() {
    let ws = logspace(0.05, 20.0, 120);
    let dom: Vec<f64> = ws.iter().map(|&w| analog_dominant_per_eps2(100, w)).collect();
    let full: Vec<f64> = ws.iter().map(|&w| analog_per_eps2(100, w)).collect();
    let d = profile(&ws, &dom);
    let f = profile(&ws, &full);
    report(
        "cut-off profile",
        d.low_ratio < 0.1 && (0.5..=3.0).contains(&d.w_peak) && d.decays,
        format!(
            "(N-2) term: peak {:.4} at omega0 = {:.3}, max below 0.3 = {:.3} of peak, monotone beyond 5: {}; \
             full formula: peak {:.4} at {:.3}, low floor {:.3} of peak, monotone beyond 5: {}",
            d.peak, d.w_peak, d.low_ratio, d.decays, f.peak, f.w_peak, f.low_ratio, f.decays
        ),
    );
}

#[test]
fn sqrt_n_scaling() {
    let ws = logspace(0.1, 10.0, 200);
    let peaks: Vec<f64> =
        [50usize, 100, 200].iter().map(|&n| ws.iter().map(|&w| analog_per_eps2(n, w)).fold(0.0, f64::max)).collect();
    let r1 = peaks[1] / peaks[0];
    let r2 = peaks[2] / peaks[1];
    let s2 = 2f64.sqrt();
    let ok = (r1 / s2 - 1.0).abs() < 0.25 && (r2 / s2 - 1.0).abs() < 0.25;
    report("sqrt(N) scaling", ok, format!("peaks {peaks:.4?}; ratios {r1:.3}, {r2:.3} vs sqrt 2 = {s2:.3} (+-25%)"));
}

// ----------------------------------------------------------------- Monte-Carlo

#[test]
fn analog_monte_carlo_matches_prediction() {
    let eps = 0.05f64;
    let mut ok = true;
    let mut detail = Vec::new();
    for w0 in [0.1, 1.0, 10.0] {
        let cfg = config(&format!(
            "instance.n_dim = 16\nnoise.epsilon = {eps}\nnoise.omega0 = {w0}\nrun.n_trials = 2000\nrun.seed = 21\n"
        ));
        let row = harness::monte_carlo(&cfg).unwrap();
        let diff = (row.mean_p_err - row.pred_p_err).abs();
        let tol = 3.0 * row.std_err + 5.0 * eps.powi(3);
        ok &= diff <= tol;
        detail.push(format!(
            "omega0 = {w0}: MC {:.5} +- {:.5}, predicted {:.5}, |diff| {diff:.2e} <= {tol:.2e}",
            row.mean_p_err, row.std_err, row.pred_p_err
        ));
    }
    report("analog Monte-Carlo vs prediction", ok, detail.join("; "));
}

#[test]
fn epsilon_squared_scaling() {
    let cfg = config(
        "instance.n_dim = 16\nnoise.omega0 = 10\nrun.n_trials = 300\nrun.seed = 5\n\
         sweep.param = epsilon\nsweep.values = linspace(0.01, 0.05, 5)\n",
    );
    let table = harness::sweep(&cfg).unwrap();
    let eps: Vec<f64> = table.rows.iter().map(|r| r.epsilon).collect();
    let p: Vec<f64> = table.rows.iter().map(|r| r.mean_p_err).collect();
    let slope = loglog_slope(&eps, &p);
    report("epsilon^2 scaling", (slope - 2.0).abs() <= 0.15, format!("fitted slope {slope:.4} (2 +- 0.15)"));
}

#[test]
fn adiabatic_monte_carlo_matches_prediction() {
    let cfg = config(
        "instance.variant = adiabatic\ninstance.n_dim = 16\ninstance.delta = 0.2\n\
         noise.epsilon = 0.05\nnoise.omega0 = 20\nrun.n_trials = 40\nrun.seed = 3\n",
    );
    let row = harness::monte_carlo(&cfg).unwrap();
    let diff = (row.mean_p_err - row.pred_p_err).abs();
    let tol = 3.0 * row.std_err + 0.016;
    report(
        "adiabatic Monte-Carlo vs prediction",
        diff <= tol,
        format!(
            "MC {:.5} +- {:.5}, predicted {:.5}, |diff| {diff:.2e} <= {tol:.2e}",
            row.mean_p_err, row.std_err, row.pred_p_err
        ),
    );
}

// ----------------------------------------------------------------- lemmas

#[test]
fn integration_by_parts_lemmas() {
    let demo = harness::lemma_demo(32, 0.1, 1.0).unwrap();
    let slopes_ok = demo.slopes.iter().all(|&(n, s)| (s + (n as f64 + 1.0)).abs() <= 0.3);

    let inst = ProblemInstance::adiabatic(32, 1.0, 0, 0.1).unwrap();
    let sched = local_schedule(&inst).unwrap();
    let amp = AdiabaticAmplitude::new(&inst, &sched).unwrap();
    let f = |t: f64| amp.integrand(t);
    let phase = |t: f64| amp.phase(t);
    let mut worst_rel = 0.0f64;
    let mut bound_ok = true;
    for row in &demo.amplitude {
        let oracle = quadrature_oracle(&f, 0.0, row.t, &phase, 1.0, 1e-11).unwrap().value.norm();
        worst_rel = worst_rel.max((row.amplitude - oracle).abs() / oracle);
        bound_ok &= row.amplitude <= row.two_sup_a;
    }
    let max_amp = demo.amplitude.iter().map(|r| r.amplitude).fold(0.0, f64::max);
    report(
        "integration-by-parts lemmas",
        slopes_ok && bound_ok && worst_rel < 1e-6,
        format!(
            "slopes {:?}; max |b1| = {max_amp:.4e} <= 2 sup A = {:.4e}; vs quadrature {worst_rel:.1e}",
            demo.slopes.iter().map(|(n, s)| format!("n={n}: {s:.3}")).collect::<Vec<_>>(),
            2.0 * demo.sup_a1
        ),
    );
}

// ----------------------------------------------------------------- reproducibility

#[test]
fn reproducible_across_thread_counts() {
    let configs = [
        config(
            "instance.n_dim = 8\nnoise.epsilon = 0.05\nrun.n_trials = 64\nrun.seed = 9\n\
             sweep.param = omega0\nsweep.values = 0.3, 1, 4\n",
        ),
        config(
            "instance.variant = adiabatic\ninstance.n_dim = 4\ninstance.delta = 0.4\nnoise.omega0 = 2\n\
             run.n_trials = 16\nsweep.param = epsilon\nsweep.values = 0.02, 0.05\n",
        ),
    ];
    let csv_with = |cfg: &ExperimentConfig, threads: usize| {
        let pool = harness::thread_pool(Some(threads)).unwrap();
        let table = pool.install(|| harness::sweep(cfg)).unwrap();
        let mut main = Vec::new();
        table.write_csv(&mut main).unwrap();
        let mut overlay = Vec::new();
        table.write_overlay_csv(&mut overlay).unwrap();
        (main, overlay)
    };
    let mut identical = true;
    for cfg in &configs {
        identical &= csv_with(cfg, 1) == csv_with(cfg, 8);
    }
    report("reproducibility", identical, format!("1 vs 8 threads, {} sweeps byte-identical: {identical}", configs.len()));
}
