//! Regime verdicts, noise diagnostics, spectrum curves and the lemma demo.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::loglog_slope;
use crate::error::{Error, Result};
use crate::model::{self, Variant};
use crate::noise::{self, DensityCheck, VarianceRatio};
use crate::oscillatory::{
    ibp_series, ibp_series_varfreq, Analytic, AdiabaticAmplitude, VaryingFrequency,
};
use crate::perturbative::{
    adiabatic_integrals, calibrate_epsilon_star, regime_verdicts, NumericOptions, Verdict, MUCH_GREATER,
};

#[derive(Debug, Clone, Serialize)]
pub struct RegimeLine {
    pub param: String,
    pub value: f64,
    pub variant: Variant,
    pub n_dim: usize,
    pub epsilon: f64,
    pub omega0: f64,
    pub condition: String,
    pub lhs: f64,
    pub threshold: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegimeReport {
    pub threshold_factor: f64,
    pub target_p_err: f64,
    /// `c` in `eps*(N) = c N^(-1/4)`.
    pub epsilon_star_c: f64,
    pub lines: Vec<RegimeLine>,
    /// `(N, eps*(N))` for every evaluated point.
    pub epsilon_star: Vec<(usize, f64)>,
}

impl RegimeReport {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for l in &self.lines {
            w.serialize(l)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "'>>' and '<<' are read as a factor of at least {}; margin >= 1 means satisfied.",
            self.threshold_factor
        );
        for l in &self.lines {
            let tag = if l.param.is_empty() { String::new() } else { format!("[{} = {}] ", l.param, l.value) };
            let _ = writeln!(
                s,
                "{tag}{:<44} {:>12.5e} vs {:>12.5e}  margin {:>10.4}  {}",
                l.condition,
                l.lhs,
                l.threshold,
                l.margin,
                if l.holds { "HOLDS" } else { "fails" }
            );
        }
        let _ = writeln!(
            s,
            "eps*(N) = c N^(-1/4) with c = {:.6} (analog prediction p_err = {} at N = 16, omega0 = E)",
            self.epsilon_star_c, self.target_p_err
        );
        for (n, e) in &self.epsilon_star {
            let _ = writeln!(s, "  N = {n}: eps* = {e:.6}");
        }
        s
    }
}

fn line(cfg: &ExperimentConfig, param: &str, value: f64, v: &Verdict) -> RegimeLine {
    RegimeLine {
        param: param.to_string(),
        value,
        variant: cfg.instance.variant,
        n_dim: cfg.instance.n_dim,
        epsilon: cfg.noise.epsilon,
        omega0: cfg.noise.omega0,
        condition: v.description.clone(),
        lhs: v.value,
        threshold: v.threshold,
        margin: v.margin,
        holds: v.holds,
    }
}

/// Verdict sheet for the configured point, or for each sweep value.
pub fn regime_report(cfg: &ExperimentConfig) -> Result<RegimeReport> {
    let c = calibrate_epsilon_star(cfg.target_p_err, cfg.instance.e_bar)?;
    let points: Vec<(String, f64, ExperimentConfig)> = match &cfg.sweep {
        Some(sw) => sw
            .values
            .iter()
            .map(|&v| Ok((sw.param.name().to_string(), v, cfg.with_param(sw.param, v)?)))
            .collect::<Result<_>>()?,
        None => vec![(String::new(), f64::NAN, cfg.clone())],
    };
    let mut lines = Vec::new();
    let mut eps_star = Vec::new();
    for (param, value, pc) in &points {
        let inst = pc.problem_instance()?;
        let noise = pc.noise_model()?;
        let (high, low) = regime_verdicts(&inst, &noise)?;
        lines.push(line(pc, param, *value, &high));
        lines.push(line(pc, param, *value, &low));
        if inst.variant == Variant::Adiabatic {
            let sched = model::local_schedule(&inst)?;
            let cond = model::adiabatic_condition(&inst, &sched, 2001)?;
            let d2 = inst.delta()?.powi(2);
            lines.push(line(pc, param, *value, &Verdict::at_most(cond.lhs, d2, "4 sum sup A_k^2 <= delta^2")));
            let ints = adiabatic_integrals(&inst, &noise, &sched, NumericOptions::default(), false)?;
            let e2 = noise.epsilon * noise.epsilon;
            let mut extra = 0.0;
            for k in 1..inst.n_dim {
                extra += e2 * ints.minus(k, 0)?;
            }
            lines.push(line(
                pc,
                param,
                *value,
                &Verdict::at_most(cond.lhs + extra, d2, "sum (4 sup A_k^2 + eps^2 I_k0) <= delta^2"),
            ));
        }
        let n = inst.n_dim;
        if !eps_star.iter().any(|(m, _)| *m == n) {
            eps_star.push((n, c * (n as f64).powf(-0.25)));
        }
    }
    Ok(RegimeReport {
        threshold_factor: MUCH_GREATER,
        target_p_err: cfg.target_p_err,
        epsilon_star_c: c,
        lines,
        epsilon_star: eps_star,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct AutocorrRow {
    /// Lag in units of `1 / omega0`.
    pub x: f64,
    pub tau: f64,
    pub empirical: f64,
    pub std_err: f64,
    pub expected: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseCheckReport {
    pub autocorrelation: Vec<AutocorrRow>,
    pub max_abs_z: f64,
    pub variance: Option<VarianceRatio>,
    pub density: DensityCheck,
}

impl NoiseCheckReport {
    pub fn write_autocorr_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.autocorrelation {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_density_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lo", "hi", "density", "semicircle"])?;
        let d = &self.density;
        for (i, (a, b)) in d.density.iter().zip(&d.semicircle).enumerate() {
            w.write_record(&[
                d.bin_edges[i].to_string(),
                d.bin_edges[i + 1].to_string(),
                a.to_string(),
                b.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Autocorrelation against the target shape, diagonal/off-diagonal variance
/// ratio and the pooled eigenvalue histogram.
pub fn noise_check(cfg: &ExperimentConfig) -> Result<NoiseCheckReport> {
    let model = cfg.noise_model()?;
    if cfg.check.paths < 2 {
        return Err(Error::InvalidArgument("check.paths must be at least 2".into()));
    }
    let taus: Vec<f64> = cfg.check.lags.iter().map(|x| x / model.omega0).collect();
    let pts = noise::empirical_autocorrelation(&model, cfg.check.paths, &taus)?;
    let autocorrelation: Vec<AutocorrRow> = pts
        .iter()
        .zip(&cfg.check.lags)
        .map(|(p, &x)| {
            let expected = model.shape.correlation(x);
            let z = if p.std_err > 0.0 { (p.value - expected) / p.std_err } else { 0.0 };
            AutocorrRow { x, tau: p.tau, empirical: p.value, std_err: p.std_err, expected, z }
        })
        .collect();
    let max_abs_z = autocorrelation.iter().map(|r| r.z.abs()).fold(0.0, f64::max);
    let variance = if model.n_dim >= 2 {
        Some(noise::variance_ratio(&model, cfg.check.paths, 0.0)?)
    } else {
        None
    };
    let density = noise::eigenvalue_density_check(&model, cfg.check.samples, cfg.check.bins)?;
    Ok(NoiseCheckReport { autocorrelation, max_abs_z, variance, density })
}

/// Model curves: for the adiabatic search the instantaneous levels along
/// `s` (columns `s,E0,E1,gap,t`); for the analog search the ideal success
/// probability over the run (columns `t,p_marked,E0,E1`).
pub fn write_spectrum(cfg: &ExperimentConfig, n_points: usize, out: impl Write) -> Result<()> {
    let inst = cfg.problem_instance()?;
    match inst.variant {
        Variant::Adiabatic => {
            let sched = model::local_schedule(&inst)?;
            model::write_spectrum_csv(&inst, &sched, n_points, out)
        }
        Variant::Analog => {
            let sp = model::analog_spectrum(&inst)?;
            let t_end = inst.analog_time();
            let v0 = sp.eigenvector(0);
            let v1 = sp.eigenvector(1);
            let (b0, b1) = (sp.ideal_amplitudes[0], sp.ideal_amplitudes[1]);
            let (e0, e1) = (sp.eigenvalues[0], sp.eigenvalues[1]);
            let m = inst.marked;
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["t", "p_marked", "E0", "E1"])?;
            let n_points = n_points.max(2);
            for i in 0..n_points {
                let t = t_end * i as f64 / (n_points - 1) as f64;
                let amp = b0 * Complex64::from_polar(v0[m], -e0 * t) + b1 * Complex64::from_polar(v1[m], -e1 * t);
                w.write_record(&[t.to_string(), amp.norm_sqr().to_string(), e0.to_string(), e1.to_string()])?;
            }
            w.flush()?;
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaRow {
    pub omega: f64,
    pub n_terms: usize,
    pub abs_error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AmplitudeRow {
    pub t: f64,
    /// `|b^(1)(t)|` by quadrature.
    pub amplitude: f64,
    /// `|-i [A_1 e^(i Phi)]_0^t|`.
    pub boundary_term: f64,
    pub two_sup_a: f64,
    pub remainder: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaDemo {
    pub rows: Vec<LemmaRow>,
    /// Fitted slope of the truncation error against `omega`, per term count.
    pub slopes: Vec<(usize, f64)>,
    pub amplitude: Vec<AmplitudeRow>,
    pub sup_a1: f64,
}

impl LemmaDemo {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_amplitude_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.amplitude {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Truncation error of the constant-frequency series for `F = e^(-x)` on
/// `[0, 30]` at `omega` in `{25, 50, 100, 200}`, and the first-order
/// amplitude of an adiabatic instance against its `2 sup A_1` bound.
pub fn lemma_demo(n_dim: usize, delta: f64, e_bar: f64) -> Result<LemmaDemo> {
    let f = Analytic(|n: usize, x: f64| Some(if n.is_multiple_of(2) { (-x).exp() } else { -(-x).exp() }));
    let omegas = [25.0f64, 50.0, 100.0, 200.0];
    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for n in 1..=3usize {
        let mut errs = Vec::new();
        for &w in &omegas {
            let r = ibp_series(&f, 0.0, 30.0, w, n, 0.0)?;
            let z = Complex64::new(-1.0, w);
            let exact = ((z * 30.0).exp() - 1.0) / z;
            let err = (r.value - exact).norm();
            errs.push(err);
            rows.push(LemmaRow { omega: w, n_terms: n, abs_error: err, bound: r.truncation_bound });
        }
        slopes.push((n, loglog_slope(&omegas, &errs)));
    }

    let inst = model::ProblemInstance::adiabatic(n_dim, e_bar, 0, delta)?;
    let sched = model::local_schedule(&inst)?;
    let cond = model::adiabatic_condition(&inst, &sched, 4001)?;
    let amp = AdiabaticAmplitude::new(&inst, &sched)?;
    let ph = |t: f64| amp.phase(t);
    let om = |t: f64| amp.frequency(t);
    let om1 = |t: f64| amp.frequency_derivative(t);
    let freq = VaryingFrequency { phase: &ph, omega: &om, omega_prime: &om1 };
    let d = amp.derivatives();
    let mut amplitude = Vec::new();
    for i in 1..=16 {
        let t = sched.total_time * i as f64 / 16.0;
        let r = ibp_series_varfreq(&d, 0.0, t, &freq, 1, 0.0)?;
        let a_t = Complex64::from_polar(amp.integrand(t) / amp.frequency(t), amp.phase(t));
        let a_0 = Complex64::new(amp.integrand(0.0) / amp.frequency(0.0), 0.0);
        let boundary = Complex64::new(0.0, -1.0) * (a_t - a_0);
        amplitude.push(AmplitudeRow {
            t,
            amplitude: r.exact().norm(),
            boundary_term: boundary.norm(),
            two_sup_a: 2.0 * cond.sup_a1,
            remainder: (r.exact() - boundary).norm(),
        });
    }
    Ok(LemmaDemo { rows, slopes, amplitude, sup_a1: cond.sup_a1 })
}
