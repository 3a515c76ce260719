//! `<p_err>` to second order in `epsilon`.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::Serialize;

use super::{
    classify, i_minus_exact_whitenoise, i_minus_numeric, i_minus_numeric_weighted, i_plus_numeric,
    CouplingIntegrals, Method, NumericOptions, Phase,
};
use crate::error::{Error, Result};
use crate::model::{self, ProblemInstance, Schedule, SpectrumView, Variant};
use crate::noise::{NoiseModel, Shape};

/// Contributions to the predicted mean error probability.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Breakdown {
    /// Populated levels coupled to unpopulated ones (the degenerate level).
    pub degenerate_coupling: f64,
    /// `I^-` terms among populated levels, diagonal terms included.
    pub intra_populated: f64,
    /// `-sum (b_k* b_l)^2 I^+_kl`.
    pub interference: f64,
    /// Ground to first excited coupling of the adiabatic path.
    pub first_excited: f64,
    /// Error probability of the ideal run (adiabatic).
    pub ideal: f64,
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        self.degenerate_coupling + self.intra_populated + self.interference + self.first_excited + self.ideal
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PerrPrediction {
    pub mean_p_err: f64,
    pub epsilon: f64,
    pub breakdown: Breakdown,
    /// Size of the neglected remainder.
    pub order_note: &'static str,
    pub method: Method,
    pub warnings: Vec<String>,
    /// Prediction with the eigenvector-overlap factor kept (adiabatic, on request).
    pub overlap_corrected: Option<f64>,
}

impl PerrPrediction {
    /// Noise-induced part divided by `epsilon^2`.
    pub fn per_epsilon_sq(&self) -> f64 {
        if self.epsilon == 0.0 {
            0.0
        } else {
            (self.mean_p_err - self.breakdown.ideal) / (self.epsilon * self.epsilon)
        }
    }
}

/// `eps^2 { sum_kl |b_k|^2 (1 - |b_l|^2) I^-_kl - sum_{k != l} (b_k* b_l)^2 I^+_kl }`.
pub fn perr_general(
    spectrum: &SpectrumView,
    integrals: &CouplingIntegrals,
    epsilon: f64,
) -> Result<PerrPrediction> {
    let b = &spectrum.ideal_amplitudes;
    let norm: f64 = b.iter().map(|x| x.norm_sqr()).sum();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("ideal amplitudes not normalized ({norm})")));
    }
    let populated: Vec<usize> = (0..b.len()).filter(|&k| b[k].norm_sqr() > 0.0).collect();
    let e2 = epsilon * epsilon;
    let mut br = Breakdown::default();
    for &k in &populated {
        let pk = b[k].norm_sqr();
        for (l, bl) in b.iter().enumerate() {
            let w = pk * (1.0 - bl.norm_sqr());
            if w == 0.0 {
                continue;
            }
            let term = e2 * w * integrals.minus(k, l)?;
            if bl.norm_sqr() > 0.0 {
                br.intra_populated += term;
            } else {
                br.degenerate_coupling += term;
            }
        }
    }
    let mut interference = Complex64::new(0.0, 0.0);
    for &k in &populated {
        for &l in &populated {
            if k != l {
                let c = b[k].conj() * b[l];
                interference += c * c * integrals.plus(k, l)?;
            }
        }
    }
    br.interference = -e2 * interference.re;
    Ok(PerrPrediction {
        mean_p_err: br.total(),
        epsilon,
        breakdown: br,
        order_note: "O(eps^3) remainder not included",
        method: integrals.method,
        warnings: Vec::new(),
        overlap_corrected: None,
    })
}

fn correlation_fn(shape: &Shape) -> impl Fn(f64) -> f64 + Sync + '_ {
    move |x: f64| shape.correlation(x)
}

/// The five analog integrals `I00, I11, I01, I02, I12` and `I01^+`, laid
/// out for every pair the general formula touches.
pub fn analog_integrals(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    opts: NumericOptions,
) -> Result<CouplingIntegrals> {
    let sp = model::analog_spectrum(inst)?;
    if inst.n_dim < 3 {
        return Err(Error::InvalidInstance("analog prediction needs N >= 3".into()));
    }
    let t = inst.analog_time();
    let w0 = noise.omega0;
    let s2 = noise.sigma_sq;
    let f = correlation_fn(&noise.shape);
    let mut converged = true;
    let mut minus = |w: f64, var: f64| -> f64 {
        match noise.shape {
            Shape::WhiteSinc => i_minus_exact_whitenoise(w, w0, t, var),
            Shape::Custom(_) => {
                let r = i_minus_numeric(&Phase::Linear(w), w0, t, var, &f, opts);
                converged &= r.converged;
                r.value
            }
        }
    };
    let w01 = sp.freq(0, 1);
    let w02 = sp.eigenvalues[0] - 2.0 * inst.e_bar;
    let w12 = sp.eigenvalues[1] - 2.0 * inst.e_bar;
    let i00 = minus(0.0, 2.0 * s2);
    let i01 = minus(w01, s2);
    let i02 = minus(w02, s2);
    let i12 = minus(w12, s2);
    let plus = i_plus_numeric(w01, w0, t, s2, &f, opts);
    converged &= plus.converged;

    let mut i_minus = BTreeMap::new();
    i_minus.insert((0, 0), i00);
    i_minus.insert((1, 1), i00);
    i_minus.insert((0, 1), i01);
    for l in 2..inst.n_dim {
        i_minus.insert((0, l), i02);
        i_minus.insert((1, l), i12);
    }
    let mut i_plus = BTreeMap::new();
    i_plus.insert((0, 1), plus.value);
    let wmin = w01.abs().min(w12.abs());
    let wmax = w02.abs();
    Ok(CouplingIntegrals {
        i_minus,
        i_plus,
        method: match noise.shape {
            Shape::WhiteSinc => Method::ExactWhiteNoise,
            Shape::Custom(_) => Method::NumericDouble,
        },
        regime: classify(wmin, wmax, w0),
        total_time: t,
        sigma_sq: s2,
        bound: 2.0 * s2 * t * t,
        converged,
    })
}

pub fn perr_analog(inst: &ProblemInstance, noise: &NoiseModel) -> Result<PerrPrediction> {
    if inst.variant != Variant::Analog {
        return Err(Error::VariantMismatch { expected: "analog" });
    }
    let ints = analog_integrals(inst, noise, NumericOptions::default())?;
    let mut p = perr_general(&model::analog_spectrum(inst)?, &ints, noise.epsilon)?;
    if !ints.converged {
        p.warnings.push("a numeric coupling integral missed its tolerance".into());
    }
    Ok(p)
}

/// Degenerate-level term alone: `eps^2 (N-2) (|b0|^2 I02 + |b1|^2 I12)`.
pub fn perr_analog_dominant(inst: &ProblemInstance, noise: &NoiseModel) -> Result<f64> {
    let ints = analog_integrals(inst, noise, NumericOptions::default())?;
    let sp = model::analog_spectrum(inst)?;
    let b0 = sp.ideal_amplitudes[0].norm_sqr();
    let b1 = sp.ideal_amplitudes[1].norm_sqr();
    let n2 = (inst.n_dim - 2) as f64;
    Ok(noise.epsilon * noise.epsilon * n2 * (b0 * ints.minus(0, 2)? + b1 * ints.minus(1, 2)?))
}

#[derive(Debug, Clone, Copy)]
pub struct AdiabaticOptions {
    /// Also evaluate the integrals with the eigenvector-overlap factor kept.
    pub overlap_correction: bool,
    pub numeric: NumericOptions,
}

impl Default for AdiabaticOptions {
    fn default() -> Self {
        Self {
            overlap_correction: false,
            numeric: NumericOptions { rel_tol: 1e-8, abs_tol: 1e-12, max_evals: 20_000_000 },
        }
    }
}

/// `I^-_10` and the shared degenerate-level `I^-_k0` along the schedule.
/// With `overlap` the overlap factor `<phi_k(t2)|phi_k(t1)><phi_0(t1)|phi_0(t2)> + ...`
/// is kept; it equals `cos 2(theta1 - theta2)` for `k = 1` and
/// `cos(theta1 - theta2)` for the degenerate levels.
pub fn adiabatic_integrals(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    schedule: &Schedule,
    opts: NumericOptions,
    overlap: bool,
) -> Result<CouplingIntegrals> {
    let t = schedule.total_time;
    let e = inst.e_bar;
    let n = inst.n_dim;
    let s2 = noise.sigma_sq;
    let f = correlation_fn(&noise.shape);
    let gmin = e / (n as f64).sqrt();
    let phi10 = |x: f64| schedule.phase_10(x);
    let phik = |x: f64| schedule.phase_degenerate(x);
    let angle = |x: f64| model::adiabatic_mixing_angle(inst, schedule.s_at(x)).unwrap_or(0.0);
    let w1 = |a: f64, b: f64| (2.0 * (angle(a) - angle(b))).cos();
    let wk = |a: f64, b: f64| (angle(a) - angle(b)).cos();
    let p10 = Phase::Table { phi: &phi10, omega_min: gmin, omega_max: e };
    let pk = Phase::Table { phi: &phik, omega_min: 0.5 * (e + gmin), omega_max: e };
    let (r10, rk) = if overlap {
        (
            i_minus_numeric_weighted(&p10, noise.omega0, t, s2, &f, Some(&w1), opts),
            i_minus_numeric_weighted(&pk, noise.omega0, t, s2, &f, Some(&wk), opts),
        )
    } else {
        (
            i_minus_numeric(&p10, noise.omega0, t, s2, &f, opts),
            if n > 2 {
                i_minus_numeric(&pk, noise.omega0, t, s2, &f, opts)
            } else {
                super::NumericIntegral { value: 0.0, error: 0.0, converged: true, evals: 0 }
            },
        )
    };
    let mut i_minus = BTreeMap::new();
    i_minus.insert((1, 0), r10.value);
    for k in 2..n {
        i_minus.insert((k, 0), rk.value);
    }
    Ok(CouplingIntegrals {
        i_minus,
        i_plus: BTreeMap::new(),
        method: Method::NumericDouble,
        regime: classify(gmin, e, noise.omega0),
        total_time: t,
        sigma_sq: s2,
        bound: 2.0 * s2 * t * t,
        converged: r10.converged && rk.converged,
    })
}

pub fn perr_adiabatic(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    p_bar_err: f64,
) -> Result<PerrPrediction> {
    perr_adiabatic_with(inst, noise, p_bar_err, AdiabaticOptions::default())
}

/// `p_bar + eps^2 [I_10 + (N - 2) I_k0]`.
pub fn perr_adiabatic_with(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    p_bar_err: f64,
    opts: AdiabaticOptions,
) -> Result<PerrPrediction> {
    if inst.variant != Variant::Adiabatic {
        return Err(Error::VariantMismatch { expected: "adiabatic" });
    }
    let schedule = model::local_schedule(inst)?;
    let ints = adiabatic_integrals(inst, noise, &schedule, opts.numeric, false)?;
    let e2 = noise.epsilon * noise.epsilon;
    let n2 = inst.n_dim.saturating_sub(2) as f64;
    let i10 = ints.minus(1, 0)?;
    let ik0 = if inst.n_dim > 2 { ints.minus(2, 0)? } else { 0.0 };
    let br = Breakdown {
        first_excited: e2 * i10,
        degenerate_coupling: e2 * n2 * ik0,
        ideal: p_bar_err,
        ..Breakdown::default()
    };
    let mut warnings = Vec::new();
    let w0t = noise.omega0 * schedule.total_time;
    if w0t < 10.0 {
        warnings.push(format!(
            "omega0 T = {w0t:.3} < 10: unit overlap factor is not justified"
        ));
    }
    if !ints.converged {
        warnings.push("a numeric coupling integral missed its tolerance".into());
    }
    let overlap_corrected = if opts.overlap_correction && noise.epsilon > 0.0 {
        let c = adiabatic_integrals(inst, noise, &schedule, opts.numeric, true)?;
        let ck = if inst.n_dim > 2 { c.minus(2, 0)? } else { 0.0 };
        Some(p_bar_err + e2 * (c.minus(1, 0)? + n2 * ck))
    } else {
        None
    };
    Ok(PerrPrediction {
        mean_p_err: br.total(),
        epsilon: noise.epsilon,
        breakdown: br,
        order_note: "O((delta + eps)^3) remainder not included",
        method: Method::NumericDouble,
        warnings,
        overlap_corrected,
    })
}

/// Constant `c` in `eps*(N) = c N^(-1/4)`, fixed so that the analog
/// prediction at `N = 16`, `omega0 = E` equals `target`.
pub fn calibrate_epsilon_star(target: f64, e_bar: f64) -> Result<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::InvalidArgument(format!("target error probability {target} outside (0, 1)")));
    }
    let inst = ProblemInstance::analog(16, e_bar, 0)?;
    let noise = NoiseModel::constant_snr(16, e_bar, 1.0, e_bar, Shape::WhiteSinc, 64, 0)?;
    let per = perr_analog(&inst, &noise)?.per_epsilon_sq();
    let eps16 = (target / per).sqrt();
    Ok(eps16 * 16f64.powf(0.25))
}
