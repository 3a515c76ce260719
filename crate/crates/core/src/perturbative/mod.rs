//! Second-order perturbative error probability.
//!
//! The coupling integrals are
//!
//! ```text
//! I^-_kl = sigma_kl^2 ∬_0^T dt1 dt2 exp(i w_kl (t1 - t2)) f(w0 (t1 - t2))
//! I^+_kl = sigma_kl^2 ∬_0^T dt1 dt2 exp(i w_kl (t1 + t2)) f(w0 (t1 - t2))
//! ```
//!
//! Numerically they are reduced with `u = t1 - t2`, `v = t1 + t2`: for a
//! linear phase the `v` integral is elementary, leaving one oscillatory
//! integral over `u`; for a general phase `Phi(t)` the inner integral over the
//! position along the diagonal is done by quadrature.

mod conditions;
mod prediction;

pub use conditions::{check_adiabatic_conditions, regime_verdicts, ConditionReport, Verdict, MUCH_GREATER};
pub use prediction::{
    adiabatic_integrals, analog_integrals, calibrate_epsilon_star, perr_adiabatic,
    perr_adiabatic_with, perr_analog, perr_analog_dominant, perr_general, AdiabaticOptions,
    Breakdown, PerrPrediction,
};

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{integrate, QuadOptions};

/// Sine integral `Si(x) = int_0^x sin(u)/u du`.
///
/// Power series for `|x| <= 4`; beyond, `Si(x) = pi/2 + Im E1(i x)` with the
/// exponential integral from its continued fraction (modified Lentz).
pub fn sine_integral(x: f64) -> f64 {
    let ax = x.abs();
    let v = if ax <= 4.0 {
        let x2 = ax * ax;
        let mut term = ax;
        let mut sum = ax;
        let mut k = 1usize;
        loop {
            // term_k = (-1)^k x^(2k+1) / (2k+1)!, summed as term_k / (2k+1)
            term *= -x2 / ((2 * k) * (2 * k + 1)) as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() || k > 60 {
                break;
            }
            k += 1;
        }
        sum
    } else {
        let tiny = 1e-300;
        let mut b = Complex64::new(1.0, ax);
        let mut c = Complex64::new(1.0 / tiny, 0.0);
        let mut d = Complex64::new(1.0, 0.0) / b;
        let mut h = d;
        for i in 2..200 {
            let a = -(((i - 1) * (i - 1)) as f64);
            b += 2.0;
            d = Complex64::new(1.0, 0.0) / (d * a + b);
            c = b + Complex64::new(a, 0.0) / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).norm() < 1e-16 {
                break;
            }
        }
        let (s, co) = ax.sin_cos();
        let h = h * Complex64::new(co, -s);
        FRAC_PI_2 + h.im
    };
    v.copysign(x)
}

/// `(1 - cos(z T)) / z`, with a Taylor series for `|z T| < 1e-4`.
fn one_minus_cos_over(z: f64, t: f64) -> f64 {
    let y = z * t;
    if y.abs() < 1e-4 {
        let y2 = y * y;
        t * y * (0.5 - y2 / 24.0 + y2 * y2 / 720.0 - y2 * y2 * y2 / 40320.0)
    } else {
        let s = (0.5 * y).sin();
        2.0 * s * s / z
    }
}

/// Closed form of `I^-` for white noise `f(x) = sin(x)/x`:
///
/// ```text
/// (sigma^2 / w0) [ (1 - cos aT)/a - T Si(aT) - (1 - cos bT)/b + T Si(bT) ]
/// ```
///
/// with `a = w - w0`, `b = w + w0`.
pub fn i_minus_exact_whitenoise(omega: f64, omega0: f64, t: f64, sigma_sq: f64) -> f64 {
    let a = omega - omega0;
    let b = omega + omega0;
    sigma_sq / omega0
        * (one_minus_cos_over(a, t) - t * sine_integral(a * t) - one_minus_cos_over(b, t)
            + t * sine_integral(b * t))
}

/// Options for the numeric coupling integrals.
#[derive(Debug, Clone, Copy)]
pub struct NumericOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
}

impl Default for NumericOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-14, max_evals: 4_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NumericIntegral<T> {
    pub value: T,
    pub error: f64,
    pub converged: bool,
    pub evals: usize,
}

/// Accumulated transition phase `Phi(t) = int_0^t omega(t') dt'`.
pub enum Phase<'a> {
    Linear(f64),
    /// General phase with the range of `omega(t)` over `[0, T]`.
    Table {
        phi: &'a (dyn Fn(f64) -> f64 + Sync),
        omega_min: f64,
        omega_max: f64,
    },
}

/// Panels so that each spans at most half a period of `freq`.
fn panels_for(freq: f64, len: f64) -> usize {
    ((freq.abs() * len / std::f64::consts::PI).ceil() as usize).clamp(1, 1 << 20)
}

/// `I^-` by quadrature for an arbitrary correlation shape `f`.
pub fn i_minus_numeric(
    phase: &Phase,
    omega0: f64,
    t: f64,
    sigma_sq: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    opts: NumericOptions,
) -> NumericIntegral<f64> {
    i_minus_numeric_weighted(phase, omega0, t, sigma_sq, f, None, opts)
}

/// As [`i_minus_numeric`], with an optional weight `w(t1, t2)` multiplying
/// the integrand (used for the eigenvector-overlap factor).
pub fn i_minus_numeric_weighted(
    phase: &Phase,
    omega0: f64,
    t: f64,
    sigma_sq: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    weight: Option<&(dyn Fn(f64, f64) -> f64 + Sync)>,
    opts: NumericOptions,
) -> NumericIntegral<f64> {
    if t <= 0.0 {
        return NumericIntegral { value: 0.0, error: 0.0, converged: true, evals: 0 };
    }
    let outer_opts = QuadOptions {
        abs_tol: opts.abs_tol,
        rel_tol: opts.rel_tol,
        initial_panels: 1,
        max_evals: opts.max_evals,
    };
    match (phase, weight) {
        (Phase::Linear(w), None) => {
            // 2 sigma^2 int_0^T (T - u) cos(w u) f(w0 u) du
            let w = *w;
            let r = integrate(
                |u: f64| (t - u) * (w * u).cos() * f(omega0 * u),
                0.0,
                t,
                outer_opts.with_panels(panels_for(w.abs() + omega0, t) + 1),
            );
            NumericIntegral {
                value: 2.0 * sigma_sq * r.value,
                error: 2.0 * sigma_sq * r.error,
                converged: r.converged,
                evals: r.evals,
            }
        }
        _ => {
            let (phi, w_min, w_max): (Box<dyn Fn(f64) -> f64 + Sync>, f64, f64) = match phase {
                Phase::Linear(w) => {
                    let w = *w;
                    (Box::new(move |x: f64| w * x), w, w)
                }
                Phase::Table { phi, omega_min, omega_max } => {
                    (Box::new(|x: f64| phi(x)), *omega_min, *omega_max)
                }
            };
            let spread = (w_max - w_min).abs();
            let w_top = w_max.abs().max(w_min.abs());
            let mut evals = 0usize;
            let mut all_converged = true;
            let inner_opts = outer_opts.with_tol(opts.abs_tol * 1e-2, opts.rel_tol * 1e-2);
            // G(u) = int_u^T w(t1, t1 - u) exp(i (Phi(t1) - Phi(t1 - u))) dt1
            let outer = integrate(
                |u: f64| {
                    let fu = f(omega0 * u);
                    if fu == 0.0 || u >= t {
                        return 0.0;
                    }
                    let inner = integrate(
                        |t1: f64| {
                            let p = phi(t1) - phi(t1 - u);
                            let wgt = weight.map_or(1.0, |wf| wf(t1, t1 - u));
                            Complex64::from_polar(wgt, p)
                        },
                        u,
                        t,
                        inner_opts.with_panels(panels_for(spread * u.max(1.0), t - u) + 1),
                    );
                    evals += inner.evals;
                    all_converged &= inner.converged;
                    fu * inner.value.re
                },
                0.0,
                t,
                outer_opts.with_panels(panels_for(w_top + omega0, t) + 1),
            );
            NumericIntegral {
                value: 2.0 * sigma_sq * outer.value,
                error: 2.0 * sigma_sq * outer.error,
                converged: outer.converged && all_converged,
                evals: evals + outer.evals,
            }
        }
    }
}

/// `I^+` by quadrature for a linear phase:
/// `2 sigma^2 exp(i w T) int_0^T f(w0 u) sin(w (T - u)) / w du`.
pub fn i_plus_numeric(
    omega: f64,
    omega0: f64,
    t: f64,
    sigma_sq: f64,
    f: &(dyn Fn(f64) -> f64 + Sync),
    opts: NumericOptions,
) -> NumericIntegral<Complex64> {
    if t <= 0.0 {
        return NumericIntegral { value: Complex64::new(0.0, 0.0), error: 0.0, converged: true, evals: 0 };
    }
    let q = QuadOptions {
        abs_tol: opts.abs_tol,
        rel_tol: opts.rel_tol,
        initial_panels: panels_for(omega.abs() + omega0, t) + 1,
        max_evals: opts.max_evals,
    };
    let r = integrate(
        |u: f64| (t - u) * crate::noise::sinc(omega * (t - u)) * f(omega0 * u),
        0.0,
        t,
        q,
    );
    let scale = 2.0 * sigma_sq;
    NumericIntegral {
        value: Complex64::from_polar(scale * r.value, omega * t),
        error: scale * r.error,
        converged: r.converged,
        evals: r.evals,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    HighCutoff,
    LowCutoff,
    Intermediate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    NumericDouble,
    ExactWhiteNoise,
    AsymptoticHigh,
    AsymptoticLow,
}

/// Separation required by the asymptotic estimators.
pub const ASYMPTOTIC_SEPARATION: f64 = 2.0;

/// Classify `omega0` against the transition band `[omega_min, omega_max]`.
pub fn classify(omega_min: f64, omega_max: f64, omega0: f64) -> Regime {
    if omega0 >= ASYMPTOTIC_SEPARATION * omega_max.abs() {
        Regime::HighCutoff
    } else if omega_min.abs() > 0.0 && omega0 <= omega_min.abs() / ASYMPTOTIC_SEPARATION {
        Regime::LowCutoff
    } else {
        Regime::Intermediate
    }
}

/// Order-of-magnitude estimate of `I^-` with its `O(1)` constant set to one.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AsymptoticEstimate {
    pub regime: Regime,
    /// `None` in the intermediate band.
    pub magnitude: Option<f64>,
    /// `omega0 / omega_max` (high) or `omega_min / omega0` (low).
    pub separation: f64,
}

/// Asymptotic `I^-` in the requested regime; refuses inconsistent inputs.
pub fn i_minus_asymptotic(
    omega_min: f64,
    omega_max: f64,
    omega0: f64,
    t: f64,
    sigma_sq: f64,
    regime: Regime,
) -> Result<AsymptoticEstimate> {
    let (wmin, wmax) = (omega_min.abs().min(omega_max.abs()), omega_min.abs().max(omega_max.abs()));
    match regime {
        Regime::HighCutoff => {
            if omega0 < ASYMPTOTIC_SEPARATION * wmax {
                return Err(Error::RegimeRefused(format!(
                    "high cut-off needs omega0 >= {ASYMPTOTIC_SEPARATION} max|omega_kl| ({omega0} < {})",
                    ASYMPTOTIC_SEPARATION * wmax
                )));
            }
            Ok(AsymptoticEstimate {
                regime,
                magnitude: Some(sigma_sq / (omega0 * omega0) * (1.0 + wmax / omega0) * omega0 * t),
                separation: if wmax > 0.0 { omega0 / wmax } else { f64::INFINITY },
            })
        }
        Regime::LowCutoff => {
            if wmin == 0.0 || omega0 > wmin / ASYMPTOTIC_SEPARATION {
                return Err(Error::RegimeRefused(format!(
                    "low cut-off needs omega0 <= min|omega_kl| / {ASYMPTOTIC_SEPARATION} ({omega0} vs {wmin})"
                )));
            }
            Ok(AsymptoticEstimate {
                regime,
                magnitude: Some(sigma_sq / (wmin * wmin) * (1.0 + omega0 / wmin)),
                separation: wmin / omega0,
            })
        }
        Regime::Intermediate => Ok(AsymptoticEstimate { regime, magnitude: None, separation: 1.0 }),
    }
}

/// Classify and estimate in one call; intermediate inputs carry no value.
pub fn i_minus_asymptotic_auto(
    omega_min: f64,
    omega_max: f64,
    omega0: f64,
    t: f64,
    sigma_sq: f64,
) -> AsymptoticEstimate {
    let regime = classify(omega_min, omega_max, omega0);
    i_minus_asymptotic(omega_min, omega_max, omega0, t, sigma_sq, regime)
        .expect("classification is consistent with the estimator")
}

/// Coupling integrals for the level pairs a prediction needs.
#[derive(Debug, Clone)]
pub struct CouplingIntegrals {
    pub i_minus: BTreeMap<(usize, usize), f64>,
    pub i_plus: BTreeMap<(usize, usize), Complex64>,
    pub method: Method,
    pub regime: Regime,
    pub total_time: f64,
    /// Off-diagonal variance `sigma^2`.
    pub sigma_sq: f64,
    /// `sigma_kl^2 T^2` with the diagonal variance `2 sigma^2`, the largest bound.
    pub bound: f64,
    /// False if any numeric integral missed its tolerance.
    pub converged: bool,
}

impl CouplingIntegrals {
    pub fn minus(&self, k: usize, l: usize) -> Result<f64> {
        self.i_minus
            .get(&(k, l))
            .or_else(|| self.i_minus.get(&(l, k)))
            .copied()
            .ok_or(Error::MissingIntegral(k, l))
    }

    pub fn plus(&self, k: usize, l: usize) -> Result<Complex64> {
        if let Some(v) = self.i_plus.get(&(k, l)) {
            return Ok(*v);
        }
        // I^+_lk has the opposite frequency, hence the conjugate value
        self.i_plus.get(&(l, k)).map(|v| v.conj()).ok_or(Error::MissingIntegral(k, l))
    }

    /// `sigma_kl^2 T^2`.
    pub fn bound_for(&self, k: usize, l: usize) -> f64 {
        let var = if k == l { 2.0 * self.sigma_sq } else { self.sigma_sq };
        var * self.total_time * self.total_time
    }

    /// Check `|I| <= sigma_kl^2 T^2 (1 + 1e-9)` on every entry.
    pub fn within_bound(&self) -> bool {
        let ok = |k: usize, l: usize, v: f64| v <= self.bound_for(k, l) * (1.0 + 1e-9);
        self.i_minus.iter().all(|(&(k, l), v)| ok(k, l, v.abs()))
            && self.i_plus.iter().all(|(&(k, l), v)| ok(k, l, v.norm()))
    }
}
