//! Integration by parts for `int_a^b F(x) exp(i Phi(x)) dx` with a fast phase.
//!
//! For a constant frequency the boundary terms
//! `-(i/omega)^(n+1) [F^(n)(x) e^(i omega x)]_a^b` form an asymptotic series
//! whose remainder after `N` terms is bounded by
//! `omega^-N int |F^(N)|`. For a varying frequency `omega(x) = Phi'(x)` each
//! order also leaves a residual integral
//! `int (d/dx (i/omega)^(n+1)) F^(n) e^(i Phi)`, which is evaluated rather than
//! expanded further.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{adiabatic_coupling, adiabatic_gap, ProblemInstance, Schedule, Variant};
use crate::noise::Shape;
use crate::quadrature::{integrate, QuadOptions};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Source of `d^n F / dx^n`.
pub trait Derivatives: Sync {
    fn derivative(&self, order: usize, x: f64) -> Result<f64>;
}

/// Closure `(order, x) -> Some(value)`; `None` means unavailable.
pub struct Analytic<F>(pub F);

impl<F: Fn(usize, f64) -> Option<f64> + Sync> Derivatives for Analytic<F> {
    fn derivative(&self, order: usize, x: f64) -> Result<f64> {
        (self.0)(order, x).ok_or(Error::Derivative(order))
    }
}

/// `sum_j c_j x^j`.
#[derive(Debug, Clone)]
pub struct Polynomial(pub Vec<f64>);

impl Derivatives for Polynomial {
    fn derivative(&self, order: usize, x: f64) -> Result<f64> {
        let mut acc = 0.0;
        for (j, &c) in self.0.iter().enumerate().skip(order).rev() {
            let falling: f64 = ((j - order + 1)..=j).map(|m| m as f64).product();
            acc = acc * x + c * falling;
        }
        // Horner above runs over the shifted powers x^(j - order)
        Ok(acc)
    }
}

/// `F(x) = f(scale x)` for a noise correlation shape.
#[derive(Debug, Clone)]
pub struct ShapeFamily<'a> {
    pub shape: &'a Shape,
    pub scale: f64,
}

impl Derivatives for ShapeFamily<'_> {
    fn derivative(&self, order: usize, x: f64) -> Result<f64> {
        Ok(self.scale.powi(order as i32) * self.shape.correlation_derivative(order, self.scale * x))
    }
}

/// Richardson-extrapolated difference quotients of a plain function.
///
/// The stencil is centred when it fits inside `domain` and shifted inward
/// otherwise. Noise grows like `eps / h^n`, so orders are capped.
pub struct FiniteDifference<F> {
    pub f: F,
    pub step: f64,
    pub max_order: usize,
    pub domain: (f64, f64),
}

impl<F: Fn(f64) -> f64 + Sync> FiniteDifference<F> {
    pub fn new(f: F, step: f64) -> Self {
        Self { f, step, max_order: 4, domain: (f64::NEG_INFINITY, f64::INFINITY) }
    }

    /// Step `omega^(-1/2) * 1e-2`.
    pub fn for_frequency(f: F, omega: f64) -> Self {
        Self::new(f, omega.abs().powf(-0.5) * 1e-2)
    }

    pub fn within(mut self, lo: f64, hi: f64) -> Self {
        self.domain = (lo, hi);
        self
    }

    fn quotient(&self, n: usize, x: f64, h: f64) -> (f64, bool) {
        let half = 0.5 * n as f64 * h;
        let (lo, hi) = self.domain;
        let start = (x - half).max(lo).min(hi - n as f64 * h);
        let centred = (start - (x - half)).abs() <= 1e-15 * (1.0 + x.abs());
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..=n {
            let sign = if (n - k).is_multiple_of(2) { 1.0 } else { -1.0 };
            acc += sign * binom * (self.f)(start + k as f64 * h);
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        (acc / h.powi(n as i32), centred)
    }
}

impl<F: Fn(f64) -> f64 + Sync> Derivatives for FiniteDifference<F> {
    fn derivative(&self, order: usize, x: f64) -> Result<f64> {
        if order == 0 {
            return Ok((self.f)(x));
        }
        if order > self.max_order || order as f64 * self.step > self.domain.1 - self.domain.0 {
            return Err(Error::Derivative(order));
        }
        let (d1, centred) = self.quotient(order, x, self.step);
        let (d2, _) = self.quotient(order, x, 0.5 * self.step);
        let v = if centred { (4.0 * d2 - d1) / 3.0 } else { 2.0 * d2 - d1 };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Derivative(order))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IbpSeriesResult {
    /// Truncated series (boundary terms, plus residual integrals for a
    /// varying frequency).
    pub value: Complex64,
    pub n_terms: usize,
    /// `int |F^(N)| / |omega|^N` for the last `N = n_terms`.
    pub truncation_bound: f64,
    pub converged: bool,
    pub partial_sums: Vec<Complex64>,
    /// Bound after each partial sum.
    pub bounds: Vec<f64>,
    /// Final-order remainder evaluated by quadrature (varying frequency).
    pub remainder: Option<Complex64>,
    pub error_estimate: f64,
}

impl IbpSeriesResult {
    /// Series plus the evaluated remainder, when there is one.
    pub fn exact(&self) -> Complex64 {
        self.value + self.remainder.unwrap_or_default()
    }
}

/// Oscillatory integral value with its error estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleValue {
    pub value: Complex64,
    pub error: f64,
    pub evals: usize,
}

const NODES_PER_PERIOD: f64 = 20.0;

fn oracle_impl(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    phase: &(dyn Fn(f64) -> f64 + Sync),
    max_rate: f64,
    opts: QuadOptions,
    strict: bool,
) -> Result<OracleValue> {
    if !(opts.abs_tol > 0.0 || opts.rel_tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let periods = max_rate.abs() * (b - a).abs() / (2.0 * PI);
    let panels = 4 + (periods * NODES_PER_PERIOD / 15.0).ceil() as usize;
    let r = integrate(|x: f64| Complex64::from_polar(f(x), phase(x)), a, b, opts.with_panels(panels));
    if strict && !r.converged {
        return Err(Error::Budget { evals: r.evals, error: r.error });
    }
    Ok(OracleValue { value: r.value, error: r.error, evals: r.evals })
}

/// Tolerances for the residual integrals of [`ibp_series_varfreq`]. These
/// are not required to converge; their error estimates are reported.
fn residual_options(tol: f64) -> QuadOptions {
    QuadOptions { abs_tol: (tol * 1e-3).max(1e-14), rel_tol: 1e-10, initial_panels: 1, max_evals: 400_000 }
}

/// Adaptive quadrature of `int_a^b F(x) e^(i Phi(x)) dx`, starting from at
/// least 20 Kronrod nodes per period of the fastest local oscillation
/// `max_rate >= |Phi'|`.
pub fn quadrature_oracle(
    f: &(dyn Fn(f64) -> f64 + Sync),
    a: f64,
    b: f64,
    phase: &(dyn Fn(f64) -> f64 + Sync),
    max_rate: f64,
    tol: f64,
) -> Result<OracleValue> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let opts = QuadOptions { abs_tol: tol, rel_tol: 0.0, initial_panels: 1, max_evals: 20_000_000 };
    oracle_impl(f, a, b, phase, max_rate, opts, true)
}

fn abs_integral(
    mut f: impl FnMut(f64) -> Result<f64>,
    a: f64,
    b: f64,
) -> Result<f64> {
    let mut failure = None;
    let opts = QuadOptions { abs_tol: 1e-15, rel_tol: 1e-8, initial_panels: 8, max_evals: 400_000 };
    let r = integrate(
        |x: f64| match f(x) {
            Ok(v) => v.abs(),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        opts,
    );
    match failure {
        Some(e) => Err(e),
        None => Ok(r.value + r.error),
    }
}

/// Constant-frequency series, stopping once the bound drops below `tol` or
/// after `n_max` terms.
pub fn ibp_series(
    f: &dyn Derivatives,
    a: f64,
    b: f64,
    omega: f64,
    n_max: usize,
    tol: f64,
) -> Result<IbpSeriesResult> {
    if omega == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let (ea, eb) = (Complex64::from_polar(1.0, omega * a), Complex64::from_polar(1.0, omega * b));
    let step = I / omega;
    let mut coef = step;
    let mut sum = Complex64::new(0.0, 0.0);
    let mut partial_sums = Vec::new();
    let mut bounds = Vec::new();
    for n in 0..n_max {
        let fa = f.derivative(n, a)?;
        let fb = f.derivative(n, b)?;
        sum -= coef * (eb * fb - ea * fa);
        coef *= step;
        let order = n + 1;
        let bound = abs_integral(|x| f.derivative(order, x), a, b)? / omega.abs().powi(order as i32);
        partial_sums.push(sum);
        bounds.push(bound);
        if bound <= tol {
            break;
        }
    }
    let truncation_bound = *bounds.last().unwrap();
    Ok(IbpSeriesResult {
        value: sum,
        n_terms: partial_sums.len(),
        truncation_bound,
        converged: truncation_bound <= tol,
        partial_sums,
        bounds,
        remainder: None,
        error_estimate: truncation_bound,
    })
}

/// Phase `Phi(x)` with its rate `omega = Phi'` and `omega'`.
pub struct VaryingFrequency<'a> {
    pub phase: &'a (dyn Fn(f64) -> f64 + Sync),
    pub omega: &'a (dyn Fn(f64) -> f64 + Sync),
    pub omega_prime: &'a (dyn Fn(f64) -> f64 + Sync),
}

const RESONANCE_SAMPLES: usize = 2049;

/// Refuse when `omega(x)` vanishes or changes sign on `[a, b]`; returns the
/// largest sampled `|omega|`.
fn check_no_resonance(omega: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Result<f64> {
    let mut prev = omega(a);
    let mut max = prev.abs();
    if prev == 0.0 || !prev.is_finite() {
        return Err(Error::Resonance(a));
    }
    for i in 1..RESONANCE_SAMPLES {
        let x = a + (b - a) * i as f64 / (RESONANCE_SAMPLES - 1) as f64;
        let w = omega(x);
        if w == 0.0 || !w.is_finite() || w.signum() != prev.signum() {
            return Err(Error::Resonance(x));
        }
        max = max.max(w.abs());
        prev = w;
    }
    Ok(max)
}

/// Varying-frequency series. After `n` orders the remainder
/// `int (i/omega)^n F^(n) e^(i Phi)` is evaluated by quadrature and reported
/// separately; the bound is `int |F^(n)| / |omega|^n`.
pub fn ibp_series_varfreq(
    f: &dyn Derivatives,
    a: f64,
    b: f64,
    freq: &VaryingFrequency,
    n_max: usize,
    tol: f64,
) -> Result<IbpSeriesResult> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let max_rate = check_no_resonance(freq.omega, a, b)?;
    let quad = residual_options(tol);
    let boundary = |n: usize, x: f64| -> Result<Complex64> {
        let w = (freq.omega)(x);
        Ok((I / w).powu(n as u32 + 1) * f.derivative(n, x)? * Complex64::from_polar(1.0, (freq.phase)(x)))
    };
    let mut sum = Complex64::new(0.0, 0.0);
    let mut quad_error = 0.0;
    let mut partial_sums = Vec::new();
    let mut bounds = Vec::new();
    for n in 0..n_max {
        sum -= boundary(n, b)? - boundary(n, a)?;
        // d/dx (i/omega)^(n+1) = -(n+1) i^(n+1) omega' / omega^(n+2)
        let mut failure = None;
        let r = oracle_impl(
            |x| {
                let w = (freq.omega)(x);
                match f.derivative(n, x) {
                    Ok(d) => -((n + 1) as f64) * (freq.omega_prime)(x) * d / w.powi(n as i32 + 2),
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            a,
            b,
            freq.phase,
            max_rate,
            quad,
            false,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        sum += I.powu(n as u32 + 1) * r.value;
        quad_error += r.error;
        let order = n + 1;
        let bound = abs_integral(
            |x| Ok(f.derivative(order, x)? / (freq.omega)(x).abs().powi(order as i32)),
            a,
            b,
        )?;
        partial_sums.push(sum);
        bounds.push(bound);
        if bound <= tol {
            break;
        }
    }
    let order = partial_sums.len();
    let mut failure = None;
    let rem = oracle_impl(
        |x| match f.derivative(order, x) {
            Ok(d) => d / (freq.omega)(x).powi(order as i32),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        a,
        b,
        freq.phase,
        max_rate,
        quad,
        false,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    let remainder = I.powu(order as u32) * rem.value;
    let truncation_bound = *bounds.last().unwrap();
    Ok(IbpSeriesResult {
        value: sum,
        n_terms: order,
        truncation_bound,
        converged: truncation_bound <= tol,
        partial_sums,
        bounds,
        remainder: Some(remainder),
        error_estimate: remainder.norm() + quad_error + rem.error,
    })
}

/// First-order amplitude integrand of the adiabatic search,
/// `<phi_1| dH/dt |phi_0> / (E_1 - E_0)`, along the local schedule, with the
/// gap as frequency and `Phi_10` as phase. Uses the closed-form `s(t)`.
pub struct AdiabaticAmplitude<'a> {
    inst: &'a ProblemInstance,
    schedule: &'a Schedule,
}

impl<'a> AdiabaticAmplitude<'a> {
    pub fn new(inst: &'a ProblemInstance, schedule: &'a Schedule) -> Result<Self> {
        if inst.variant != Variant::Adiabatic {
            return Err(Error::VariantMismatch { expected: "adiabatic" });
        }
        Ok(Self { inst, schedule })
    }

    pub fn total_time(&self) -> f64 {
        self.schedule.total_time
    }

    fn s(&self, t: f64) -> f64 {
        self.schedule.s_exact(t)
    }

    pub fn frequency(&self, t: f64) -> f64 {
        adiabatic_gap(self.inst.n_dim, self.inst.e_bar, self.s(t))
    }

    /// `g'(s) ds/dt = -a E delta (1 - 2s) g`, `a = (N-1)/N`.
    pub fn frequency_derivative(&self, t: f64) -> f64 {
        let n = self.inst.n_dim as f64;
        let s = self.s(t);
        let a = (n - 1.0) / n;
        -a * self.inst.e_bar * self.schedule.delta * (1.0 - 2.0 * s) * self.frequency(t)
    }

    pub fn phase(&self, t: f64) -> f64 {
        self.schedule.phase_10_of_s(self.s(t))
    }

    /// `(ds/dt) <phi_1|Hf - H0|phi_0> / g = delta g c(s) / (2E)`.
    pub fn integrand(&self, t: f64) -> f64 {
        let s = self.s(t);
        let c = adiabatic_coupling(self.inst, s).unwrap_or(f64::NAN);
        self.schedule.delta * adiabatic_gap(self.inst.n_dim, self.inst.e_bar, s) * c / (2.0 * self.inst.e_bar)
    }

    /// `A_1(t) = |integrand| / g`.
    pub fn amplitude(&self, t: f64) -> f64 {
        (self.integrand(t) / self.frequency(t)).abs()
    }

    /// Finite-difference derivatives of [`Self::integrand`] on `[0, T]`.
    pub fn derivatives(&self) -> FiniteDifference<impl Fn(f64) -> f64 + Sync + '_> {
        let w = self.inst.e_bar / (self.inst.n_dim as f64).sqrt();
        FiniteDifference::for_frequency(move |t| self.integrand(t), w).within(0.0, self.total_time())
    }
}
