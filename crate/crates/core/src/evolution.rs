//! Schrödinger propagation `i d/dt |psi> = [H(t) + eps h(t)] |psi>`.
//!
//! The default integrator is the exponential midpoint rule
//! `psi <- exp(-i H(t + dt/2) dt) psi`. The action of the exponential is
//! evaluated with a scaled Taylor series run to machine precision, so each
//! step is unitary to roundoff. Step size is capped by the noise cut-off and
//! the spectral spread, and controlled by step doubling.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ProblemInstance, Schedule, Variant};
use crate::noise::{build_path, NoiseModel, NoisePath};
use crate::rng;

/// Fraction of a period resolved per step (`dt <= c / omega`).
pub const RESOLUTION: f64 = 0.1;

/// Real symmetric, time-dependent Hamiltonian.
pub trait Hamiltonian: Sync {
    fn dim(&self) -> usize;

    /// Overwrite `out` with `H(t)`.
    fn eval_into(&self, t: f64, out: &mut DMatrix<f64>, scratch: &mut Vec<f64>);

    /// Upper bound on `max |E_k - E_l|` over the run.
    fn spectral_spread(&self) -> f64;

    /// Highest frequency of any explicit time dependence.
    fn drive_frequency(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct ConstantHamiltonian {
    h: DMatrix<f64>,
    spread: f64,
}

impl ConstantHamiltonian {
    pub fn new(h: DMatrix<f64>) -> Self {
        let eig = h.symmetric_eigenvalues();
        let spread = if eig.is_empty() { 0.0 } else { eig.max() - eig.min() };
        Self { h, spread }
    }
}

impl Hamiltonian for ConstantHamiltonian {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn eval_into(&self, _t: f64, out: &mut DMatrix<f64>, _scratch: &mut Vec<f64>) {
        out.copy_from(&self.h);
    }

    fn spectral_spread(&self) -> f64 {
        self.spread
    }
}

/// `E [I - (1 - s(t)) |psi0><psi0| - s(t) |m><m|]`.
#[derive(Debug, Clone)]
pub struct ScheduledHamiltonian {
    pub inst: ProblemInstance,
    pub schedule: Schedule,
}

impl Hamiltonian for ScheduledHamiltonian {
    fn dim(&self) -> usize {
        self.inst.n_dim
    }

    fn eval_into(&self, t: f64, out: &mut DMatrix<f64>, _scratch: &mut Vec<f64>) {
        let s = self.schedule.s_at(t);
        let e = self.inst.e_bar;
        let n = self.inst.n_dim;
        out.fill(-e * (1.0 - s) / n as f64);
        for k in 0..n {
            out[(k, k)] += e;
        }
        let m = self.inst.marked;
        out[(m, m)] -= e * s;
    }

    fn spectral_spread(&self) -> f64 {
        self.inst.e_bar
    }

    fn drive_frequency(&self) -> f64 {
        // s(t) varies on the scale of the total time
        1.0 / self.schedule.total_time
    }
}

/// `H(t) + epsilon h(t)`.
pub struct NoisyHamiltonian<'a, H: Hamiltonian> {
    pub base: &'a H,
    pub path: &'a NoisePath,
    pub epsilon: f64,
}

impl<H: Hamiltonian> Hamiltonian for NoisyHamiltonian<'_, H> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval_into(&self, t: f64, out: &mut DMatrix<f64>, scratch: &mut Vec<f64>) {
        self.base.eval_into(t, out, scratch);
        if self.epsilon != 0.0 {
            self.path.add_scaled_into(t, self.epsilon, out, scratch);
        }
    }

    fn spectral_spread(&self) -> f64 {
        // semicircle diameter with headroom for finite-N fluctuations
        self.base.spectral_spread() + 2.4 * self.epsilon * self.path.model().semicircle_radius()
    }

    fn drive_frequency(&self) -> f64 {
        if self.epsilon > 0.0 {
            self.base.drive_frequency().max(self.path.model().omega0)
        } else {
            self.base.drive_frequency()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    MagnusMidpoint,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub method: Method,
    /// Step cap in units of `1/E`.
    pub dt_max: f64,
    /// Local error target per unit time.
    pub tol: f64,
    pub renormalize: bool,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self { method: Method::MagnusMidpoint, dt_max: 0.05, tol: 1e-6, renormalize: false }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.dt_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "propagator needs tol > 0 and dt_max > 0 (got {}, {})",
                self.tol, self.dt_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub state: DVector<Complex64>,
    pub steps: usize,
    pub rejected: usize,
    /// `| ||psi(T)|| - 1 |`, measured before any renormalization.
    pub norm_drift: f64,
}

/// Split complex vector, so real matrices act with real BLAS-style products.
#[derive(Clone)]
struct Split {
    re: DVector<f64>,
    im: DVector<f64>,
}

impl Split {
    fn from_complex(v: &DVector<Complex64>) -> Self {
        Self { re: v.map(|z| z.re), im: v.map(|z| z.im) }
    }

    fn to_complex(&self) -> DVector<Complex64> {
        DVector::from_fn(self.re.len(), |i, _| Complex64::new(self.re[i], self.im[i]))
    }

    fn norm_sq(&self) -> f64 {
        self.re.norm_squared() + self.im.norm_squared()
    }

    fn rotate(&mut self, theta: f64) {
        // multiply by exp(-i theta)
        let (s, c) = theta.sin_cos();
        for i in 0..self.re.len() {
            let (x, y) = (self.re[i], self.im[i]);
            self.re[i] = c * x + s * y;
            self.im[i] = c * y - s * x;
        }
    }

    fn dist(&self, other: &Split) -> f64 {
        ((&self.re - &other.re).norm_squared() + (&self.im - &other.im).norm_squared()).sqrt()
    }
}

struct Workspace {
    h: DMatrix<f64>,
    scratch: Vec<f64>,
    tmp_re: DVector<f64>,
    tmp_im: DVector<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
            scratch: Vec::new(),
            tmp_re: DVector::zeros(n),
            tmp_im: DVector::zeros(n),
        }
    }
}

fn one_norm(h: &DMatrix<f64>) -> f64 {
    h.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `v <- exp(-i a dt) v` for real symmetric `a`, by Taylor series on
/// `ceil(||a dt||_1)` substeps, each summed until terms drop below roundoff.
fn expm_action(a: &DMatrix<f64>, dt: f64, v: &mut Split, ws: &mut Workspace) {
    let norm = one_norm(a) * dt.abs();
    let substeps = norm.ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let n = v.re.len();
    let mut term = Split { re: DVector::zeros(n), im: DVector::zeros(n) };
    for _ in 0..substeps {
        term.re.copy_from(&v.re);
        term.im.copy_from(&v.im);
        for k in 1..60 {
            // term <- (-i a h / k) term: (x + iy) -> (a y - i a x) h / k
            let c = h / k as f64;
            ws.tmp_re.gemv(c, a, &term.im, 0.0);
            ws.tmp_im.gemv(-c, a, &term.re, 0.0);
            std::mem::swap(&mut term.re, &mut ws.tmp_re);
            std::mem::swap(&mut term.im, &mut ws.tmp_im);
            v.re += &term.re;
            v.im += &term.im;
            let tn = term.norm_sq();
            if tn <= 1e-34 * v.norm_sq() {
                break;
            }
        }
    }
}

/// Evaluate `H(t)`, shift out its mean eigenvalue and return the shift.
fn load_shifted(ham: &impl Hamiltonian, t: f64, ws: &mut Workspace) -> Result<f64> {
    ham.eval_into(t, &mut ws.h, &mut ws.scratch);
    if ws.h.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(t));
    }
    let n = ws.h.nrows();
    let mu = ws.h.trace() / n as f64;
    for k in 0..n {
        ws.h[(k, k)] -= mu;
    }
    Ok(mu)
}

/// One step from `t` to `t + dt`; returns the accumulated global phase.
fn step(
    ham: &impl Hamiltonian,
    method: Method,
    t: f64,
    dt: f64,
    v: &mut Split,
    ws: &mut Workspace,
) -> Result<f64> {
    match method {
        Method::MagnusMidpoint => {
            let mu = load_shifted(ham, t + 0.5 * dt, ws)?;
            let a = std::mem::replace(&mut ws.h, DMatrix::zeros(0, 0));
            expm_action(&a, dt, v, ws);
            ws.h = a;
            Ok(mu * dt)
        }
        Method::Rk4 => {
            // classical RK4 on dpsi/dt = -i H psi, no shift
            let deriv = |t: f64, x: &Split, ws: &mut Workspace| -> Result<Split> {
                ham.eval_into(t, &mut ws.h, &mut ws.scratch);
                if ws.h.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(t));
                }
                Ok(Split { re: &ws.h * &x.im, im: -(&ws.h * &x.re) })
            };
            let axpy = |x: &Split, k: &Split, c: f64| Split {
                re: &x.re + &k.re * c,
                im: &x.im + &k.im * c,
            };
            let k1 = deriv(t, v, ws)?;
            let k2 = deriv(t + 0.5 * dt, &axpy(v, &k1, 0.5 * dt), ws)?;
            let k3 = deriv(t + 0.5 * dt, &axpy(v, &k2, 0.5 * dt), ws)?;
            let k4 = deriv(t + dt, &axpy(v, &k3, dt), ws)?;
            let c = dt / 6.0;
            v.re += (&k1.re + &k2.re * 2.0 + &k3.re * 2.0 + &k4.re) * c;
            v.im += (&k1.im + &k2.im * 2.0 + &k3.im * 2.0 + &k4.im) * c;
            Ok(0.0)
        }
    }
}

/// Step cap `min(dt_max, c / omega_drive, c / spread)`.
pub fn step_cap(ham: &impl Hamiltonian, cfg: &PropagatorConfig) -> f64 {
    let mut cap = cfg.dt_max;
    let drive = ham.drive_frequency();
    if drive > 0.0 {
        cap = cap.min(RESOLUTION / drive);
    }
    let spread = ham.spectral_spread();
    if spread > 0.0 {
        cap = cap.min(RESOLUTION / spread);
    }
    cap
}

/// Propagate `psi0` from `t = 0` to `t = total_time`.
pub fn propagate(
    ham: &impl Hamiltonian,
    psi0: &DVector<Complex64>,
    total_time: f64,
    cfg: &PropagatorConfig,
) -> Result<Propagation> {
    cfg.validate()?;
    let n = ham.dim();
    if psi0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: psi0.len() });
    }
    let norm0 = psi0.norm();
    if (norm0 - 1.0).abs() > 1e-12 {
        return Err(Error::NotNormalized(norm0));
    }
    if !(total_time >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative run time {total_time}")));
    }
    let mut v = Split::from_complex(psi0);
    let mut ws = Workspace::new(n);
    let cap = step_cap(ham, cfg);
    let order_inv = match cfg.method {
        Method::MagnusMidpoint => 0.5,
        Method::Rk4 => 0.25,
    };
    let min_dt = 1e-12 * total_time.max(1.0);
    let mut t = 0.0;
    let mut phase = 0.0;
    let mut dt_try = cap;
    let (mut steps, mut rejected) = (0usize, 0usize);
    while t < total_time {
        let remaining = total_time - t;
        let dt = dt_try.min(cap).min(remaining);
        let last = dt >= remaining;
        let mut full = v.clone();
        let p_full = step(ham, cfg.method, t, dt, &mut full, &mut ws)?;
        let mut half = v.clone();
        let p1 = step(ham, cfg.method, t, 0.5 * dt, &mut half, &mut ws)?;
        let p2 = step(ham, cfg.method, t + 0.5 * dt, 0.5 * dt, &mut half, &mut ws)?;
        // compare in a common gauge
        full.rotate(p_full - p1 - p2);
        let err = full.dist(&half);
        let target = cfg.tol * dt;
        if err <= target || dt <= min_dt {
            v = half;
            phase += p1 + p2;
            t = if last { total_time } else { t + dt };
            steps += 1;
            let grow = if err > 0.0 { 0.9 * (target / err).powf(order_inv) } else { 2.0 };
            dt_try = dt * grow.clamp(0.2, 2.0);
        } else {
            rejected += 1;
            dt_try = dt * (0.9 * (target / err).powf(order_inv)).clamp(0.1, 0.9);
        }
    }
    v.rotate(phase);
    let norm = v.norm_sq().sqrt();
    let norm_drift = (norm - 1.0).abs();
    let mut state = v.to_complex();
    if cfg.renormalize {
        state /= Complex64::new(norm, 0.0);
    }
    Ok(Propagation { state, steps, rejected, norm_drift })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PerrDefinition {
    /// `1 - |<psi_ideal(T)|psi(T)>|^2`.
    VsIdealState,
    /// `1 - |<phi_0(T)|psi(T)>|^2 = 1 - |<m|psi(T)>|^2`.
    VsInstantGround,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialResult {
    pub trial_index: u64,
    pub seed_used: u64,
    #[serde(skip)]
    pub final_state: DVector<Complex64>,
    /// `|<psi_ideal(T)|psi(T)>|^2` against the noiseless propagated state.
    pub fidelity: f64,
    pub p_err: f64,
    pub p_err_definition: PerrDefinition,
    /// `|<m|psi(T)>|^2`.
    pub success_probability: f64,
    pub norm_drift: f64,
    pub steps: usize,
}

impl TrialResult {
    /// Error probability under the definition not used for `p_err`.
    pub fn p_err_alt(&self) -> f64 {
        match self.p_err_definition {
            PerrDefinition::VsIdealState => 1.0 - self.success_probability,
            PerrDefinition::VsInstantGround => 1.0 - self.fidelity,
        }
    }
}

enum Ideal {
    Analog(ConstantHamiltonian),
    Adiabatic(ScheduledHamiltonian),
}

/// Everything shared by the trials of one (instance, noise model) pair: the
/// ideal Hamiltonian, the run time and the noiseless final state.
pub struct TrialContext {
    pub inst: ProblemInstance,
    /// Noise model with enough modes to cover the run without revival.
    pub noise: NoiseModel,
    pub cfg: PropagatorConfig,
    pub total_time: f64,
    pub ideal_final: DVector<Complex64>,
    ideal: Ideal,
}

impl TrialContext {
    pub fn new(inst: &ProblemInstance, noise: &NoiseModel, cfg: &PropagatorConfig) -> Result<Self> {
        inst.validate()?;
        noise.validate()?;
        cfg.validate()?;
        if noise.n_dim != inst.n_dim {
            return Err(Error::DimensionMismatch { expected: inst.n_dim, got: noise.n_dim });
        }
        let (ideal, total_time) = match inst.variant {
            Variant::Analog => (
                Ideal::Analog(ConstantHamiltonian::new(model::analog_hamiltonian(inst)?)),
                inst.analog_time(),
            ),
            Variant::Adiabatic => {
                let schedule = model::local_schedule(inst)?;
                let t = schedule.total_time;
                (Ideal::Adiabatic(ScheduledHamiltonian { inst: inst.clone(), schedule }), t)
            }
        };
        let psi0 = inst.initial_state();
        let ideal_final = match &ideal {
            Ideal::Analog(h) => propagate(h, &psi0, total_time, cfg)?.state,
            Ideal::Adiabatic(h) => propagate(h, &psi0, total_time, cfg)?.state,
        };
        Ok(Self {
            inst: inst.clone(),
            noise: noise.with_modes_covering(total_time),
            cfg: *cfg,
            total_time,
            ideal_final,
            ideal,
        })
    }

    pub fn schedule(&self) -> Option<&Schedule> {
        match &self.ideal {
            Ideal::Adiabatic(h) => Some(&h.schedule),
            Ideal::Analog(_) => None,
        }
    }

    pub fn path_seed(&self, trial_index: u64) -> u64 {
        rng::trial_seed(self.noise.seed, trial_index)
    }

    pub fn run(&self, trial_index: u64) -> Result<TrialResult> {
        let seed = self.path_seed(trial_index);
        self.run_inner(trial_index, seed).map_err(|e| Error::Trial {
            trial: trial_index,
            seed,
            source: Box::new(e),
        })
    }

    fn run_inner(&self, trial_index: u64, seed: u64) -> Result<TrialResult> {
        let path = build_path(&self.noise.with_seed(seed))?;
        let psi0 = self.inst.initial_state();
        let eps = self.noise.epsilon;
        let prop = match &self.ideal {
            Ideal::Analog(h) => {
                let noisy = NoisyHamiltonian { base: h, path: &path, epsilon: eps };
                propagate(&noisy, &psi0, self.total_time, &self.cfg)?
            }
            Ideal::Adiabatic(h) => {
                let noisy = NoisyHamiltonian { base: h, path: &path, epsilon: eps };
                propagate(&noisy, &psi0, self.total_time, &self.cfg)?
            }
        };
        let psi = prop.state;
        let fidelity = self.ideal_final.dotc(&psi).norm_sqr();
        let success = psi[self.inst.marked].norm_sqr();
        let (p_err, def) = match self.inst.variant {
            Variant::Analog => (1.0 - fidelity, PerrDefinition::VsIdealState),
            Variant::Adiabatic => (1.0 - success, PerrDefinition::VsInstantGround),
        };
        Ok(TrialResult {
            trial_index,
            seed_used: seed,
            final_state: psi,
            fidelity,
            p_err: p_err.clamp(0.0, 1.0),
            p_err_definition: def,
            success_probability: success,
            norm_drift: prop.norm_drift,
            steps: prop.steps,
        })
    }
}

/// Single trial; builds a fresh context (prefer [`TrialContext`] for many trials).
pub fn run_trial(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    trial_index: u64,
    cfg: &PropagatorConfig,
) -> Result<TrialResult> {
    TrialContext::new(inst, noise, cfg)?.run(trial_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::Shape;

    fn expm_eigen(h: &DMatrix<f64>, t: f64) -> DMatrix<Complex64> {
        let eig = h.clone().symmetric_eigen();
        let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
        let d = DMatrix::from_diagonal(
            &eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * t)),
        );
        &v * d * v.adjoint()
    }

    fn random_unit(n: usize, seed: u64) -> DVector<Complex64> {
        let mut x = seed;
        let v = DVector::from_fn(n, |_, _| {
            x = rng::splitmix64(x);
            let a = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            x = rng::splitmix64(x);
            let b = (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
            Complex64::new(a, b)
        });
        let nrm = v.norm();
        v / Complex64::new(nrm, 0.0)
    }

    #[test]
    fn taylor_action_matches_eigen() {
        let inst = ProblemInstance::analog(8, 1.0, 0).unwrap();
        let path = build_path(&NoiseModel::constant_snr(8, 1.0, 0.3, 2.0, Shape::WhiteSinc, 16, 5).unwrap())
            .unwrap();
        let h = model::analog_hamiltonian(&inst).unwrap() + path.eval_at(0.7) * 0.3;
        let v0 = random_unit(8, 3);
        for &dt in &[0.01, 0.7, 5.0] {
            let mut v = Split::from_complex(&v0);
            let mut ws = Workspace::new(8);
            expm_action(&h, dt, &mut v, &mut ws);
            let exact = expm_eigen(&h, dt) * &v0;
            assert!((v.to_complex() - exact).norm() < 1e-13, "dt = {dt}");
        }
    }

    #[test]
    fn null_evolution() {
        let h = ConstantHamiltonian::new(DMatrix::zeros(4, 4));
        let psi = random_unit(4, 1);
        let out = propagate(&h, &psi, 3.0, &PropagatorConfig::default()).unwrap();
        assert!((out.state - psi).norm() < 1e-15);
    }

    #[test]
    fn diagonal_phases() {
        let e = [0.3, -1.0, 2.5];
        let h = ConstantHamiltonian::new(DMatrix::from_diagonal(&DVector::from_row_slice(&e)));
        let psi = random_unit(3, 9);
        let t = 7.3;
        let out = propagate(&h, &psi, t, &PropagatorConfig::default()).unwrap();
        for k in 0..3 {
            let want = psi[k] * Complex64::from_polar(1.0, -e[k] * t);
            assert!((out.state[k] - want).norm() < 1e-10);
        }
    }

    #[test]
    fn ideal_analog_reaches_marked_state() {
        for &n in &[16usize, 64] {
            let inst = ProblemInstance::analog(n, 1.0, n / 3).unwrap();
            let h = ConstantHamiltonian::new(model::analog_hamiltonian(&inst).unwrap());
            let out = propagate(&h, &inst.initial_state(), inst.analog_time(), &PropagatorConfig::default())
                .unwrap();
            // two-level oracle: rotation by x T in the (m_perp, m) plane
            let p = out.state[inst.marked].norm_sqr();
            assert!((p - 1.0).abs() < 1e-8, "n = {n}, p = {p}");
        }
    }

    #[test]
    fn rejects_bad_input() {
        let h = ConstantHamiltonian::new(DMatrix::zeros(2, 2));
        let bad = DVector::from_element(2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            propagate(&h, &bad, 1.0, &PropagatorConfig::default()),
            Err(Error::NotNormalized(_))
        ));
        let cfg = PropagatorConfig { tol: 0.0, ..PropagatorConfig::default() };
        assert!(propagate(&h, &random_unit(2, 0), 1.0, &cfg).is_err());
    }

    struct NanHam;
    impl Hamiltonian for NanHam {
        fn dim(&self) -> usize {
            2
        }
        fn eval_into(&self, t: f64, out: &mut DMatrix<f64>, _s: &mut Vec<f64>) {
            out.fill(if t > 0.5 { f64::NAN } else { 0.0 });
        }
        fn spectral_spread(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn nan_is_reported() {
        let r = propagate(&NanHam, &random_unit(2, 0), 1.0, &PropagatorConfig::default());
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    fn noisy_analog(n: usize, eps: f64, omega0: f64) -> (ProblemInstance, NoiseModel) {
        let inst = ProblemInstance::analog(n, 1.0, 0).unwrap();
        let noise = NoiseModel::constant_snr(n, 1.0, eps, omega0, Shape::WhiteSinc, 64, 17).unwrap();
        (inst, noise)
    }

    #[test]
    fn magnus_and_rk4_agree() {
        let (inst, noise) = noisy_analog(8, 0.1, 3.0);
        let path = build_path(&noise).unwrap();
        let base = ConstantHamiltonian::new(model::analog_hamiltonian(&inst).unwrap());
        let h = NoisyHamiltonian { base: &base, path: &path, epsilon: 0.1 };
        let t = inst.analog_time();
        let m = propagate(&h, &inst.initial_state(), t, &PropagatorConfig::default()).unwrap();
        let cfg = PropagatorConfig { method: Method::Rk4, tol: 1e-9, ..PropagatorConfig::default() };
        let r = propagate(&h, &inst.initial_state(), t, &cfg).unwrap();
        assert!((m.state - r.state).norm() < 1e-6);
        assert!(m.norm_drift < 1e-9);
    }

    #[test]
    fn step_halving_converges() {
        let (inst, noise) = noisy_analog(8, 0.05, 10.0);
        let cfg = PropagatorConfig::default();
        let a = run_trial(&inst, &noise, 3, &cfg).unwrap();
        let half = PropagatorConfig { dt_max: cfg.dt_max / 2.0, ..cfg };
        let b = run_trial(&inst, &noise, 3, &half).unwrap();
        assert!((a.fidelity - b.fidelity).abs() < 1e-6);
    }

    struct Shifted<'a, H: Hamiltonian>(&'a H, f64);
    impl<H: Hamiltonian> Hamiltonian for Shifted<'_, H> {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn eval_into(&self, t: f64, out: &mut DMatrix<f64>, s: &mut Vec<f64>) {
            self.0.eval_into(t, out, s);
            for k in 0..out.nrows() {
                out[(k, k)] += self.1;
            }
        }
        fn spectral_spread(&self) -> f64 {
            self.0.spectral_spread()
        }
        fn drive_frequency(&self) -> f64 {
            self.0.drive_frequency()
        }
    }

    #[test]
    fn gauge_shift_is_global_phase() {
        let (inst, noise) = noisy_analog(6, 0.1, 2.0);
        let path = build_path(&noise).unwrap();
        let base = ConstantHamiltonian::new(model::analog_hamiltonian(&inst).unwrap());
        let h = NoisyHamiltonian { base: &base, path: &path, epsilon: 0.1 };
        let t = inst.analog_time();
        let cfg = PropagatorConfig::default();
        let a = propagate(&h, &inst.initial_state(), t, &cfg).unwrap().state;
        let b = propagate(&Shifted(&h, 3.7), &inst.initial_state(), t, &cfg).unwrap().state;
        let overlap = a.dotc(&b).norm_sqr();
        assert!((overlap - 1.0).abs() < 1e-10);
        let pa = a[0].norm_sqr();
        let pb = b[0].norm_sqr();
        assert!((pa - pb).abs() < 1e-10);
    }

    #[test]
    fn trials_are_deterministic() {
        let (inst, noise) = noisy_analog(4, 0.1, 1.0);
        let cfg = PropagatorConfig::default();
        let a = run_trial(&inst, &noise, 11, &cfg).unwrap();
        let b = run_trial(&inst, &noise, 11, &cfg).unwrap();
        assert_eq!(a.final_state, b.final_state);
        assert_eq!(a.p_err, b.p_err);
        assert_eq!(a.seed_used, b.seed_used);
        let c = run_trial(&inst, &noise, 12, &cfg).unwrap();
        assert_ne!(a.p_err, c.p_err);
    }

    #[test]
    fn noiseless_trials() {
        let (inst, noise) = noisy_analog(16, 0.0, 1.0);
        let r = run_trial(&inst, &noise, 0, &PropagatorConfig::default()).unwrap();
        assert!(r.p_err < 1e-12);
        assert!(r.success_probability > 1.0 - 1e-8);

        let inst = ProblemInstance::adiabatic(8, 1.0, 2, 0.2).unwrap();
        let noise = NoiseModel::constant_snr(8, 1.0, 0.0, 5.0, Shape::WhiteSinc, 64, 1).unwrap();
        let r = run_trial(&inst, &noise, 0, &PropagatorConfig::default()).unwrap();
        assert!(r.p_err <= 0.04, "p_err = {}", r.p_err);
        assert!(r.norm_drift < 1e-9);
    }
}
