//! Local adiabatic schedule `ds/dt = delta g(s)^2 / (2 E)` and adiabaticity
//! diagnostics.

use std::io::Write;

use serde::Serialize;

use super::{adiabatic_coupling, adiabatic_gap, adiabatic_spectrum, ProblemInstance, Variant};
use crate::error::{Error, Result};
use crate::interp::Hermite;
use crate::quadrature::gk15;

/// Number of s-intervals used to tabulate `t(s)`.
pub const SCHEDULE_NODES: usize = 4096;

#[derive(Debug, Clone)]
pub struct Schedule {
    pub n_dim: usize,
    pub e_bar: f64,
    pub delta: f64,
    pub total_time: f64,
    t_of_s: Hermite,
    s_of_t: Hermite,
}

/// Tabulate `t(s) = int_0^s 2E / (delta g^2)` by Kronrod quadrature on each
/// interval and invert it with a Hermite interpolant (slopes `1 / t'(s)`).
pub fn local_schedule(inst: &ProblemInstance) -> Result<Schedule> {
    if inst.variant != Variant::Adiabatic {
        return Err(Error::VariantMismatch { expected: "adiabatic" });
    }
    let delta = inst.delta()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidInstance("delta must be positive".into()));
    }
    let (n, e) = (inst.n_dim, inst.e_bar);
    let rate = |s: f64| {
        let g = adiabatic_gap(n, e, s);
        2.0 * e / (delta * g * g)
    };
    let mut f = rate;
    let nodes = SCHEDULE_NODES + 1;
    let s: Vec<f64> = (0..nodes).map(|i| i as f64 / SCHEDULE_NODES as f64).collect();
    let mut t = Vec::with_capacity(nodes);
    t.push(0.0);
    for w in s.windows(2) {
        let (piece, _) = gk15(&mut f, w[0], w[1]);
        let last = *t.last().unwrap();
        t.push(last + piece);
    }
    let dt_ds: Vec<f64> = s.iter().map(|&x| rate(x)).collect();
    let ds_dt: Vec<f64> = dt_ds.iter().map(|v| 1.0 / v).collect();
    let total_time = t[nodes - 1];
    Ok(Schedule {
        n_dim: n,
        e_bar: e,
        delta,
        total_time,
        t_of_s: Hermite::new(s.clone(), t.clone(), dt_ds),
        s_of_t: Hermite::new(t, s, ds_dt),
    })
}

impl Schedule {
    pub fn s_at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= self.total_time {
            1.0
        } else {
            self.s_of_t.eval(t).clamp(0.0, 1.0)
        }
    }

    pub fn t_at(&self, s: f64) -> f64 {
        self.t_of_s.eval(s.clamp(0.0, 1.0))
    }

    /// Prescribed rate `delta g(s)^2 / (2E)`.
    pub fn ds_dt(&self, s: f64) -> f64 {
        let g = adiabatic_gap(self.n_dim, self.e_bar, s);
        self.delta * g * g / (2.0 * self.e_bar)
    }

    /// Slope of the interpolated `s(t)`.
    pub fn ds_dt_interpolated(&self, t: f64) -> f64 {
        self.s_of_t.derivative(t.clamp(0.0, self.total_time))
    }

    pub fn gap_at(&self, t: f64) -> f64 {
        adiabatic_gap(self.n_dim, self.e_bar, self.s_at(t))
    }

    /// Time grid nodes of the tabulation.
    pub fn time_nodes(&self) -> &[f64] {
        self.s_of_t.nodes()
    }

    /// `t(s)` from the closed-form antiderivative, for cross-checks.
    pub fn t_exact(&self, s: f64) -> f64 {
        let n = self.n_dim as f64;
        let a = (n - 1.0) / n;
        let kappa = (n - 1.0).sqrt();
        let u = 2.0 * s - 1.0;
        ((kappa * u).atan() + kappa.atan()) / (self.delta * self.e_bar * (a * (1.0 - a)).sqrt())
    }

    /// Inverse of [`Schedule::t_exact`]; smooth in `t`, unlike the table.
    pub fn s_exact(&self, t: f64) -> f64 {
        let n = self.n_dim as f64;
        let a = (n - 1.0) / n;
        let kappa = (n - 1.0).sqrt();
        let t = t.clamp(0.0, self.total_time);
        let arg = t * self.delta * self.e_bar * (a * (1.0 - a)).sqrt() - kappa.atan();
        (0.5 * (1.0 + arg.tan() / kappa)).clamp(0.0, 1.0)
    }

    /// `Phi_10(t) = int_0^t (E_1 - E_0) dt'`, via the closed form in `s`:
    /// `(asinh(sqrt(N-1)(2s-1)) + asinh(sqrt(N-1))) / (delta sqrt((N-1)/N))`.
    pub fn phase_10(&self, t: f64) -> f64 {
        self.phase_10_of_s(self.s_at(t))
    }

    pub fn phase_10_of_s(&self, s: f64) -> f64 {
        let n = self.n_dim as f64;
        let kappa = (n - 1.0).sqrt();
        let a = (n - 1.0) / n;
        ((kappa * (2.0 * s - 1.0)).asinh() + kappa.asinh()) / (self.delta * a.sqrt())
    }

    /// `Phi_k0(t)` for the degenerate levels, `omega_k0 = E - E_0 = (E + g)/2`.
    pub fn phase_degenerate(&self, t: f64) -> f64 {
        0.5 * (self.e_bar * t.clamp(0.0, self.total_time) + self.phase_10(t))
    }
}

/// `|A_k(t)|` for `k = 1, ..., N-1` (index 0 of `coefficients` is `A_1`).
#[derive(Debug, Clone, Serialize)]
pub struct Adiabaticity {
    pub t: f64,
    pub s: f64,
    pub ds_dt: f64,
    pub coefficients: Vec<f64>,
}

/// `A_k = |<phi_k| dH/dt |phi_0>| / (E_k - E_0)^2` with `dH/dt = (ds/dt)(Hf - H0)`.
pub fn adiabaticity_coefficients(
    inst: &ProblemInstance,
    schedule: &Schedule,
    t: f64,
) -> Result<Adiabaticity> {
    let s = schedule.s_at(t);
    let ds_dt = schedule.ds_dt(s);
    let sp = adiabatic_spectrum(inst, s)?;
    let mut coefficients = Vec::with_capacity(inst.n_dim - 1);
    let g = sp.gap();
    coefficients.push(ds_dt * adiabatic_coupling(inst, s)?.abs() / (g * g));
    if !sp.degenerate.is_empty() {
        // (Hf - H0) v = E (<psi0|v> |psi0> - v_m |m>)
        let v = &sp.ground_and_first[0];
        let psi0 = inst.uniform_state();
        let mut w = &psi0 * (inst.e_bar * psi0.dot(v));
        w[inst.marked] -= inst.e_bar * v[inst.marked];
        for (j, c) in sp.degenerate.project(&w).into_iter().enumerate() {
            let gap = sp.freq(j + 2, 0);
            coefficients.push(ds_dt * c.abs() / (gap * gap));
        }
    }
    Ok(Adiabaticity { t, s, ds_dt, coefficients })
}

#[derive(Debug, Clone, Serialize)]
pub struct AdiabaticCondition {
    pub sup_a1: f64,
    /// Time at which `A_1` peaks on the grid.
    pub argmax_t: f64,
    pub argmax_s: f64,
    /// Largest `sup_t A_k` over the degenerate levels.
    pub sup_degenerate: f64,
    /// `4 sum_k sup_t A_k^2`.
    pub lhs: f64,
    pub delta_sq: f64,
    pub holds: bool,
    pub grid_points: usize,
}

/// Evaluate `4 sum_{k != 0} sup_t |A_k|^2 <= delta^2` on a uniform time grid.
pub fn adiabatic_condition(
    inst: &ProblemInstance,
    schedule: &Schedule,
    grid_points: usize,
) -> Result<AdiabaticCondition> {
    let grid_points = grid_points.max(2);
    let mut sup = vec![0.0f64; inst.n_dim - 1];
    let (mut argmax_t, mut argmax_s) = (0.0, 0.0);
    for i in 0..grid_points {
        let t = schedule.total_time * i as f64 / (grid_points - 1) as f64;
        let a = adiabaticity_coefficients(inst, schedule, t)?;
        if a.coefficients[0] > sup[0] {
            argmax_t = t;
            argmax_s = a.s;
        }
        for (m, v) in sup.iter_mut().zip(&a.coefficients) {
            *m = m.max(*v);
        }
    }
    let lhs = 4.0 * sup.iter().map(|v| v * v).sum::<f64>();
    let delta_sq = schedule.delta * schedule.delta;
    Ok(AdiabaticCondition {
        sup_a1: sup[0],
        argmax_t,
        argmax_s,
        sup_degenerate: sup[1..].iter().copied().fold(0.0, f64::max),
        lhs,
        delta_sq,
        holds: lhs <= delta_sq,
        grid_points,
    })
}

/// Spectrum curves on a uniform s-grid: columns `s,E0,E1,gap,t`.
pub fn write_spectrum_csv(
    inst: &ProblemInstance,
    schedule: &Schedule,
    n_points: usize,
    out: impl Write,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["s", "E0", "E1", "gap", "t"])?;
    let n_points = n_points.max(2);
    for i in 0..n_points {
        let s = i as f64 / (n_points - 1) as f64;
        let sp = adiabatic_spectrum(inst, s)?;
        let (e0, e1) = (sp.eigenvalues[0], sp.eigenvalues[1]);
        w.write_record(&[
            format!("{s}"),
            format!("{e0}"),
            format!("{e1}"),
            format!("{}", e1 - e0),
            format!("{}", schedule.t_at(s)),
        ])?;
    }
    w.flush()?;
    Ok(())
}
