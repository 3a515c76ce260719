//! Adiabatic and cut-off regime checks.

use serde::Serialize;

use super::CouplingIntegrals;
use crate::error::Result;
use crate::model::{self, ProblemInstance, Variant};
use crate::noise::NoiseModel;

/// Factor standing in for `>>` and `<<` in every verdict.
pub const MUCH_GREATER: f64 = 10.0;

const GRID: usize = 2001;

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub holds: bool,
    /// Quantity being compared.
    pub value: f64,
    /// What it is compared against.
    pub threshold: f64,
    /// `>= 1` when satisfied.
    pub margin: f64,
    pub description: String,
}

impl Verdict {
    /// `value >= threshold`.
    pub fn at_least(value: f64, threshold: f64, description: impl Into<String>) -> Self {
        let margin = if threshold > 0.0 { value / threshold } else { f64::INFINITY };
        Self { holds: value >= threshold * (1.0 - 1e-12), value, threshold, margin, description: description.into() }
    }

    /// `value <= threshold`.
    pub fn at_most(value: f64, threshold: f64, description: impl Into<String>) -> Self {
        let margin = if value > 0.0 { threshold / value } else { f64::INFINITY };
        Self { holds: value <= threshold * (1.0 + 1e-12), value, threshold, margin, description: description.into() }
    }

    fn and(self, other: Verdict) -> Verdict {
        let (a, b) = if self.margin <= other.margin { (self, other) } else { (other, self) };
        Verdict {
            holds: a.holds && b.holds,
            description: format!("{} and {}", a.description, b.description),
            ..a
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub variant: Variant,
    /// `4 sum sup A_k^2 <= delta^2` (adiabatic only).
    pub ideal: Option<Verdict>,
    /// `sum (4 sup A_k^2 + eps^2 I_k0) <= delta^2` (adiabatic only).
    pub perturbed: Option<Verdict>,
    pub high_cutoff: Verdict,
    pub low_cutoff: Verdict,
    pub threshold_factor: f64,
}

impl ConditionReport {
    /// Neither cut-off regime applies.
    pub fn intermediate(&self) -> bool {
        !self.high_cutoff.holds && !self.low_cutoff.holds
    }
}

/// Cut-off verdicts only; needs no integrals.
pub fn regime_verdicts(inst: &ProblemInstance, noise: &NoiseModel) -> Result<(Verdict, Verdict)> {
    inst.validate()?;
    let e = inst.e_bar;
    let sqrt_n = (inst.n_dim as f64).sqrt();
    let w0 = noise.omega0;
    let low_w = Verdict::at_most(w0, e / MUCH_GREATER, "omega0 << E");
    Ok(match inst.variant {
        Variant::Analog => (
            Verdict::at_least(w0, MUCH_GREATER * e * sqrt_n, "omega0 >> E sqrt(N)"),
            low_w,
        ),
        Variant::Adiabatic => {
            let d = inst.delta()?;
            let eps = noise.epsilon;
            let high = Verdict::at_least(
                w0,
                MUCH_GREATER * eps * eps / (d * d * d) * e * sqrt_n,
                "omega0 >> (eps^2/delta^3) E sqrt(N)",
            );
            (high, low_w.and(Verdict::at_most(eps, d, "eps < delta")))
        }
    })
}

pub fn check_adiabatic_conditions(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    integrals: &CouplingIntegrals,
) -> Result<ConditionReport> {
    let (high_cutoff, low_cutoff) = regime_verdicts(inst, noise)?;
    let (ideal, perturbed) = match inst.variant {
        Variant::Analog => (None, None),
        Variant::Adiabatic => {
            let d2 = inst.delta()?.powi(2);
            let sched = model::local_schedule(inst)?;
            let c = model::adiabatic_condition(inst, &sched, GRID)?;
            let e2 = noise.epsilon * noise.epsilon;
            let mut noise_sum = 0.0;
            for k in 1..inst.n_dim {
                noise_sum += e2 * integrals.minus(k, 0)?;
            }
            (
                Some(Verdict::at_most(c.lhs, d2, "4 sum sup A_k^2 <= delta^2")),
                Some(Verdict::at_most(
                    c.lhs + noise_sum,
                    d2,
                    "sum (4 sup A_k^2 + eps^2 I_k0) <= delta^2",
                )),
            )
        }
    };
    Ok(ConditionReport { variant: inst.variant, ideal, perturbed, high_cutoff, low_cutoff, threshold_factor: MUCH_GREATER })
}
