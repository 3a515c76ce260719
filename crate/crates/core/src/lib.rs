//! Random-matrix noise on analog and adiabatic quantum search.
//!
//! The crate synthesizes stationary GOE matrix noise `epsilon * h(t)`,
//! propagates the two search algorithms under it, and evaluates the
//! second-order perturbative prediction of the mean error probability so the
//! two can be compared.
//!
//! Units: `hbar = 1`; energies in units of `E`, times in `1/E`.

// `!(x > 0.0)` checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evolution;
pub mod harness;
pub mod interp;
pub mod model;
pub mod noise;
pub mod oscillatory;
pub mod perturbative;
pub mod quadrature;
pub mod rng;

pub use error::{Error, Result};
pub use evolution::{propagate, run_trial, Method, PropagatorConfig, TrialContext, TrialResult};
pub use harness::{ExperimentConfig, SweepTable};
pub use model::{ProblemInstance, Schedule, SpectrumView, Variant};
pub use noise::{build_path, NoiseModel, NoisePath, PsdTable, Shape};
pub use perturbative::{CouplingIntegrals, PerrPrediction};
