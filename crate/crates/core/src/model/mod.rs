//! Ideal analog and local-adiabatic search: Hamiltonians, closed-form
//! spectra, schedules.
//!
//! Both algorithms act nontrivially only on the plane spanned by the uniform
//! superposition `|psi0>` and the marked state `|m>`. Inside that plane we use
//! the orthonormal pair `(|m_perp>, |m>)`, with
//! `|psi0> = d |m_perp> + c |m>`, `c = 1/sqrt(N)`, `d = sqrt(1 - 1/N)`.
//! Every vector orthogonal to the plane is an eigenvector with eigenvalue
//! `2E` (analog) or `E` (adiabatic).

mod schedule;

pub use schedule::{
    adiabatic_condition, adiabaticity_coefficients, local_schedule, write_spectrum_csv,
    AdiabaticCondition, Adiabaticity, Schedule, SCHEDULE_NODES,
};

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Analog,
    Adiabatic,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Analog => "analog",
            Variant::Adiabatic => "adiabatic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub variant: Variant,
    pub n_dim: usize,
    pub e_bar: f64,
    pub marked: usize,
    /// Slowness parameter; only meaningful for the adiabatic variant.
    pub delta: Option<f64>,
}

impl ProblemInstance {
    pub fn analog(n_dim: usize, e_bar: f64, marked: usize) -> Result<Self> {
        let inst = Self { variant: Variant::Analog, n_dim, e_bar, marked, delta: None };
        inst.validate()?;
        Ok(inst)
    }

    pub fn adiabatic(n_dim: usize, e_bar: f64, marked: usize, delta: f64) -> Result<Self> {
        let inst = Self { variant: Variant::Adiabatic, n_dim, e_bar, marked, delta: Some(delta) };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dim == 0 {
            return Err(Error::InvalidInstance("dimension must be positive".into()));
        }
        if self.marked >= self.n_dim {
            return Err(Error::InvalidInstance(format!(
                "marked index {} outside [0, {})",
                self.marked, self.n_dim
            )));
        }
        if !(self.e_bar > 0.0) || !self.e_bar.is_finite() {
            return Err(Error::InvalidInstance(format!("energy scale must be positive, got {}", self.e_bar)));
        }
        match (self.variant, self.delta) {
            (Variant::Adiabatic, None) => {
                Err(Error::InvalidInstance("adiabatic instance needs delta".into()))
            }
            (Variant::Adiabatic, Some(d)) if !(d > 0.0 && d < 1.0) => {
                Err(Error::InvalidInstance(format!("delta must lie in (0, 1), got {d}")))
            }
            (Variant::Adiabatic, _) if self.n_dim < 2 => {
                Err(Error::InvalidInstance("adiabatic search needs N >= 2".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn delta(&self) -> Result<f64> {
        match (self.variant, self.delta) {
            (Variant::Adiabatic, Some(d)) => Ok(d),
            _ => Err(Error::VariantMismatch { expected: "adiabatic" }),
        }
    }

    fn expect(&self, v: Variant) -> Result<()> {
        if self.variant == v {
            Ok(())
        } else {
            Err(Error::VariantMismatch { expected: v.name() })
        }
    }

    /// `pi sqrt(N) / (2 E)`.
    pub fn analog_time(&self) -> f64 {
        PI * (self.n_dim as f64).sqrt() / (2.0 * self.e_bar)
    }

    /// Large-N run time of the local schedule, `pi sqrt(N) / (delta E)`.
    pub fn adiabatic_time_asymptotic(&self) -> Result<f64> {
        Ok(PI * (self.n_dim as f64).sqrt() / (self.delta()? * self.e_bar))
    }

    /// Exact run time of the local schedule:
    /// `(2 / delta E) * N / sqrt(N - 1) * atan(sqrt(N - 1))`.
    pub fn adiabatic_time_exact(&self) -> Result<f64> {
        let delta = self.delta()?;
        let n = self.n_dim as f64;
        let r = (n - 1.0).sqrt();
        Ok(2.0 / (delta * self.e_bar) * n / r * r.atan())
    }

    /// Run time of the ideal algorithm.
    pub fn run_time(&self) -> Result<f64> {
        match self.variant {
            Variant::Analog => Ok(self.analog_time()),
            Variant::Adiabatic => self.adiabatic_time_exact(),
        }
    }

    pub fn uniform_state(&self) -> DVector<f64> {
        DVector::from_element(self.n_dim, 1.0 / (self.n_dim as f64).sqrt())
    }

    pub fn marked_state(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.n_dim);
        v[self.marked] = 1.0;
        v
    }

    /// Initial state: `|psi0>` for both variants.
    pub fn initial_state(&self) -> DVector<Complex64> {
        self.uniform_state().map(|x| Complex64::new(x, 0.0))
    }

    fn plane(&self) -> Plane {
        let n = self.n_dim as f64;
        Plane { n: self.n_dim, marked: self.marked, c: 1.0 / n.sqrt(), d: (1.0 - 1.0 / n).sqrt() }
    }

    /// `H0 = E (I - |psi0><psi0|)`.
    pub fn h_initial(&self) -> DMatrix<f64> {
        let n = self.n_dim;
        DMatrix::from_fn(n, n, |i, j| {
            self.e_bar * (if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
        })
    }

    /// `Hf = E (I - |m><m|)`.
    pub fn h_final(&self) -> DMatrix<f64> {
        let mut h = DMatrix::identity(self.n_dim, self.n_dim) * self.e_bar;
        h[(self.marked, self.marked)] = 0.0;
        h
    }
}

/// Orthonormal pair `(|m_perp>, |m>)` spanning `{|psi0>, |m>}`.
#[derive(Debug, Clone, Copy)]
struct Plane {
    n: usize,
    marked: usize,
    c: f64,
    d: f64,
}

impl Plane {
    /// Embed `a |m_perp> + b |m>`.
    fn embed(&self, a: f64, b: f64) -> DVector<f64> {
        let perp = if self.d > 0.0 { a * self.c / self.d } else { 0.0 };
        let mut v = DVector::from_element(self.n, perp);
        v[self.marked] = b;
        v
    }
}

/// Eigen-decomposition of the real symmetric 2x2 `[[alpha, beta], [beta, gamma]]`
/// with `beta <= 0`. The ground vector is taken with nonnegative components and
/// the excited vector with a nonnegative second component; both vary
/// continuously with the entries as long as `beta < 0` or `alpha > gamma`.
fn two_level(alpha: f64, beta: f64, gamma: f64) -> ([f64; 2], [f64; 2], [f64; 2]) {
    let mean = 0.5 * (alpha + gamma);
    let p = 0.5 * (alpha - gamma);
    let r = p.hypot(beta);
    let phi = 0.5 * beta.atan2(p);
    let (s, c) = phi.sin_cos();
    ([mean - r, mean + r], [-s, c], [-c, -s])
}

/// Closed-form eigen-structure of an ideal Hamiltonian.
#[derive(Debug, Clone)]
pub struct SpectrumView {
    /// `E_0, E_1`, then the `N - 2` degenerate levels.
    pub eigenvalues: Vec<f64>,
    pub ground_and_first: [DVector<f64>; 2],
    pub degenerate: DegenerateBasis,
    /// Amplitudes of the ideal state in this eigenbasis.
    pub ideal_amplitudes: Vec<Complex64>,
    /// True when `N < 3`, so no degenerate level exists.
    pub degenerate_empty: bool,
    /// Minimum gap `E / sqrt(N)` of the adiabatic path (adiabatic spectra only).
    pub min_gap: Option<f64>,
}

impl SpectrumView {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `omega_kl = E_k - E_l`.
    pub fn freq(&self, k: usize, l: usize) -> f64 {
        self.eigenvalues[k] - self.eigenvalues[l]
    }

    pub fn gap(&self) -> f64 {
        self.eigenvalues[1] - self.eigenvalues[0]
    }

    /// Eigenvector `k` (0 and 1 explicit, `k >= 2` from the degenerate basis).
    pub fn eigenvector(&self, k: usize) -> DVector<f64> {
        match k {
            0 | 1 => self.ground_and_first[k].clone(),
            _ => self.degenerate.vector(k - 2),
        }
    }

    /// All eigenvectors as the columns of an `N x N` matrix.
    pub fn eigenvectors(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            m.set_column(k, &self.eigenvector(k));
        }
        m
    }
}

/// Orthonormal basis of the complement of `{|psi0>, |m>}`.
///
/// Gram-Schmidt applied to `(|k_j> - |r>)/sqrt(2)`, with `r` the first index
/// other than `m` and `k_1 < k_2 < ...` the remaining ones, has the closed form
/// `u_j = (|k_j> - (1/j) sum_{i in S_j} |i>) / sqrt(1 + 1/j)`,
/// `S_j = {r, k_1, ..., k_{j-1}}`.
#[derive(Debug, Clone)]
pub struct DegenerateBasis {
    n: usize,
    marked: usize,
}

impl DegenerateBasis {
    pub fn len(&self) -> usize {
        self.n.saturating_sub(2)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn others(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| i != self.marked)
    }

    pub fn vector(&self, j: usize) -> DVector<f64> {
        assert!(j < self.len(), "degenerate index out of range");
        let j1 = j + 1;
        let inv = 1.0 / j1 as f64;
        let norm = (1.0 + inv).sqrt();
        let mut v = DVector::zeros(self.n);
        for (pos, idx) in self.others().enumerate() {
            if pos < j1 {
                v[idx] = -inv / norm;
            } else if pos == j1 {
                v[idx] = 1.0 / norm;
                break;
            }
        }
        v
    }

    /// Coordinates `<u_j|w>` of `w` in this basis, in `O(N)`.
    pub fn project(&self, w: &DVector<f64>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        let mut prefix = 0.0;
        for (pos, idx) in self.others().enumerate() {
            if pos > 0 {
                let j = pos as f64;
                out.push((w[idx] - prefix / j) / (1.0 + 1.0 / j).sqrt());
            }
            prefix += w[idx];
        }
        out
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.len());
        for j in 0..self.len() {
            m.set_column(j, &self.vector(j));
        }
        m
    }
}

/// `H = H0 + Hf`.
pub fn analog_hamiltonian(inst: &ProblemInstance) -> Result<DMatrix<f64>> {
    inst.expect(Variant::Analog)?;
    Ok(inst.h_initial() + inst.h_final())
}

pub fn analog_spectrum(inst: &ProblemInstance) -> Result<SpectrumView> {
    inst.expect(Variant::Analog)?;
    let e = inst.e_bar;
    let n = inst.n_dim;
    if n == 1 {
        return Ok(SpectrumView {
            eigenvalues: vec![0.0],
            ground_and_first: [DVector::from_element(1, 1.0), DVector::zeros(1)],
            degenerate: DegenerateBasis { n, marked: inst.marked },
            ideal_amplitudes: vec![Complex64::new(1.0, 0.0)],
            degenerate_empty: true,
            min_gap: None,
        });
    }
    let p = inst.plane();
    let (c, d) = (p.c, p.d);
    let (vals, g, x) = two_level(e * (1.0 + c * c), -e * c * d, e * d * d);
    let ground = p.embed(g[0], g[1]);
    let first = p.embed(x[0], x[1]);
    // <phi_k|psi0> with |psi0> = d|m_perp> + c|m>
    let b0 = g[0] * d + g[1] * c;
    let b1 = x[0] * d + x[1] * c;
    let mut eigenvalues = vec![vals[0], vals[1]];
    eigenvalues.resize(n, 2.0 * e);
    let mut amps = vec![Complex64::new(0.0, 0.0); n];
    amps[0] = b0.into();
    amps[1] = b1.into();
    Ok(SpectrumView {
        eigenvalues,
        ground_and_first: [ground, first],
        degenerate: DegenerateBasis { n, marked: inst.marked },
        ideal_amplitudes: amps,
        degenerate_empty: n < 3,
        min_gap: None,
    })
}

fn check_s(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(Error::OutOfRange(s))
    }
}

/// `(1 - s) H0 + s Hf`.
pub fn adiabatic_hamiltonian(inst: &ProblemInstance, s: f64) -> Result<DMatrix<f64>> {
    inst.expect(Variant::Adiabatic)?;
    check_s(s)?;
    Ok(inst.h_initial() * (1.0 - s) + inst.h_final() * s)
}

/// Gap `E_1(s) - E_0(s) = E sqrt(1 - 4 (N-1)/N s (1-s))`.
pub fn adiabatic_gap(n_dim: usize, e_bar: f64, s: f64) -> f64 {
    let a = (n_dim as f64 - 1.0) / n_dim as f64;
    e_bar * (1.0 - 4.0 * a * s * (1.0 - s)).max(0.0).sqrt()
}

/// 2x2 block of `H(s)` in `(|m_perp>, |m>)`.
fn adiabatic_block(p: &Plane, e: f64, s: f64) -> (f64, f64, f64) {
    let (c, d) = (p.c, p.d);
    (e * (1.0 - (1.0 - s) * d * d), -e * (1.0 - s) * c * d, e * (1.0 - s) * d * d)
}

pub fn adiabatic_spectrum(inst: &ProblemInstance, s: f64) -> Result<SpectrumView> {
    inst.expect(Variant::Adiabatic)?;
    check_s(s)?;
    let e = inst.e_bar;
    let n = inst.n_dim;
    let p = inst.plane();
    let (alpha, beta, gamma) = adiabatic_block(&p, e, s);
    let (_, g, x) = two_level(alpha, beta, gamma);
    // closed-form levels (trace of the block is E)
    let gap = adiabatic_gap(n, e, s);
    let mut eigenvalues = vec![0.5 * (e - gap), 0.5 * (e + gap)];
    eigenvalues.resize(n, e);
    let mut amps = vec![Complex64::new(0.0, 0.0); n];
    amps[0] = Complex64::new(1.0, 0.0);
    Ok(SpectrumView {
        eigenvalues,
        ground_and_first: [p.embed(g[0], g[1]), p.embed(x[0], x[1])],
        degenerate: DegenerateBasis { n, marked: inst.marked },
        ideal_amplitudes: amps,
        degenerate_empty: n < 3,
        min_gap: Some(e / (n as f64).sqrt()),
    })
}

/// Mixing angle `theta(s)` of the lowest two eigenvectors inside the
/// `(|m_perp>, |m>)` plane: `phi_0 = (-sin theta, cos theta)`,
/// `phi_1 = (-cos theta, -sin theta)`.
pub fn adiabatic_mixing_angle(inst: &ProblemInstance, s: f64) -> Result<f64> {
    inst.expect(Variant::Adiabatic)?;
    check_s(s)?;
    let (alpha, beta, gamma) = adiabatic_block(&inst.plane(), inst.e_bar, s);
    Ok(0.5 * beta.atan2(0.5 * (alpha - gamma)))
}

/// `<phi_1(s)| Hf - H0 |phi_0(s)>`.
pub fn adiabatic_coupling(inst: &ProblemInstance, s: f64) -> Result<f64> {
    inst.expect(Variant::Adiabatic)?;
    check_s(s)?;
    let p = inst.plane();
    let (alpha, beta, gamma) = adiabatic_block(&p, inst.e_bar, s);
    let (_, g, x) = two_level(alpha, beta, gamma);
    // Hf - H0 restricted to the plane: E [[d^2, c d], [c d, -d^2]]
    let (c, d) = (p.c, p.d);
    let e = inst.e_bar;
    let hg = [e * (d * d * g[0] + c * d * g[1]), e * (c * d * g[0] - d * d * g[1])];
    Ok(x[0] * hg[0] + x[1] * hg[1])
}

/// Ascending eigenvalues and matching eigenvectors of a real symmetric matrix.
pub fn dense_eigen(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(h.nrows(), h.ncols());
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}
