//! Stationary GOE matrix noise `h(t)`.
//!
//! Each independent entry `h_kl(t)`, `k <= l`, is a Gaussian process built by
//! spectral (Rice) synthesis on a fixed frequency grid shared by all entries:
//!
//! ```text
//! h_kl(t) = sigma_kl * sum_j sqrt(w_j) * (a_j cos(w_j t) + b_j sin(w_j t))
//! ```
//!
//! with `a_j, b_j` i.i.d. standard normal, `omega_j = (j - 1/2) omega0 / M`
//! and weights `w_j` proportional to the power spectral density at
//! `omega_j` (uniform `1/M` for band-limited white noise). The process is
//! exactly Gaussian and stationary, with autocorrelation
//! `sigma_kl^2 * sum_j w_j cos(omega_j tau)`. For the flat spectrum this is
//! `sin(omega0 tau) / (2 M sin(omega0 tau / 2M))`, which approaches
//! `sin(omega0 tau) / (omega0 tau)` for `omega0 tau << M` and revives at
//! `tau = 2 pi M / omega0`.
//!
//! The amplitude `epsilon` is carried by the model but never applied here.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Default number of spectral modes per matrix element.
pub const DEFAULT_MODES: usize = 64;

/// Power spectral density sampled on normalized frequencies `nu = omega / omega0`
/// in `[0, 1]`, linearly interpolated between samples and zero outside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdTable {
    nu: Vec<f64>,
    density: Vec<f64>,
    /// Fraction of the parent spectrum's power discarded by truncating at
    /// `omega0`, when the table was derived from an unbounded spectrum.
    pub truncated_power: Option<f64>,
}

impl PsdTable {
    pub fn new(nu: Vec<f64>, density: Vec<f64>) -> Result<Self> {
        if nu.len() < 2 || nu.len() != density.len() {
            return Err(Error::InvalidNoiseModel(
                "PSD table needs at least two (nu, density) samples".into(),
            ));
        }
        if nu.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidNoiseModel("PSD frequencies must increase".into()));
        }
        if nu[0] < 0.0 || nu[nu.len() - 1] > 1.0 + 1e-12 {
            return Err(Error::InvalidNoiseModel(
                "PSD table must be supported on [0, omega0]".into(),
            ));
        }
        if let Some(bad) = density.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidNoiseModel(format!("negative PSD entry {bad}")));
        }
        let table = Self { nu, density, truncated_power: None };
        if table.total_power() <= 0.0 {
            return Err(Error::InvalidNoiseModel("PSD has zero total power".into()));
        }
        Ok(table)
    }

    /// Lorentzian spectrum `1 / (1 + (nu / corner)^2)` (the spectrum of an
    /// exponentially decaying correlation) truncated at `omega0`.
    pub fn lorentzian(corner: f64, n_points: usize) -> Result<Self> {
        if !(corner > 0.0) || n_points < 2 {
            return Err(Error::InvalidNoiseModel(
                "Lorentzian needs corner > 0 and at least two samples".into(),
            ));
        }
        let nu: Vec<f64> = (0..n_points).map(|i| i as f64 / (n_points - 1) as f64).collect();
        let density = nu.iter().map(|v| 1.0 / (1.0 + (v / corner).powi(2))).collect();
        let mut table = Self::new(nu, density)?;
        table.truncated_power = Some(1.0 - 2.0 / PI * (1.0 / corner).atan());
        Ok(table)
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.nu
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub fn density_at(&self, nu: f64) -> f64 {
        let last = self.nu.len() - 1;
        if nu < self.nu[0] || nu > self.nu[last] {
            return 0.0;
        }
        let i = self.nu.partition_point(|&v| v <= nu).clamp(1, last);
        let (x0, x1) = (self.nu[i - 1], self.nu[i]);
        let (y0, y1) = (self.density[i - 1], self.density[i]);
        y0 + (y1 - y0) * (nu - x0) / (x1 - x0)
    }

    fn total_power(&self) -> f64 {
        self.nu
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
            .sum()
    }

    /// Normalized correlation `f(x) = int S(nu) cos(nu x) dnu / int S(nu) dnu`.
    fn correlation(&self, x: f64) -> f64 {
        let x = x.abs();
        let nu_max = self.nu[self.nu.len() - 1];
        let mut acc = 0.0;
        for (nv, dv) in self.nu.windows(2).zip(self.density.windows(2)) {
            let (a, b) = (nv[0], nv[1]);
            let q = (dv[1] - dv[0]) / (b - a);
            let p = dv[0] - q * a;
            if x * nu_max < 0.1 {
                // cos(nu x) = sum_k (-1)^k (nu x)^(2k) / (2k)!
                let mut term_sum = 0.0;
                let mut coeff = 1.0;
                for k in 0..5 {
                    let m = 2 * k;
                    let mom = |n: i32| (b.powi(n + 1) - a.powi(n + 1)) / (n + 1) as f64;
                    term_sum += coeff * (p * mom(m) + q * mom(m + 1));
                    coeff *= -x * x / ((m + 1) * (m + 2)) as f64;
                }
                acc += term_sum;
            } else {
                let (sb, sa) = ((b * x).sin(), (a * x).sin());
                // cos(bx) - cos(ax) without cancellation
                let dcos = -2.0 * (0.5 * (a + b) * x).sin() * (0.5 * (b - a) * x).sin();
                acc += ((p + q * b) * sb - (p + q * a) * sa) / x + q * dcos / (x * x);
            }
        }
        acc / self.total_power()
    }

    /// n-th derivative of the normalized correlation, by quadrature over the
    /// spectrum: `f^(n)(x) = int S(nu) nu^n cos(nu x + n pi/2) dnu / int S`.
    fn correlation_derivative(&self, order: usize, x: f64) -> f64 {
        let shift = order as f64 * PI / 2.0;
        let mut acc = 0.0;
        for w in self.nu.windows(2) {
            let panels = 1 + ((w[1] - w[0]) * x.abs() / 2.0).ceil() as usize;
            let (v, _) = crate::quadrature::composite_gk15(
                |nu: f64| self.density_at(nu) * nu.powi(order as i32) * (nu * x + shift).cos(),
                w[0],
                w[1],
                panels,
            );
            acc += v;
        }
        acc / self.total_power()
    }
}

/// Autocorrelation shape `f(x)` with `R(tau) = sigma_kl^2 f(omega0 tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Flat spectrum on `[0, omega0]`; `f(x) = sin(x) / x`.
    WhiteSinc,
    /// Arbitrary nonnegative spectrum on `[0, omega0]`.
    Custom(PsdTable),
}

impl Shape {
    pub fn tag(&self) -> u8 {
        match self {
            Shape::WhiteSinc => 0,
            Shape::Custom(_) => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::WhiteSinc => "white_sinc",
            Shape::Custom(_) => "custom",
        }
    }

    /// `f(x)`, normalized so that `f(0) = 1`.
    pub fn correlation(&self, x: f64) -> f64 {
        match self {
            Shape::WhiteSinc => sinc(x),
            Shape::Custom(t) => t.correlation(x),
        }
    }

    /// `d^n f / dx^n`.
    pub fn correlation_derivative(&self, order: usize, x: f64) -> f64 {
        match self {
            Shape::WhiteSinc if order == 0 => sinc(x),
            Shape::WhiteSinc => {
                // sinc(x) = int_0^1 cos(nu x) dnu
                let shift = order as f64 * PI / 2.0;
                let panels = 1 + (x.abs() / 2.0).ceil() as usize;
                crate::quadrature::composite_gk15(
                    |nu: f64| nu.powi(order as i32) * (nu * x + shift).cos(),
                    0.0,
                    1.0,
                    panels,
                )
                .0
            }
            Shape::Custom(t) => t.correlation_derivative(order, x),
        }
    }

    /// Spectral weight of mode `j` (0-based) out of `m`, before normalization.
    fn raw_weight(&self, j: usize, m: usize) -> f64 {
        match self {
            Shape::WhiteSinc => 1.0,
            Shape::Custom(t) => t.density_at((j as f64 + 0.5) / m as f64),
        }
    }
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// Statistical description of the noise term `epsilon * h(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub n_dim: usize,
    pub epsilon: f64,
    pub omega0: f64,
    pub shape: Shape,
    pub n_modes: usize,
    pub sigma_sq: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(
        n_dim: usize,
        epsilon: f64,
        omega0: f64,
        shape: Shape,
        n_modes: usize,
        sigma_sq: f64,
        seed: u64,
    ) -> Result<Self> {
        let model = Self { n_dim, epsilon, omega0, shape, n_modes, sigma_sq, seed };
        model.validate()?;
        Ok(model)
    }

    /// Model with the constant signal-to-noise variance `sigma^2 = E^2 / 4N`.
    pub fn constant_snr(
        n_dim: usize,
        e_bar: f64,
        epsilon: f64,
        omega0: f64,
        shape: Shape,
        n_modes: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_dim == 0 {
            return Err(Error::InvalidNoiseModel("dimension must be positive".into()));
        }
        Self::new(n_dim, epsilon, omega0, shape, n_modes, snr_variance(n_dim, e_bar), seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_dim == 0 {
            return Err(Error::InvalidNoiseModel("dimension must be positive".into()));
        }
        if self.n_modes == 0 {
            return Err(Error::InvalidNoiseModel("need at least one spectral mode".into()));
        }
        if !(self.omega0 > 0.0) || !self.omega0.is_finite() {
            return Err(Error::InvalidNoiseModel(format!(
                "cut-off frequency must be positive, got {}",
                self.omega0
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidNoiseModel(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.sigma_sq >= 0.0) || !self.sigma_sq.is_finite() {
            return Err(Error::InvalidNoiseModel(format!(
                "variance must be >= 0, got {}",
                self.sigma_sq
            )));
        }
        Ok(())
    }

    /// `sigma_kl^2 = (1 + delta_kl) sigma^2`.
    pub fn element_variance(&self, k: usize, l: usize) -> f64 {
        if k == l {
            2.0 * self.sigma_sq
        } else {
            self.sigma_sq
        }
    }

    pub fn correlation(&self, tau: f64) -> f64 {
        self.shape.correlation(self.omega0 * tau)
    }

    /// Radius `sqrt(4 sigma^2 N)` of the semicircle.
    pub fn semicircle_radius(&self) -> f64 {
        (4.0 * self.sigma_sq * self.n_dim as f64).sqrt()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self { epsilon, ..self.clone() }
    }

    /// Raise the mode count so the first revival of the discrete
    /// autocorrelation, at `2 pi M / omega0`, lies beyond `2 * horizon`.
    pub fn with_modes_covering(&self, horizon: f64) -> Self {
        let needed = (self.omega0 * horizon / PI).ceil() as usize;
        Self { n_modes: self.n_modes.max(needed), ..self.clone() }
    }

    /// Autocorrelation of the synthesized process (finite `M`), normalized.
    pub fn discrete_correlation(&self, tau: f64) -> f64 {
        let (freqs, amps) = mode_grid(self);
        freqs.iter().zip(&amps).map(|(w, a)| a * a * (w * tau).cos()).sum()
    }
}

pub fn snr_variance(n_dim: usize, e_bar: f64) -> f64 {
    e_bar * e_bar / (4.0 * n_dim as f64)
}

fn mode_grid(model: &NoiseModel) -> (Vec<f64>, Vec<f64>) {
    let m = model.n_modes;
    let freqs: Vec<f64> = (0..m).map(|j| (j as f64 + 0.5) * model.omega0 / m as f64).collect();
    let raw: Vec<f64> = (0..m).map(|j| model.shape.raw_weight(j, m)).collect();
    let total: f64 = raw.iter().sum();
    let amps = raw.iter().map(|w| (w / total).sqrt()).collect();
    (freqs, amps)
}

/// One realization of `h(t)`; immutable and cheap to evaluate at any `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    model: NoiseModel,
    mode_freqs: Vec<f64>,
    mode_amps: Vec<f64>,
    // For each element k <= l (row-major), 2M coefficients: the a_j then the
    // b_j, already scaled by sigma_kl * sqrt(w_j).
    coeffs: Vec<f64>,
}

/// Synthesize a path from the model's seed.
pub fn build_path(model: &NoiseModel) -> Result<NoisePath> {
    model.validate()?;
    let (mode_freqs, mode_amps) = mode_grid(model);
    let n = model.n_dim;
    let m = model.n_modes;
    let mut coeffs = Vec::with_capacity(n * (n + 1) / 2 * 2 * m);
    let mut buf = vec![0.0; 2 * m];
    for k in 0..n {
        for l in k..n {
            let sigma = model.element_variance(k, l).sqrt();
            let mut rng = rng::element_rng(model.seed, k, l);
            for j in 0..m {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                buf[j] = sigma * mode_amps[j] * a;
                buf[m + j] = sigma * mode_amps[j] * b;
            }
            coeffs.extend_from_slice(&buf);
        }
    }
    Ok(NoisePath { model: model.clone(), mode_freqs, mode_amps, coeffs })
}

impl NoisePath {
    pub fn model(&self) -> &NoiseModel {
        &self.model
    }

    pub fn mode_freqs(&self) -> &[f64] {
        &self.mode_freqs
    }

    pub fn dim(&self) -> usize {
        self.model.n_dim
    }

    fn element_offset(&self, k: usize, l: usize) -> usize {
        let (k, l) = if k <= l { (k, l) } else { (l, k) };
        let n = self.model.n_dim;
        // elements in rows r < k: sum (n - r)
        let idx = k * n - k * k.saturating_sub(1) / 2 + (l - k);
        idx * 2 * self.model.n_modes
    }

    fn fill_trig(&self, t: f64, trig: &mut Vec<f64>) {
        let m = self.model.n_modes;
        trig.resize(2 * m, 0.0);
        for (j, w) in self.mode_freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            trig[j] = c;
            trig[m + j] = s;
        }
    }

    /// Single entry `h_kl(t)`.
    pub fn element(&self, k: usize, l: usize, t: f64) -> f64 {
        let mut trig = Vec::new();
        self.fill_trig(t, &mut trig);
        let off = self.element_offset(k, l);
        dot(&self.coeffs[off..off + trig.len()], &trig)
    }

    /// `h(t)` as a dense symmetric matrix.
    pub fn eval_at(&self, t: f64) -> DMatrix<f64> {
        let n = self.model.n_dim;
        let mut out = DMatrix::zeros(n, n);
        let mut trig = Vec::new();
        self.eval_into(t, &mut out, &mut trig);
        out
    }

    /// Allocation-free variant of [`eval_at`](Self::eval_at); `out` must be `N x N`.
    pub fn eval_into(&self, t: f64, out: &mut DMatrix<f64>, trig: &mut Vec<f64>) {
        self.fill_trig(t, trig);
        let n = self.model.n_dim;
        let stride = trig.len();
        let mut chunks = self.coeffs.chunks_exact(stride);
        for k in 0..n {
            for l in k..n {
                let v = dot(chunks.next().expect("coefficient layout"), trig);
                out[(k, l)] = v;
                out[(l, k)] = v;
            }
        }
    }

    /// `out += scale * h(t)`.
    pub fn add_scaled_into(&self, t: f64, scale: f64, out: &mut DMatrix<f64>, trig: &mut Vec<f64>) {
        self.fill_trig(t, trig);
        let n = self.model.n_dim;
        let stride = trig.len();
        let mut chunks = self.coeffs.chunks_exact(stride);
        for k in 0..n {
            let v = scale * dot(chunks.next().expect("coefficient layout"), trig);
            out[(k, k)] += v;
            for l in k + 1..n {
                let v = scale * dot(chunks.next().expect("coefficient layout"), trig);
                out[(k, l)] += v;
                out[(l, k)] += v;
            }
        }
    }

    /// Write the documented little-endian binary layout.
    ///
    /// ```text
    /// magic   8 bytes  "HNPATH01"
    /// N       u64
    /// M       u64
    /// seed    u64
    /// shape   u8       0 = white_sinc, 1 = custom
    /// epsilon, omega0, sigma_sq                     f64 x 3
    /// [custom only] P: u64, then P nu values, P densities   f64
    /// mode frequencies                              f64 x M
    /// mode amplitudes sqrt(w_j)                     f64 x M
    /// coefficients, element-major over k <= l,
    ///   each element: a_1..a_M then b_1..b_M        f64 x N(N+1)/2 * 2M
    /// ```
    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let m = &self.model;
        w.write_all(PATH_MAGIC)?;
        w.write_all(&(m.n_dim as u64).to_le_bytes())?;
        w.write_all(&(m.n_modes as u64).to_le_bytes())?;
        w.write_all(&m.seed.to_le_bytes())?;
        w.write_all(&[m.shape.tag()])?;
        for v in [m.epsilon, m.omega0, m.sigma_sq] {
            w.write_all(&v.to_le_bytes())?;
        }
        if let Shape::Custom(t) = &m.shape {
            w.write_all(&(t.nu.len() as u64).to_le_bytes())?;
            for v in t.nu.iter().chain(&t.density) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in self.mode_freqs.iter().chain(&self.mode_amps).chain(&self.coeffs) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != PATH_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let n_dim = read_u64(&mut r)? as usize;
        let n_modes = read_u64(&mut r)? as usize;
        let seed = read_u64(&mut r)?;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag)?;
        let epsilon = read_f64(&mut r)?;
        let omega0 = read_f64(&mut r)?;
        let sigma_sq = read_f64(&mut r)?;
        let shape = match tag[0] {
            0 => Shape::WhiteSinc,
            1 => {
                let p = read_u64(&mut r)? as usize;
                let nu = read_f64s(&mut r, p)?;
                let density = read_f64s(&mut r, p)?;
                Shape::Custom(PsdTable::new(nu, density)?)
            }
            t => return Err(Error::Format(format!("unknown shape tag {t}"))),
        };
        let model = NoiseModel::new(n_dim, epsilon, omega0, shape, n_modes, sigma_sq, seed)?;
        let mode_freqs = read_f64s(&mut r, n_modes)?;
        let mode_amps = read_f64s(&mut r, n_modes)?;
        let coeffs = read_f64s(&mut r, n_dim * (n_dim + 1) / 2 * 2 * n_modes)?;
        Ok(Self { model, mode_freqs, mode_amps, coeffs })
    }
}

const PATH_MAGIC: &[u8; 8] = b"HNPATH01";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|_| read_f64(r)).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four accumulators let the compiler vectorize
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for j in 0..4 {
            acc[j] += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AutocorrPoint {
    pub tau: f64,
    /// Estimate of `R(tau) / sigma_kl^2`.
    pub value: f64,
    pub std_err: f64,
}

/// Ensemble estimate of the normalized autocorrelation of one entry
/// (`h_01`, or `h_00` when `N = 1`) between `base_time` and `base_time + tau`.
pub fn empirical_autocorrelation(
    model: &NoiseModel,
    n_paths: usize,
    taus: &[f64],
) -> Result<Vec<AutocorrPoint>> {
    empirical_autocorrelation_at(model, n_paths, taus, 0.0)
}

pub fn empirical_autocorrelation_at(
    model: &NoiseModel,
    n_paths: usize,
    taus: &[f64],
    base_time: f64,
) -> Result<Vec<AutocorrPoint>> {
    if taus.is_empty() {
        return Err(Error::InvalidArgument("no lag values given".into()));
    }
    if n_paths < 2 {
        return Err(Error::InvalidArgument("need at least two paths".into()));
    }
    let (k, l) = if model.n_dim >= 2 { (0, 1) } else { (0, 0) };
    let var = model.element_variance(k, l);
    let mut sums = vec![(0.0f64, 0.0f64); taus.len()];
    for i in 0..n_paths {
        let path = build_path(&model.with_seed(rng::trial_seed(model.seed, i as u64)))?;
        let h0 = path.element(k, l, base_time);
        for (acc, tau) in sums.iter_mut().zip(taus) {
            let prod = h0 * path.element(k, l, base_time + tau) / var;
            acc.0 += prod;
            acc.1 += prod * prod;
        }
    }
    let n = n_paths as f64;
    Ok(taus
        .iter()
        .zip(sums)
        .map(|(&tau, (s, s2))| {
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0) * n / (n - 1.0);
            AutocorrPoint { tau, value: mean, std_err: (var / n).sqrt() }
        })
        .collect())
}

/// Pooled variances of diagonal and off-diagonal entries of `h(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceRatio {
    pub diagonal: f64,
    pub off_diagonal: f64,
    pub ratio: f64,
    /// Standard error of `ratio` for Gaussian entries.
    pub std_err: f64,
}

/// Estimate `var(h_kk) / var(h_kl)` from `n_paths` independent paths
/// sampled at time `t`.
pub fn variance_ratio(model: &NoiseModel, n_paths: usize, t: f64) -> Result<VarianceRatio> {
    if model.n_dim < 2 || n_paths == 0 {
        return Err(Error::InvalidArgument("need N >= 2 and at least one path".into()));
    }
    let n = model.n_dim;
    let (mut d2, mut o2) = (0.0, 0.0);
    for i in 0..n_paths {
        let h = build_path(&model.with_seed(rng::trial_seed(model.seed, i as u64)))?.eval_at(t);
        for k in 0..n {
            d2 += h[(k, k)] * h[(k, k)];
            for l in k + 1..n {
                o2 += h[(k, l)] * h[(k, l)];
            }
        }
    }
    let nd = (n_paths * n) as f64;
    let no = (n_paths * n * (n - 1) / 2) as f64;
    let (diagonal, off_diagonal) = (d2 / nd, o2 / no);
    let ratio = diagonal / off_diagonal;
    Ok(VarianceRatio {
        diagonal,
        off_diagonal,
        ratio,
        std_err: ratio * (2.0 / nd + 2.0 / no).sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DensityCheck {
    pub bin_edges: Vec<f64>,
    /// Empirical density, normalized to unit area.
    pub density: Vec<f64>,
    /// Semicircle density averaged over each bin.
    pub semicircle: Vec<f64>,
    pub sup_deviation: f64,
    pub peak_density: f64,
    pub radius: f64,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub bin_width: f64,
    /// False for `N < 64`, where the semicircle law is a poor description.
    pub asymptotic_reliable: bool,
}

/// Pool the eigenvalues of `n_samples` static draws `h(0)` and compare the
/// histogram against Wigner's semicircle of radius `sqrt(4 sigma^2 N)`.
pub fn eigenvalue_density_check(
    model: &NoiseModel,
    n_samples: usize,
    n_bins: usize,
) -> Result<DensityCheck> {
    if n_samples == 0 || n_bins == 0 {
        return Err(Error::InvalidArgument("need at least one sample and one bin".into()));
    }
    let radius = model.semicircle_radius();
    let mut eigs = Vec::with_capacity(n_samples * model.n_dim);
    for i in 0..n_samples {
        let path = build_path(&model.with_seed(rng::trial_seed(model.seed, i as u64)))?;
        eigs.extend(path.eval_at(0.0).symmetric_eigenvalues().iter().copied());
    }
    let lo = -1.2 * radius;
    let width = 2.4 * radius / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for e in &eigs {
        let b = ((e - lo) / width).floor();
        if b >= 0.0 && (b as usize) < n_bins {
            counts[b as usize] += 1;
        }
    }
    let total = eigs.len() as f64;
    let bin_edges: Vec<f64> = (0..=n_bins).map(|i| lo + width * i as f64).collect();
    let density: Vec<f64> = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    let semicircle: Vec<f64> = bin_edges
        .windows(2)
        .map(|w| (semicircle_cdf(w[1], radius) - semicircle_cdf(w[0], radius)) / width)
        .collect();
    let sup_deviation = density
        .iter()
        .zip(&semicircle)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DensityCheck {
        bin_edges,
        density,
        semicircle,
        sup_deviation,
        peak_density: 2.0 / (PI * radius),
        radius,
        min_eigenvalue: eigs.iter().copied().fold(f64::INFINITY, f64::min),
        max_eigenvalue: eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        bin_width: width,
        asymptotic_reliable: model.n_dim >= 64,
    })
}

/// Cumulative distribution of the unit-area semicircle of radius `r`.
fn semicircle_cdf(e: f64, r: f64) -> f64 {
    let x = (e / r).clamp(-1.0, 1.0);
    0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / PI
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(n: usize, m: usize, seed: u64) -> NoiseModel {
        NoiseModel::new(n, 0.1, 1.0, Shape::WhiteSinc, m, 1.0 / 8.0, seed).unwrap()
    }

    #[test]
    fn symmetric_and_deterministic() {
        let path = build_path(&white(2, 64, 7)).unwrap();
        let h = path.eval_at(0.0);
        assert_eq!(h[(0, 1)], h[(1, 0)]);
        assert_eq!(h, path.eval_at(0.0));
        let again = build_path(&white(2, 64, 7)).unwrap();
        assert_eq!(path, again);
        let h5 = path.eval_at(5.3);
        assert_eq!(h5, h5.transpose());
    }

    #[test]
    fn element_matches_matrix() {
        let path = build_path(&white(5, 16, 3)).unwrap();
        let h = path.eval_at(1.7);
        for k in 0..5 {
            for l in 0..5 {
                assert!((path.element(k, l, 1.7) - h[(k, l)]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn leading_block_independent_of_dimension() {
        let small = build_path(&white(2, 8, 11)).unwrap().eval_at(0.4);
        let big = build_path(&white(4, 8, 11)).unwrap().eval_at(0.4);
        for k in 0..2 {
            for l in 0..2 {
                assert_eq!(small[(k, l)], big[(k, l)]);
            }
        }
    }

    #[test]
    fn rejects_bad_models() {
        assert!(NoiseModel::new(2, 0.1, 1.0, Shape::WhiteSinc, 0, 1.0, 0).is_err());
        assert!(NoiseModel::new(2, 0.1, 0.0, Shape::WhiteSinc, 4, 1.0, 0).is_err());
        assert!(NoiseModel::new(2, 0.1, -1.0, Shape::WhiteSinc, 4, 1.0, 0).is_err());
        assert!(PsdTable::new(vec![0.0, 0.5, 1.0], vec![1.0, -0.1, 1.0]).is_err());
        assert!(PsdTable::new(vec![0.0, 1.5], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn constant_snr_variance() {
        let m = NoiseModel::constant_snr(64, 2.0, 0.1, 1.0, Shape::WhiteSinc, 8, 0).unwrap();
        assert!((m.sigma_sq - 4.0 / 256.0).abs() < 1e-15);
        assert!((m.semicircle_radius() - 2.0).abs() < 1e-12);
        assert_eq!(m.element_variance(3, 3), 2.0 * m.sigma_sq);
        assert_eq!(m.element_variance(3, 4), m.sigma_sq);
    }

    #[test]
    fn discrete_correlation_closed_form() {
        let m = white(2, 64, 0);
        for &tau in &[0.0, 0.3, 3.0, 17.0, 100.0] {
            let x: f64 = m.omega0 * tau;
            let closed = if tau == 0.0 {
                1.0
            } else {
                x.sin() / (2.0 * 64.0 * (x / 128.0).sin())
            };
            assert!((m.discrete_correlation(tau) - closed).abs() < 1e-12);
        }
        // revival at 2 pi M / omega0
        assert!((m.discrete_correlation(2.0 * PI * 64.0) + 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_custom_table_matches_sinc() {
        let flat = Shape::Custom(PsdTable::new(vec![0.0, 0.5, 1.0], vec![1.0, 1.0, 1.0]).unwrap());
        for &x in &[0.0, 0.01, 0.09, 0.5, 1.0, 3.0, 25.0] {
            assert!((flat.correlation(x) - sinc(x)).abs() < 1e-13, "x = {x}");
        }
    }

    #[test]
    fn custom_correlation_matches_quadrature() {
        let t = PsdTable::lorentzian(0.2, 41).unwrap();
        let shape = Shape::Custom(t.clone());
        for &x in &[0.0, 0.05, 0.7, 4.0, 30.0] {
            let num = crate::quadrature::integrate(
                |nu: f64| t.density_at(nu) * (nu * x).cos(),
                0.0,
                1.0,
                crate::quadrature::QuadOptions::default().with_panels(40),
            );
            let norm = t.total_power();
            assert!((shape.correlation(x) - num.value / norm).abs() < 1e-10, "x = {x}");
        }
        assert!(t.truncated_power.unwrap() > 0.0);
    }

    #[test]
    fn sinc_derivatives_by_finite_difference() {
        let s = Shape::WhiteSinc;
        for &x in &[0.0, 0.7, 4.0, 9.5] {
            let h = 1e-3;
            let fd1 = (sinc(x + h) - sinc(x - h)) / (2.0 * h);
            let fd2 = (sinc(x + h) - 2.0 * sinc(x) + sinc(x - h)) / (h * h);
            assert!((s.correlation_derivative(1, x) - fd1).abs() < 1e-6);
            assert!((s.correlation_derivative(2, x) - fd2).abs() < 1e-5);
        }
    }

    #[test]
    fn binary_round_trip() {
        let shape = Shape::Custom(PsdTable::lorentzian(0.1, 9).unwrap());
        let model = NoiseModel::new(3, 0.2, 2.0, shape, 5, 0.3, 99).unwrap();
        let path = build_path(&model).unwrap();
        let mut buf = Vec::new();
        path.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"HNPATH01");
        assert_eq!(u64::from_le_bytes(buf[8..16].try_into().unwrap()), 3);
        let back = NoisePath::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.eval_at(1.25), path.eval_at(1.25));
    }

    #[test]
    fn autocorrelation_argument_checks() {
        let m = white(2, 8, 1);
        assert!(empirical_autocorrelation(&m, 10, &[]).is_err());
        assert!(empirical_autocorrelation(&m, 1, &[0.0]).is_err());
    }

    #[test]
    fn small_dimension_flagged() {
        let m = white(2, 8, 1);
        let d = eigenvalue_density_check(&m, 3, 10).unwrap();
        assert!(!d.asymptotic_reliable);
    }

    #[test]
    fn diagonal_variance_doubles() {
        let r = variance_ratio(&white(8, 64, 3), 400, 1.7).unwrap();
        assert!((r.ratio - 2.0).abs() < 4.0 * r.std_err, "{r:?}");
        assert!((r.off_diagonal - 0.125).abs() < 0.01);
    }
}
