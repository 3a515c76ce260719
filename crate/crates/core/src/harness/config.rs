//! Flat `section.key = value` experiment files.
//!
//! ```text
//! # analog search, cut-off sweep
//! instance.variant = analog
//! instance.n_dim = 100
//! noise.epsilon = 0.05
//! noise.omega0 = 1
//! run.n_trials = 200
//! run.seed = 42
//! sweep.param = omega0
//! sweep.values = logspace(0.05, 20, 12)
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown or repeated keys are
//! errors. Lists are comma separated or written as `linspace(a, b, n)` /
//! `logspace(a, b, n)` (endpoints included, geometric spacing for `logspace`).

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{Method, PropagatorConfig};
use crate::model::{ProblemInstance, Variant};
use crate::noise::{snr_variance, NoiseModel, PsdTable, Shape, DEFAULT_MODES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepParam {
    Omega0,
    NDim,
    Epsilon,
    Delta,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Omega0 => "omega0",
            SweepParam::NDim => "n_dim",
            SweepParam::Epsilon => "epsilon",
            SweepParam::Delta => "delta",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "omega0" => Ok(SweepParam::Omega0),
            "n_dim" | "n" => Ok(SweepParam::NDim),
            "epsilon" | "eps" => Ok(SweepParam::Epsilon),
            "delta" => Ok(SweepParam::Delta),
            _ => Err(format!("unknown sweep parameter '{s}' (omega0, n_dim, epsilon, delta)")),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InstanceSpec {
    pub variant: Variant,
    pub n_dim: usize,
    pub e_bar: f64,
    pub marked: usize,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseSpec {
    pub epsilon: f64,
    pub omega0: f64,
    pub shape: Shape,
    pub n_modes: usize,
    /// Fixed element variance; `None` keeps `E^2 / 4N` for every `N`.
    pub sigma_sq: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Points of the analytic curve emitted next to an `omega0` sweep.
    pub overlay_points: usize,
}

/// Settings of the `noise-check` diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct CheckSpec {
    pub paths: usize,
    /// Lags in units of `1 / omega0`.
    pub lags: Vec<f64>,
    pub samples: usize,
    pub bins: usize,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self { paths: 10_000, lags: (0..12).map(|i| 0.5 * i as f64).collect(), samples: 20, bins: 40 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub noise: NoiseSpec,
    pub n_trials: usize,
    pub sweep: Option<SweepSpec>,
    pub propagator: PropagatorConfig,
    pub outputs: PathBuf,
    pub master_seed: u64,
    /// `p_err` used to calibrate `eps*(N) = c N^(-1/4)`.
    pub target_p_err: f64,
    pub overlap_correction: bool,
    pub check: CheckSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            instance: InstanceSpec { variant: Variant::Analog, n_dim: 16, e_bar: 1.0, marked: 0, delta: None },
            noise: NoiseSpec { epsilon: 0.05, omega0: 1.0, shape: Shape::WhiteSinc, n_modes: DEFAULT_MODES, sigma_sq: None },
            n_trials: 100,
            sweep: None,
            propagator: PropagatorConfig::default(),
            outputs: PathBuf::from("out"),
            master_seed: 1,
            target_p_err: 0.01,
            overlap_correction: false,
            check: CheckSpec::default(),
        }
    }
}

fn config_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn parse_num<T: FromStr>(v: &str, line: usize, key: &str) -> Result<T> {
    v.parse().map_err(|_| config_err(line, format!("bad value '{v}' for {key}")))
}

fn parse_bool(v: &str, line: usize, key: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(config_err(line, format!("bad boolean '{v}' for {key}"))),
    }
}

/// Comma list, `linspace(a, b, n)` or `logspace(a, b, n)`.
pub fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    let v = v.trim();
    for (name, log) in [("linspace", false), ("logspace", true)] {
        if let Some(rest) = v.strip_prefix(name) {
            let inner = rest
                .trim()
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| format!("malformed {name}(...)"))?;
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("{name} takes (start, stop, count)"));
            }
            let a: f64 = parts[0].parse().map_err(|_| format!("bad number '{}'", parts[0]))?;
            let b: f64 = parts[1].parse().map_err(|_| format!("bad number '{}'", parts[1]))?;
            let n: usize = parts[2].parse().map_err(|_| format!("bad count '{}'", parts[2]))?;
            if n == 0 {
                return Err("empty range".into());
            }
            if log && !(a > 0.0 && b > 0.0) {
                return Err("logspace endpoints must be positive".into());
            }
            return Ok((0..n)
                .map(|i| {
                    let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                    if i + 1 == n && n > 1 {
                        b
                    } else if log {
                        (a.ln() + f * (b.ln() - a.ln())).exp()
                    } else {
                        a + f * (b - a)
                    }
                })
                .collect());
        }
    }
    let out: std::result::Result<Vec<f64>, String> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad number '{s}'")))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn read_psd_csv(path: &Path) -> Result<PsdTable> {
    let mut rdr = csv::Reader::from_path(path)?;
    let (mut nu, mut density) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec?;
        let get = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::InvalidNoiseModel(format!("bad PSD row in {}", path.display())))
        };
        nu.push(get(0)?);
        density.push(get(1)?);
    }
    PsdTable::new(nu, density)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_base(&text, path.parent())
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_base(text, None)
    }

    /// Relative `noise.psd_file` paths are resolved against `base`.
    pub fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = HashSet::new();
        let mut shape_name: Option<(String, usize)> = None;
        let mut corner: Option<f64> = None;
        let mut psd_points = 257usize;
        let mut psd_file: Option<PathBuf> = None;
        let mut sweep_param: Option<(SweepParam, usize)> = None;
        let mut sweep_values: Option<(Vec<f64>, usize)> = None;
        let mut overlay_points = 200usize;

        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, format!("expected 'section.key = value', got '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !key.contains('.') {
                return Err(config_err(line, format!("key '{key}' lacks a section")));
            }
            if !seen.insert(key.to_string()) {
                return Err(config_err(line, format!("duplicate key '{key}'")));
            }
            match key {
                "instance.variant" => {
                    cfg.instance.variant = match value {
                        "analog" => Variant::Analog,
                        "adiabatic" => Variant::Adiabatic,
                        _ => return Err(config_err(line, format!("unknown variant '{value}'"))),
                    }
                }
                "instance.n_dim" => cfg.instance.n_dim = parse_num(value, line, key)?,
                "instance.e_bar" => cfg.instance.e_bar = parse_num(value, line, key)?,
                "instance.marked" => cfg.instance.marked = parse_num(value, line, key)?,
                "instance.delta" => cfg.instance.delta = Some(parse_num(value, line, key)?),
                "noise.epsilon" => cfg.noise.epsilon = parse_num(value, line, key)?,
                "noise.omega0" => cfg.noise.omega0 = parse_num(value, line, key)?,
                "noise.shape" => shape_name = Some((value.to_string(), line)),
                "noise.corner" => corner = Some(parse_num(value, line, key)?),
                "noise.psd_points" => psd_points = parse_num(value, line, key)?,
                "noise.psd_file" => {
                    let p = PathBuf::from(value);
                    psd_file = Some(match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p,
                    });
                }
                "noise.n_modes" => cfg.noise.n_modes = parse_num(value, line, key)?,
                "noise.sigma_sq" => cfg.noise.sigma_sq = Some(parse_num(value, line, key)?),
                "run.n_trials" => cfg.n_trials = parse_num(value, line, key)?,
                "run.seed" => cfg.master_seed = parse_num(value, line, key)?,
                "run.out_dir" => cfg.outputs = PathBuf::from(value),
                "run.target_p_err" => cfg.target_p_err = parse_num(value, line, key)?,
                "sweep.param" => {
                    sweep_param = Some((value.parse().map_err(|e: String| config_err(line, e))?, line))
                }
                "sweep.values" => {
                    sweep_values = Some((parse_list(value).map_err(|e| config_err(line, e))?, line))
                }
                "sweep.overlay_points" => overlay_points = parse_num(value, line, key)?,
                "propagator.method" => {
                    cfg.propagator.method = match value {
                        "magnus" | "magnus_midpoint" => Method::MagnusMidpoint,
                        "rk4" => Method::Rk4,
                        _ => return Err(config_err(line, format!("unknown method '{value}'"))),
                    }
                }
                "propagator.dt_max" => cfg.propagator.dt_max = parse_num(value, line, key)?,
                "propagator.tol" => cfg.propagator.tol = parse_num(value, line, key)?,
                "propagator.renormalize" => cfg.propagator.renormalize = parse_bool(value, line, key)?,
                "predict.overlap_correction" => cfg.overlap_correction = parse_bool(value, line, key)?,
                "check.paths" => cfg.check.paths = parse_num(value, line, key)?,
                "check.lags" => cfg.check.lags = parse_list(value).map_err(|e| config_err(line, e))?,
                "check.samples" => cfg.check.samples = parse_num(value, line, key)?,
                "check.bins" => cfg.check.bins = parse_num(value, line, key)?,
                _ => return Err(config_err(line, format!("unknown key '{key}'"))),
            }
        }

        if let Some((name, line)) = shape_name {
            cfg.noise.shape = match name.as_str() {
                "white_sinc" | "white" => Shape::WhiteSinc,
                "lorentzian" => {
                    let c = corner.ok_or_else(|| config_err(line, "lorentzian shape needs noise.corner"))?;
                    Shape::Custom(PsdTable::lorentzian(c, psd_points).map_err(|e| config_err(line, e.to_string()))?)
                }
                "table" => {
                    let p = psd_file.ok_or_else(|| config_err(line, "table shape needs noise.psd_file"))?;
                    Shape::Custom(read_psd_csv(&p).map_err(|e| config_err(line, e.to_string()))?)
                }
                _ => return Err(config_err(line, format!("unknown shape '{name}'"))),
            };
        }
        match (sweep_param, sweep_values) {
            (Some((param, _)), Some((values, _))) => {
                cfg.sweep = Some(SweepSpec { param, values, overlay_points })
            }
            (Some((_, line)), None) => return Err(config_err(line, "sweep.param given without sweep.values")),
            (None, Some((_, line))) => return Err(config_err(line, "sweep.values given without sweep.param")),
            (None, None) => {}
        }
        cfg.validate().map_err(|e| match e {
            Error::Config { .. } => e,
            other => config_err(0, other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(config_err(0, "run.n_trials must be at least 1"));
        }
        if !(self.target_p_err > 0.0 && self.target_p_err < 1.0) {
            return Err(config_err(0, "run.target_p_err must lie in (0, 1)"));
        }
        self.propagator.validate()?;
        self.problem_instance()?;
        self.noise_model()?;
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(config_err(0, "sweep.values is empty"));
            }
            for &v in &sw.values {
                if !v.is_finite() || v < 0.0 || (v == 0.0 && sw.param != SweepParam::Epsilon) {
                    return Err(config_err(0, format!("sweep value {v} out of range for {}", sw.param)));
                }
                self.with_param(sw.param, v)?;
            }
        }
        Ok(())
    }

    pub fn problem_instance(&self) -> Result<ProblemInstance> {
        let s = &self.instance;
        match s.variant {
            Variant::Analog => ProblemInstance::analog(s.n_dim, s.e_bar, s.marked),
            Variant::Adiabatic => {
                let d = s.delta.ok_or_else(|| config_err(0, "adiabatic instance needs instance.delta"))?;
                ProblemInstance::adiabatic(s.n_dim, s.e_bar, s.marked, d)
            }
        }
    }

    /// Noise model seeded with the master seed.
    pub fn noise_model(&self) -> Result<NoiseModel> {
        let n = &self.noise;
        let sigma_sq = n.sigma_sq.unwrap_or_else(|| snr_variance(self.instance.n_dim, self.instance.e_bar));
        NoiseModel::new(self.instance.n_dim, n.epsilon, n.omega0, n.shape.clone(), n.n_modes, sigma_sq, self.master_seed)
    }

    /// Copy with one swept parameter replaced.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match param {
            SweepParam::Omega0 => c.noise.omega0 = value,
            SweepParam::Epsilon => c.noise.epsilon = value,
            SweepParam::Delta => c.instance.delta = Some(value),
            SweepParam::NDim => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(config_err(0, format!("n_dim sweep value {value} is not a positive integer")));
                }
                c.instance.n_dim = value as usize;
            }
        }
        c.problem_instance()?;
        c.noise_model()?;
        Ok(c)
    }

    /// Current value of a sweepable parameter.
    pub fn param_value(&self, param: SweepParam) -> f64 {
        match param {
            SweepParam::Omega0 => self.noise.omega0,
            SweepParam::Epsilon => self.noise.epsilon,
            SweepParam::Delta => self.instance.delta.unwrap_or(f64::NAN),
            SweepParam::NDim => self.instance.n_dim as f64,
        }
    }
}
