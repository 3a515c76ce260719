//! Monte-Carlo estimation, parameter sweeps and the tables written by the
//! command-line tool.
//!
//! Trials run on the current rayon pool; results are collected and reduced
//! in trial-index order, so tables do not depend on the thread count. Every
//! row of a sweep reuses the master seed, which makes neighbouring rows
//! share their noise paths (common random numbers).

pub mod config;
mod reports;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{CheckSpec, ExperimentConfig, InstanceSpec, NoiseSpec, SweepParam, SweepSpec};
pub use reports::{
    lemma_demo, noise_check, regime_report, write_spectrum, AmplitudeRow, AutocorrRow, LemmaDemo,
    LemmaRow, NoiseCheckReport, RegimeLine, RegimeReport,
};

use crate::error::{Error, Result};
use crate::evolution::{TrialContext, TrialResult};
use crate::model::{ProblemInstance, Variant};
use crate::noise::NoiseModel;
use crate::perturbative::{
    perr_adiabatic_with, perr_analog, regime_verdicts, AdiabaticOptions, PerrPrediction, MUCH_GREATER,
};

/// Largest `N` for Monte-Carlo runs before a warning is attached.
pub const MC_DIM_LIMIT: usize = 256;
/// Largest `N` for prediction-only runs before a warning is attached.
pub const ANALYTIC_DIM_LIMIT: usize = 1024;

/// Rayon pool with `threads` workers (all cores when `None`).
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::InvalidArgument("thread count must be positive".into()));
        }
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Second-order prediction for either variant. `p_bar` is the noiseless
/// error probability (zero for the analog run, whose reference is the ideal
/// final state).
pub fn predict(
    inst: &ProblemInstance,
    noise: &NoiseModel,
    p_bar: f64,
    overlap_correction: bool,
) -> Result<PerrPrediction> {
    match inst.variant {
        Variant::Analog => perr_analog(inst, noise),
        Variant::Adiabatic => perr_adiabatic_with(
            inst,
            noise,
            p_bar,
            AdiabaticOptions { overlap_correction, ..AdiabaticOptions::default() },
        ),
    }
}

/// Noiseless error probability under the variant's `p_err` definition.
pub fn ideal_error(cfg: &ExperimentConfig) -> Result<f64> {
    let inst = cfg.problem_instance()?;
    match inst.variant {
        Variant::Analog => Ok(0.0),
        Variant::Adiabatic => {
            let ctx = TrialContext::new(&inst, &cfg.noise_model()?.with_epsilon(0.0), &cfg.propagator)?;
            Ok((1.0 - ctx.ideal_final[inst.marked].norm_sqr()).max(0.0))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RowStatus {
    Ok,
    Failed,
}

/// One Monte-Carlo point with the matching prediction.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub status: RowStatus,
    pub variant: Variant,
    pub n_dim: usize,
    pub epsilon: f64,
    pub omega0: f64,
    pub delta: f64,
    pub n_trials: usize,
    pub mean_p_err: f64,
    /// Sample standard deviation over `sqrt(n_trials)`.
    pub std_err: f64,
    /// Mean under the other `p_err` definition.
    pub mean_p_err_alt: f64,
    pub std_err_alt: f64,
    pub mean_per_eps2: f64,
    /// `(mean_even - mean_odd) / sqrt(se_even^2 + se_odd^2)` over trial index parity.
    pub split_half_z: f64,
    pub pred_p_err: f64,
    pub pred_per_eps2: f64,
    pub pred_degenerate: f64,
    pub pred_intra: f64,
    pub pred_interference: f64,
    pub pred_first_excited: f64,
    pub pred_ideal: f64,
    pub pred_overlap_corrected: f64,
    pub regime_high: bool,
    pub regime_low: bool,
    pub max_norm_drift: f64,
    pub mean_steps: f64,
    pub note: String,
    #[serde(skip)]
    pub wall_time: f64,
    /// Per-trial `p_err` in trial order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

impl SweepRow {
    fn blank(cfg: &ExperimentConfig, param: Option<SweepParam>) -> Self {
        Self {
            param: param.map(|p| p.name().to_string()).unwrap_or_default(),
            value: param.map(|p| cfg.param_value(p)).unwrap_or(f64::NAN),
            status: RowStatus::Ok,
            variant: cfg.instance.variant,
            n_dim: cfg.instance.n_dim,
            epsilon: cfg.noise.epsilon,
            omega0: cfg.noise.omega0,
            delta: cfg.instance.delta.unwrap_or(f64::NAN),
            n_trials: cfg.n_trials,
            mean_p_err: f64::NAN,
            std_err: f64::NAN,
            mean_p_err_alt: f64::NAN,
            std_err_alt: f64::NAN,
            mean_per_eps2: f64::NAN,
            split_half_z: f64::NAN,
            pred_p_err: f64::NAN,
            pred_per_eps2: f64::NAN,
            pred_degenerate: f64::NAN,
            pred_intra: f64::NAN,
            pred_interference: f64::NAN,
            pred_first_excited: f64::NAN,
            pred_ideal: f64::NAN,
            pred_overlap_corrected: f64::NAN,
            regime_high: false,
            regime_low: false,
            max_norm_drift: f64::NAN,
            mean_steps: f64::NAN,
            note: String::new(),
            wall_time: 0.0,
            samples: Vec::new(),
        }
    }

    fn set_prediction(&mut self, p: &PerrPrediction) {
        self.pred_p_err = p.mean_p_err;
        self.pred_per_eps2 = p.per_epsilon_sq();
        self.pred_degenerate = p.breakdown.degenerate_coupling;
        self.pred_intra = p.breakdown.intra_populated;
        self.pred_interference = p.breakdown.interference;
        self.pred_first_excited = p.breakdown.first_excited;
        self.pred_ideal = p.breakdown.ideal;
        self.pred_overlap_corrected = p.overlap_corrected.unwrap_or(f64::NAN);
        if !p.warnings.is_empty() {
            append_note(&mut self.note, &p.warnings.join("; "));
        }
    }
}

fn append_note(note: &mut String, msg: &str) {
    if !note.is_empty() {
        note.push_str("; ");
    }
    note.push_str(msg);
}

/// Mean and standard error, summed in slice order.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn split_half_z(xs: &[f64]) -> f64 {
    if xs.len() < 4 {
        return f64::NAN;
    }
    let even: Vec<f64> = xs.iter().step_by(2).copied().collect();
    let odd: Vec<f64> = xs.iter().skip(1).step_by(2).copied().collect();
    let (me, se) = mean_and_stderr(&even);
    let (mo, so) = mean_and_stderr(&odd);
    let d = (se * se + so * so).sqrt();
    if d > 0.0 {
        (me - mo) / d
    } else {
        0.0
    }
}

fn run_point(cfg: &ExperimentConfig, param: Option<SweepParam>) -> Result<SweepRow> {
    let start = Instant::now();
    let inst = cfg.problem_instance()?;
    let noise = cfg.noise_model()?;
    let mut row = SweepRow::blank(cfg, param);
    let ctx = TrialContext::new(&inst, &noise, &cfg.propagator)?;
    let trials: Vec<Result<TrialResult>> =
        (0..cfg.n_trials as u64).into_par_iter().map(|i| ctx.run(i)).collect();
    let trials: Vec<TrialResult> = trials.into_iter().collect::<Result<_>>()?;

    let samples: Vec<f64> = trials.iter().map(|t| t.p_err).collect();
    let alt: Vec<f64> = trials.iter().map(|t| t.p_err_alt()).collect();
    (row.mean_p_err, row.std_err) = mean_and_stderr(&samples);
    (row.mean_p_err_alt, row.std_err_alt) = mean_and_stderr(&alt);
    row.split_half_z = split_half_z(&samples);
    row.max_norm_drift = trials.iter().map(|t| t.norm_drift).fold(0.0, f64::max);
    row.mean_steps = trials.iter().map(|t| t.steps as f64).sum::<f64>() / trials.len() as f64;

    let p_bar = match inst.variant {
        Variant::Analog => 0.0,
        Variant::Adiabatic => (1.0 - ctx.ideal_final[inst.marked].norm_sqr()).max(0.0),
    };
    let eps2 = noise.epsilon * noise.epsilon;
    row.mean_per_eps2 = if eps2 > 0.0 { (row.mean_p_err - p_bar) / eps2 } else { f64::NAN };
    match predict(&inst, &noise, p_bar, cfg.overlap_correction) {
        Ok(p) => row.set_prediction(&p),
        Err(e) => append_note(&mut row.note, &format!("prediction unavailable: {e}")),
    }
    let (high, low) = regime_verdicts(&inst, &noise)?;
    row.regime_high = high.holds;
    row.regime_low = low.holds;
    if inst.n_dim > MC_DIM_LIMIT {
        append_note(&mut row.note, &format!("N = {} beyond the Monte-Carlo envelope {MC_DIM_LIMIT}", inst.n_dim));
    }
    row.samples = samples;
    row.wall_time = start.elapsed().as_secs_f64();
    Ok(row)
}

/// Run `cfg.n_trials` trials at the configured point.
pub fn monte_carlo(cfg: &ExperimentConfig) -> Result<SweepRow> {
    cfg.validate()?;
    run_point(cfg, None)
}

/// Prediction-only point.
#[derive(Debug, Clone, Serialize)]
pub struct PredictionRow {
    pub param: String,
    pub value: f64,
    pub variant: Variant,
    pub n_dim: usize,
    pub epsilon: f64,
    pub omega0: f64,
    pub delta: f64,
    pub pred_p_err: f64,
    pub pred_per_eps2: f64,
    pub pred_degenerate: f64,
    pub pred_intra: f64,
    pub pred_interference: f64,
    pub pred_first_excited: f64,
    pub pred_ideal: f64,
    pub pred_overlap_corrected: f64,
    pub regime_high: bool,
    pub regime_low: bool,
    pub note: String,
}

fn prediction_row(cfg: &ExperimentConfig, param: Option<SweepParam>, p_bar: f64) -> Result<PredictionRow> {
    let inst = cfg.problem_instance()?;
    let noise = cfg.noise_model()?;
    let p = predict(&inst, &noise, p_bar, cfg.overlap_correction)?;
    let (high, low) = regime_verdicts(&inst, &noise)?;
    let mut note = p.warnings.join("; ");
    if inst.n_dim > ANALYTIC_DIM_LIMIT {
        append_note(&mut note, &format!("N = {} beyond the analytic envelope {ANALYTIC_DIM_LIMIT}", inst.n_dim));
    }
    Ok(PredictionRow {
        param: param.map(|p| p.name().to_string()).unwrap_or_default(),
        value: param.map(|p| cfg.param_value(p)).unwrap_or(f64::NAN),
        variant: inst.variant,
        n_dim: inst.n_dim,
        epsilon: noise.epsilon,
        omega0: noise.omega0,
        delta: cfg.instance.delta.unwrap_or(f64::NAN),
        pred_p_err: p.mean_p_err,
        pred_per_eps2: p.per_epsilon_sq(),
        pred_degenerate: p.breakdown.degenerate_coupling,
        pred_intra: p.breakdown.intra_populated,
        pred_interference: p.breakdown.interference,
        pred_first_excited: p.breakdown.first_excited,
        pred_ideal: p.breakdown.ideal,
        pred_overlap_corrected: p.overlap_corrected.unwrap_or(f64::NAN),
        regime_high: high.holds,
        regime_low: low.holds,
        note,
    })
}

/// Geometric grid spanning the sweep values, merged with the values
/// themselves so the curve passes through every Monte-Carlo point.
pub fn overlay_grid(values: &[f64], points: usize) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let near = |x: f64| values.iter().any(|v| (x - v).abs() <= 1e-9 * v.abs());
    let mut grid: Vec<f64> = values.to_vec();
    if points >= 2 && lo > 0.0 && hi > lo {
        grid.extend(
            (0..points)
                .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (points - 1) as f64).exp())
                .filter(|&x| !near(x)),
        );
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Predictions at the sweep values (on the fine overlay grid for an
/// `omega0` axis) or at the configured point.
pub fn predict_table(cfg: &ExperimentConfig) -> Result<Vec<PredictionRow>> {
    cfg.validate()?;
    let Some(sw) = &cfg.sweep else {
        let p_bar = ideal_error(cfg)?;
        return Ok(vec![prediction_row(cfg, None, p_bar)?]);
    };
    let values = if sw.param == SweepParam::Omega0 {
        overlay_grid(&sw.values, sw.overlay_points)
    } else {
        let mut v = sw.values.clone();
        v.sort_by(f64::total_cmp);
        v
    };
    // the noiseless run does not depend on the noise parameters
    let shared_p_bar = match sw.param {
        SweepParam::Omega0 | SweepParam::Epsilon => Some(ideal_error(cfg)?),
        _ => None,
    };
    values
        .iter()
        .map(|&v| {
            let c = cfg.with_param(sw.param, v)?;
            let p_bar = match shared_p_bar {
                Some(p) => p,
                None => ideal_error(&c)?,
            };
            prediction_row(&c, Some(sw.param), p_bar)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub version: &'static str,
    pub git_hash: Option<String>,
    pub master_seed: u64,
    pub n_trials: usize,
    pub threads: usize,
    pub threshold_factor: f64,
    /// Per-row wall time in seconds, in row order.
    pub wall_times: Vec<f64>,
    pub total_wall_time: f64,
    /// Mean of `split_half_z^2` over successful rows (about 1 when the
    /// standard errors are honest).
    pub split_half_mean_z2: f64,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub param: Option<SweepParam>,
    pub rows: Vec<SweepRow>,
    pub overlay: Vec<PredictionRow>,
    pub meta: RunMeta,
}

/// Serialize `rows` as CSV; an empty table gets `header` alone.
pub fn write_csv_rows<T: Serialize>(rows: &[T], out: impl Write, header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(!rows.is_empty()).from_writer(out);
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

impl SweepTable {
    fn from_rows(cfg: &ExperimentConfig, param: Option<SweepParam>, rows: Vec<SweepRow>, total: f64) -> Self {
        let z: Vec<f64> = rows.iter().map(|r| r.split_half_z).filter(|z| z.is_finite()).collect();
        let mut warnings = Vec::new();
        for r in &rows {
            if r.status == RowStatus::Failed {
                warnings.push(format!("row {} = {} failed: {}", r.param, r.value, r.note));
            }
        }
        let meta = RunMeta {
            version: env!("CARGO_PKG_VERSION"),
            git_hash: None,
            master_seed: cfg.master_seed,
            n_trials: cfg.n_trials,
            threads: rayon::current_num_threads(),
            threshold_factor: MUCH_GREATER,
            wall_times: rows.iter().map(|r| r.wall_time).collect(),
            total_wall_time: total,
            split_half_mean_z2: if z.is_empty() {
                f64::NAN
            } else {
                z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64
            },
            warnings,
            config: cfg.clone(),
        };
        Self { param, rows, overlay: Vec::new(), meta }
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        write_csv_rows(&self.rows, out, &["param"])
    }

    pub fn write_overlay_csv(&self, out: impl Write) -> Result<()> {
        write_csv_rows(&self.overlay, out, &["param"])
    }

    pub fn write_json(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn write_metadata(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.meta)?;
        Ok(())
    }

    /// Write `<stem>.csv`, `<stem>_overlay.csv` (when present) and the
    /// `<stem>.json` metadata sidecar into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let p = dir.join(format!("{stem}.csv"));
        self.write_csv(std::fs::File::create(&p)?)?;
        written.push(p);
        if !self.overlay.is_empty() {
            let p = dir.join(format!("{stem}_overlay.csv"));
            self.write_overlay_csv(std::fs::File::create(&p)?)?;
            written.push(p);
        }
        let p = dir.join(format!("{stem}.json"));
        self.write_metadata(std::fs::File::create(&p)?)?;
        written.push(p);
        Ok(written)
    }
}

/// Single-row table for [`monte_carlo`].
pub fn run_table(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let start = Instant::now();
    let row = monte_carlo(cfg)?;
    Ok(SweepTable::from_rows(cfg, None, vec![row], start.elapsed().as_secs_f64()))
}

/// One Monte-Carlo row per sweep value, ascending. A failing row is marked
/// and the sweep continues. An `omega0` axis also carries the analytic
/// overlay.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config { line: 0, msg: "no sweep axis configured".into() })?;
    let start = Instant::now();
    let mut values = sw.values.clone();
    values.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(values.len());
    for &v in &values {
        let row = cfg.with_param(sw.param, v).and_then(|c| run_point(&c, Some(sw.param)));
        rows.push(match row {
            Ok(r) => r,
            Err(e) => {
                let mut r = match cfg.with_param(sw.param, v) {
                    Ok(c) => SweepRow::blank(&c, Some(sw.param)),
                    Err(_) => SweepRow::blank(cfg, Some(sw.param)),
                };
                r.value = v;
                r.status = RowStatus::Failed;
                r.note = e.to_string();
                r
            }
        });
    }
    let mut table = SweepTable::from_rows(cfg, Some(sw.param), rows, 0.0);
    if sw.param == SweepParam::Omega0 {
        match predict_table(cfg) {
            Ok(o) => table.overlay = o,
            Err(e) => table.meta.warnings.push(format!("analytic overlay failed: {e}")),
        }
    }
    table.meta.total_wall_time = start.elapsed().as_secs_f64();
    Ok(table)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::parse(
            "instance.n_dim = 4\nnoise.epsilon = 0.05\nnoise.omega0 = 2\nrun.n_trials = 6\nrun.seed = 5\n",
        )
        .unwrap()
    }

    #[test]
    fn noiseless_analog_row() {
        let mut cfg = small();
        cfg.noise.epsilon = 0.0;
        let row = monte_carlo(&cfg).unwrap();
        assert!(row.mean_p_err < 1e-7);
        assert_eq!(row.pred_p_err, 0.0);
    }

    #[test]
    fn rows_are_reproducible() {
        let cfg = small();
        let a = run_table(&cfg).unwrap();
        let b = run_table(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        let pool = thread_pool(Some(2)).unwrap();
        let c = pool.install(|| run_table(&cfg)).unwrap();
        let mut cc = Vec::new();
        c.write_csv(&mut cc).unwrap();
        assert_eq!(ca, cc);
        assert_eq!(a.rows[0].samples.len(), 6);
    }

    #[test]
    fn sweep_rows_ascending() {
        let mut cfg = small();
        cfg.sweep = Some(SweepSpec { param: SweepParam::Epsilon, values: vec![0.02, 0.01], overlay_points: 0 });
        let t = sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
        assert!(t.rows[0].value < t.rows[1].value);
        assert!(t.overlay.is_empty());
    }

    #[test]
    fn omega0_overlay_contains_points() {
        let mut cfg = small();
        cfg.n_trials = 2;
        cfg.sweep = Some(SweepSpec { param: SweepParam::Omega0, values: vec![0.5, 4.0], overlay_points: 9 });
        let t = sweep(&cfg).unwrap();
        assert!(t.overlay.len() >= 9);
        for r in &t.rows {
            let o = t.overlay.iter().find(|o| o.value == r.value).unwrap();
            assert_eq!(o.pred_p_err, r.pred_p_err);
        }
    }

    #[test]
    fn stats() {
        let (m, s) = mean_and_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!((loglog_slope(&[1.0, 2.0, 4.0], &[3.0, 12.0, 48.0]) - 2.0).abs() < 1e-12);
    }
}
