use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use hamnoise_core::harness::{self, ExperimentConfig, SweepTable};
use hamnoise_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "hamnoise", version, about = "Random-matrix noise on analog and adiabatic quantum search")]
struct Cli {
    /// Experiment file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `run.out_dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for Monte-Carlo trials.
    #[arg(long, global = true, env = "HAMNOISE_THREADS")]
    threads: Option<usize>,
    /// Format of the table printed to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Autocorrelation, variance ratio and eigenvalue histogram of the noise.
    NoiseCheck,
    /// Spectrum or ideal success curve of the configured instance.
    Spectrum {
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
    /// Monte-Carlo estimate at the configured point.
    Run {
        /// Override `run.n_trials`.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Monte-Carlo sweep along the configured axis.
    Sweep,
    /// Second-order prediction only.
    Predict,
    /// Cut-off regime and adiabaticity verdicts.
    Regimes,
    /// Integration-by-parts series demonstration.
    LemmaDemo {
        #[arg(long, default_value_t = 32)]
        n_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        delta: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::NoiseCheck => "noise-check",
            Command::Spectrum { .. } => "spectrum",
            Command::Run { .. } => "run",
            Command::Sweep => "sweep",
            Command::Predict => "predict",
            Command::Regimes => "regimes",
            Command::LemmaDemo { .. } => "lemma-demo",
        }
    }
}

/// Configuration and input problems exit with 2, numeric failures with 1.
fn is_usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Config { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidInstance(_)
            | Error::InvalidNoiseModel(_)
            | Error::VariantMismatch { .. }
            | Error::Io(_)
    )
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.outputs = d.clone();
    }
    if let Command::Run { trials: Some(n) } = cli.command {
        cfg.n_trials = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn git_hash() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "--short", "HEAD"]).output().ok()?;
    if !out.status.success() {
        return None;
    }
    Some(String::from_utf8_lossy(&out.stdout).trim().to_string()).filter(|s| !s.is_empty())
}

fn stem(cli: &Cli, default: &str) -> String {
    cli.config
        .as_deref()
        .and_then(Path::file_stem)
        .map(|s| format!("{}_{default}", s.to_string_lossy()))
        .unwrap_or_else(|| default.to_string())
}

fn emit_table(table: &mut SweepTable, cli: &Cli, cfg: &ExperimentConfig, name: &str) -> Result<(), Error> {
    table.meta.git_hash = git_hash();
    let files = table.save(&cfg.outputs, &stem(cli, name))?;
    let mut out = io::stdout().lock();
    match cli.format {
        Format::Csv => table.write_csv(&mut out)?,
        Format::Json => {
            table.write_json(&mut out)?;
            writeln!(out)?;
        }
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut std::fs::File) -> Result<(), Error>) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let p = dir.join(name);
    let mut file = std::fs::File::create(&p)?;
    f(&mut file)?;
    eprintln!("wrote {}", p.display());
    Ok(p)
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn execute(cli: &Cli, cfg: &ExperimentConfig) -> Result<(), Error> {
    let dir = &cfg.outputs;
    match &cli.command {
        Command::NoiseCheck => {
            let r = harness::noise_check(cfg)?;
            write_file(dir, &format!("{}.csv", stem(cli, "autocorr")), |f| r.write_autocorr_csv(f))?;
            write_file(dir, &format!("{}.csv", stem(cli, "density")), |f| r.write_density_csv(f))?;
            match cli.format {
                Format::Csv => r.write_autocorr_csv(io::stdout().lock())?,
                Format::Json => print_json(&r)?,
            }
            if let Some(v) = r.variance {
                eprintln!("variance ratio diag/off = {:.4} +- {:.4}", v.ratio, v.std_err);
            }
            eprintln!(
                "max |z| = {:.2}; semicircle sup deviation = {:.4} (peak {:.4})",
                r.max_abs_z, r.density.sup_deviation, r.density.peak_density
            );
        }
        Command::Spectrum { points } => {
            let p = write_file(dir, &format!("{}.csv", stem(cli, "spectrum")), |f| {
                harness::write_spectrum(cfg, *points, f)
            })?;
            io::stdout().write_all(&std::fs::read(p)?)?;
        }
        Command::Run { .. } => {
            let mut t = harness::run_table(cfg)?;
            emit_table(&mut t, cli, cfg, "run")?;
        }
        Command::Sweep => {
            let mut t = harness::sweep(cfg)?;
            emit_table(&mut t, cli, cfg, "sweep")?;
        }
        Command::Predict => {
            let rows = harness::predict_table(cfg)?;
            write_file(dir, &format!("{}.csv", stem(cli, "predict")), |f| {
                harness::write_csv_rows(&rows, f, &["param"])
            })?;
            match cli.format {
                Format::Csv => harness::write_csv_rows(&rows, io::stdout().lock(), &["param"])?,
                Format::Json => print_json(&rows)?,
            }
        }
        Command::Regimes => {
            let r = harness::regime_report(cfg)?;
            write_file(dir, &format!("{}.csv", stem(cli, "regimes")), |f| r.write_csv(f))?;
            match cli.format {
                Format::Csv => print!("{}", r.to_text()),
                Format::Json => print_json(&r)?,
            }
        }
        Command::LemmaDemo { n_dim, delta } => {
            let d = harness::lemma_demo(*n_dim, *delta, cfg.instance.e_bar)?;
            write_file(dir, "lemma_series.csv", |f| d.write_csv(f))?;
            write_file(dir, "lemma_amplitude.csv", |f| d.write_amplitude_csv(f))?;
            match cli.format {
                Format::Csv => d.write_csv(io::stdout().lock())?,
                Format::Json => print_json(&d)?,
            }
            for (n, s) in &d.slopes {
                eprintln!("n = {n}: error slope {s:.3} (expected {})", -(*n as f64 + 1.0));
            }
        }
    }
    Ok(())
}

fn write_diagnostics(cli: &Cli, cfg: &ExperimentConfig, err: &Error) -> Option<PathBuf> {
    let doc = serde_json::json!({
        "command": cli.command.name(),
        "error": err.to_string(),
        "debug": format!("{err:?}"),
        "config": cfg,
    });
    std::fs::create_dir_all(&cfg.outputs).ok()?;
    let p = cfg.outputs.join("diagnostics.json");
    std::fs::write(&p, serde_json::to_string_pretty(&doc).ok()?).ok()?;
    Some(p)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let pool = match harness::thread_pool(cli.threads) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| execute(&cli, &cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_usage_error(&e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(p) = write_diagnostics(&cli, &cfg, &e) {
                eprintln!("diagnostics written to {}", p.display());
            }
            ExitCode::from(1)
        }
    }
}
