use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlama::amp::TuningPolicy;
use mlama::denoise::{Denoiser, Family};
use mlama::harness::{emit, run_sweep, DetectorSpec, Format, SweepConfig};
use mlama::se::{fixed_point, mrt, save_trajectory, se_trajectory, ser_predict, SeConfig};
use mlama::{channel::snr_to_n0, validate, Error, Result};

#[derive(Parser)]
#[command(
    name = "mlama",
    version,
    about = "Mismatched-prior AMP detectors for massive MIMO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo SER sweep over detectors and SNR points.
    Sweep(Overrides),
    /// State-evolution trajectories, fixed points and recovery thresholds.
    Se {
        #[command(flatten)]
        overrides: Overrides,
        /// Iterations for baselines without an iteration count.
        #[arg(long, default_value_t = 100)]
        t_max: usize,
    },
    /// Runs the analytic self-check suite.
    Validate,
}

/// Every config key, settable from the command line.
#[derive(Args)]
struct Overrides {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    mr: Option<usize>,
    #[arg(long)]
    mt: Option<usize>,
    #[arg(long)]
    constellation: Option<String>,
    #[arg(long)]
    normalize: Option<bool>,
    /// Comma-separated detector keys, e.g. `exact,lmmse,clip/limit-zero/10`.
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<String>>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr_db: Option<Vec<f64>>,
    #[arg(long)]
    min_symbol_errors: Option<u64>,
    #[arg(long)]
    max_trials: Option<u64>,
    #[arg(long)]
    batch_size: Option<u64>,
    #[arg(long)]
    name: Option<String>,
}

impl Overrides {
    fn resolve(self) -> Result<SweepConfig> {
        let mut cfg = match &self.config {
            Some(path) => SweepConfig::load(path)?,
            None => SweepConfig::from_toml("detectors = []\nsnr_db = []")?,
        };
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { cfg.$field = v; })* };
        }
        set!(
            seed,
            out,
            format,
            mr,
            mt,
            constellation,
            normalize,
            detectors,
            snr_db
        );
        set!(min_symbol_errors, max_trials, batch_size, name);
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep(over: Overrides) -> Result<()> {
    let cfg = over.resolve()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let result = run_sweep(&cfg)?;
    for r in &result.records {
        let pred = r
            .ser_se_pred
            .map(|p| format!("{p:.3e}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<28} {:>6.2} dB  ser {:.3e} [{:.3e}, {:.3e}]  se {pred}  trials {}  diverged {}",
            r.detector, r.snr_db, r.ser, r.ci_lo, r.ci_hi, r.trials, r.diverged
        );
    }
    let path = emit(&result, cfg.format, &cfg.out)?;
    println!("wrote {}", path.display());
    Ok(())
}

/// State-evolution model of a detector key.
fn se_model(spec: &DetectorSpec, cfg: &SweepConfig, t_default: usize) -> Result<(SeConfig, usize)> {
    let c = cfg.constellation()?;
    let (family, tuning, t_max) = match *spec {
        DetectorSpec::Amp {
            family,
            tuning,
            t_max,
        } => (family, tuning, t_max),
        DetectorSpec::Lmmse => (Family::Gaussian, TuningPolicy::Optimal, t_default),
        DetectorSpec::Zf => (Family::Gaussian, TuningPolicy::LimitZero, t_default),
        DetectorSpec::Mf => (Family::Gaussian, TuningPolicy::LimitInfinity, t_default),
        DetectorSpec::Box => (Family::Clip, TuningPolicy::Optimal, t_default),
    };
    Ok((SeConfig::new(Denoiser::new(family, &c)?, tuning), t_max))
}

fn se(over: Overrides, t_default: usize) -> Result<()> {
    let cfg = over.resolve()?;
    let c = cfg.constellation()?;
    let beta = cfg.beta();
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let summary_path = cfg.out.join(format!("{}_se.csv", cfg.name));
    let mut summary = csv::Writer::from_path(&summary_path)
        .map_err(|e| Error::io(&summary_path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(&summary_path, std::io::Error::other(e));
    summary
        .write_record([
            "detector",
            "snr_db",
            "beta",
            "mrt",
            "sigma2_final",
            "fixed_point",
            "ser_pred",
        ])
        .map_err(io)?;
    for spec in cfg.detector_specs()? {
        let (model, t_max) = se_model(&spec, &cfg, t_default)?;
        let threshold = mrt(&model)?;
        println!("{:<28} recovery threshold {threshold:.6}", spec.key());
        for &snr_db in &cfg.snr_db {
            let n0 = snr_to_n0(snr_db, beta, c.es());
            let traj = se_trajectory(n0, beta, &model, t_max)?;
            let file = format!(
                "{}_se_{}_{snr_db}dB.csv",
                cfg.name,
                spec.key().replace('/', "_")
            );
            save_trajectory(&cfg.out.join(file), &traj, &c)?;
            let last = *traj.sigma2.last().unwrap();
            let fp = fixed_point(n0, beta, &model).ok();
            summary
                .write_record([
                    spec.key(),
                    format!("{snr_db:.16e}"),
                    format!("{beta:.16e}"),
                    format!("{threshold:.16e}"),
                    format!("{last:.16e}"),
                    fp.map(|v| format!("{v:.16e}")).unwrap_or_default(),
                    format!("{:.16e}", ser_predict(last, &c)),
                ])
                .map_err(io)?;
        }
    }
    summary.flush().map_err(|e| Error::io(&summary_path, e))?;
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn run_validate() -> bool {
    let checks = validate::run_all();
    let mut ok = true;
    for c in &checks {
        println!(
            "[{}] {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        ok &= c.passed;
    }
    ok
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let outcome = match cli.command {
        Command::Sweep(over) => sweep(over),
        Command::Se { overrides, t_max } => se(overrides, t_max),
        Command::Validate => {
            return if run_validate() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            };
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
