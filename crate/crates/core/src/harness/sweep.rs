//! Monte-Carlo SER sweeps.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DetectorSpec, SweepConfig};
use super::stats::{wilson, Z95};
use crate::amp::{detect, DetectorConfig, TuningPolicy};
use crate::baselines::{
    box_detect, lmmse_bias, lmmse_detect, mf_detect, zf_detect, BoxSolverConfig,
};
use crate::channel::{snr_to_n0, trial_rng, CVector, MimoInstance};
use crate::constellation::Constellation;
use crate::denoise::{Denoiser, Family};
use crate::error::{Error, Result};
use crate::se::{fixed_point, se_trajectory, ser_predict, SeConfig};

/// Outcome of one (detector, SNR) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub detector: String,
    pub snr_db: f64,
    /// Completed (non-diverged) trials.
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub ser_se_pred: Option<f64>,
    pub diverged: u64,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub seed: u64,
    pub mt: usize,
    pub records: Vec<PointRecord>,
}

impl SweepResult {
    pub fn record(&self, detector: &str, snr_db: f64) -> Option<&PointRecord> {
        self.records
            .iter()
            .find(|r| r.detector == detector && r.snr_db == snr_db)
    }

    pub fn curve(&self, detector: &str) -> Vec<&PointRecord> {
        self.records
            .iter()
            .filter(|r| r.detector == detector)
            .collect()
    }
}

/// A detector prepared for one SNR point.
struct Runner {
    spec: DetectorSpec,
    amp: Option<DetectorConfig>,
    box_cfg: BoxSolverConfig,
}

impl Runner {
    fn new(spec: &DetectorSpec, c: &Constellation) -> Result<Self> {
        let amp = match *spec {
            DetectorSpec::Amp {
                family,
                tuning,
                t_max,
            } => {
                let mut cfg = DetectorConfig::new(Denoiser::new(family, c)?, tuning, t_max)?;
                cfg.record_trajectory = false;
                Some(cfg)
            }
            _ => None,
        };
        Ok(Runner {
            spec: spec.clone(),
            amp,
            box_cfg: BoxSolverConfig::default(),
        })
    }

    /// Hard decisions for one trial.
    fn run(&self, inst: &MimoInstance, c: &Constellation) -> Result<CVector> {
        let slice = |v: CVector| v.map(|z| c.slice(z));
        match self.spec {
            DetectorSpec::Amp { .. } => {
                Ok(detect(&inst.y, &inst.h, self.amp.as_ref().unwrap())?.hard)
            }
            DetectorSpec::Lmmse => {
                let mut s = lmmse_detect(&inst.y, &inst.h, inst.n0, c.es())?;
                let bias = lmmse_bias(&inst.h, inst.n0, c.es())?;
                for (si, b) in s.iter_mut().zip(bias) {
                    *si /= b;
                }
                Ok(slice(s))
            }
            DetectorSpec::Zf => Ok(slice(zf_detect(&inst.y, &inst.h)?)),
            DetectorSpec::Mf => Ok(slice(mf_detect(&inst.y, &inst.h)?)),
            DetectorSpec::Box => Ok(slice(
                box_detect(&inst.y, &inst.h, c.alpha(), &self.box_cfg)?.soft,
            )),
        }
    }
}

/// State-evolution SER prediction for the detector, if one exists.
pub fn se_prediction(spec: &DetectorSpec, c: &Constellation, n0: f64, beta: f64) -> Option<f64> {
    let se = |family, tuning| -> Result<SeConfig> {
        Ok(SeConfig::new(Denoiser::new(family, c)?, tuning))
    };
    let sigma2 = match *spec {
        DetectorSpec::Amp {
            family,
            tuning,
            t_max,
        } => se_trajectory(n0, beta, &se(family, tuning).ok()?, t_max)
            .ok()?
            .sigma2
            .last()
            .copied(),
        DetectorSpec::Lmmse => {
            fixed_point(n0, beta, &se(Family::Gaussian, TuningPolicy::Optimal).ok()?).ok()
        }
        DetectorSpec::Zf if beta < 1.0 => fixed_point(
            n0,
            beta,
            &se(Family::Gaussian, TuningPolicy::LimitZero).ok()?,
        )
        .ok(),
        DetectorSpec::Zf => None,
        DetectorSpec::Mf => Some(n0 + beta * c.variance()),
        DetectorSpec::Box => {
            fixed_point(n0, beta, &se(Family::Clip, TuningPolicy::Optimal).ok()?).ok()
        }
    }?;
    Some(ser_predict(sigma2, c))
}

fn count_errors(hard: &CVector, truth: &CVector) -> u64 {
    hard.iter()
        .zip(truth.iter())
        .filter(|(a, b)| a != b)
        .count() as u64
}

enum Trial {
    Done(u64),
    Diverged,
}

/// Runs every (detector, SNR) pair of the configuration.
///
/// Trial `k` at SNR index `p` always sees the realization drawn from
/// `trial_rng(seed, p, k)`, whichever detector is running. Trials are
/// scheduled in fixed-size rounds and the stopping rule is evaluated only
/// between rounds, so the result does not depend on the worker count.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cfg.workers {
            b = b.num_threads(n);
        }
        b.build()
            .map_err(|e| Error::config(format!("worker pool: {e}")))?
    };
    pool.install(|| run_points(cfg))
}

fn run_points(cfg: &SweepConfig) -> Result<SweepResult> {
    let c = cfg.constellation()?;
    let specs = cfg.detector_specs()?;
    let beta = cfg.beta();
    let symbols_per_trial = cfg.mt as u64;
    let mut records = Vec::with_capacity(specs.len() * cfg.snr_db.len());

    for spec in &specs {
        let runner = Runner::new(spec, &c)?;
        for (p, &snr_db) in cfg.snr_db.iter().enumerate() {
            let start = Instant::now();
            let n0 = snr_to_n0(snr_db, beta, c.es());
            let (mut trials, mut errors, mut diverged, mut attempted) = (0u64, 0u64, 0u64, 0u64);
            while errors < cfg.min_symbol_errors && attempted < cfg.max_trials {
                let end = (attempted + cfg.batch_size).min(cfg.max_trials);
                let outcomes: Vec<Result<Trial>> = (attempted..end)
                    .into_par_iter()
                    .map(|k| {
                        let mut rng = trial_rng(cfg.seed, p as u64, k);
                        let inst = MimoInstance::draw(&c, cfg.mr, cfg.mt, n0, &mut rng)?;
                        match runner.run(&inst, &c) {
                            Ok(hard) => Ok(Trial::Done(count_errors(&hard, &inst.s0))),
                            Err(
                                Error::Diverged { .. }
                                | Error::NotConverged { .. }
                                | Error::Detector(_),
                            ) => Ok(Trial::Diverged),
                            Err(e) => Err(e),
                        }
                    })
                    .collect();
                for o in outcomes {
                    match o? {
                        Trial::Done(e) => {
                            trials += 1;
                            errors += e;
                        }
                        Trial::Diverged => diverged += 1,
                    }
                }
                attempted = end;
            }
            let n = trials * symbols_per_trial;
            let ser = if n == 0 {
                f64::NAN
            } else {
                errors as f64 / n as f64
            };
            let (ci_lo, ci_hi) = wilson(errors, n, Z95);
            records.push(PointRecord {
                detector: spec.key(),
                snr_db,
                trials,
                errors,
                ser,
                ci_lo,
                ci_hi,
                ser_se_pred: se_prediction(spec, &c, n0, beta),
                diverged,
                wall_time_s: start.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(SweepResult {
        config: cfg.clone(),
        seed: cfg.seed,
        mt: cfg.mt,
        records,
    })
}
