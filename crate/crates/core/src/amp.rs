//! Mismatched complex Bayesian AMP detector with a per-iteration tuning
//! stage.
//!
//! Each iteration estimates the decoupled noise variance from the
//! residual, picks the denoiser's variance parameter from that estimate,
//! denoises `s + H^H r` entry-wise and updates the residual with the
//! Onsager correction `beta * r * <F'>`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{CMatrix, CVector};
use crate::denoise::{Denoiser, Family};
use crate::error::{Error, Result};
use crate::optimize::{golden_section, log_grid};
use crate::se::psi_mm;

/// How the variance parameter `tau` is chosen from the decoupled-noise
/// estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TuningPolicy {
    /// Minimize the mismatched MSE at the current noise level.
    Optimal,
    Fixed(f64),
    /// `tau = sigma^2`.
    MatchSigma,
    /// `tau -> 0`.
    LimitZero,
    /// `tau -> infinity`.
    LimitInfinity,
}

impl TuningPolicy {
    pub fn resolve(&self, sigma2: f64, denoiser: &Denoiser) -> Result<f64> {
        match *self {
            TuningPolicy::Optimal => tune_tau(sigma2, denoiser),
            TuningPolicy::Fixed(tau) => Ok(tau),
            TuningPolicy::MatchSigma => Ok(sigma2),
            TuningPolicy::LimitZero => Ok(0.0),
            TuningPolicy::LimitInfinity => Ok(f64::INFINITY),
        }
    }

    pub fn key(&self) -> String {
        match self {
            TuningPolicy::Optimal => "optimal".into(),
            TuningPolicy::Fixed(t) => format!("fixed={t}"),
            TuningPolicy::MatchSigma => "match-sigma".into(),
            TuningPolicy::LimitZero => "limit-zero".into(),
            TuningPolicy::LimitInfinity => "limit-infinity".into(),
        }
    }
}

impl FromStr for TuningPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(v) = s.strip_prefix("fixed=") {
            let tau: f64 = v
                .parse()
                .map_err(|_| Error::config(format!("bad fixed tau '{v}'")))?;
            if !(tau >= 0.0) {
                return Err(Error::config(format!("fixed tau must be >= 0, got {tau}")));
            }
            return Ok(TuningPolicy::Fixed(tau));
        }
        match s.as_str() {
            "optimal" => Ok(TuningPolicy::Optimal),
            "match-sigma" => Ok(TuningPolicy::MatchSigma),
            "limit-zero" => Ok(TuningPolicy::LimitZero),
            "limit-infinity" => Ok(TuningPolicy::LimitInfinity),
            _ => Err(Error::config(format!("unknown tuning policy '{s}'"))),
        }
    }
}

impl fmt::Display for TuningPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

const TUNE_GRID: usize = 32;
const TUNE_REL_TOL: f64 = 1e-6;

/// Search interval for the optimal `tau` at noise level `sigma2`.
pub fn tune_range(sigma2: f64, denoiser: &Denoiser) -> (f64, f64) {
    (
        1e-4 * sigma2,
        1e2 * (sigma2 + denoiser.constellation().es()),
    )
}

/// Minimizer of the mismatched MSE over `tau` at noise level `sigma2`.
///
/// Gaussian and exact-prior families are minimized at `tau = sigma2` and
/// skip the search; the clip family has no variance parameter. Other
/// families scan a 32-point log grid and refine with golden-section
/// search in `ln tau`.
pub fn tune_tau(sigma2: f64, denoiser: &Denoiser) -> Result<f64> {
    if !(sigma2 >= 0.0) {
        return Err(Error::domain(format!("sigma2 must be >= 0, got {sigma2}")));
    }
    match denoiser.family() {
        Family::Gaussian | Family::Exact => return Ok(sigma2),
        Family::Clip => return Ok(0.0),
        _ => {}
    }
    if sigma2 == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = tune_range(sigma2, denoiser);
    let grid = log_grid(lo, hi, TUNE_GRID);
    let mut vals = Vec::with_capacity(grid.len());
    for &tau in &grid {
        vals.push(psi_mm(sigma2, tau, denoiser)?);
    }
    let best = (0..grid.len())
        .min_by(|&i, &j| vals[i].total_cmp(&vals[j]))
        .unwrap();
    let a = grid[best.saturating_sub(1)].ln();
    let b = grid[(best + 1).min(grid.len() - 1)].ln();
    let mut failure = None;
    let (x, fx) = golden_section(
        |lt| match psi_mm(sigma2, lt.exp(), denoiser) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e);
                f64::INFINITY
            }
        },
        a,
        b,
        TUNE_REL_TOL,
        200,
    );
    if let Some(e) = failure {
        return Err(Error::Detector(format!("tau search failed: {e}")));
    }
    if !fx.is_finite() {
        return Err(Error::Detector(
            "tau search produced a non-finite MSE".into(),
        ));
    }
    // the grid point may still beat the refined interior point at a boundary
    Ok(if vals[best] < fx { grid[best] } else { x.exp() })
}

#[derive(Clone, Debug)]
pub struct DetectorConfig {
    pub denoiser: Denoiser,
    pub tuning: TuningPolicy,
    pub t_max: usize,
    pub record_trajectory: bool,
    /// Stop once successive variance estimates differ by less than this.
    pub stop_tol: Option<f64>,
}

impl DetectorConfig {
    pub fn new(denoiser: Denoiser, tuning: TuningPolicy, t_max: usize) -> Result<Self> {
        if t_max == 0 {
            return Err(Error::config("t_max must be at least 1"));
        }
        Ok(DetectorConfig {
            denoiser,
            tuning,
            t_max,
            record_trajectory: true,
            stop_tol: None,
        })
    }
}

/// Iterate of the detector after `iter` completed iterations.
#[derive(Clone, Debug)]
pub struct AmpState {
    pub s: CVector,
    pub r: CVector,
    pub sigma2_est: f64,
    pub tau: f64,
    pub iter: usize,
}

#[derive(Clone, Debug)]
pub struct Detection {
    /// Final denoised estimates.
    pub soft: CVector,
    /// Decoupled observations `s + H^H r` after the last iteration.
    pub decoupled: CVector,
    /// Hard decisions obtained by slicing the decoupled observations.
    pub hard: CVector,
    /// Variance estimates `||r||^2 / MR` for `t = 1 ..= t_max + 1`.
    pub trajectory: Vec<f64>,
    /// Tuning parameter used in each iteration.
    pub taus: Vec<f64>,
}

/// Runs the detector for exactly `config.t_max` iterations (fewer only if
/// `stop_tol` is set).
pub fn detect(y: &CVector, h: &CMatrix, config: &DetectorConfig) -> Result<Detection> {
    let (mr, mt) = h.shape();
    if y.len() != mr {
        return Err(Error::config(format!(
            "y has {} entries, H has {mr} rows",
            y.len()
        )));
    }
    let den = &config.denoiser;
    let c = den.constellation();
    let beta = mt as f64 / mr as f64;
    let limit = 1e3 * c.alpha();

    let mut state = AmpState {
        s: CVector::from_element(mt, c.mean()),
        r: y.clone(),
        sigma2_est: 0.0,
        tau: 0.0,
        iter: 0,
    };
    state.r.gemv(
        -Complex64::new(1.0, 0.0),
        h,
        &state.s,
        Complex64::new(1.0, 0.0),
    );

    let mut trajectory = Vec::with_capacity(config.t_max + 1);
    let mut taus = Vec::with_capacity(config.t_max);
    let mut z = CVector::zeros(mt);
    let one = Complex64::new(1.0, 0.0);

    for t in 1..=config.t_max {
        state.sigma2_est = state.r.norm_squared() / mr as f64;
        if !state.sigma2_est.is_finite() {
            return Err(Error::Diverged {
                iter: t,
                trajectory,
            });
        }
        if let (Some(tol), Some(&prev)) = (config.stop_tol, trajectory.last()) {
            if (state.sigma2_est - prev).abs() < tol {
                break;
            }
        }
        trajectory.push(state.sigma2_est);
        state.tau = config.tuning.resolve(state.sigma2_est, den)?;
        taus.push(state.tau);

        // z = s + H^H r
        z.copy_from(&state.s);
        z.gemv_ad(one, h, &state.r, one);
        let mut dsum = 0.0;
        for (si, zi) in state.s.iter_mut().zip(z.iter()) {
            let (m, d) = den.apply(*zi, state.tau);
            *si = m;
            dsum += d;
        }
        let onsager = beta * dsum / mt as f64;
        if state.s.iter().any(|v| !(v.norm() <= limit)) {
            return Err(Error::Diverged {
                iter: t,
                trajectory,
            });
        }
        // r = y - H s + beta <F'> r
        state.r *= Complex64::new(onsager, 0.0);
        state.r += y;
        state.r.gemv(-one, h, &state.s, one);
        state.iter = t;
    }

    let last = state.r.norm_squared() / mr as f64;
    if !last.is_finite() {
        return Err(Error::Diverged {
            iter: state.iter + 1,
            trajectory,
        });
    }
    trajectory.push(last);
    z.copy_from(&state.s);
    z.gemv_ad(one, h, &state.r, one);
    let hard = z.map(|v| c.slice(v));
    if !config.record_trajectory {
        trajectory.clear();
        taus.clear();
    }
    Ok(Detection {
        soft: state.s,
        decoupled: z,
        hard,
        trajectory,
        taus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{snr_to_n0, trial_rng, MimoInstance};
    use crate::constellation::Constellation;
    use crate::optimize::log_grid;

    fn qpsk() -> Constellation {
        Constellation::from_key("qpsk").unwrap()
    }

    #[test]
    fn policy_keys_parse() {
        for key in [
            "optimal",
            "match-sigma",
            "limit-zero",
            "limit-infinity",
            "fixed=0.25",
        ] {
            let p: TuningPolicy = key.parse().unwrap();
            assert_eq!(p.key(), key);
        }
        assert!("fixed=-1".parse::<TuningPolicy>().is_err());
        assert!("greedy".parse::<TuningPolicy>().is_err());
    }

    #[test]
    fn gaussian_and_exact_tuning_bypass() {
        let c = qpsk();
        let g = Denoiser::new(Family::Gaussian, &c).unwrap();
        assert_eq!(tune_tau(0.3, &g).unwrap(), 0.3);
        let e = Denoiser::new(Family::Exact, &c).unwrap();
        for s in [0.01, 0.7, 3.0] {
            assert_eq!(tune_tau(s, &e).unwrap(), s);
        }
        assert!(tune_tau(-1.0, &g).is_err());
    }

    #[test]
    fn exact_prior_minimum_is_at_sigma() {
        // no-mismatch case: tau = sigma^2 beats every grid alternative
        let c = qpsk();
        let e = Denoiser::new(Family::Exact, &c).unwrap();
        let s2 = 0.4;
        let best = psi_mm(s2, s2, &e).unwrap();
        for tau in log_grid(1e-3, 40.0, 200) {
            assert!(best <= psi_mm(s2, tau, &e).unwrap() + 1e-14);
        }
    }

    #[test]
    fn hypercube_tuning_matches_exhaustive_grid() {
        let c = qpsk();
        let d = Denoiser::new(Family::Hypercube, &c).unwrap();
        let s2 = 0.5;
        let tau = tune_tau(s2, &d).unwrap();
        let (lo, hi) = tune_range(s2, &d);
        let grid = log_grid(lo, hi, 10_000);
        let (arg, _) = grid
            .iter()
            .map(|&t| (t, psi_mm(s2, t, &d).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((tau - arg).abs() < 1e-3, "search {tau} vs grid {arg}");
    }

    #[test]
    fn zero_iterations_rejected() {
        let d = Denoiser::new(Family::Exact, &qpsk()).unwrap();
        assert!(DetectorConfig::new(d, TuningPolicy::Optimal, 0).is_err());
    }

    #[test]
    fn noiseless_identity_channel() {
        let c = qpsk();
        let mut rng = trial_rng(3, 0, 0);
        let inst = MimoInstance::draw(&c, 8, 8, 0.0, &mut rng).unwrap();
        let h = CMatrix::identity(8, 8);
        let y = &inst.s0;
        let d = Denoiser::new(Family::Exact, &c).unwrap();
        let cfg = DetectorConfig::new(d, TuningPolicy::Optimal, 1).unwrap();
        let out = detect(y, &h, &cfg).unwrap();
        assert_eq!(out.hard, inst.s0);
        assert_eq!(out.trajectory.len(), 2);
    }

    #[test]
    fn onsager_average_matches_finite_difference() {
        let c = Constellation::from_key("16qam").unwrap();
        let mut rng = trial_rng(9, 0, 0);
        let inst = MimoInstance::draw(&c, 64, 32, 0.5, &mut rng).unwrap();
        let z = inst.h.adjoint() * &inst.y;
        let h = 1e-4;
        for fam in Family::ALL {
            let den = Denoiser::new(fam, &c).unwrap();
            let tau = 0.8;
            let v = den.dim_variance(tau);
            let kinks = den.breakpoints(v);
            let mut analytic = 0.0;
            let mut numeric = 0.0;
            let mut n = 0;
            for zi in z.iter() {
                if kinks
                    .iter()
                    .any(|k| (zi.re - k).abs() < 1e-3 || (zi.im - k).abs() < 1e-3)
                {
                    continue;
                }
                analytic += den.apply(*zi, tau).1;
                let dre = (den.apply(zi + h, tau).0.re - den.apply(zi - h, tau).0.re) / (2.0 * h);
                let ih = Complex64::new(0.0, h);
                let dim = (den.apply(zi + ih, tau).0.im - den.apply(zi - ih, tau).0.im) / (2.0 * h);
                numeric += 0.5 * (dre + dim);
                n += 1;
            }
            let (a, b) = (analytic / n as f64, numeric / n as f64);
            assert!((a - b).abs() < 1e-4, "{fam}: {a} vs {b}");
        }
    }

    #[test]
    fn clip_iterates_stay_in_box() {
        let c = qpsk();
        let n0 = snr_to_n0(4.0, 0.5, c.es());
        let inst = MimoInstance::draw(&c, 64, 32, n0, &mut trial_rng(1, 0, 0)).unwrap();
        let d = Denoiser::new(Family::Clip, &c).unwrap();
        let cfg = DetectorConfig::new(d, TuningPolicy::LimitZero, 10).unwrap();
        let out = detect(&inst.y, &inst.h, &cfg).unwrap();
        assert!(out
            .soft
            .iter()
            .all(|s| s.re.abs() <= 1.0 && s.im.abs() <= 1.0));
        assert_eq!(out.trajectory.len(), 11);
        assert_eq!(out.taus, vec![0.0; 10]);
    }

    #[test]
    fn matched_filter_limit_returns_hermitian_product() {
        let c = qpsk();
        let inst = MimoInstance::draw(&c, 32, 16, 0.2, &mut trial_rng(4, 0, 0)).unwrap();
        let d = Denoiser::new(Family::Gaussian, &c).unwrap();
        let cfg = DetectorConfig::new(d, TuningPolicy::LimitInfinity, 5).unwrap();
        let out = detect(&inst.y, &inst.h, &cfg).unwrap();
        let mf = inst.h.adjoint() * &inst.y;
        assert!((out.decoupled - mf).norm() < 1e-12);
    }

    #[test]
    fn divergence_is_reported() {
        let c = qpsk();
        // square noiseless system under ZF-type tuning at beta = 1 grows without bound
        let mut rng = trial_rng(2, 0, 0);
        let inst = MimoInstance::draw(&c, 4, 40, 1.0, &mut rng).unwrap();
        let d = Denoiser::new(Family::Gaussian, &c).unwrap();
        let cfg = DetectorConfig::new(d, TuningPolicy::LimitZero, 200).unwrap();
        match detect(&inst.y, &inst.h, &cfg) {
            Err(Error::Diverged { iter, trajectory }) => {
                assert!(iter > 1);
                assert!(trajectory.iter().all(|v| v.is_finite()));
            }
            other => panic!("expected divergence, got {:?}", other.map(|d| d.trajectory)),
        }
    }

    #[test]
    fn early_stop_flag() {
        let c = qpsk();
        let inst = MimoInstance::draw(&c, 64, 16, 0.05, &mut trial_rng(6, 0, 0)).unwrap();
        let d = Denoiser::new(Family::Exact, &c).unwrap();
        let mut cfg = DetectorConfig::new(d, TuningPolicy::Optimal, 100).unwrap();
        cfg.stop_tol = Some(1e-6);
        let out = detect(&inst.y, &inst.h, &cfg).unwrap();
        assert!(out.taus.len() < 100);
    }
}
