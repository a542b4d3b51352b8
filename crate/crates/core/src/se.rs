//! State evolution: the scalar recursion `sigma2 <- N0 + beta * Psi`
//! that tracks the decoupled noise variance of the detector in the
//! large-system limit, plus the quantities derived from it.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::amp::TuningPolicy;
use crate::channel::Field;
use crate::constellation::Constellation;
use crate::denoise::Denoiser;
use crate::error::{Error, Result};
use crate::optimize::log_grid;
use crate::quadrature::{default_rule, NormalQuadrature};
use crate::special::{phi, q};

const FIXED_POINT_MAX_ITERS: usize = 10_000;
const MRT_POINTS_PER_DECADE: usize = 10;

/// Denoiser plus tuning policy: everything the recursion needs besides
/// `N0` and `beta`.
#[derive(Clone, Debug)]
pub struct SeConfig {
    pub denoiser: Denoiser,
    pub tuning: TuningPolicy,
}

impl SeConfig {
    pub fn new(denoiser: Denoiser, tuning: TuningPolicy) -> Self {
        SeConfig { denoiser, tuning }
    }

    pub fn constellation(&self) -> &Constellation {
        self.denoiser.constellation()
    }
}

/// Mismatched MSE of one real dimension: per-dimension noise variance
/// `sigma2_dim`, denoiser variance `v`, symbols uniform over the levels.
pub fn psi_dim_with(
    quad: &NormalQuadrature,
    sigma2_dim: f64,
    v: f64,
    den: &Denoiser,
) -> Result<f64> {
    if !(sigma2_dim >= 0.0) {
        return Err(Error::domain(format!(
            "sigma2 must be >= 0, got {sigma2_dim}"
        )));
    }
    let levels = den.constellation().levels();
    let features = den.features();
    let s = sigma2_dim.sqrt();
    let mut total = 0.0;
    let mut splits = Vec::with_capacity(features.len());
    for &a in levels {
        let e = if s == 0.0 {
            let d = den.scalar(a, v).0 - a;
            d * d
        } else {
            splits.clear();
            splits.extend(features.iter().map(|b| (b - a) / s));
            quad.expect(
                |z| {
                    let d = den.scalar(a + s * z, v).0 - a;
                    d * d
                },
                &splits,
            )
        };
        total += e;
    }
    let psi = total / levels.len() as f64;
    if !psi.is_finite() {
        return Err(Error::analysis(format!(
            "non-finite MSE for {} at sigma2={sigma2_dim}, v={v}",
            den.family()
        )));
    }
    Ok(psi)
}

/// `Psi(sigma2, tau) = E|F(S0 + sigma Z, tau) - S0|^2` with the expectation
/// over the true uniform prior. Complex constellations are evaluated per
/// dimension and doubled.
pub fn psi_mm_with(quad: &NormalQuadrature, sigma2: f64, tau: f64, den: &Denoiser) -> Result<f64> {
    match den.field() {
        Field::Real => psi_dim_with(quad, sigma2, tau, den),
        Field::Complex => Ok(2.0 * psi_dim_with(quad, 0.5 * sigma2, 0.5 * tau, den)?),
    }
}

pub fn psi_mm(sigma2: f64, tau: f64, den: &Denoiser) -> Result<f64> {
    psi_mm_with(default_rule(), sigma2, tau, den)
}

/// Complex `Psi` computed with a tensor rule over both noise components and
/// the complex denoiser, without using separability.
pub fn psi_mm_joint(sigma2: f64, tau: f64, den: &Denoiser) -> Result<f64> {
    let c = den.constellation();
    if c.is_real() {
        return psi_mm(sigma2, tau, den);
    }
    let quad = default_rule();
    let s = (0.5 * sigma2).sqrt();
    let features = den.features();
    let mut total = 0.0;
    for &p in c.points() {
        let e = if s == 0.0 {
            (den.apply(p, tau).0 - p).norm_sqr()
        } else {
            let sre: Vec<f64> = features.iter().map(|b| (b - p.re) / s).collect();
            let sim: Vec<f64> = features.iter().map(|b| (b - p.im) / s).collect();
            quad.expect(
                |z1| {
                    quad.expect(
                        |z2| {
                            let r = p + num_complex::Complex64::new(s * z1, s * z2);
                            (den.apply(r, tau).0 - p).norm_sqr()
                        },
                        &sim,
                    )
                },
                &sre,
            )
        };
        total += e;
    }
    Ok(total / c.points().len() as f64)
}

/// Closed-form `Psi` of the Gaussian family with signal energy `es`.
pub fn psi_gaussian(sigma2: f64, tau: f64, es: f64) -> f64 {
    if tau.is_infinite() {
        return es;
    }
    let d = (es + tau) * (es + tau);
    (es * es * sigma2 + es * tau * tau) / d
}

/// Closed-form `Psi` of the clip family for real `m`-PAM on the integer
/// grid (`alpha = m - 1`).
pub fn psi_pam_clip(sigma2: f64, m: usize) -> f64 {
    if sigma2 <= 0.0 {
        return 0.0;
    }
    let s = sigma2.sqrt();
    let alpha = (m - 1) as f64;
    let term = |x: f64| (x * x - sigma2) * q(x / s) - s * x * phi(x / s);
    let mut sum = 0.0;
    for k in 1..=m / 2 {
        let odd = (2 * k - 1) as f64;
        sum += term(alpha - odd) + term(alpha + odd);
    }
    sigma2 + 2.0 / m as f64 * sum
}

/// Closed-form `Psi` of the clip family for `m^2`-QAM on the integer grid.
pub fn psi_qam_clip(sigma2: f64, m: usize) -> f64 {
    2.0 * psi_pam_clip(0.5 * sigma2, m)
}

/// `Psi` at the `tau` chosen by the tuning policy, returned with that `tau`.
pub fn psi_star(sigma2: f64, cfg: &SeConfig) -> Result<(f64, f64)> {
    let tau = cfg.tuning.resolve(sigma2, &cfg.denoiser)?;
    Ok((psi_mm(sigma2, tau, &cfg.denoiser)?, tau))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeTrajectory {
    /// `sigma2[t - 1]` is the decoupled variance entering iteration `t`.
    pub sigma2: Vec<f64>,
    /// `tau_star[t - 1]` is the tuning parameter used in iteration `t`.
    pub tau_star: Vec<f64>,
    pub converged: bool,
    pub fixed_point: Option<f64>,
}

fn check_args(n0: f64, beta: f64) -> Result<()> {
    if !(n0 >= 0.0) {
        return Err(Error::domain(format!("N0 must be >= 0, got {n0}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

fn converged(prev: f64, next: f64) -> bool {
    (next - prev).abs() < 1e-12 * (1.0 + prev)
}

/// Runs `t_max` iterations of the recursion from
/// `sigma2_1 = N0 + beta * Var[S0]`.
pub fn se_trajectory(n0: f64, beta: f64, cfg: &SeConfig, t_max: usize) -> Result<SeTrajectory> {
    check_args(n0, beta)?;
    let mut sigma2 = Vec::with_capacity(t_max + 1);
    let mut tau_star = Vec::with_capacity(t_max);
    let mut cur = n0 + beta * cfg.constellation().variance();
    sigma2.push(cur);
    let mut fixed = None;
    for _ in 0..t_max {
        let (psi, tau) = psi_star(cur, cfg)?;
        let next = n0 + beta * psi;
        if fixed.is_none() && converged(cur, next) {
            fixed = Some(next);
        }
        tau_star.push(tau);
        sigma2.push(next);
        cur = next;
    }
    Ok(SeTrajectory {
        sigma2,
        tau_star,
        converged: fixed.is_some(),
        fixed_point: fixed,
    })
}

/// Fixed point reached by iterating from `sigma2_1`, which is the largest
/// solution of `sigma2 = N0 + beta * Psi*(sigma2)`.
pub fn fixed_point(n0: f64, beta: f64, cfg: &SeConfig) -> Result<f64> {
    check_args(n0, beta)?;
    let mut cur = n0 + beta * cfg.constellation().variance();
    for _ in 0..FIXED_POINT_MAX_ITERS {
        let next = n0 + beta * psi_star(cur, cfg)?.0;
        if converged(cur, next) {
            return Ok(next);
        }
        cur = next;
    }
    Err(Error::analysis(format!(
        "state evolution did not converge in {FIXED_POINT_MAX_ITERS} iterations (last {cur})"
    )))
}

/// Minimum recovery threshold: reciprocal of the largest slope of
/// `Psi*(sigma2)` over a log grid on `[1e-8, 1e3]`, with `tau` re-resolved
/// at every evaluation.
pub fn mrt(cfg: &SeConfig) -> Result<f64> {
    let n = 11 * MRT_POINTS_PER_DECADE + 1;
    let mut best: f64 = 0.0;
    for s2 in log_grid(1e-8, 1e3, n) {
        let h = 1e-4 * s2;
        let up = psi_star(s2 + h, cfg)?.0;
        let dn = psi_star(s2 - h, cfg)?.0;
        best = best.max((up - dn) / (2.0 * h));
    }
    if !(best > 0.0) {
        return Err(Error::analysis("Psi* has no positive slope on the grid"));
    }
    Ok(1.0 / best)
}

/// Symbol-error rate of slicing a decoupled observation with noise
/// variance `sigma2`.
pub fn ser_predict(sigma2: f64, c: &Constellation) -> f64 {
    if sigma2 <= 0.0 {
        return 0.0;
    }
    let m = c.order() as f64;
    let d = c.half_distance();
    let per_dim = |var: f64| 2.0 * (1.0 - 1.0 / m) * q(d / var.sqrt());
    if c.is_real() {
        per_dim(sigma2)
    } else {
        let p = per_dim(0.5 * sigma2);
        1.0 - (1.0 - p) * (1.0 - p)
    }
}

#[derive(Serialize)]
struct SeRow {
    t: usize,
    sigma2: f64,
    tau_star: Option<f64>,
    ser_pred: f64,
}

/// Writes `t,sigma2,tau_star,ser_pred`; the final row has no `tau_star`.
pub fn write_trajectory<W: Write>(w: W, traj: &SeTrajectory, c: &Constellation) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for (i, &s2) in traj.sigma2.iter().enumerate() {
        out.serialize(SeRow {
            t: i + 1,
            sigma2: s2,
            tau_star: traj.tau_star.get(i).copied(),
            ser_pred: ser_predict(s2, c),
        })
        .map_err(|e| Error::analysis(format!("csv: {e}")))?;
    }
    out.flush().map_err(|e| Error::io("<se trajectory>", e))?;
    Ok(())
}

pub fn save_trajectory(path: &Path, traj: &SeTrajectory, c: &Constellation) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory(std::io::BufWriter::new(f), traj, c)
}
