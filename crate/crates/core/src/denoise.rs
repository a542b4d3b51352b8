//! Scalar posterior-mean denoisers and their derivatives.
//!
//! Every family works per real dimension with a per-dimension noise
//! variance `v`. Complex QAM uses `v = tau / 2` on the real and imaginary
//! parts independently and reports the average of the two partial
//! derivatives; real PAM uses `v = tau` directly. `v = 0` and
//! `v = f64::INFINITY` select the limiting maps.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::Field;
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::special::{cdf, log_cosh, q, q_scaled};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Posterior mean under the true discrete prior.
    Exact,
    /// Zero-mean Gaussian prior with the constellation energy.
    Gaussian,
    /// Uniform prior on the covering box `[-alpha, alpha]` per dimension.
    Hypercube,
    /// `tau -> 0` limit of the hypercube family.
    Clip,
    /// Gray-coded bit-independence approximation with exact LLRs.
    GrayExact,
    /// Gray-coded approximation with max-log LLRs.
    GrayMaxLog,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Exact,
        Family::Gaussian,
        Family::Hypercube,
        Family::Clip,
        Family::GrayExact,
        Family::GrayMaxLog,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Family::Exact => "exact",
            Family::Gaussian => "gaussian",
            Family::Hypercube => "hypercube",
            Family::Clip => "clip",
            Family::GrayExact => "gray",
            Family::GrayMaxLog => "gray-maxlog",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.key() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::config(format!("unknown denoiser family '{s}'")))
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrayMode {
    Exact,
    MaxLog,
}

/// A denoiser family bound to the constellation it serves.
#[derive(Clone, Debug)]
pub struct Denoiser {
    family: Family,
    constellation: Constellation,
    field: Field,
}

impl Denoiser {
    pub fn new(family: Family, constellation: &Constellation) -> Result<Self> {
        if matches!(family, Family::GrayExact | Family::GrayMaxLog)
            && !matches!(constellation.order(), 2 | 4)
        {
            return Err(Error::config(format!(
                "Gray denoiser supports 2 or 4 levels per dimension, {} has {}",
                constellation,
                constellation.order()
            )));
        }
        Ok(Denoiser {
            family,
            constellation: constellation.clone(),
            field: Field::of(constellation),
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn constellation(&self) -> &Constellation {
        &self.constellation
    }

    pub fn field(&self) -> Field {
        self.field
    }

    /// Per-dimension variance parameter seen by the scalar map.
    #[inline]
    pub fn dim_variance(&self, tau: f64) -> f64 {
        match self.field {
            Field::Real => tau,
            Field::Complex => 0.5 * tau,
        }
    }

    /// Per-dimension posterior mean and its slope at `x` for noise
    /// variance `v` on that dimension.
    pub fn scalar(&self, x: f64, v: f64) -> (f64, f64) {
        let c = &self.constellation;
        match self.family {
            Family::Exact => exact_scalar(x, v, c.levels()),
            Family::Gaussian => gaussian_scalar(x, v, c.es_per_dim()),
            Family::Hypercube => hypercube_scalar(x, v, c.alpha()),
            Family::Clip => clip_scalar(x, c.alpha()),
            Family::GrayExact | Family::GrayMaxLog => {
                let mode = if self.family == Family::GrayExact {
                    GrayMode::Exact
                } else {
                    GrayMode::MaxLog
                };
                let s = c.half_distance();
                let (m, d) = gray_scalar(x / s, v / (s * s), mode, c.order());
                (s * m, d)
            }
        }
    }

    /// Complex denoiser output and the scalar derivative entering the
    /// Onsager term.
    #[inline]
    pub fn apply(&self, r: Complex64, tau: f64) -> (Complex64, f64) {
        let v = self.dim_variance(tau);
        match self.field {
            Field::Real => {
                let (m, d) = self.scalar(r.re, v);
                (Complex64::new(m, 0.0), d)
            }
            Field::Complex => {
                let (mr, dr) = self.scalar(r.re, v);
                let (mi, di) = self.scalar(r.im, v);
                (Complex64::new(mr, mi), 0.5 * (dr + di))
            }
        }
    }

    /// Points where the scalar map at variance `v` is not smooth.
    pub fn breakpoints(&self, v: f64) -> Vec<f64> {
        let c = &self.constellation;
        let thresholds =
            || -> Vec<f64> { c.levels().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect() };
        match self.family {
            Family::Clip => vec![-c.alpha(), c.alpha()],
            Family::Hypercube if v == 0.0 => vec![-c.alpha(), c.alpha()],
            Family::GrayMaxLog if c.order() == 4 && v > 0.0 => {
                let s = c.half_distance();
                vec![-2.0 * s, 0.0, 2.0 * s]
            }
            Family::Exact | Family::GrayExact | Family::GrayMaxLog if v == 0.0 => thresholds(),
            _ => Vec::new(),
        }
    }

    /// Kinks plus the centres of steep transitions, used to place
    /// quadrature panel edges.
    pub fn features(&self) -> Vec<f64> {
        let c = &self.constellation;
        match self.family {
            Family::Gaussian => Vec::new(),
            Family::Clip | Family::Hypercube => vec![-c.alpha(), c.alpha()],
            Family::Exact | Family::GrayExact | Family::GrayMaxLog => {
                c.levels().windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
            }
        }
    }
}

/// Softmax posterior mean over `levels` with per-dimension variance `v`.
pub fn exact_scalar(x: f64, v: f64, levels: &[f64]) -> (f64, f64) {
    if v == 0.0 {
        let mut best = levels[0];
        for &a in levels {
            if (x - a).abs() < (x - best).abs() {
                best = a;
            }
        }
        return (best, 0.0);
    }
    if v.is_infinite() {
        let mean = levels.iter().sum::<f64>() / levels.len() as f64;
        return (mean, 0.0);
    }
    let inv = 0.5 / v;
    let top = levels
        .iter()
        .map(|a| -(x - a) * (x - a) * inv)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    let mut num = 0.0;
    let mut w = [0.0f64; 16];
    for (k, a) in levels.iter().enumerate() {
        let e = (-(x - a) * (x - a) * inv - top).exp();
        w[k] = e;
        z += e;
        num += e * a;
    }
    let mean = num / z;
    let var = levels
        .iter()
        .zip(&w)
        .map(|(a, e)| e * (a - mean) * (a - mean))
        .sum::<f64>()
        / z;
    (mean, var / v)
}

/// `es / (es + v) * x`.
#[inline]
pub fn gaussian_scalar(x: f64, v: f64, es: f64) -> (f64, f64) {
    if v.is_infinite() {
        return (0.0, 0.0);
    }
    let g = es / (es + v);
    (g * x, g)
}

#[inline]
pub fn clip_scalar(x: f64, alpha: f64) -> (f64, f64) {
    let d = if x.abs() < alpha { 1.0 } else { 0.0 };
    (x.clamp(-alpha, alpha), d)
}

/// Mean of `N(x, v)` truncated to `[-alpha, alpha]`, and its slope in `x`.
///
/// Tail ratios use the scaled Q-function so the result stays accurate when
/// the CDF difference itself underflows.
pub fn hypercube_scalar(x: f64, v: f64, alpha: f64) -> (f64, f64) {
    if v == 0.0 {
        return clip_scalar(x, alpha);
    }
    if v.is_infinite() {
        return (0.0, 0.0);
    }
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let sd = v.sqrt();
    let lo = (-alpha - x) / sd;
    let hi = (alpha - x) / sd;

    // lambda = (phi(lo) - phi(hi)) / Z, kappa = (lo phi(lo) - hi phi(hi)) / Z
    let (lambda, kappa) = if hi >= 0.0 {
        let z = cdf(hi) - q(-lo);
        let (pl, ph) = (
            FRAC_1_SQRT_2PI * (-0.5 * lo * lo).exp(),
            FRAC_1_SQRT_2PI * (-0.5 * hi * hi).exp(),
        );
        ((pl - ph) / z, (lo * pl - hi * ph) / z)
    } else {
        // both bounds left of the mean; factor out exp(-hi^2 / 2)
        let p = -hi;
        let qq = -lo;
        let ratio = (-2.0 * alpha * x / v).exp();
        let z = q_scaled(p) - ratio * q_scaled(qq);
        (
            FRAC_1_SQRT_2PI * (ratio - 1.0) / z,
            FRAC_1_SQRT_2PI * (p - qq * ratio) / z,
        )
    };
    let mean = x + sd * lambda;
    let deriv = (1.0 + kappa - lambda * lambda).max(0.0);
    (sign * mean, deriv)
}

/// Full LLRs `(Λ0, Λ1)` of the two Gray bits of integer-grid 4-PAM at
/// per-dimension variance `v`. Bit 1 is the sign bit, bit 0 the
/// inner/outer bit.
pub fn gray_llrs(x: f64, v: f64, mode: GrayMode) -> [f64; 2] {
    let rho = 0.5 / v;
    match mode {
        GrayMode::Exact => [
            8.0 * rho + log_cosh(2.0 * rho * x) - log_cosh(6.0 * rho * x),
            8.0 * rho * x + log_cosh(2.0 * rho * (x - 2.0)) - log_cosh(2.0 * rho * (x + 2.0)),
        ],
        GrayMode::MaxLog => [
            4.0 * rho * (2.0 - x.abs()),
            2.0 * rho * (4.0 * x + (x - 2.0).abs() - (x + 2.0).abs()),
        ],
    }
}

/// Gray-coded posterior-mean approximation on the integer grid with 2 or
/// 4 levels per dimension.
pub fn gray_scalar(x: f64, v: f64, mode: GrayMode, order: usize) -> (f64, f64) {
    if v == 0.0 {
        let levels: &[f64] = if order == 2 {
            &[-1.0, 1.0]
        } else {
            &[-3.0, -1.0, 1.0, 3.0]
        };
        return exact_scalar(x, 0.0, levels);
    }
    if v.is_infinite() {
        return (0.0, 0.0);
    }
    if order == 2 {
        // one bit; the LLR 2x/v is already linear so both modes agree
        let t = (x / v).tanh();
        return (t, (1.0 - t * t) / v);
    }
    let rho = 0.5 / v;
    let sgn = |u: f64| {
        if u > 0.0 {
            1.0
        } else if u < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    // half-LLRs and their slopes
    let [l0, l1] = gray_llrs(x, v, mode);
    let (h0, h1) = (0.5 * l0, 0.5 * l1);
    let (d0, d1) = match mode {
        GrayMode::Exact => (
            rho * (2.0 * rho * x).tanh() - 3.0 * rho * (6.0 * rho * x).tanh(),
            4.0 * rho + rho * (2.0 * rho * (x - 2.0)).tanh() - rho * (2.0 * rho * (x + 2.0)).tanh(),
        ),
        GrayMode::MaxLog => (
            -2.0 * rho * sgn(x),
            rho * (4.0 + sgn(x - 2.0) - sgn(x + 2.0)),
        ),
    };
    let (t0, t1) = (h0.tanh(), h1.tanh());
    let mean = (2.0 - t0) * t1;
    let deriv = (2.0 - t0) * (1.0 - t1 * t1) * d1 - (1.0 - t0 * t0) * d0 * t1;
    (mean, deriv)
}

/// Posterior mean under the discrete prior of `c` for complex noise of
/// variance `tau`, evaluated jointly over all points.
pub fn f_exact(r: Complex64, tau: f64, c: &Constellation) -> Result<(Complex64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let logits: Vec<f64> = c
        .points()
        .iter()
        .map(|a| -(r - a).norm_sqr() / tau)
        .collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits
        .iter()
        .zip(c.prior())
        .map(|(l, p)| p * (l - top).exp())
        .collect();
    let z: f64 = w.iter().sum();
    let mean: Complex64 = c
        .points()
        .iter()
        .zip(&w)
        .map(|(a, e)| a * e)
        .sum::<Complex64>()
        / z;
    let var_re: f64 = c
        .points()
        .iter()
        .zip(&w)
        .map(|(a, e)| e * (a.re - mean.re).powi(2))
        .sum::<f64>()
        / z;
    let var_im: f64 = c
        .points()
        .iter()
        .zip(&w)
        .map(|(a, e)| e * (a.im - mean.im).powi(2))
        .sum::<f64>()
        / z;
    // each partial is 2 Var / tau; report their average
    Ok((mean, (var_re + var_im) / tau))
}

/// `Es / (Es + tau) * r`.
pub fn f_gaussian(r: Complex64, tau: f64, es: f64) -> (Complex64, f64) {
    let (m, d) = gaussian_scalar(1.0, tau, es);
    (r * m, d)
}

pub fn f_hypercube(r: Complex64, tau: f64, alpha: f64) -> Result<(Complex64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let (mr, dr) = hypercube_scalar(r.re, 0.5 * tau, alpha);
    let (mi, di) = hypercube_scalar(r.im, 0.5 * tau, alpha);
    Ok((Complex64::new(mr, mi), 0.5 * (dr + di)))
}

pub fn f_clip(r: Complex64, alpha: f64) -> (Complex64, f64) {
    let (mr, dr) = clip_scalar(r.re, alpha);
    let (mi, di) = clip_scalar(r.im, alpha);
    (Complex64::new(mr, mi), 0.5 * (dr + di))
}

/// Gray-coded denoiser on complex QAM (QPSK or 16-QAM) with `rho = 1/tau`.
pub fn f_gray(
    r: Complex64,
    tau: f64,
    mode: GrayMode,
    c: &Constellation,
) -> Result<(Complex64, f64)> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("tau must be positive, got {tau}")));
    }
    let family = match mode {
        GrayMode::Exact => Family::GrayExact,
        GrayMode::MaxLog => Family::GrayMaxLog,
    };
    Ok(Denoiser::new(family, c)?.apply(r, tau))
}
