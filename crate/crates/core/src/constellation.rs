//! Transmit alphabets: PAM, QAM, BPSK and QPSK on the odd-integer grid.
//!
//! Points live on `{±1, ±3, …, ±(M-1)}` per dimension unless a
//! constellation is explicitly normalized to unit energy, in which case
//! every level, `alpha` and the decision half-distance scale together.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    /// Real-valued M-PAM.
    Pam,
    /// Complex M²-QAM, M levels per dimension.
    Qam,
    Bpsk,
    Qpsk,
}

impl Kind {
    /// Real-valued alphabets are transmitted over a real-valued system.
    pub fn is_real(self) -> bool {
        matches!(self, Kind::Pam | Kind::Bpsk)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    kind: Kind,
    order: usize,
    scale: f64,
    levels: Vec<f64>,
    points: Vec<Complex64>,
    prior: Vec<f64>,
    gray: Vec<u32>,
    es: f64,
    alpha: f64,
}

/// Builds the raw integer-grid constellation of the given kind.
///
/// `m` is the number of levels per real dimension; BPSK and QPSK require
/// `m == 2`.
pub fn make_constellation(kind: Kind, m: usize) -> Result<Constellation> {
    match kind {
        Kind::Bpsk | Kind::Qpsk if m != 2 => {
            return Err(Error::config(format!(
                "{kind:?} has 2 levels per dimension, got {m}"
            )))
        }
        Kind::Pam | Kind::Qam if ![2, 4, 8, 16].contains(&m) => {
            return Err(Error::config(format!(
                "unsupported order {m} per dimension (expected 2, 4, 8 or 16)"
            )))
        }
        _ => {}
    }

    let levels: Vec<f64> = (0..m).map(|i| (2 * i) as f64 - (m - 1) as f64).collect();
    let bits = m.trailing_zeros();
    let gray_1d: Vec<u32> = (0..m as u32).map(|i| i ^ (i >> 1)).collect();

    let (points, gray): (Vec<Complex64>, Vec<u32>) = if kind.is_real() {
        levels
            .iter()
            .zip(&gray_1d)
            .map(|(&a, &g)| (Complex64::new(a, 0.0), g))
            .unzip()
    } else {
        let mut pts = Vec::with_capacity(m * m);
        let mut labels = Vec::with_capacity(m * m);
        for (re, &g_re) in levels.iter().zip(&gray_1d) {
            for (im, &g_im) in levels.iter().zip(&gray_1d) {
                pts.push(Complex64::new(*re, *im));
                labels.push((g_re << bits) | g_im);
            }
        }
        (pts, labels)
    };

    let n = points.len();
    let prior = vec![1.0 / n as f64; n];
    let es = points
        .iter()
        .zip(&prior)
        .map(|(a, p)| p * a.norm_sqr())
        .sum();

    Ok(Constellation {
        kind,
        order: m,
        scale: 1.0,
        levels,
        points,
        prior,
        gray,
        es,
        alpha: (m - 1) as f64,
    })
}

impl Constellation {
    /// Parses a config key such as `"qpsk"`, `"16qam"` or `"4pam"`.
    pub fn from_key(key: &str) -> Result<Self> {
        let key = key.trim().to_ascii_lowercase();
        match key.as_str() {
            "bpsk" => make_constellation(Kind::Bpsk, 2),
            "qpsk" => make_constellation(Kind::Qpsk, 2),
            _ => {
                let (num, kind) = if let Some(n) = key.strip_suffix("qam") {
                    (n, Kind::Qam)
                } else if let Some(n) = key.strip_suffix("pam") {
                    (n, Kind::Pam)
                } else {
                    return Err(Error::config(format!("unknown constellation '{key}'")));
                };
                let size: usize = num
                    .parse()
                    .map_err(|_| Error::config(format!("unknown constellation '{key}'")))?;
                let m = match kind {
                    Kind::Qam => {
                        let m = (size as f64).sqrt().round() as usize;
                        if m * m != size {
                            return Err(Error::config(format!("'{key}' is not a square QAM")));
                        }
                        m
                    }
                    _ => size,
                };
                make_constellation(kind, m)
            }
        }
    }

    /// Returns a copy scaled to unit average symbol energy.
    pub fn normalized(&self) -> Self {
        let s = 1.0 / self.es.sqrt();
        let mut c = self.clone();
        c.scale *= s;
        c.levels.iter_mut().for_each(|l| *l *= s);
        c.points.iter_mut().for_each(|p| *p *= s);
        c.alpha *= s;
        c.es = 1.0;
        c
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    /// Levels per real dimension, `M`.
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn is_real(&self) -> bool {
        self.kind.is_real()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// Per-dimension amplitude levels in ascending order.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// Gray label of each entry of [`points`](Self::points).
    pub fn gray_labels(&self) -> &[u32] {
        &self.gray
    }

    pub fn bits_per_symbol(&self) -> u32 {
        let per_dim = self.order.trailing_zeros();
        if self.is_real() {
            per_dim
        } else {
            2 * per_dim
        }
    }

    /// Average symbol energy `E[|S|^2]`.
    pub fn es(&self) -> f64 {
        self.es
    }

    /// Energy of one real dimension.
    pub fn es_per_dim(&self) -> f64 {
        if self.is_real() {
            self.es
        } else {
            0.5 * self.es
        }
    }

    /// Half-width of the box covering the constellation.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Half the distance between neighbouring levels.
    pub fn half_distance(&self) -> f64 {
        self.scale
    }

    pub fn mean(&self) -> Complex64 {
        self.points
            .iter()
            .zip(&self.prior)
            .map(|(a, p)| a * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        self.es - self.mean().norm_sqr()
    }

    /// Checks `p(a + ib) = p(a) p(b)` and `Re O = Im O` over the point set.
    pub fn is_separable(&self) -> bool {
        let mut re: Vec<f64> = self.points.iter().map(|p| p.re).collect();
        let mut im: Vec<f64> = self.points.iter().map(|p| p.im).collect();
        for v in [&mut re, &mut im] {
            v.sort_by(f64::total_cmp);
            v.dedup();
        }
        if re != im {
            return false;
        }
        let marginal = |f: &dyn Fn(&Complex64) -> f64, x: f64| -> f64 {
            self.points
                .iter()
                .zip(&self.prior)
                .filter(|(p, _)| f(p) == x)
                .map(|(_, w)| w)
                .sum()
        };
        self.points.iter().zip(&self.prior).all(|(p, w)| {
            let pa = marginal(&|z| z.re, p.re);
            let pb = marginal(&|z| z.im, p.im);
            (w - pa * pb).abs() < 1e-12
        })
    }

    /// Nearest level for one real dimension; ties go to the smaller level.
    #[inline]
    pub fn slice_dim(&self, x: f64) -> f64 {
        let m = self.order as f64;
        let u = 0.5 * (x / self.scale + (m - 1.0));
        let idx = (u - 0.5).ceil().clamp(0.0, m - 1.0);
        self.levels[idx as usize]
    }

    /// Nearest constellation point; ties broken toward the smaller real
    /// part, then the smaller imaginary part.
    pub fn slice(&self, z: Complex64) -> Complex64 {
        if self.is_real() {
            Complex64::new(self.slice_dim(z.re), 0.0)
        } else {
            Complex64::new(self.slice_dim(z.re), self.slice_dim(z.im))
        }
    }

    /// Index of `point` in [`points`](Self::points), if it is one.
    pub fn index_of(&self, point: Complex64) -> Option<usize> {
        self.points.iter().position(|p| *p == point)
    }

    pub fn key(&self) -> String {
        match self.kind {
            Kind::Bpsk => "bpsk".into(),
            Kind::Qpsk => "qpsk".into(),
            Kind::Pam => format!("{}pam", self.order),
            Kind::Qam => format!("{}qam", self.order * self.order),
        }
    }
}

impl FromStr for Constellation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Constellation::from_key(s)
    }
}

impl fmt::Display for Constellation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}
