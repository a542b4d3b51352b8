//! System model `y = H s0 + n` with i.i.d. Gaussian channels.
//!
//! Every Monte-Carlo trial owns its generator, derived from the master
//! seed, the sweep point and the trial index through ChaCha stream
//! selection, so results do not depend on how trials are scheduled.
//! Normal deviates come from `rand_distr::StandardNormal` (ziggurat).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::constellation::Constellation;
use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Number field of the system model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Real,
    Complex,
}

impl Field {
    pub fn of(c: &Constellation) -> Self {
        if c.is_real() {
            Field::Real
        } else {
            Field::Complex
        }
    }
}

/// Generator for one trial of one sweep point.
pub fn trial_rng(master_seed: u64, point: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((point << 40) ^ trial);
    rng
}

/// Gaussian sample with total variance `var` in the given field.
#[inline]
pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64, field: Field) -> Complex64 {
    match field {
        Field::Real => {
            let x: f64 = rng.sample(StandardNormal);
            Complex64::new(var.sqrt() * x, 0.0)
        }
        Field::Complex => {
            let sd = (0.5 * var).sqrt();
            let x: f64 = rng.sample(StandardNormal);
            let y: f64 = rng.sample(StandardNormal);
            Complex64::new(sd * x, sd * y)
        }
    }
}

/// `MR x MT` channel with i.i.d. entries of variance `1/MR`.
pub fn draw_channel<R: Rng + ?Sized>(
    mr: usize,
    mt: usize,
    field: Field,
    rng: &mut R,
) -> Result<CMatrix> {
    if mr == 0 || mt == 0 {
        return Err(Error::config(format!(
            "channel dimensions must be positive, got {mr}x{mt}"
        )));
    }
    let var = 1.0 / mr as f64;
    // column-major fill keeps the draw order fixed
    Ok(CMatrix::from_fn(mr, mt, |_, _| gaussian(rng, var, field)))
}

/// Noise variance for `SNR = beta * Es / N0` given in dB.
pub fn snr_to_n0(snr_db: f64, beta: f64, es: f64) -> f64 {
    beta * es / 10f64.powf(snr_db / 10.0)
}

/// Returns `(y, n)` with `n ~ N(0, N0 I)` in the given field.
pub fn transmit<R: Rng + ?Sized>(
    h: &CMatrix,
    s0: &CVector,
    n0: f64,
    field: Field,
    rng: &mut R,
) -> (CVector, CVector) {
    assert_eq!(h.ncols(), s0.len(), "H and s0 dimensions disagree");
    let n = CVector::from_fn(h.nrows(), |_, _| {
        if n0 > 0.0 {
            gaussian(rng, n0, field)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let y = h * s0 + &n;
    (y, n)
}

/// One realization of the system model.
#[derive(Clone, Debug)]
pub struct MimoInstance {
    pub h: CMatrix,
    pub s0: CVector,
    pub n: CVector,
    pub y: CVector,
    pub n0: f64,
    pub beta: f64,
}

impl MimoInstance {
    /// Draws symbols uniformly from `c`, then the channel, then the noise.
    pub fn draw<R: Rng + ?Sized>(
        c: &Constellation,
        mr: usize,
        mt: usize,
        n0: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let field = Field::of(c);
        let pts = c.points();
        let s0 = CVector::from_fn(mt, |_, _| pts[rng.gen_range(0..pts.len())]);
        let h = draw_channel(mr, mt, field, rng)?;
        let (y, n) = transmit(&h, &s0, n0, field, rng);
        Ok(MimoInstance {
            h,
            s0,
            n,
            y,
            n0,
            beta: mt as f64 / mr as f64,
        })
    }

    pub fn mr(&self) -> usize {
        self.h.nrows()
    }

    pub fn mt(&self) -> usize {
        self.h.ncols()
    }
}
