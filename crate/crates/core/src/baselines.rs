//! Reference detectors: linear MMSE, zero-forcing, matched filter and the
//! box-relaxed least-squares detector, plus the scalar objective whose
//! minimizer gives the box detector's asymptotic noise level.

use nalgebra::linalg::Cholesky;
use num_complex::Complex64;

use crate::channel::{CMatrix, CVector};
use crate::error::{Error, Result};
use crate::optimize::{bisect, golden_section};
use crate::special::q;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn gram(h: &CMatrix) -> CMatrix {
    h.adjoint() * h
}

fn check_dims(y: &CVector, h: &CMatrix) -> Result<()> {
    if y.len() != h.nrows() {
        return Err(Error::config(format!(
            "y has {} entries, H has {} rows",
            y.len(),
            h.nrows()
        )));
    }
    Ok(())
}

/// `(H^H H + (N0 / Es) I)^-1 H^H y`.
pub fn lmmse_detect(y: &CVector, h: &CMatrix, n0: f64, es: f64) -> Result<CVector> {
    check_dims(y, h)?;
    if !(n0 > 0.0) || !(es > 0.0) {
        return Err(Error::domain(format!(
            "need N0 > 0 and Es > 0, got {n0}, {es}"
        )));
    }
    let mut a = gram(h);
    for i in 0..a.nrows() {
        a[(i, i)] += Complex64::new(n0 / es, 0.0);
    }
    let chol =
        Cholesky::new(a).ok_or_else(|| Error::Detector("LMMSE system is singular".into()))?;
    Ok(chol.solve(&h.ad_mul(y)))
}

/// Per-entry gain `[(H^H H + lambda I)^-1 H^H H]_ii` of the LMMSE
/// estimate, `lambda = N0 / Es`. Dividing by it removes the shrinkage
/// before slicing.
pub fn lmmse_bias(h: &CMatrix, n0: f64, es: f64) -> Result<Vec<f64>> {
    let lambda = n0 / es;
    let mut a = gram(h);
    for i in 0..a.nrows() {
        a[(i, i)] += Complex64::new(lambda, 0.0);
    }
    let inv = Cholesky::new(a)
        .ok_or_else(|| Error::Detector("LMMSE system is singular".into()))?
        .inverse();
    Ok((0..inv.nrows())
        .map(|i| 1.0 - lambda * inv[(i, i)].re)
        .collect())
}

/// Least-squares solution `(H^H H)^-1 H^H y`; requires full column rank.
pub fn zf_detect(y: &CVector, h: &CMatrix) -> Result<CVector> {
    check_dims(y, h)?;
    let (mr, mt) = h.shape();
    if mt > mr {
        return Err(Error::Detector(format!(
            "ZF needs MT <= MR, got {mt} > {mr}"
        )));
    }
    let chol = Cholesky::new(gram(h))
        .ok_or_else(|| Error::Detector("channel is rank deficient".into()))?;
    let diag = chol.l_dirty().diagonal().map(|d| d.norm_sqr());
    let (lo, hi) = (diag.min(), diag.max());
    if !(lo > 1e-14 * hi) {
        return Err(Error::Detector(
            "channel is numerically rank deficient".into(),
        ));
    }
    Ok(chol.solve(&h.ad_mul(y)))
}

pub fn mf_detect(y: &CVector, h: &CMatrix) -> Result<CVector> {
    check_dims(y, h)?;
    Ok(h.ad_mul(y))
}

#[derive(Clone, Debug)]
pub struct BoxSolverConfig {
    pub max_iters: usize,
    /// Stop once the projected-gradient norm falls below this.
    pub tol: f64,
    pub record_objective: bool,
}

impl Default for BoxSolverConfig {
    fn default() -> Self {
        BoxSolverConfig {
            max_iters: 20_000,
            tol: 1e-8,
            record_objective: false,
        }
    }
}

impl BoxSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::config("box solver tolerance must be positive"));
        }
        if self.max_iters == 0 {
            return Err(Error::config("box solver needs at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BoxSolution {
    pub soft: CVector,
    pub iters: usize,
    pub lipschitz: f64,
    /// `0.5 ||y - H s||^2` after each iteration, when requested.
    pub objective: Vec<f64>,
}

/// Largest eigenvalue of `H^H H` by power iteration.
pub fn lipschitz(h: &CMatrix) -> f64 {
    let mt = h.ncols();
    let mut x = CVector::from_element(mt, Complex64::new(1.0 / (mt as f64).sqrt(), 0.0));
    let mut est = 0.0;
    for _ in 0..500 {
        let w = h.ad_mul(&(h * &x));
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        let prev = est;
        est = n;
        x = w / Complex64::new(n, 0.0);
        if (est - prev).abs() < 1e-10 * est {
            break;
        }
    }
    est
}

fn clamp(v: Complex64, alpha: f64) -> Complex64 {
    Complex64::new(v.re.clamp(-alpha, alpha), v.im.clamp(-alpha, alpha))
}

/// Minimizes `0.5 ||y - H s||^2` over `|Re s_i|, |Im s_i| <= alpha` by
/// projected gradient descent with step `1 / L`.
pub fn box_detect(
    y: &CVector,
    h: &CMatrix,
    alpha: f64,
    cfg: &BoxSolverConfig,
) -> Result<BoxSolution> {
    check_dims(y, h)?;
    cfg.validate()?;
    if !(alpha > 0.0) {
        return Err(Error::domain(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    // a small margin keeps the step below 1/L despite the power-iteration estimate
    let l = lipschitz(h) * (1.0 + 1e-6);
    let mt = h.ncols();
    let mut s = CVector::zeros(mt);
    if l == 0.0 {
        return Ok(BoxSolution {
            soft: s,
            iters: 0,
            lipschitz: 0.0,
            objective: Vec::new(),
        });
    }
    let step = Complex64::new(1.0 / l, 0.0);
    let one = Complex64::new(1.0, 0.0);
    let mut resid = y.clone();
    let mut grad = CVector::zeros(mt);
    let mut objective = Vec::new();
    let mut pg = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        // resid = H s - y, grad = H^H resid
        resid.copy_from(y);
        resid.gemv(one, h, &s, -one);
        grad.gemv_ad(one, h, &resid, Complex64::new(0.0, 0.0));
        let mut moved = 0.0;
        for (si, gi) in s.iter_mut().zip(grad.iter()) {
            let next = clamp(*si - step * gi, alpha);
            moved += (next - *si).norm_sqr();
            *si = next;
        }
        pg = l * moved.sqrt();
        if cfg.record_objective {
            let mut r = y.clone();
            r.gemv(-one, h, &s, one);
            objective.push(0.5 * r.norm_squared());
        }
        if pg < cfg.tol {
            return Ok(BoxSolution {
                soft: s,
                iters: it,
                lipschitz: l,
                objective,
            });
        }
    }
    Err(Error::NotConverged {
        iters: cfg.max_iters,
        residual: pg,
        iterate: s.iter().copied().collect(),
    })
}

fn fm_check(m: usize, beta: f64, n0: f64) -> Result<()> {
    if m < 2 || !m.is_multiple_of(2) {
        return Err(Error::analysis(format!("M must be even and >= 2, got {m}")));
    }
    let limit = 1.0 / (1.0 - 1.0 / m as f64);
    if !(beta > 0.0 && beta < limit) {
        return Err(Error::analysis(format!(
            "beta must lie in (0, {limit}) for M = {m}, got {beta}"
        )));
    }
    if !(n0 >= 0.0) {
        return Err(Error::analysis(format!("N0 must be >= 0, got {n0}")));
    }
    Ok(())
}

/// Scalar objective for real `m`-PAM whose minimizer is the box
/// detector's asymptotic decoupled noise standard deviation.
pub fn fm_objective(sigma: f64, m: usize, beta: f64, n0: f64) -> f64 {
    let mf = m as f64;
    let mut sum = 0.0;
    for k in (2..=2 * (m - 1)).step_by(2) {
        let k = k as f64;
        let x = k / sigma;
        sum += (sigma + k * k / sigma) * q(x) - k * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
    }
    0.5 * sigma * (1.0 / beta - (mf - 1.0) / mf) + n0 / (2.0 * beta * sigma) + sum / mf
}

pub fn fm_derivative(sigma: f64, m: usize, beta: f64, n0: f64) -> f64 {
    let mf = m as f64;
    let mut sum = 0.0;
    for k in (2..=2 * (m - 1)).step_by(2) {
        let k = k as f64;
        let x = k / sigma;
        sum += (1.0 - x * x) * q(x) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp();
    }
    0.5 * (1.0 / beta - (mf - 1.0) / mf) - n0 / (2.0 * beta * sigma * sigma) + sum / mf
}

const FM_LO: f64 = 1e-6;
const FM_HI: f64 = 1e2;

/// Minimizer of [`fm_objective`] on `[1e-6, 1e2]`: golden-section search,
/// then bisection on the derivative to resolve the flat bottom.
pub fn fm_minimize(m: usize, beta: f64, n0: f64) -> Result<f64> {
    fm_check(m, beta, n0)?;
    let d = |s: f64| fm_derivative(s, m, beta, n0);
    if d(FM_LO) >= 0.0 {
        return Ok(FM_LO);
    }
    if d(FM_HI) <= 0.0 {
        return Ok(FM_HI);
    }
    let (x, _) = golden_section(|s| fm_objective(s, m, beta, n0), FM_LO, FM_HI, 1e-10, 500);
    let (mut a, mut b) = ((x * 0.999).max(FM_LO), (x * 1.001).min(FM_HI));
    if !(d(a) <= 0.0 && d(b) >= 0.0) {
        a = FM_LO;
        b = FM_HI;
    }
    Ok(bisect(d, a, b, 200))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{trial_rng, Field, MimoInstance};
    use crate::constellation::Constellation;
    use crate::se::psi_pam_clip;
    use nalgebra::DMatrix;

    fn small_system(seed: u64) -> (CMatrix, CVector) {
        let c = Constellation::from_key("qpsk").unwrap();
        let inst = MimoInstance::draw(&c, 4, 4, 0.3, &mut trial_rng(seed, 0, 0)).unwrap();
        (inst.h, inst.y)
    }

    /// Gaussian elimination with partial pivoting; independent of the
    /// Cholesky route above.
    fn solve_dense(mut a: CMatrix, mut b: CVector) -> CVector {
        let n = a.nrows();
        for col in 0..n {
            let p = (col..n)
                .max_by(|&i, &j| a[(i, col)].norm().total_cmp(&a[(j, col)].norm()))
                .unwrap();
            a.swap_rows(col, p);
            b.swap_rows(col, p);
            for row in col + 1..n {
                let f = a[(row, col)] / a[(col, col)];
                for k in col..n {
                    let v = a[(col, k)];
                    a[(row, k)] -= f * v;
                }
                let v = b[col];
                b[row] -= f * v;
            }
        }
        let mut x = CVector::zeros(n);
        for i in (0..n).rev() {
            let mut acc = b[i];
            for k in i + 1..n {
                acc -= a[(i, k)] * x[k];
            }
            x[i] = acc / a[(i, i)];
        }
        x
    }

    #[test]
    fn linear_detectors_match_normal_equations() {
        for seed in 0..5 {
            let (h, y) = small_system(seed);
            let ah = h.adjoint();
            let (n0, es) = (0.3, 2.0);
            let mut a = &ah * &h;
            for i in 0..4 {
                a[(i, i)] += Complex64::new(n0 / es, 0.0);
            }
            let want = solve_dense(a, &ah * &y);
            assert!((lmmse_detect(&y, &h, n0, es).unwrap() - want).norm() < 1e-10);
            let want = solve_dense(&ah * &h, &ah * &y);
            assert!((zf_detect(&y, &h).unwrap() - want).norm() < 1e-10);
            assert!((mf_detect(&y, &h).unwrap() - &ah * &y).norm() < 1e-12);
        }
    }

    #[test]
    fn bias_matches_explicit_product() {
        let (h, _) = small_system(3);
        let (n0, es) = (0.4, 2.0);
        let ah = h.adjoint();
        let g = &ah * &h;
        let mut a = g.clone();
        for i in 0..4 {
            a[(i, i)] += Complex64::new(n0 / es, 0.0);
        }
        let w = a.try_inverse().unwrap() * g;
        let bias = lmmse_bias(&h, n0, es).unwrap();
        for i in 0..4 {
            assert!((bias[i] - w[(i, i)].re).abs() < 1e-12);
            assert!(w[(i, i)].im.abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_columns() {
        let h: CMatrix = DMatrix::identity(6, 3);
        let y = CVector::from_fn(6, |i, _| Complex64::new(i as f64, -(i as f64)));
        let zf = zf_detect(&y, &h).unwrap();
        assert!((zf - mf_detect(&y, &h).unwrap()).norm() < 1e-14);
    }

    #[test]
    fn lmmse_limits() {
        let (h, y) = small_system(7);
        let x = lmmse_detect(&y, &h, 1e-12, 1.0).unwrap();
        assert!((x - zf_detect(&y, &h).unwrap()).norm() < 1e-8);
        let n0 = 1e9;
        let x = lmmse_detect(&y, &h, n0, 1.0).unwrap() * Complex64::new(n0, 0.0);
        assert!((x - h.ad_mul(&y)).norm() < 1e-6);
    }

    #[test]
    fn zf_rejects_wide_and_degenerate_channels() {
        let h = CMatrix::from_element(4, 6, Complex64::new(1.0, 0.0));
        let y = CVector::zeros(4);
        assert!(matches!(zf_detect(&y, &h), Err(Error::Detector(_))));
        let h = CMatrix::from_element(4, 2, Complex64::new(1.0, 0.0));
        assert!(matches!(zf_detect(&y, &h), Err(Error::Detector(_))));
    }

    #[test]
    fn zf_inverts_noiseless_system() {
        let c = Constellation::from_key("16qam").unwrap();
        let inst = MimoInstance::draw(&c, 32, 16, 0.0, &mut trial_rng(1, 2, 3)).unwrap();
        let s = zf_detect(&inst.y, &inst.h).unwrap();
        assert!((s - &inst.s0).norm() < 1e-10);
    }

    #[test]
    fn box_identity_channel() {
        let h = CMatrix::identity(3, 3);
        let inside = CVector::from_vec(vec![
            Complex64::new(0.2, -0.9),
            Complex64::new(-0.5, 0.5),
            Complex64::new(0.0, 1.0),
        ]);
        let sol = box_detect(&inside, &h, 1.0, &BoxSolverConfig::default()).unwrap();
        assert!((sol.soft - &inside).norm() < 1e-12);
        let outside = CVector::from_vec(vec![
            Complex64::new(2.5, -0.3),
            Complex64::new(-4.0, 7.0),
            Complex64::new(0.1, -1.2),
        ]);
        let sol = box_detect(&outside, &h, 1.0, &BoxSolverConfig::default()).unwrap();
        let want = outside.map(|v| clamp(v, 1.0));
        assert!((sol.soft - want).norm() < 1e-12);
    }

    #[test]
    fn box_objective_never_increases() {
        let c = Constellation::from_key("qpsk").unwrap();
        let inst = MimoInstance::draw(&c, 64, 32, 0.5, &mut trial_rng(11, 0, 0)).unwrap();
        let cfg = BoxSolverConfig {
            record_objective: true,
            ..Default::default()
        };
        let sol = box_detect(&inst.y, &inst.h, 1.0, &cfg).unwrap();
        assert!(sol.objective.len() > 10);
        for w in sol.objective.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-14));
        }
        assert!(sol
            .soft
            .iter()
            .all(|s| s.re.abs() <= 1.0 && s.im.abs() <= 1.0));
    }

    #[test]
    fn box_solution_satisfies_kkt() {
        let c = Constellation::from_key("16qam").unwrap();
        let inst = MimoInstance::draw(&c, 48, 32, 1.0, &mut trial_rng(5, 0, 0)).unwrap();
        let sol = box_detect(&inst.y, &inst.h, 3.0, &BoxSolverConfig::default()).unwrap();
        let g = inst.h.ad_mul(&(&inst.h * &sol.soft - &inst.y));
        for (s, g) in sol.soft.iter().zip(g.iter()) {
            for (x, d) in [(s.re, g.re), (s.im, g.im)] {
                if x.abs() < 3.0 - 1e-9 {
                    assert!(d.abs() < 1e-7, "interior gradient {d}");
                } else {
                    // at an active bound the gradient points outward
                    assert!(d * x.signum() <= 1e-7);
                }
            }
        }
    }

    #[test]
    fn box_reports_non_convergence() {
        let (h, y) = small_system(2);
        let cfg = BoxSolverConfig {
            max_iters: 1,
            tol: 1e-300,
            record_objective: false,
        };
        match box_detect(&y, &h, 1.0, &cfg) {
            Err(Error::NotConverged { iters, iterate, .. }) => {
                assert_eq!(iters, 1);
                assert_eq!(iterate.len(), 4);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn real_field_stays_real() {
        let c = Constellation::from_key("4pam").unwrap();
        assert_eq!(Field::of(&c), Field::Real);
        let inst = MimoInstance::draw(&c, 40, 20, 0.2, &mut trial_rng(8, 0, 0)).unwrap();
        let sol = box_detect(&inst.y, &inst.h, 3.0, &BoxSolverConfig::default()).unwrap();
        assert!(sol.soft.iter().all(|s| s.im == 0.0));
    }

    #[test]
    fn fm_minimizer_is_stationary_and_a_fixed_point() {
        for m in [2usize, 4] {
            for beta in [0.5, 1.2] {
                for n0 in [0.01, 0.1] {
                    let s = fm_minimize(m, beta, n0).unwrap();
                    assert!(fm_derivative(s, m, beta, n0).abs() < 1e-6);
                    let s2 = s * s;
                    let rhs = n0 + beta * psi_pam_clip(s2, m);
                    assert!((s2 - rhs).abs() < 1e-8, "m={m} beta={beta} n0={n0}");
                }
            }
        }
    }

    #[test]
    fn fm_derivative_matches_difference() {
        for &s in &[0.05, 0.4, 1.0, 3.0] {
            let h = 1e-6;
            let fd =
                (fm_objective(s + h, 4, 0.9, 0.05) - fm_objective(s - h, 4, 0.9, 0.05)) / (2.0 * h);
            assert!((fd - fm_derivative(s, 4, 0.9, 0.05)).abs() < 1e-7);
        }
    }

    #[test]
    fn fm_noiseless_and_hypothesis() {
        assert_eq!(fm_minimize(2, 1.5, 0.0).unwrap(), 1e-6);
        assert!(matches!(fm_minimize(4, 1.4, 0.1), Err(Error::Analysis(_))));
        assert!(matches!(fm_minimize(3, 0.5, 0.1), Err(Error::Analysis(_))));
    }
}
