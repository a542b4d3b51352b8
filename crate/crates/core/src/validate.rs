//! Self-check suite run by `mlama validate`: analytic identities of the
//! state-evolution engine and the denoisers that need no Monte Carlo.

use crate::amp::TuningPolicy;
use crate::baselines::fm_minimize;
use crate::constellation::Constellation;
use crate::denoise::{clip_scalar, Denoiser, Family};
use crate::error::Result;
use crate::optimize::log_grid;
use crate::se::{fixed_point, mrt, psi_mm, psi_mm_joint, psi_star, se_trajectory, SeConfig};

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

fn se_cfg(family: Family, key: &str, tuning: TuningPolicy) -> Result<SeConfig> {
    let c = Constellation::from_key(key)?;
    Ok(SeConfig::new(Denoiser::new(family, &c)?, tuning))
}

fn mrt_checks(out: &mut Vec<Check>) -> Result<()> {
    for (family, key, want) in [
        (Family::Clip, "qpsk", 2.0),
        (Family::Clip, "16qam", 4.0 / 3.0),
        (Family::Gaussian, "qpsk", 1.0),
    ] {
        let got = mrt(&se_cfg(family, key, TuningPolicy::Optimal)?)?;
        out.push(Check::new(
            format!("mrt {family} {key}"),
            (got - want).abs() <= 1e-3,
            format!("{got:.6} (expected {want:.6})"),
        ));
    }
    Ok(())
}

fn box_equivalence(out: &mut Vec<Check>) -> Result<()> {
    let mut worst: f64 = 0.0;
    for (m, key) in [(2, "bpsk"), (4, "4pam")] {
        let cfg = se_cfg(Family::Clip, key, TuningPolicy::Optimal)?;
        for beta in [0.5, 1.2] {
            for n0 in [0.01, 0.1] {
                let s = fm_minimize(m, beta, n0)?;
                worst = worst.max((s * s - fixed_point(n0, beta, &cfg)?).abs());
            }
        }
    }
    out.push(Check::new(
        "box objective minimizer equals clip fixed point",
        worst <= 1e-8,
        format!("max deviation {worst:.3e}"),
    ));
    Ok(())
}

fn gaussian_recursion(out: &mut Vec<Check>) -> Result<()> {
    let c = Constellation::from_key("qpsk")?.normalized();
    let cfg = SeConfig::new(Denoiser::new(Family::Gaussian, &c)?, TuningPolicy::Optimal);
    let (n0, beta) = (0.1, 0.5);
    let traj = se_trajectory(n0, beta, &cfg, 20)?;
    let mut s2 = n0 + beta;
    let mut worst: f64 = 0.0;
    for &got in &traj.sigma2 {
        worst = worst.max((got - s2).abs());
        s2 = n0 + beta * s2 / (1.0 + s2);
    }
    out.push(Check::new(
        "gaussian state evolution follows its closed-form recursion",
        worst <= 1e-9,
        format!("max deviation {worst:.3e} over 20 iterations"),
    ));
    let fp = fixed_point(n0, beta, &cfg)?;
    out.push(Check::new(
        "gaussian fixed point",
        (fp - 0.174_165_7).abs() <= 1e-6,
        format!("{fp:.9}"),
    ));
    Ok(())
}

fn derivative_checks(out: &mut Vec<Check>) -> Result<()> {
    let h = 1e-4;
    for family in Family::ALL {
        let mut worst: f64 = 0.0;
        for key in ["qpsk", "16qam", "4pam"] {
            let d = Denoiser::new(family, &Constellation::from_key(key)?)?;
            for tau in [0.05, 0.5, 5.0] {
                let v = d.dim_variance(tau);
                let kinks = d.breakpoints(v);
                for i in 0..=80 {
                    let x = -5.0 + 0.125 * i as f64 + 0.0137;
                    if kinks.iter().any(|k| (x - k).abs() < 4.0 * h) {
                        continue;
                    }
                    let f = |x: f64| d.scalar(x, v).0;
                    let fd = (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h))
                        / (12.0 * h);
                    worst = worst.max((fd - d.scalar(x, v).1).abs());
                }
            }
        }
        out.push(Check::new(
            format!("derivative of {family} matches finite difference"),
            worst <= 1e-5,
            format!("max deviation {worst:.3e}"),
        ));
    }
    Ok(())
}

fn hypercube_limit(out: &mut Vec<Check>) -> Result<()> {
    let c = Constellation::from_key("16qam")?;
    let d = Denoiser::new(Family::Hypercube, &c)?;
    let v = d.dim_variance(1e-7);
    let worst = (0..=2000)
        .map(|i| -6.0 + 0.006 * i as f64)
        .map(|x| (d.scalar(x, v).0 - clip_scalar(x, c.alpha()).0).abs())
        .fold(0.0, f64::max);
    out.push(Check::new(
        "hypercube approaches clip as tau -> 0",
        worst <= 1e-3,
        format!("sup error {worst:.3e}"),
    ));
    Ok(())
}

fn separability(out: &mut Vec<Check>) -> Result<()> {
    let mut worst: f64 = 0.0;
    for family in Family::ALL {
        let d = Denoiser::new(family, &Constellation::from_key("16qam")?)?;
        for (s2, tau) in [(0.2, 0.3), (2.0, 1.1)] {
            worst = worst.max((psi_mm(s2, tau, &d)? - psi_mm_joint(s2, tau, &d)?).abs());
        }
    }
    out.push(Check::new(
        "complex MSE equals twice the per-dimension MSE",
        worst <= 1e-9,
        format!("max deviation {worst:.3e}"),
    ));
    Ok(())
}

fn gaussian_sign_change(out: &mut Vec<Check>) -> Result<()> {
    let d = Denoiser::new(Family::Gaussian, &Constellation::from_key("qpsk")?)?;
    let s2 = 0.7;
    let mut signs = Vec::new();
    for tau in log_grid(1e-3, 1e3, 300) {
        let h = 1e-5 * tau;
        signs.push((tau, psi_mm(s2, tau + h, &d)? > psi_mm(s2, tau - h, &d)?));
    }
    let changes: Vec<f64> = signs
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| w[1].0)
        .collect();
    let ok = changes.len() == 1 && (changes[0] / s2 - 1.0).abs() < 0.05;
    out.push(Check::new(
        "gaussian MSE has one stationary point in tau, at sigma^2",
        ok,
        format!("sign changes at {changes:?}"),
    ));
    Ok(())
}

fn tau_optimality(out: &mut Vec<Check>) -> Result<()> {
    let cfg = se_cfg(Family::Hypercube, "16qam", TuningPolicy::Optimal)?;
    let mut ok = true;
    for s2 in [0.05, 0.5, 3.0] {
        let (best, _) = psi_star(s2, &cfg)?;
        for tau in log_grid(1e-4 * s2, 1e2 * (s2 + 10.0), 1000) {
            ok &= best <= psi_mm(s2, tau, &cfg.denoiser)? + 1e-12;
        }
    }
    out.push(Check::new(
        "tuned tau beats a 1000-point grid",
        ok,
        "hypercube 16qam",
    ));
    Ok(())
}

fn g_monotone(out: &mut Vec<Check>) -> Result<()> {
    let mut ok = true;
    for (family, key, beta) in [(Family::Clip, "qpsk", 1.9), (Family::Clip, "16qam", 1.3)] {
        let cfg = se_cfg(family, key, TuningPolicy::Optimal)?;
        let mut prev = f64::NEG_INFINITY;
        for s2 in log_grid(1e-6, 1e2, 200) {
            let g = s2 - beta * psi_star(s2, &cfg)?.0;
            ok &= g > prev;
            prev = g;
        }
    }
    out.push(Check::new(
        "sigma^2 - beta Psi* increasing below the recovery threshold",
        ok,
        "clip qpsk beta=1.9, clip 16qam beta=1.3",
    ));
    Ok(())
}

/// Runs every check. Errors inside a check are reported as failures.
pub fn run_all() -> Vec<Check> {
    type Group = fn(&mut Vec<Check>) -> Result<()>;
    let groups: [(&str, Group); 9] = [
        ("recovery thresholds", mrt_checks),
        ("box equivalence", box_equivalence),
        ("gaussian recursion", gaussian_recursion),
        ("denoiser derivatives", derivative_checks),
        ("hypercube limit", hypercube_limit),
        ("separability", separability),
        ("sign change", gaussian_sign_change),
        ("tau optimality", tau_optimality),
        ("monotone g", g_monotone),
    ];
    let mut out = Vec::new();
    for (name, group) in groups {
        if let Err(e) = group(&mut out) {
            out.push(Check::new(name, false, e.to_string()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_passes() {
        let checks = super::run_all();
        assert!(checks.len() >= 15);
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
