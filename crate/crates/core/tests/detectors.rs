//! Large-system behaviour of the AMP detector against state evolution.

use mlama::amp::{detect, DetectorConfig, TuningPolicy};
use mlama::channel::{snr_to_n0, trial_rng, MimoInstance};
use mlama::constellation::Constellation;
use mlama::denoise::{Denoiser, Family};
use mlama::harness::wilson;
use mlama::se::{se_trajectory, ser_predict, SeConfig};

/// Simulated and predicted variance trajectories for one realization.
fn run(
    family: Family,
    tuning: TuningPolicy,
    key: &str,
    (mr, mt): (usize, usize),
    snr_db: f64,
    t_max: usize,
    seed: u64,
) -> (Vec<f64>, Vec<f64>) {
    let c = Constellation::from_key(key).unwrap();
    let beta = mt as f64 / mr as f64;
    let n0 = snr_to_n0(snr_db, beta, c.es());
    let den = Denoiser::new(family, &c).unwrap();
    let cfg = DetectorConfig::new(den.clone(), tuning, t_max).unwrap();
    let inst = MimoInstance::draw(&c, mr, mt, n0, &mut trial_rng(seed, 0, 0)).unwrap();
    let out = detect(&inst.y, &inst.h, &cfg).unwrap();
    let se = se_trajectory(n0, beta, &SeConfig::new(den, tuning), t_max).unwrap();
    (out.trajectory, se.sigma2)
}

fn assert_tracks(sim: &[f64], se: &[f64], rel: f64, what: &str) {
    assert_eq!(sim.len(), se.len());
    for (t, (a, b)) in sim.iter().zip(se).enumerate() {
        assert!(
            (a - b).abs() <= rel * b,
            "{what}: t={} sim {a} vs SE {b}",
            t + 1
        );
    }
}

#[test]
fn gaussian_trajectory_follows_closed_form() {
    let (sim, se) = run(
        Family::Gaussian,
        TuningPolicy::Optimal,
        "qpsk",
        (1024, 512),
        6.0,
        10,
        1,
    );
    // the SE values themselves follow N0 + beta Es s / (Es + s)
    let (n0, beta, es) = (snr_to_n0(6.0, 0.5, 2.0), 0.5, 2.0);
    let mut s = n0 + beta * es;
    for &v in &se {
        assert!((v - s).abs() < 1e-9);
        s = n0 + beta * es * s / (es + s);
    }
    assert_tracks(&sim, &se, 0.10, "gaussian");
}

#[test]
fn decoupled_variance_converges_to_state_evolution() {
    for (family, key, snr) in [
        (Family::Exact, "qpsk", 6.0),
        (Family::Clip, "qpsk", 6.0),
        (Family::Hypercube, "16qam", 12.0),
        (Family::GrayMaxLog, "16qam", 12.0),
    ] {
        let tuning = if matches!(family, Family::GrayMaxLog) {
            TuningPolicy::MatchSigma
        } else {
            TuningPolicy::Optimal
        };
        let (sim, se) = run(family, tuning, key, (1024, 512), snr, 10, 2);
        assert_tracks(&sim, &se, 0.10, family.key());
    }
}

#[test]
fn limit_policies_reproduce_zf_and_mf() {
    let (sim, se) = run(
        Family::Gaussian,
        TuningPolicy::LimitZero,
        "qpsk",
        (1024, 512),
        8.0,
        8,
        3,
    );
    let n0 = snr_to_n0(8.0, 0.5, 2.0);
    let mut s = n0 + 0.5 * 2.0;
    for &v in &se {
        assert!((v - s).abs() < 1e-12);
        s = n0 + 0.5 * s;
    }
    assert_tracks(&sim, &se, 0.10, "zf");
    let (sim, se) = run(
        Family::Gaussian,
        TuningPolicy::LimitInfinity,
        "16qam",
        (1024, 512),
        8.0,
        4,
        4,
    );
    let mf = snr_to_n0(8.0, 0.5, 10.0) + 0.5 * 10.0;
    assert!(se.iter().all(|v| (v - mf).abs() < 1e-12));
    assert_tracks(&sim, &se, 0.10, "mf");
}

#[test]
fn trajectory_median_decreases_below_threshold() {
    let c = Constellation::from_key("qpsk").unwrap();
    let n0 = snr_to_n0(6.0, 0.5, c.es());
    let cfg = DetectorConfig::new(
        Denoiser::new(Family::Clip, &c).unwrap(),
        TuningPolicy::Optimal,
        10,
    )
    .unwrap();
    let runs: Vec<Vec<f64>> = (0..100)
        .map(|k| {
            let inst = MimoInstance::draw(&c, 128, 64, n0, &mut trial_rng(17, 0, k)).unwrap();
            detect(&inst.y, &inst.h, &cfg).unwrap().trajectory
        })
        .collect();
    let medians: Vec<f64> = (0..runs[0].len())
        .map(|t| {
            let mut col: Vec<f64> = runs.iter().map(|r| r[t]).collect();
            col.sort_by(f64::total_cmp);
            0.5 * (col[49] + col[50])
        })
        .collect();
    // after convergence the median only moves by Monte-Carlo noise
    for w in medians.windows(2) {
        assert!(w[1] <= w[0] * 1.01, "{medians:?}");
    }
}

#[test]
fn exact_prior_ser_at_ten_db_matches_prediction() {
    let c = Constellation::from_key("qpsk").unwrap();
    let n0 = snr_to_n0(10.0, 0.5, c.es());
    let den = Denoiser::new(Family::Exact, &c).unwrap();
    let cfg = DetectorConfig::new(den.clone(), TuningPolicy::Optimal, 10).unwrap();
    let trials = 1600u64;
    let mut errors = 0u64;
    for k in 0..trials {
        let inst = MimoInstance::draw(&c, 128, 64, n0, &mut trial_rng(23, 0, k)).unwrap();
        let out = detect(&inst.y, &inst.h, &cfg).unwrap();
        errors += out
            .hard
            .iter()
            .zip(inst.s0.iter())
            .filter(|(a, b)| a != b)
            .count() as u64;
    }
    let symbols = trials * 64;
    assert!(symbols >= 100_000);
    let se = se_trajectory(n0, 0.5, &SeConfig::new(den, TuningPolicy::Optimal), 10).unwrap();
    let pred = ser_predict(*se.sigma2.last().unwrap(), &c);
    let (lo, hi) = wilson(errors, symbols, 1.959_963_984_540_054);
    assert!(
        lo <= pred && pred <= hi,
        "{errors} errors: [{lo}, {hi}] vs {pred}"
    );
}
