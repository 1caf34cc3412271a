//! Acceptance suite: one test per release criterion, each printing a
//! pass line (visible with `--nocapture`). Run with
//! `cargo test -p reachpac-cli --test acceptance`.

use reachpac_cli::config::ExperimentConfig;
use reachpac_cli::experiments::{run_fig2, run_fig3, ComparisonMode};
use reachpac_core::certify::{calib_size_for, exact_discard_k, holdout_certify, max_discard_k};
use reachpac_core::dynamics::{
    draw_samples, DisturbanceModel, Duffing, Frozen, InitialDistribution, SampleBatch,
    SamplingSpec, SystemSpec,
};
use reachpac_core::ellipsoid::{fit_mvee, Ellipsoid};
use reachpac_core::equivalence::{
    check_threshold_equality, joint_parameterization, retained_count_gap, EquivalenceError,
    JointParams, DEFAULT_SAMPLE_CAP,
};
use reachpac_core::special::{beta_cdf, binom_cdf, BetaParams, Probability};

fn p(v: f64) -> Probability {
    Probability::new(v).unwrap()
}

fn unit_circle() -> Ellipsoid {
    Ellipsoid::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0]).unwrap()
}

/// Criterion 1: the binomial tail and the complementary regularized
/// beta integral agree to 1e-10 across the full parameter grid.
#[test]
fn criterion_01_tail_identity_grid() {
    let mut es: Vec<f64> = (0..20).map(|j| 0.001 + 0.05 * j as f64).collect();
    es.push(0.999);
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for &k in &[0u64, 1, 5, 50, 3231] {
        for &m in &[10u64, 100, 1500, 72347] {
            if k >= m {
                continue;
            }
            let params = BetaParams::new(k as f64 + 1.0, (m - k) as f64).unwrap();
            for &e in &es {
                let lhs = binom_cdf(k, m, p(e)).unwrap().get();
                let rhs = 1.0 - beta_cdf(params, p(e)).get();
                let diff = (lhs - rhs).abs();
                worst = worst.max(diff);
                assert!(diff <= 1e-10, "k={k} M={m} e={e}: |{lhs} - {rhs}| = {diff}");
                checked += 1;
            }
        }
    }
    println!("acceptance criterion 1 (tail identity, {checked} points, worst {worst:.3e}): PASS");
}

/// Criterion 2: holdout and empirical-conformal certificates agree to
/// 1e-9 in epsilon with identical violation counts, over 50 seeded runs
/// with M = K = 1500 and beta = 1e-9, including the ODE sampling.
#[test]
fn criterion_02_holdout_conformal_agreement() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.experiment.n_certify, 1500);
    assert_eq!(cfg.experiment.repetitions, 50);
    assert_eq!(cfg.experiment.beta, 1e-9);
    let study = run_fig2(&cfg).unwrap();
    assert_eq!(study.rows.len(), 100);
    let mut worst = 0.0f64;
    for (h, c) in study.paired() {
        assert_eq!(
            h.violations, c.violations,
            "run {}: violation counts differ",
            h.run_id
        );
        let diff = (h.epsilon - c.epsilon).abs();
        worst = worst.max(diff);
        assert!(diff <= 1e-9, "run {}: |eps| diff {diff}", h.run_id);
        // the reference histogram spans [0.012, 0.035] for this setup
        assert!(
            (0.012..=0.035).contains(&h.epsilon),
            "run {}: eps {} outside the reference range",
            h.run_id,
            h.epsilon
        );
    }
    println!(
        "acceptance criterion 2 (holdout = empirical conformal, worst eps gap {worst:.3e}): PASS"
    );
}

/// Criterion 3: closed-form discard count at the large configuration.
#[test]
fn criterion_03_discard_count_large() {
    let bound = max_discard_k(72347, p(0.05), p(1e-9), 1);
    assert!(bound.certifiable);
    assert!(
        (3229..=3233).contains(&bound.k),
        "k = {} outside [3229, 3233]",
        bound.k
    );
    println!(
        "acceptance criterion 3 (large discard count k = {}): PASS",
        bound.k
    );
}

/// Criterion 4: closed-form discard count at the small configuration,
/// dominated by the exact search.
#[test]
fn criterion_04_discard_count_small() {
    let bound = max_discard_k(1047, p(0.05), p(1e-9), 1);
    assert!(bound.certifiable);
    assert!((5..=7).contains(&bound.k), "k = {} outside [5, 7]", bound.k);
    let exact = exact_discard_k(1047, p(0.05), p(1e-9), 1);
    assert!(exact >= bound.k, "exact {exact} < closed-form {}", bound.k);
    println!(
        "acceptance criterion 4 (small discard count k = {}, exact = {exact}): PASS",
        bound.k
    );
}

/// Criterion 5: calibration sizing lands within ten percent of the
/// published 72,347 and 1,047.
#[test]
fn criterion_05_calibration_sizing() {
    let tight = calib_size_for(p(0.05), p(1e-9), p(0.005)).unwrap();
    assert!(
        (65112..=79582).contains(&tight),
        "K = {tight} outside 72347 +-10%"
    );
    let loose = calib_size_for(p(0.05), p(1e-9), p(0.05)).unwrap();
    assert!(
        (942..=1152).contains(&loose),
        "K = {loose} outside 1047 +-10%"
    );
    println!("acceptance criterion 5 (calibration sizes {tight} and {loose}): PASS");
}

/// Criterion 6: with K = N = 1047 and alpha = eps = 0.05 on a shared
/// batch, the conformal update removes exactly 51 scores, the scenario
/// update removes 6 +- 1, and volumes order as
/// conformal < scenario <= initial on every tested seed.
#[test]
fn criterion_06_set_update_ordering() {
    for seed in 42..52u64 {
        let mut cfg = ExperimentConfig::default();
        cfg.sampling.seed = seed;
        let study = run_fig3(&cfg, ComparisonMode::Small).unwrap();
        let cp = &study.rows[0];
        let so = &study.rows[1];
        assert_eq!(cp.removed_count, 51, "seed {seed}: conformal removals");
        assert!(
            (5..=7).contains(&so.removed_count),
            "seed {seed}: scenario removals {}",
            so.removed_count
        );
        assert!(
            cp.volume_after < so.volume_after,
            "seed {seed}: conformal {} !< scenario {}",
            cp.volume_after,
            so.volume_after
        );
        assert!(
            so.volume_after <= so.volume_before,
            "seed {seed}: scenario grew the set ({} > {})",
            so.volume_after,
            so.volume_before
        );
    }
    println!("acceptance criterion 6 (set-update ordering over 10 seeds): PASS");
}

/// Criterion 7: whenever the conformal index equals the retained count,
/// the two thresholds are the same order statistic bitwise, checked on
/// 100 synthetic score vectors.
#[test]
fn criterion_07_threshold_exactness() {
    let set = unit_circle();
    let sys = SystemSpec::new(Frozen { dim: 2 }, 0.0, 1.0, 1.0).unwrap();
    for case in 0..100u64 {
        let s = 50 + (case * 37) % 1500;
        let k = (case * 13) % (s / 3);
        let eps = (k as f64 + 1.5) / (s as f64 + 1.0);
        let params = JointParams {
            samples: s,
            epsilon: eps,
            beta: 1e-9,
            k_discard: k,
            residuals: [0.0, 0.0],
        };
        let samp = SamplingSpec {
            initial: InitialDistribution::Ball {
                center: vec![0.1, -0.3],
                radius: 2.0,
            },
            disturbance: DisturbanceModel::None,
            seed: 9000 + case,
        };
        let batch = draw_samples(&sys, &samp, s as usize).unwrap();
        let r = check_threshold_equality(&set, &batch, &params).unwrap();
        assert!(r.exact, "case {case}: index gap {}", r.index_gap);
        assert!(r.pass, "case {case}: thresholds differ");
        assert_eq!(
            r.values.0.to_bits(),
            r.values.1.to_bits(),
            "case {case}: thresholds not bitwise equal"
        );
    }
    println!("acceptance criterion 7 (bitwise threshold equality, 100 cases): PASS");
}

/// Criterion 8: the joint parameterization at beta = 1e-9 yields a
/// sample count in [1e5, 1e7] and an accuracy in [1e-7, 1e-5] whose
/// re-substitution residuals stay within one sample / 1e-12 relative.
#[test]
fn criterion_08_joint_parameterization() {
    let params = match joint_parameterization(p(1e-9), DEFAULT_SAMPLE_CAP) {
        Ok(params) => params,
        // the saturation path carries the deepest iterate
        Err(EquivalenceError::NoFixedPoint { last, .. }) => last,
        Err(other) => panic!("unexpected error {other}"),
    };
    assert!(
        (100_000..=10_000_000).contains(&params.samples),
        "S = {}",
        params.samples
    );
    assert!(
        params.epsilon >= 1e-7 && params.epsilon <= 1e-5,
        "eps = {}",
        params.epsilon
    );
    assert!(
        params.residuals[0] <= 1.0,
        "sizing residual {}",
        params.residuals[0]
    );
    assert!(
        params.residuals[1] <= 1e-12,
        "accuracy residual {}",
        params.residuals[1]
    );
    assert!(
        retained_count_gap(&params).abs() <= 1,
        "retained-count gap {}",
        retained_count_gap(&params)
    );
    println!(
        "acceptance criterion 8 (joint parameterization S = {}, eps = {:.6e}): PASS",
        params.samples, params.epsilon
    );
}

/// Criterion 9: enclosing-ellipsoid oracles (unit circle, rectangle)
/// to 1e-6 and exhaustive containment of the 1500-sample benchmark
/// batch to 1e-9.
#[test]
fn criterion_09_mvee_correctness() {
    // four axis points: the enclosing ellipse is the unit circle
    let cross = SampleBatch::new(2, vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]).unwrap();
    let e = fit_mvee(&cross, 1e-9).unwrap();
    for row in cross.rows() {
        assert!(e.score(row).unwrap().abs() < 1e-6);
    }
    assert!((e.volume() - std::f64::consts::PI).abs() < 1e-6);

    // rectangle corners: closed-form volume 2 pi a c
    let (a, c) = (1.5, 0.7);
    let rect = SampleBatch::new(2, vec![a, c, a, -c, -a, c, -a, -c]).unwrap();
    let e = fit_mvee(&rect, 1e-9).unwrap();
    for row in rect.rows() {
        assert!(e.score(row).unwrap().abs() < 1e-6);
    }
    let expect = 2.0 * std::f64::consts::PI * a * c;
    assert!((e.volume() - expect).abs() < 1e-6 * expect);

    // benchmark batch: exhaustive containment
    let sys = SystemSpec::new(Duffing::default(), 0.0, 2.0, 1e-3).unwrap();
    let samp = SamplingSpec {
        initial: InitialDistribution::Ball {
            center: vec![0.5, 0.0],
            radius: 0.5,
        },
        disturbance: DisturbanceModel::None,
        seed: 42,
    };
    let batch = draw_samples(&sys, &samp, 1500).unwrap();
    let e = fit_mvee(&batch, 1e-7).unwrap();
    let worst = batch
        .rows()
        .map(|r| e.score(r).unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 1e-9, "containment slack {worst}");
    println!(
        "acceptance criterion 9 (enclosing-ellipsoid oracles, containment slack {worst:.2e}): PASS"
    );
}

/// Criterion 10: against a sampling distribution with known violation
/// probability, the holdout certificate under-covers in at most
/// beta + 3 sigma of 200 runs.
#[test]
fn criterion_10_certificate_validity() {
    // unit disc under a uniform ball of radius 1.25:
    // p = 1 - (1/1.25)^2 = 0.36 exactly
    let set = unit_circle();
    let true_p = 0.36;
    let beta = 0.05;
    let runs = 200usize;
    let m = 400usize;
    let sys = SystemSpec::new(Frozen { dim: 2 }, 0.0, 1.0, 1.0).unwrap();

    let mut undercovered = 0usize;
    for run in 0..runs {
        let samp = SamplingSpec {
            initial: InitialDistribution::Ball {
                center: vec![0.0, 0.0],
                radius: 1.25,
            },
            disturbance: DisturbanceModel::None,
            seed: 0xACCE_0000 + run as u64,
        };
        let batch = draw_samples(&sys, &samp, m).unwrap();
        let cert = holdout_certify(&set, &batch, p(beta)).unwrap();
        if cert.epsilon.get() < true_p {
            undercovered += 1;
        }
    }
    let bound = beta + 3.0 * (beta * (1.0 - beta) / runs as f64).sqrt();
    let rate = undercovered as f64 / runs as f64;
    assert!(rate <= bound, "under-coverage rate {rate} exceeds {bound}");
    println!(
        "acceptance criterion 10 (certificate validity, under-coverage {undercovered}/{runs}): PASS"
    );
}
