//! Acceptance gate: ten end-to-end checks, one per release criterion, each
//! printing a single `ACCEPTANCE nn: PASS/FAIL` line (visible under
//! `--nocapture`; the test name carries the verdict otherwise).
//!
//! Statistical thresholds are asserted; runtimes are printed for comparison
//! against their budgets but never asserted, since wall time depends on the
//! host.

use std::time::Instant;

use rand::Rng;
use robust_shadows::experiments::{
    check_thresholds, execute, run_experiment, ExperimentConfig, ResultRow,
};
use robust_shadows::moments::{central_moment_bound, exact_moment};
use robust_shadows::quantum::{
    haar_pure_state, random_hermitian_observable, random_rank_r_state, trace_distance,
};
use robust_shadows::robust_stats::{truncated_mean, SampleBatch};
use robust_shadows::seeding::{derive_seed, stream};
use robust_shadows::shadows::{collect_shadows, raw_estimates};
use robust_shadows::tomography::holevo_helstrom;

fn verdict(criterion: usize, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion:02}: {} — {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "ACCEPTANCE {criterion:02} FAILED — {detail}");
}

fn runtime(criterion: usize, started: Instant, budget_s: Option<f64>) {
    let elapsed = started.elapsed().as_secs_f64();
    match budget_s {
        Some(b) => println!(
            "ACCEPTANCE {criterion:02}: runtime {elapsed:.1}s (budget {b:.0}s, informational)"
        ),
        None => println!("ACCEPTANCE {criterion:02}: runtime {elapsed:.1}s"),
    }
}

fn config(body: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(body).unwrap()
}

fn rows_at<'a>(
    rows: &'a [ResultRow],
    gamma: f64,
    estimator: &'a str,
    observable: Option<usize>,
) -> impl Iterator<Item = &'a ResultRow> + 'a {
    rows.iter().filter(move |r| {
        r.gamma == gamma
            && r.estimator == estimator
            && observable.is_none_or(|o| r.observable_index == o)
    })
}

/// Exact-moment agreement: for d in {2, 4, 8} and orders 1..=4, the
/// empirical mean of `<u|O|u>^k` over a million Haar states must sit within
/// five Monte Carlo standard errors of the closed form for at least 95% of
/// the 240 (dimension, observable, order) cells.
#[test]
fn acceptance_01_haar_moment_agreement() {
    let started = Instant::now();
    let mut within = 0usize;
    let mut total = 0usize;
    let mut worst: f64 = 0.0;
    for d in [2usize, 4, 8] {
        let cfg = config(&format!(
            r#"{{"experiment": "moment_check", "dim": {d}, "n_copies": 1000000,
                "m": 20, "max_order": 4, "repeats": 1, "master_seed": 101,
                "output_path": "unused.csv"}}"#
        ));
        let out = run_experiment(&cfg).unwrap();
        for entry in out.report["entries"].as_array().unwrap() {
            if entry["identity"].as_bool().unwrap() {
                let diff =
                    (entry["empirical"].as_f64().unwrap() - entry["exact"].as_f64().unwrap()).abs();
                assert!(diff <= 1e-12, "identity moment drifted by {diff}");
                continue;
            }
            let z = entry["z"].as_f64().unwrap().abs();
            worst = worst.max(z);
            total += 1;
            if z <= 5.0 {
                within += 1;
            }
        }
    }
    assert_eq!(total, 240);
    let need = (total as f64 * 0.95).ceil() as usize;
    verdict(
        1,
        within >= need,
        &format!("{within}/{total} moment cells within 5 SE (need >= {need}; worst |z| = {worst:.2})"),
    );
    runtime(1, started, Some(120.0));
}

/// Shadow unbiasedness: a million raw estimates of a unit-norm observable on
/// a random rank-2 state at d = 32 must average to the true expectation
/// within five standard errors.
#[test]
fn acceptance_02_shadow_unbiasedness() {
    let started = Instant::now();
    let d = 32;
    let n_total = 1_000_000usize;
    let chunk = 50_000usize;
    let mut rng = stream(202, &[0]);
    let rho = random_rank_r_state(d, 2, &mut rng).unwrap();
    let obs = random_hermitian_observable(d, true, &mut rng).unwrap();
    let truth = obs.expectation(&rho).unwrap();

    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for c in 0..(n_total / chunk) {
        let samples = collect_shadows(&rho, chunk, derive_seed(202, &[1, c as u64])).unwrap();
        for v in raw_estimates(&samples, &obs).unwrap().into_values() {
            sum += v;
            sum_sq += v * v;
        }
    }
    let n = n_total as f64;
    let mean = sum / n;
    let variance = (sum_sq / n - mean * mean).max(0.0);
    let se = (variance / n).sqrt();
    let diff = (mean - truth).abs();
    verdict(
        2,
        diff <= 5.0 * se,
        &format!(
            "|mean - truth| = {diff:.2e} <= 5 SE = {:.2e} (truth {truth:.6}, sd {:.3})",
            5.0 * se,
            variance.sqrt()
        ),
    );
    runtime(2, started, Some(180.0));
}

/// Central-moment ceiling: for d in {4, 8, 16}, ten random unit-norm
/// observables, and a million Haar states, the empirical absolute central
/// moments of the overlap at orders 2..=4 must never exceed
/// `(8 h |O|_HS / (d+1))^h`.
#[test]
fn acceptance_03_central_moment_ceiling() {
    let started = Instant::now();
    let n = 1_000_000usize;
    let mut violations = 0usize;
    let mut tightest: f64 = 0.0;
    for d in [4usize, 8, 16] {
        let mut setup_rng = stream(303, &[d as u64]);
        let observables: Vec<_> = (0..10)
            .map(|_| random_hermitian_observable(d, true, &mut setup_rng).unwrap())
            .collect();
        let means: Vec<f64> = observables
            .iter()
            .map(|o| exact_moment(o, 1).unwrap())
            .collect();
        let mut sums = vec![0.0f64; observables.len() * 3];
        let mut rng = stream(303, &[d as u64, 1]);
        for _ in 0..n {
            let u = haar_pure_state(d, &mut rng).unwrap();
            for (oi, obs) in observables.iter().enumerate() {
                let centered = (obs.expectation_pure(&u).unwrap() - means[oi]).abs();
                let mut p = centered;
                for h in 0..3 {
                    p *= centered;
                    sums[oi * 3 + h] += p;
                }
            }
        }
        for (oi, obs) in observables.iter().enumerate() {
            for h in 2..=4usize {
                let empirical = sums[oi * 3 + (h - 2)] / n as f64;
                let bound = central_moment_bound(obs, h).unwrap();
                tightest = tightest.max(empirical / bound);
                if empirical > bound {
                    violations += 1;
                }
            }
        }
    }
    verdict(
        3,
        violations == 0,
        &format!("{violations} ceiling violations over 90 cells (tightest ratio {tightest:.2e})"),
    );
    runtime(3, started, None);
}

/// Attack/defense reproduction: fidelity estimation of 0.9-overlap targets
/// from 10^4 shadow samples at d = 32, five repeats, with 1 and 62 targets.
/// At gamma = 0.02 the replacement attack must push the median of means off
/// by at least 0.1 while the truncated mean stays within 0.1, jointly in at
/// least 4/5 repeats; with no corruption the two estimators' pooled errors
/// must agree within a factor of two.
#[test]
fn acceptance_04_attack_defense_reproduction() {
    let started = Instant::now();
    for m in [1usize, 62] {
        let cfg = config(&format!(
            r#"{{"experiment": "fidelity", "n_qubits": 5, "n_copies": 10000,
                "m": {m}, "gamma_grid": [0.0, 0.005, 0.01, 0.015, 0.02],
                "estimators": [{{"tag": "median_of_means"}}, {{"tag": "truncated_mean"}}],
                "target_fidelity": 0.9, "repeats": 5, "master_seed": 404,
                "output_path": "unused.csv"}}"#
        ));
        let out = run_experiment(&cfg).unwrap();

        // joint split on the targeted observable at the largest corruption
        let seeds: Vec<u64> = {
            let mut s = Vec::new();
            for r in &out.rows {
                if !s.contains(&r.seed) {
                    s.push(r.seed);
                }
            }
            s
        };
        assert_eq!(seeds.len(), 5);
        let mut joint = 0usize;
        for &seed in &seeds {
            let mom = rows_at(&out.rows, 0.02, "median_of_means", Some(0))
                .find(|r| r.seed == seed)
                .unwrap()
                .abs_error;
            let trunc = rows_at(&out.rows, 0.02, "truncated_mean", Some(0))
                .find(|r| r.seed == seed)
                .unwrap()
                .abs_error;
            if mom >= 0.1 && trunc <= 0.1 {
                joint += 1;
            }
        }

        // clean-data parity pooled over repeats and observables
        let pooled = |tag: &str| {
            let v: Vec<f64> = rows_at(&out.rows, 0.0, tag, None)
                .map(|r| r.abs_error)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let a = pooled("median_of_means");
        let b = pooled("truncated_mean");
        let ratio = a.max(b) / a.min(b);

        let ok = joint >= 4 && ratio <= 2.0;
        verdict(
            4,
            ok,
            &format!(
                "m={m}: attacked split holds in {joint}/5 repeats (need >= 4), \
                 clean error ratio {ratio:.2} (mom {a:.4} vs trunc {b:.4}, need <= 2)"
            ),
        );
        // the --check evaluation must reach the same conclusion
        assert!(check_thresholds(&cfg, &out).passed);
    }
    runtime(4, started, Some(600.0));
}

/// Direct-measurement baseline: flipping one percent of a million copies
/// spread over ten observables moves the targeted estimate by gamma * m
/// (within [0.08, 0.12]) and leaves every other estimate within 0.02.
#[test]
fn acceptance_05_naive_baseline_attack() {
    let started = Instant::now();
    let cfg = config(
        r#"{"experiment": "naive_attack", "n_qubits": 5, "m": 10,
            "n_copies": 1000000, "gamma_grid": [0.0, 0.01], "repeats": 1,
            "master_seed": 505, "output_path": "unused.csv"}"#,
    );
    let out = run_experiment(&cfg).unwrap();
    let targeted = rows_at(&out.rows, 0.01, "direct", Some(0))
        .next()
        .unwrap()
        .abs_error;
    let rest_worst = rows_at(&out.rows, 0.01, "direct", None)
        .filter(|r| r.observable_index != 0)
        .map(|r| r.abs_error)
        .fold(0.0f64, f64::max);
    let clean_worst = rows_at(&out.rows, 0.0, "direct", None)
        .map(|r| r.abs_error)
        .fold(0.0f64, f64::max);
    let ok = (0.08..=0.12).contains(&targeted) && rest_worst <= 0.02 && clean_worst <= 0.02;
    verdict(
        5,
        ok,
        &format!(
            "targeted error {targeted:.4} in [0.08, 0.12], worst untargeted {rest_worst:.4} \
             and clean {clean_worst:.4} <= 0.02"
        ),
    );
    runtime(5, started, Some(60.0));
}

/// Truncated-mean robustness: unit-variance Laplace data, 10^4 samples, 5%
/// corruption by the worst of three adversaries (replace with +10, replace
/// with -10, inflate by 10x). The trimmed mean must stay within
/// 10 gamma ln(1/gamma) ~ 1.498 of the true mean in at least 95/100 seeds.
#[test]
fn acceptance_06_truncated_mean_robustness() {
    let started = Instant::now();
    let n = 10_000usize;
    let gamma = 0.05f64;
    let corrupt = (gamma * n as f64) as usize;
    let trim = 2.0 * gamma;
    let bound = 10.0 * gamma * (1.0 / gamma).ln();
    let b = 1.0 / 2.0f64.sqrt(); // Laplace scale with variance 2 b^2 = 1

    let mut good = 0usize;
    let mut worst_seen: f64 = 0.0;
    for seed in 0..100u64 {
        let mut rng = stream(606, &[seed]);
        let clean: Vec<f64> = (0..n)
            .map(|_| {
                let magnitude = -(1.0 - rng.gen::<f64>()).ln() * b;
                if rng.gen::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            })
            .collect();
        let mut worst = 0.0f64;
        for adversary in 0..3 {
            let mut data = clean.clone();
            match adversary {
                0 => data[..corrupt].fill(10.0),
                1 => data[..corrupt].fill(-10.0),
                _ => data[..corrupt].iter_mut().for_each(|x| *x *= 10.0),
            }
            let est = truncated_mean(&SampleBatch::new(data).unwrap(), trim).unwrap();
            worst = worst.max(est.abs());
        }
        worst_seen = worst_seen.max(worst);
        if worst <= bound {
            good += 1;
        }
    }
    verdict(
        6,
        good >= 95,
        &format!(
            "worst-of-3 error <= {bound:.4} in {good}/100 seeds (need >= 95; \
             largest error {worst_seen:.4})"
        ),
    );
    runtime(6, started, None);
}

/// Coupling indistinguishability: rewriting a million-fair-coin stream
/// toward a uniformly chosen biased alternative must realize the predicted
/// average total-variation fraction within five standard errors in every
/// seed, while a two-sample chi-square test between the rewritten stream
/// and a genuinely biased stream stays above p = 0.001 in at least 95/100.
#[test]
fn acceptance_07_coupling_indistinguishability() {
    let started = Instant::now();
    let cfg = config(
        r#"{"experiment": "coupling", "m": 5, "epsilon": 0.1,
            "n_copies": 1000000, "repeats": 100, "master_seed": 707,
            "output_path": "unused.csv"}"#,
    );
    let out = run_experiment(&cfg).unwrap();
    let entries = out.report["repeats"].as_array().unwrap();
    assert_eq!(entries.len(), 100);
    let mut within = 0usize;
    let mut quiet = 0usize;
    let mut worst_dev = 0.0f64;
    for e in entries {
        let realized = e["realized_fraction"].as_f64().unwrap();
        let predicted = e["predicted_fraction"].as_f64().unwrap();
        let se = e["standard_error"].as_f64().unwrap();
        assert!((predicted - 0.03).abs() < 1e-12, "1.5 eps / m = 0.03");
        let dev = (realized - predicted).abs() / se;
        worst_dev = worst_dev.max(dev);
        if dev <= 5.0 {
            within += 1;
        }
        if e["chi_square"]["p_value"].as_f64().unwrap() > 0.001 {
            quiet += 1;
        }
    }
    let ok = within == 100 && quiet >= 95;
    verdict(
        7,
        ok,
        &format!(
            "realized fraction within 5 SE in {within}/100 (worst {worst_dev:.2} SE), \
             chi-square p > 0.001 in {quiet}/100 (need >= 95)"
        ),
    );
    assert!(check_thresholds(&cfg, &out).passed);
    runtime(7, started, None);
}

/// Distinguishing-observable identity: on 1000 random mixed-state pairs the
/// optimal two-outcome observable's expectation gap must equal the trace
/// distance to 1e-9, with Hilbert-Schmidt norm at most sqrt(rank_i + rank_j).
#[test]
fn acceptance_08_distinguishing_observable_identity() {
    let started = Instant::now();
    let mut rng = stream(808, &[0]);
    let mut worst_gap = 0.0f64;
    let mut worst_norm_slack = f64::NEG_INFINITY;
    let mut violations = 0usize;
    for _ in 0..1000 {
        let d = rng.gen_range(2..=8usize);
        let r_cap = d.min(3);
        let r_i = rng.gen_range(1..=r_cap);
        let r_j = rng.gen_range(1..=r_cap);
        let rho_i = random_rank_r_state(d, r_i, &mut rng).unwrap();
        let rho_j = random_rank_r_state(d, r_j, &mut rng).unwrap();
        let obs = holevo_helstrom(&rho_i, &rho_j).unwrap();
        let gap = obs.expectation(&rho_i).unwrap() - obs.expectation(&rho_j).unwrap();
        let distance = trace_distance(&rho_i, &rho_j).unwrap();
        let identity_err = (gap - distance).abs();
        let norm_slack = obs.hs_norm() - ((r_i + r_j) as f64).sqrt();
        worst_gap = worst_gap.max(identity_err);
        worst_norm_slack = worst_norm_slack.max(norm_slack);
        if identity_err > 1e-9 || norm_slack > 1e-9 {
            violations += 1;
        }
    }
    verdict(
        8,
        violations == 0,
        &format!(
            "0 violations in 1000 pairs (worst identity error {worst_gap:.2e}, \
             worst norm slack {worst_norm_slack:.2e})"
        ),
    );
    runtime(8, started, None);
}

/// Tomography end to end: qubit pure states from 10^5 shadow samples, 100
/// seeds. Clean runs must land within trace distance 0.3 in at least 95
/// seeds; under a 2% replacement attack, in at least 90.
#[test]
fn acceptance_09_tomography_end_to_end() {
    let started = Instant::now();
    let cfg = config(
        r#"{"experiment": "tomography", "n_qubits": 1, "rank": 1,
            "epsilon": 0.3, "n_copies": 100000, "gamma_grid": [0.0, 0.02],
            "net_cap": 64, "repeats": 100, "master_seed": 909,
            "output_path": "unused.csv"}"#,
    );
    let out = run_experiment(&cfg).unwrap();
    let count_within = |gamma: f64| {
        rows_at(&out.rows, gamma, "yatracos", None)
            .filter(|r| r.abs_error <= 0.3)
            .count()
    };
    let clean = count_within(0.0);
    let attacked = count_within(0.02);
    let ok = clean >= 95 && attacked >= 90;
    verdict(
        9,
        ok,
        &format!(
            "trace error <= 0.3 in {clean}/100 clean seeds (need >= 95) and \
             {attacked}/100 attacked seeds (need >= 90)"
        ),
    );
    assert!(check_thresholds(&cfg, &out).passed);
    runtime(9, started, Some(900.0));
}

/// Determinism: the same config and master seed must produce byte-identical
/// CSV artifacts on every rerun, for every experiment kind exercised here.
#[test]
fn acceptance_10_byte_identical_reruns() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut all_identical = true;
    let mut detail = Vec::new();
    for (kind, extra) in [
        ("fidelity", r#""n_qubits": 2, "n_copies": 1000, "repeats": 2"#),
        (
            "naive_attack",
            r#""n_qubits": 2, "m": 4, "n_copies": 20000, "repeats": 1"#,
        ),
        ("coupling", r#""m": 3, "n_copies": 20000, "repeats": 2"#),
        (
            "tomography",
            r#""n_qubits": 1, "n_copies": 2000, "net_cap": 32, "repeats": 1"#,
        ),
        (
            "moment_check",
            r#""dim": 4, "n_copies": 20000, "m": 2, "repeats": 1"#,
        ),
    ] {
        let path = |run: usize| dir.path().join(format!("{kind}_{run}.csv"));
        let shas: Vec<String> = (0..2)
            .map(|run| {
                let cfg = config(&format!(
                    r#"{{"experiment": "{kind}", {extra}, "master_seed": 1010,
                        "output_path": {:?}}}"#,
                    path(run).to_str().unwrap()
                ));
                execute(&cfg).unwrap().artifacts.csv_sha256
            })
            .collect();
        let bytes_equal = std::fs::read(path(0)).unwrap() == std::fs::read(path(1)).unwrap();
        let identical = shas[0] == shas[1] && bytes_equal;
        all_identical &= identical;
        detail.push(format!(
            "{kind}: {}",
            if identical { "identical" } else { "DIVERGED" }
        ));
    }
    verdict(10, all_identical, &detail.join(", "));
    runtime(10, started, None);
}
