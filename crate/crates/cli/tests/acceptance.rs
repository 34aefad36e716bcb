//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::Instant;

use copas_core::diagnostics::{ks_standard_normal, variance};
use copas_core::model::CopasParams;
use copas_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seed shared by every simulation below.
const SEED: u64 = 20_200_601;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

// 1. Analytic per-study scores against central differences of the likelihood.
fn score_oracle() -> Verdict {
    // Central differences at steps H and H/2 combined by Richardson
    // extrapolation: truncation error O(H⁴), rounding O(ε/H).
    const H: f64 = 1e-3;
    const TOL: f64 = 1e-5;
    // Relative error is taken against max(|Sᵢ|, FLOOR) so studies sitting on
    // μ (Sᵢ ≈ 0) do not divide by zero.
    const FLOOR: f64 = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.random_range(5..=50);
        let ys: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.5)).collect();
        let ss: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let (g0, g1) = (rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0));
        let (mu, tau2) = (rng.random_range(-0.5..0.5), rng.random_range(0.0..0.3));
        let data = Dataset::from_slices(&ys, &ss).unwrap();
        let scores = score_rho_at_null(g0, g1, mu, tau2, &data).unwrap();
        for (i, &score) in scores.iter().enumerate() {
            // Three copies of study i: the likelihood is 3·lᵢ.
            let single = Dataset::from_slices(&[ys[i]; 3], &[ss[i]; 3]).unwrap();
            let l = |rho| {
                let p = CopasParams {
                    mu,
                    tau2,
                    rho,
                    gamma0: g0,
                    gamma1: g1,
                };
                copas_loglik(&p, &single).unwrap() / 3.0
            };
            let d = |h: f64| (l(h) - l(-h)) / (2.0 * h);
            let fd = (4.0 * d(H / 2.0) - d(H)) / 3.0;
            worst = worst.max((score - fd).abs() / score.abs().max(FLOOR));
            checked += 1;
        }
    }
    verdict(
        worst < TOL,
        format!("{checked} studies over 100 fixtures, max relative error {worst:.2e} (< {TOL:e})"),
    )
}

// 2. Z at a fixed selection point is standard normal under the null.
fn standardization() -> Verdict {
    let cfg = SimConfig {
        n: 200,
        seed: SEED,
        ..SimConfig::default()
    };
    let zs: Vec<f64> = (0..2000)
        .map(|r| {
            let g = sim::generate(&cfg, &mut rng::stream(SEED, r)).unwrap();
            let fit = fit_null(&g.data).unwrap();
            z_at(&g.data, -1.0, 0.65, &fit).unwrap()
        })
        .collect();
    let ks = ks_standard_normal(&zs);
    let v = variance(&zs);
    verdict(
        ks.p_value > 0.01 && (0.9..=1.1).contains(&v),
        format!(
            "2000 replicates, KS p = {:.3} (> 0.01), variance {v:.4} in [0.9, 1.1]",
            ks.p_value
        ),
    )
}

fn study(config: SimConfig, reps: usize, tests: Vec<TestKind>) -> PowerReport {
    run_power_study(&PowerStudy {
        config,
        n_replicates: reps,
        tests,
        alpha_levels: vec![0.05, 0.10],
        b_boot: 200,
        grid_points: 9,
        ..PowerStudy::default()
    })
    .expect("power study runs")
}

const BOUNDS_05: (f64, f64) = (0.032, 0.068);
const BOUNDS_10: (f64, f64) = (0.072, 0.128);

fn within(r: f64, (lo, hi): (f64, f64)) -> bool {
    (lo..=hi).contains(&r)
}

fn null_calibration(model: SelectionModel) -> (bool, String) {
    let config = SimConfig {
        model,
        rho: 0.0,
        seed: SEED,
        ..SimConfig::default()
    };
    let r = study(config, 1000, vec![TestKind::ScoreTest]);
    let (a, b) = (
        r.rate(TestKind::ScoreTest, 0.05).unwrap(),
        r.rate(TestKind::ScoreTest, 0.10).unwrap(),
    );
    (
        within(a, BOUNDS_05) && within(b, BOUNDS_10),
        format!("{model:?} rho=0: {a:.3} at 0.05, {b:.3} at 0.10"),
    )
}

// 3. Type-I error of the bootstrap-calibrated test.
fn type_one() -> Verdict {
    let (pass, detail) = null_calibration(SelectionModel::Copas);
    verdict(
        pass,
        format!("1000 replicates, {detail} (bounds [0.032, 0.068], [0.072, 0.128])"),
    )
}

// 4 and 5. Power at rho = 0.6 and ordering against the comparators.
fn power_and_ordering() -> (Verdict, Verdict) {
    let config = SimConfig {
        rho: 0.6,
        seed: SEED,
        ..SimConfig::default()
    };
    let r = study(config, 300, TestKind::ALL.to_vec());
    let rate = |t| r.rate(t, 0.05).unwrap();
    let score = rate(TestKind::ScoreTest);
    let others = [TestKind::Egger, TestKind::TrimFill, TestKind::CopasNaive];
    let listing: Vec<String> = others
        .iter()
        .map(|&t| format!("{t} {:.3}", rate(t)))
        .collect();
    (
        verdict(
            score >= 0.80,
            format!("300 replicates, power {score:.3} at 0.05 (>= 0.80)"),
        ),
        verdict(
            others.iter().all(|&t| score > rate(t)),
            format!("score test {score:.3} > {}", listing.join(", ")),
        ),
    )
}

// 6. Null calibration and power ordering under the misspecified generators.
fn misspecification() -> Verdict {
    let mut pass = true;
    let mut details = Vec::new();
    for model in [SelectionModel::AltInvS2, SelectionModel::AltZscore] {
        let (ok, d) = null_calibration(model);
        pass &= ok;
        details.push(d);
        let config = SimConfig {
            model,
            rho: 0.6,
            n: 100,
            c: 0.5,
            seed: SEED,
            ..SimConfig::default()
        };
        let r = study(
            config,
            300,
            vec![TestKind::ScoreTest, TestKind::Egger, TestKind::TrimFill],
        );
        let rate = |t| r.rate(t, 0.05).unwrap();
        let (s, e, tf) = (
            rate(TestKind::ScoreTest),
            rate(TestKind::Egger),
            rate(TestKind::TrimFill),
        );
        pass &= s >= e && s >= tf;
        details.push(format!(
            "{model:?} rho=0.6 n=100: score {s:.3}, egger {e:.3}, trim_fill {tf:.3}"
        ));
    }
    verdict(pass, details.join("; "))
}

// 7. Null MLE against the closed form for equal standard errors.
fn null_mle_oracle() -> Verdict {
    const TOL: f64 = 1e-8;
    let cases: [(&[f64], f64); 4] = [
        (&[0.1, 0.5, -0.3, 0.9, 0.2, 1.4, -0.6, 0.35], 0.2),
        (&[0.1, 0.12, 0.09, 0.11, 0.1], 0.3),
        (&[2.0, -1.0, 0.5, 3.5, 1.2, 0.0], 0.5),
        (&[-0.4, 0.3, 0.7], 0.05),
    ];
    let mut worst = 0.0f64;
    for (ys, s) in cases {
        let n = ys.len() as f64;
        let ybar = ys.iter().sum::<f64>() / n;
        let tau2 = (ys.iter().map(|y| (y - ybar).powi(2)).sum::<f64>() / n - s * s).max(0.0);
        let fit = fit_null(&Dataset::from_slices(ys, &vec![s; ys.len()]).unwrap()).unwrap();
        worst = worst
            .max((fit.mu_hat - ybar).abs())
            .max((fit.tau2_hat - tau2).abs());
    }
    verdict(
        worst < TOL,
        format!("4 datasets, max abs error {worst:.2e} (< {TOL:e})"),
    )
}

// 8. Comparators on constructions with known answers.
fn comparator_oracles() -> Verdict {
    const TOL: f64 = 1e-10;
    let ss = [0.1, 0.2, 0.35, 0.5, 0.8, 1.3];
    let mut errors = Vec::new();
    // Egger: y/s = a + b/s exactly, i.e. y = a·s + b.
    for (a, b) in [(2.0, 3.0), (-0.7, 0.25), (0.0, 1.0)] {
        let ys: Vec<f64> = ss.iter().map(|s| a * s + b).collect();
        let r = egger_test(&Dataset::from_slices(&ys, &ss).unwrap()).unwrap();
        errors.push(
            (r.extras["intercept"] - a)
                .abs()
                .max((r.extras["slope"] - b).abs()),
        );
    }
    // Weighted regression of y on s: y = α + β·s exactly.
    for (alpha, beta) in [(0.4, 1.5), (-1.0, -0.3), (0.2, 0.0)] {
        let ys: Vec<f64> = ss.iter().map(|s| alpha + beta * s).collect();
        let r = copas_naive_test(&Dataset::from_slices(&ys, &ss).unwrap()).unwrap();
        errors.push(
            (r.extras["intercept"] - alpha)
                .abs()
                .max((r.extras["slope"] - beta).abs()),
        );
    }
    let regression_err = errors.iter().cloned().fold(0.0, f64::max);

    // Trim-and-fill: a mirror-symmetric funnel, then the same funnel with
    // its most extreme left-hand studies deleted.
    let pairs = [
        (0.05, 0.02),
        (0.1, 0.08),
        (0.2, 0.2),
        (0.3, 0.35),
        (0.4, 0.5),
        (0.5, 0.7),
    ];
    let mut parent: Vec<(f64, f64)> = vec![(0.0, 0.05)];
    for &(s, o) in &pairs {
        parent.push((o, s));
        parent.push((-o, s));
    }
    parent.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tf = |studies: &[(f64, f64)]| {
        let ys: Vec<f64> = studies.iter().map(|p| p.0).collect();
        let ss: Vec<f64> = studies.iter().map(|p| p.1).collect();
        let data = Dataset::from_slices(&ys, &ss).unwrap();
        trim_and_fill(&data, Estimator::L0, Side::Auto)
            .unwrap()
            .extras["k0"]
    };
    let k_sym = tf(&parent);
    let mut tf_ok = k_sym == 0.0;
    let mut k_del = Vec::new();
    for deleted in [2usize, 3] {
        let k = tf(&parent[deleted..]);
        tf_ok &= (k - deleted as f64).abs() <= 1.0;
        k_del.push(format!("{deleted} deleted -> k0 {k}"));
    }
    verdict(
        regression_err < TOL && tf_ok,
        format!(
            "regression max error {regression_err:.2e} (< {TOL:e}); symmetric k0 {k_sym}; {}",
            k_del.join(", ")
        ),
    )
}

// 9. Byte-identical CLI output across reruns and thread counts.
fn determinism() -> Verdict {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let biased = fixtures.join("biased_rho08.csv");
    let ten = fixtures.join("ten_studies.csv");
    let commands: Vec<Vec<String>> = vec![
        vec!["test".into(), biased.display().to_string()],
        vec![
            "test".into(),
            ten.display().to_string(),
            "--seed".into(),
            "7".into(),
        ],
        vec![
            "sensitivity".into(),
            ten.display().to_string(),
            "--sweep".into(),
        ],
        vec![
            "simulate".into(),
            "--rho".into(),
            "0.5".into(),
            "--replicates".into(),
            "40".into(),
            "--b-boot".into(),
            "50".into(),
        ],
    ];
    let mut mismatches = Vec::new();
    for args in &commands {
        let outputs: Vec<Vec<u8>> = ["1", "4", "1", "3"]
            .iter()
            .map(|threads| {
                let out = Command::new(env!("CARGO_BIN_EXE_copas-bias"))
                    .args(args)
                    .args(["--threads", threads])
                    .output()
                    .expect("binary runs");
                assert!(
                    out.status.success(),
                    "{}",
                    String::from_utf8_lossy(&out.stderr)
                );
                out.stdout
            })
            .collect();
        if outputs.iter().any(|o| o != &outputs[0]) {
            mismatches.push(args[0].clone());
        }
    }
    verdict(
        mismatches.is_empty(),
        format!(
            "{} commands x threads 1/4/1/3, mismatches: {:?}",
            commands.len(),
            mismatches
        ),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, name: &str, v: Verdict, secs: f64| {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        if !v.pass {
            failed += 1;
        }
        println!("criterion {id} [{tag}] {name}: {} ({secs:.1}s)", v.detail);
    };
    let timed = |f: &dyn Fn() -> Verdict| {
        let t = Instant::now();
        let v = f();
        (v, t.elapsed().as_secs_f64())
    };

    let (v, t) = timed(&score_oracle);
    report(1, "score oracle", v, t);
    let (v, t) = timed(&standardization);
    report(2, "standardization", v, t);
    let (v, t) = timed(&type_one);
    report(3, "type-I calibration", v, t);
    let start = Instant::now();
    let (power, ordering) = power_and_ordering();
    let t = start.elapsed().as_secs_f64();
    report(4, "power at rho=0.6", power, t);
    report(5, "comparator ordering", ordering, t);
    let (v, t) = timed(&misspecification);
    report(6, "misspecification robustness", v, t);
    let (v, t) = timed(&null_mle_oracle);
    report(7, "null MLE oracle", v, t);
    let (v, t) = timed(&comparator_oracles);
    report(8, "comparator oracles", v, t);
    let (v, t) = timed(&determinism);
    report(9, "determinism", v, t);

    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 9 criteria passed");
}
