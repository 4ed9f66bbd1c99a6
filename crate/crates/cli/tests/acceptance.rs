//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.
//!
//! Run with `cargo test -p forest-uq-cli --test acceptance`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use forest_uq::dataset::{load_csv, synthetic, LabelColumn};
use forest_uq::entropy::{entropy_uncertainty, CLAMP_TOLERANCE};
use forest_uq::evaluate::{curve_from_scores, run_experiment, score_test_set, Criterion, ExperimentConfig};
use forest_uq::likelihood::{rl_uncertainty, support_degrees, LeafCounts, DEFAULT_TOLERANCE};
use forest_uq::{ClassDistribution, Dataset, Forest, ForestConfig, RlCache};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use tempfile::TempDir;

type Check = Result<String, String>;
type Criteria<'a> = Vec<(&'static str, Box<dyn Fn() -> Check + 'a>)>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:.2?}, limit {limit:?}"))
}

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_forest-uq"));
    cmd.env_remove("FOREST_UQ_OUT_DIR");
    cmd
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let o = bin().args(args).output().map_err(|e| e.to_string())?;
    ensure(o.status.success(), || {
        format!(
            "`forest-uq {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&o.stderr)
        )
    })
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

// 1. Entropy decomposition on random ensembles.
fn entropy_oracle() -> Check {
    let start = Instant::now();
    let mut rng = StdRng::seed_from_u64(11);
    let random_dist = |rng: &mut StdRng, k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-12).collect();
        let sum: f64 = raw.iter().sum();
        ClassDistribution::new(raw.iter().map(|v| v / sum).collect()).unwrap()
    };
    let mut worst_gap = f64::INFINITY;
    let mut worst_identical = 0.0f64;
    for trial in 0..10_000 {
        let k = if rng.random_bool(0.5) { 2 } else { 3 };
        let m = rng.random_range(1..=50);
        let members: Vec<ClassDistribution> = (0..m).map(|_| random_dist(&mut rng, k)).collect();
        let u = entropy_uncertainty(&members).map_err(|e| e.to_string())?;
        let bound = (k as f64).log2();
        worst_gap = worst_gap.min(u.total - u.aleatoric);
        ensure(u.total >= u.aleatoric - 1e-12, || {
            format!("trial {trial}: u_t < u_a: {u:?}")
        })?;
        ensure([u.total, u.aleatoric, u.epistemic].iter().all(|&v| v <= bound), || {
            format!("trial {trial}: value above log2 {k}: {u:?}")
        })?;

        let identical = vec![members[0].clone(); m];
        let v = entropy_uncertainty(&identical).map_err(|e| e.to_string())?;
        worst_identical = worst_identical.max(v.epistemic);
        ensure(v.epistemic <= 1e-12, || {
            format!("trial {trial}: identical members give u_e = {}", v.epistemic)
        })?;
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "10000 ensembles, min(u_t - u_a) = {worst_gap:.3e}, max identical u_e = {worst_identical:.1e} (clamp {CLAMP_TOLERANCE:e}), {:.2?}",
        start.elapsed()
    ))
}

/// Brute-force supports for every `(n, p)` with `n + p <= max_total` on the
/// grid `θ = i * 1e-6`, in linear space. Loops over `θ` outermost so the
/// powers of `θ` and `1 - θ` are computed once per grid point.
fn brute_force_supports(max_total: usize) -> Vec<((u64, u64), (f64, f64))> {
    const STEPS: usize = 1_000_000;
    let pairs: Vec<(usize, usize)> = (0..=max_total).flat_map(|t| (0..=t).map(move |n| (n, t - n))).collect();
    let denom: Vec<f64> = pairs
        .iter()
        .map(|&(n, p)| {
            if n + p == 0 {
                return 1.0;
            }
            let ml = n as f64 / (n + p) as f64;
            ml.powi(n as i32) * (1.0 - ml).powi(p as i32)
        })
        .collect();
    let mut best = vec![(f64::MIN, f64::MIN); pairs.len()];
    let mut a = vec![1.0; max_total + 1];
    let mut b = vec![1.0; max_total + 1];
    for i in 0..=STEPS {
        let t = i as f64 / STEPS as f64;
        for k in 1..=max_total {
            a[k] = a[k - 1] * t;
            b[k] = b[k - 1] * (1.0 - t);
        }
        let margin = 2.0 * t - 1.0;
        for (j, &(n, p)) in pairs.iter().enumerate() {
            let lik = a[n] * b[p] / denom[j];
            let entry = &mut best[j];
            if margin >= 0.0 {
                entry.0 = entry.0.max(lik.min(margin));
            }
            if margin <= 0.0 {
                entry.1 = entry.1.max(lik.min(-margin));
            }
        }
    }
    pairs.into_iter().map(|(n, p)| (n as u64, p as u64)).zip(best).collect()
}

// 2. Relative-likelihood supports against brute force, plus symmetry and
// monotonicity in the sample size.
fn likelihood_oracle() -> Check {
    let start = Instant::now();
    let tol = DEFAULT_TOLERANCE;
    let mut max_err = 0.0f64;
    for ((n, p), (pos, neg)) in brute_force_supports(50) {
        let s = support_degrees(LeafCounts::new(n, p), tol).map_err(|e| e.to_string())?;
        let err = (s.positive - pos).abs().max((s.negative - neg).abs());
        max_err = max_err.max(err);
        ensure(err <= 1e-4, || {
            format!("({n},{p}): solver {s:?}, brute force ({pos}, {neg})")
        })?;
    }

    let u = |n: u64, p: u64| rl_uncertainty(LeafCounts::new(n, p), tol).unwrap();
    let mut max_asym = 0.0f64;
    for total in 0..=50u64 {
        for n in 0..=total {
            let d = (u(n, total - n).epistemic - u(total - n, n).epistemic).abs();
            max_asym = max_asym.max(d);
            ensure(d <= 1e-9, || format!("u_e({n},{}) asymmetric by {d:e}", total - n))?;
        }
    }

    let mut sequences = 0;
    for total in 1..=50u64 {
        for n in 0..=total {
            let p = total - n;
            let mut prev = u(n, p);
            for k in 2..=10 {
                let cur = u(k * n, k * p);
                ensure(cur.epistemic <= prev.epistemic, || {
                    format!(
                        "u_e rises from k={} to k={k} at ({n},{p}): {} -> {}",
                        k - 1,
                        prev.epistemic,
                        cur.epistemic
                    )
                })?;
                if n == p {
                    ensure(cur.aleatoric >= prev.aleatoric, || {
                        format!(
                            "u_a falls from k={} to k={k} at ({n},{n}): {} -> {}",
                            k - 1,
                            prev.aleatoric,
                            cur.aleatoric
                        )
                    })?;
                }
                prev = cur;
            }
            sequences += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!(
        "1326 pairs, max |solver - brute| = {max_err:.2e}, max asymmetry = {max_asym:.1e}, {sequences} monotone sequences, {:.2?}",
        start.elapsed()
    ))
}

// 3. Closed-form spot values.
fn spot_values() -> Check {
    let zero = rl_uncertainty(LeafCounts::new(0, 0), DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
    ensure(
        (zero.epistemic - 1.0).abs() <= 1e-6 && zero.aleatoric.abs() <= 1e-6,
        || format!("(0,0) -> {zero:?}"),
    )?;
    let one = rl_uncertainty(LeafCounts::new(1, 0), DEFAULT_TOLERANCE).map_err(|e| e.to_string())?;
    ensure(
        (one.epistemic - 1.0 / 3.0).abs() <= 1e-6 && one.aleatoric.abs() <= 1e-6,
        || format!("(1,0) -> {one:?}"),
    )?;
    Ok(format!(
        "(0,0) -> ({}, {}), (1,0) -> ({:.12}, {})",
        zero.epistemic, zero.aleatoric, one.epistemic, one.aleatoric
    ))
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut order: Vec<usize> = (0..v.len()).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &o in &order[i..=j] {
                r[o] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn synthetic_config() -> ForestConfig {
    ForestConfig {
        n_trees: 50,
        max_depth: 10,
        seed: 2024,
        ..ForestConfig::default()
    }
}

// 4. Accuracy-rejection protocol on the synthetic benchmark.
fn arc_protocol() -> Check {
    let start = Instant::now();
    let ds = synthetic::two_gaussians(1000, 0.2, 2024);
    let config = ExperimentConfig {
        forest: synthetic_config(),
        repetitions: 100,
        ..ExperimentConfig::default()
    };
    let result = run_experiment(&ds, &config).map_err(|e| e.to_string())?;
    let random = result.curve(Criterion::Random).ok_or("no random curve")?;
    let se = random.standard_error();
    let mut summary = Vec::new();
    for c in [
        Criterion::AleatoricEntropy,
        Criterion::EpistemicEntropy,
        Criterion::AleatoricLikelihood,
        Criterion::EpistemicLikelihood,
    ] {
        let curve = result.curve(c).ok_or_else(|| format!("no {c} curve"))?;
        let head: Vec<usize> = (0..curve.fractions.len())
            .filter(|&i| curve.fractions[i] <= 0.5 + 1e-12)
            .collect();
        for &i in &head {
            let floor = random.mean[i] - 2.0 * se[i];
            ensure(curve.mean[i] >= floor, || {
                format!(
                    "{c} at r={}: {:.4} below random {:.4} - 2 SE",
                    curve.fractions[i], curve.mean[i], random.mean[i]
                )
            })?;
        }
        let r: Vec<f64> = head.iter().map(|&i| curve.fractions[i]).collect();
        let acc: Vec<f64> = head.iter().map(|&i| curve.mean[i]).collect();
        let rho = spearman(&r, &acc);
        ensure(rho > 0.8, || format!("{c}: Spearman {rho:.3} <= 0.8"))?;
        summary.push(format!("{c} rho={rho:.3} acc@0.5={:.3}", acc[acc.len() - 1]));
    }
    within(start.elapsed(), Duration::from_secs(300))?;
    Ok(format!(
        "{}; random acc@0={:.3}, {:.2?}",
        summary.join(", "),
        random.mean[0],
        start.elapsed()
    ))
}

// 5. Rejecting by the ground-truth error indicator.
fn oracle_criterion() -> Check {
    let ds = synthetic::two_gaussians(1000, 0.2, 5);
    let split = ds.split(0.7, 5, false).map_err(|e| e.to_string())?;
    let forest = Forest::fit(&split.train, &synthetic_config()).map_err(|e| e.to_string())?;
    let records = score_test_set(&forest, &split.test, &RlCache::default()).map_err(|e| e.to_string())?;
    let correct: Vec<bool> = records.iter().map(|r| r.is_correct()).collect();
    let scores: Vec<f64> = correct.iter().map(|&c| if c { 0.0 } else { 1.0 }).collect();
    let n = correct.len();
    let errors = correct.iter().filter(|&&c| !c).count();
    let error_rate = errors as f64 / n as f64;
    ensure(errors > 0, || "forest made no test errors".into())?;
    for step in [0.02, 0.005, 0.001] {
        for (r, acc) in curve_from_scores(&correct, &scores, step).map_err(|e| e.to_string())? {
            let rejected = (r * n as f64 + 1e-9).floor() as usize;
            let expect_perfect = rejected >= errors;
            ensure((acc == 1.0) == expect_perfect, || {
                format!("step {step}, r={r}: accuracy {acc} with error rate {error_rate:.4}")
            })?;
            if r >= error_rate {
                ensure(acc == 1.0, || {
                    format!("step {step}, r={r} >= {error_rate:.4} but accuracy {acc}")
                })?;
            }
        }
    }
    Ok(format!(
        "n_test={n}, error rate {error_rate:.4}, accuracy 1.0 exactly from the first r >= error rate"
    ))
}

// 6. Byte-identical experiment outputs and lossless model files.
fn determinism(dir: &TempDir) -> Check {
    let data = dir.path().join("det.csv");
    synthetic::two_gaussians(300, 0.2, 9)
        .save_csv(&data)
        .map_err(|e| e.to_string())?;
    let outputs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("curves{i}.csv"))).collect();
    for out in &outputs {
        run_cli(&[
            "experiment",
            "--data",
            path_str(&data),
            "--reps",
            "20",
            "--seed",
            "7",
            "--out",
            path_str(out),
        ])?;
    }
    let (a, b) = (
        fs::read(&outputs[0]).map_err(|e| e.to_string())?,
        fs::read(&outputs[1]).map_err(|e| e.to_string())?,
    );
    ensure(!a.is_empty() && a == b, || "experiment CSVs differ".into())?;

    let model = dir.path().join("det.json");
    run_cli(&[
        "train",
        "--data",
        path_str(&data),
        "--seed",
        "3",
        "--out",
        path_str(&model),
    ])?;
    let ds = load_csv(&data, &LabelColumn::Last).map_err(|e| e.to_string())?;
    let fitted = Forest::fit(
        &ds,
        &ForestConfig {
            seed: 3,
            ..ForestConfig::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let loaded = Forest::load(&model).map_err(|e| e.to_string())?;
    let resaved = dir.path().join("det2.json");
    loaded.save(&resaved).map_err(|e| e.to_string())?;
    let reloaded = Forest::load(&resaved).map_err(|e| e.to_string())?;

    let mut rng = StdRng::seed_from_u64(6);
    for q in 0..1000 {
        let x = [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)];
        let want = fitted.predict_proba(&x).map_err(|e| e.to_string())?;
        for (name, f) in [("loaded", &loaded), ("reloaded", &reloaded)] {
            let got = f.predict_proba(&x).map_err(|e| e.to_string())?;
            ensure(got == want && f.predict(&x).ok() == fitted.predict(&x).ok(), || {
                format!("query {q}: {name} model predicts {got:?}, fitted {want:?}")
            })?;
        }
    }
    ensure(fs::read(&model).ok() == fs::read(&resaved).ok(), || {
        "re-saved model differs".into()
    })?;
    Ok(format!(
        "{} byte CSVs identical; 1000 queries identical after save/load",
        a.len()
    ))
}

/// Diabetes-layout data: 768 rows, 8 non-negative numeric features and a
/// 0/1 label drawn from a logistic model.
fn diabetes_like(path: &Path) -> Result<(), String> {
    let mut rng = StdRng::seed_from_u64(768);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let scales: [f64; 8] = [3.0, 30.0, 12.0, 10.0, 100.0, 7.0, 0.3, 11.0];
    let means: [f64; 8] = [4.0, 120.0, 70.0, 20.0, 80.0, 32.0, 0.5, 33.0];
    let weights: [f64; 8] = [0.4, 1.1, -0.1, 0.05, -0.1, 0.7, 0.3, 0.2];
    let rows: Vec<Vec<f64>> = (0..768)
        .map(|_| {
            means
                .iter()
                .zip(&scales)
                .map(|(m, s)| (m + s * unit.sample(&mut rng)).max(0.0))
                .collect()
        })
        .collect();
    let labels: Vec<usize> = rows
        .iter()
        .map(|row| {
            let z: f64 = row
                .iter()
                .zip(means.iter().zip(&scales))
                .zip(&weights)
                .map(|((v, (m, s)), w)| w * (v - m) / s)
                .sum::<f64>()
                - 0.6;
            usize::from(rng.random_bool(1.0 / (1.0 + (-z).exp())))
        })
        .collect();
    let names = [
        "pregnancies",
        "glucose",
        "blood_pressure",
        "skin",
        "insulin",
        "bmi",
        "pedigree",
        "age",
    ];
    Dataset::new(rows, labels, 2)
        .and_then(|d| d.with_feature_names(names.iter().map(|s| s.to_string()).collect()))
        .and_then(|d| d.save_csv(path))
        .map_err(|e| e.to_string())
}

// 7. End-to-end CLI run with default settings on a binary CSV.
fn smoke(dir: &TempDir) -> Check {
    let start = Instant::now();
    let data = match std::env::var_os("FOREST_UQ_SMOKE_CSV") {
        Some(p) => PathBuf::from(p),
        None => {
            let p = dir.path().join("diabetes_like.csv");
            diabetes_like(&p)?;
            p
        }
    };
    let model = dir.path().join("smoke.json");
    let curves = dir.path().join("smoke_curves.csv");
    let table = dir.path().join("smoke_uncertainty.csv");
    run_cli(&["train", "--data", path_str(&data), "--out", path_str(&model)])?;
    // The query file is the training file; drop its last (label) column.
    let n_cols = fs::read_to_string(&data)
        .map_err(|e| e.to_string())?
        .lines()
        .next()
        .unwrap_or("")
        .split(',')
        .count();
    let label_col = n_cols.saturating_sub(1).to_string();
    run_cli(&[
        "uncertainty",
        "--model",
        path_str(&model),
        "--data",
        path_str(&data),
        "--label-col",
        &label_col,
        "--out",
        path_str(&table),
    ])?;
    run_cli(&[
        "experiment",
        "--data",
        path_str(&data),
        "--plot",
        "--out",
        path_str(&curves),
    ])?;
    within(start.elapsed(), Duration::from_secs(120))?;

    let text = fs::read_to_string(&curves).map_err(|e| e.to_string())?;
    for c in ["au_ent", "eu_ent", "au_rl", "eu_rl"] {
        let points = text.lines().filter(|l| l.starts_with(&format!("{c},"))).count();
        ensure(points == 50, || format!("{c}: {points} curve points"))?;
        ensure(dir.path().join(format!("smoke_curves_{c}.svg")).exists(), || {
            format!("{c}: no plot")
        })?;
    }
    ensure(text.lines().skip(1).all(|l| l.ends_with(",100")), || {
        "not 100 repetitions".into()
    })?;
    Ok(format!(
        "{}: train, uncertainty, 100-repetition experiment in {:.2?}",
        data.display(),
        start.elapsed()
    ))
}

fn main() -> ExitCode {
    let dir = TempDir::new().expect("temp dir");
    let criteria: Criteria = vec![
        ("1 entropy oracle", Box::new(entropy_oracle)),
        ("2 relative-likelihood oracle", Box::new(likelihood_oracle)),
        ("3 closed-form spot values", Box::new(spot_values)),
        ("4 accuracy-rejection protocol", Box::new(arc_protocol)),
        ("5 oracle-criterion self-test", Box::new(oracle_criterion)),
        ("6 determinism", Box::new(|| determinism(&dir))),
        ("7 smoke pipeline", Box::new(|| smoke(&dir))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
