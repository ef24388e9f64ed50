//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! required criterion fails. Criterion 10 needs the external survey files and
//! is reported but never gates (set `HHLINK_SHIW_DIR` to run it).

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use hhlink::assignment::assign;
use hhlink::baseline::{fs_em_fit, EmOptions, Pattern};
use hhlink::data::{
    generate_synthetic, load_truth, load_wave, AttributeSchema, Feature, FeatureKind, Household,
    Individual, MissingPolicy, SyntheticConfig, Value, Wave,
};
use hhlink::distance::{all_pairs_hausdorff, hausdorff, FeatureWeights};
use hhlink::evaluation::{
    compute_metrics, evaluate_fs, evaluate_hhlink, external_validation, split, ConfusionCounts,
    Scope, WavePair,
};
use hhlink::household::{HouseholdTrainingSet, PairSampling};
use hhlink::individual::{fit_ridge, log_grid, LabeledPairs};
use hhlink::pipeline::{prepare, run_fs, run_hhlink, train_hhlink, FsConfig, HhlinkConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------------------
// 1. Assignment against exhaustive enumeration

/// Best total over all partial one-to-one pairings restricted to allowed
/// cells, each pairing summed in row order.
fn enumerate_best(q: &[f64], m: usize, n: usize, allowed: &dyn Fn(f64) -> bool) -> f64 {
    fn go(
        row: usize,
        used: &mut Vec<bool>,
        acc: f64,
        q: &[f64],
        m: usize,
        n: usize,
        allowed: &dyn Fn(f64) -> bool,
        best: &mut f64,
    ) {
        if row == m {
            if acc > *best {
                *best = acc;
            }
            return;
        }
        go(row + 1, used, acc, q, m, n, allowed, best);
        for col in 0..n {
            let x = q[row * n + col];
            if !used[col] && allowed(x) {
                used[col] = true;
                go(row + 1, used, acc + x, q, m, n, allowed, best);
                used[col] = false;
            }
        }
    }
    let mut best = 0.0;
    go(0, &mut vec![false; n], 0.0, q, m, n, allowed, &mut best);
    best
}

fn criterion_assignment() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for case in 0..500 {
        let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        // every other case draws from a coarse grid so ties and zeros occur
        let q: Vec<f64> = (0..m * n)
            .map(|_| {
                if case % 2 == 0 {
                    rng.gen::<f64>()
                } else {
                    rng.gen_range(0..=8) as f64 / 8.0
                }
            })
            .collect();
        let floor = q.iter().sum::<f64>() / q.len() as f64;
        let expected = enumerate_best(&q, m, n, &|x| x >= floor && x > 0.0);
        let got = assign(&q, m, n).unwrap();
        let rows: BTreeSet<usize> = got.pairs.iter().map(|p| p.0).collect();
        let cols: BTreeSet<usize> = got.pairs.iter().map(|p| p.1).collect();
        let feasible = rows.len() == got.pairs.len()
            && cols.len() == got.pairs.len()
            && got
                .pairs
                .iter()
                .all(|&(i, j)| q[i * n + j] >= floor && q[i * n + j] > 0.0);
        if got.objective != expected || !feasible {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 10.0,
        format!("500 cases, {mismatches} mismatches, {secs:.2} s"),
    )
}

// ---------------------------------------------------------------------------
// 2. Hausdorff against the literal max-min formula

fn oracle_value_distance(a: &Value, b: &Value, kind: FeatureKind, scale: f64) -> f64 {
    let missing = |v: &Value| matches!(v, Value::Missing | Value::MissingAtRandom);
    if missing(a) || missing(b) {
        return 1.0;
    }
    match (kind, a, b) {
        (FeatureKind::Year, Value::Year(x), Value::Year(y)) => f64::from((x - y).abs()) / scale,
        _ => f64::from(u8::from(a != b)),
    }
}

fn oracle_hausdorff(
    a: &Household,
    b: &Household,
    beta: &[f64],
    schema: &AttributeSchema,
    scale: f64,
) -> f64 {
    let d: Vec<Vec<f64>> = a
        .members
        .iter()
        .map(|x| {
            b.members
                .iter()
                .map(|y| {
                    (0..schema.len())
                        .map(|k| {
                            beta[k]
                                * oracle_value_distance(
                                    &x.values[k],
                                    &y.values[k],
                                    schema.kind(k),
                                    scale,
                                )
                        })
                        .sum()
                })
                .collect()
        })
        .collect();
    let forward = d
        .iter()
        .map(|row| row.iter().cloned().fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    let backward = (0..b.members.len())
        .map(|j| d.iter().map(|row| row[j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max);
    forward.max(backward)
}

fn random_person(rng: &mut ChaCha8Rng, id: String, hh: &str) -> Individual {
    let schema = AttributeSchema::shiw_default();
    let values = (0..schema.len())
        .map(|k| {
            if rng.gen_bool(0.1) {
                return Value::MissingAtRandom;
            }
            match schema.kind(k) {
                FeatureKind::Year => Value::Year(rng.gen_range(1930..=2014)),
                FeatureKind::Categorical => Value::code(&rng.gen_range(1..=3).to_string()),
            }
        })
        .collect();
    Individual::new(id, hh, values)
}

fn random_household(rng: &mut ChaCha8Rng, id: &str) -> Household {
    let size = rng.gen_range(1..=6);
    let members = (0..size)
        .map(|i| random_person(rng, format!("{id}-{i}"), id))
        .collect();
    Household::new(id, members).unwrap()
}

fn criterion_hausdorff() -> Outcome {
    let schema = AttributeSchema::shiw_default();
    assert_eq!(schema.len(), 8);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut direct_bad = 0;
    let mut table_bad = 0;
    for case in 0..500 {
        let a = random_household(&mut rng, &format!("A{case}"));
        let b = random_household(&mut rng, &format!("B{case}"));
        let beta: Vec<f64> = (0..8)
            .map(|_| {
                if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(0.0..3.0)
                }
            })
            .collect();
        let scale = if case % 2 == 0 { 50.0 } else { 17.0 };
        let w = FeatureWeights::new(beta.clone(), scale).unwrap();
        let expected = oracle_hausdorff(&a, &b, &beta, &schema, scale);
        if hausdorff(&a, &b, &w, &schema).unwrap() != expected {
            direct_bad += 1;
        }
        let w1 = Wave::new("x", vec![a]).unwrap();
        let w2 = Wave::new("y", vec![b]).unwrap();
        let table = all_pairs_hausdorff(&w1, &w2, &w, &schema, None).unwrap();
        if table.entries.len() != 1 || table.entries[0].delta != expected {
            table_bad += 1;
        }
    }
    outcome(
        direct_bad + table_bad == 0,
        format!("500 pairs, K=8: {direct_bad} direct and {table_bad} table mismatches"),
    )
}

// ---------------------------------------------------------------------------
// 3. Likelihood gradient against central differences

fn criterion_gradient() -> Outcome {
    let cfg = SyntheticConfig {
        seed: 303,
        n_households: 15,
        ..Default::default()
    };
    let (w1, w2, truth) = generate_synthetic(&cfg).unwrap();
    let schema = AttributeSchema::shiw_default();
    let (w1, w2) = prepare(&w1, &w2, &schema, &MissingPolicy::default());
    let set =
        HouseholdTrainingSet::from_truth(&w1, &w2, &truth, &schema, 50.0, None, &PairSampling::All)
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let h = 1e-6;
    let (mut points, mut draws, mut worst) = (0, 0, 0.0f64);
    while points < 20 && draws < 10_000 {
        draws += 1;
        let params: Vec<f64> = std::iter::once(rng.gen_range(-2.0..2.0))
            .chain((0..schema.len()).map(|_| rng.gen_range(0.05..3.0)))
            .collect();
        // stay clear of the Hausdorff kinks: the perturbation moves any
        // distance by at most h times the feature count
        if set.kink_margin(&params[1..]) < 1e3 * h * schema.len() as f64 {
            continue;
        }
        points += 1;
        let (_, grad) = set.log_likelihood(&params);
        for j in 0..params.len() {
            let (mut up, mut down) = (params.clone(), params.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (set.log_likelihood(&up).0 - set.log_likelihood(&down).0) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1.0);
            worst = worst.max(rel);
        }
    }
    outcome(
        points == 20 && worst < 1e-5,
        format!(
            "{points} tie-free points ({draws} draws, {} pairs), worst relative error {worst:.2e}",
            set.len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 4. Ridge path on quasi-separated data

fn criterion_ridge_path() -> Outcome {
    // feature 0 separates the classes perfectly; 1 and 2 are noise
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut pairs = LabeledPairs::new(3);
    for i in 0..400 {
        let y = i % 5 == 0;
        let d0 = if y { 0.0 } else { 1.0 };
        pairs.push(
            &[
                d0,
                f64::from(u8::from(rng.gen_bool(0.5))),
                rng.gen_range(0..10) as f64 / 50.0,
            ],
            y,
        );
    }
    let patterns = pairs.aggregate(0..pairs.len());
    let mut grid = log_grid(1e-6, 1e2, 60);
    grid.sort_by(f64::total_cmp);
    let mut norms = Vec::new();
    let mut finite = true;
    let mut warm: Option<Vec<f64>> = None;
    for &lambda in grid.iter().rev() {
        let fit = fit_ridge(&patterns, lambda, warm.as_deref(), 500);
        finite &= fit.theta.iter().all(|x| x.is_finite());
        norms.push(fit.theta[1..].iter().map(|a| a * a).sum::<f64>().sqrt());
        warm = Some(fit.theta);
    }
    norms.reverse(); // ascending lambda
    let violations = norms
        .windows(2)
        .filter(|w| w[1] > w[0] + 1e-8 * w[0].max(1.0))
        .count();
    outcome(
        finite && violations == 0,
        format!(
            "{} lambdas in [1e-6, 1e2]: finite={finite}, norm {:.3} -> {:.3}, {violations} increases",
            grid.len(),
            norms[0],
            norms[norms.len() - 1]
        ),
    )
}

// ---------------------------------------------------------------------------
// 5. Noiseless end-to-end run

fn criterion_noiseless() -> Outcome {
    let start = Instant::now();
    let schema = AttributeSchema::shiw_default();
    let (w1, w2, truth) = generate_synthetic(&SyntheticConfig::noiseless(1, 1000, 2)).unwrap();
    let (w1, w2) = prepare(&w1, &w2, &schema, &MissingPolicy::default());
    let cfg = HhlinkConfig::default();
    let model = train_hhlink(&w1, &w2, &truth, &schema, &cfg).unwrap();
    let out = run_hhlink(&w1, &w2, &model, &schema, &cfg.predict).unwrap();
    let report = evaluate_hhlink(&w1, &w2, &truth, &out).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ranks = &report.household_ranks;
    let ent = &report.individual_entities;
    let pass =
        ranks.counts[0] == ranks.total() && ent.correct_matches == ent.with_match && secs < 60.0;
    outcome(
        pass,
        format!(
            "rank-1 {}/{} ({:.2}%), individual correct matches {}/{} ({:.2}%), {secs:.1} s",
            ranks.counts[0],
            ranks.total(),
            ranks.shares()[0],
            ent.correct_matches,
            ent.with_match,
            ent.correct_matches_pct
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. hhlink versus Fellegi-Sunter on held-out data

fn criterion_separation() -> Outcome {
    let schema = AttributeSchema::shiw_default();
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 1..=5u64 {
        let (w1, w2, truth) = generate_synthetic(&SyntheticConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let (w1, w2) = prepare(&w1, &w2, &schema, &MissingPolicy::default());
        let parts = split(&w1, &w2, &truth, 0.6, seed).unwrap();
        let cfg = HhlinkConfig::default();
        let (tr, te) = (&parts.train, &parts.test);
        let model = train_hhlink(&tr.wave1, &tr.wave2, &tr.truth, &schema, &cfg).unwrap();
        let out = run_hhlink(&te.wave1, &te.wave2, &model, &schema, &cfg.predict).unwrap();
        let ours = evaluate_hhlink(&te.wave1, &te.wave2, &te.truth, &out)
            .unwrap()
            .individual_all_pairs
            .f1;
        let (_, link) = run_fs(&te.wave1, &te.wave2, &schema, &FsConfig::default()).unwrap();
        let theirs = evaluate_fs(&te.wave1, &te.wave2, &te.truth, &link)
            .unwrap()
            .individual_all_pairs
            .f1;
        if ours > theirs {
            wins += 1;
        }
        detail.push(format!("seed {seed}: {ours:.3} vs {theirs:.3}"));
    }
    outcome(
        wins >= 4,
        format!("hhlink wins {wins}/5 ({})", detail.join("; ")),
    )
}

// ---------------------------------------------------------------------------
// 7. Metric identities

fn criterion_metrics() -> Outcome {
    // (tp, fp, fn, wave-1 ids, wave-2 ids); tn is the rest of the grid
    let fixtures: [(u64, u64, u64, usize, usize); 10] = [
        (3, 1, 2, 4, 4),
        (0, 0, 0, 2, 3),
        (5, 0, 0, 5, 5),
        (0, 4, 3, 3, 4),
        (1, 1, 1, 2, 2),
        (7, 2, 5, 6, 7),
        (10, 3, 0, 5, 6),
        (2, 0, 9, 4, 5),
        (0, 0, 6, 3, 3),
        (12, 7, 4, 8, 9),
    ];
    let mut bad = Vec::new();
    for (i, &(tp, fp, fn_, n1, n2)) in fixtures.iter().enumerate() {
        let ids1: BTreeSet<String> = (0..n1).map(|r| format!("a{r}")).collect();
        let ids2: BTreeSet<String> = (0..n2).map(|c| format!("b{c}")).collect();
        let cells: Vec<(String, String)> = (0..n1 * n2)
            .map(|x| (format!("a{}", x / n2), format!("b{}", x % n2)))
            .collect();
        let (tp_, fp_, fn__) = (tp as usize, fp as usize, fn_ as usize);
        let truth: BTreeSet<_> = cells[..tp_ + fn__].iter().cloned().collect();
        let decisions: BTreeSet<_> = cells[..tp_]
            .iter()
            .chain(&cells[tp_ + fn__..tp_ + fn__ + fp_])
            .cloned()
            .collect();
        let tn = (n1 * n2) as u64 - tp - fp - fn_;
        let r = compute_metrics(
            &decisions,
            &truth,
            &Scope::AllPairs {
                ids1: &ids1,
                ids2: &ids2,
            },
        )
        .unwrap();
        let frac = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let expected = [
            frac(2 * tp, 2 * tp + fp + fn_),
            frac(fp, fp + tn),
            frac(fn_, fn_ + tp),
            frac(tp, tp + fp),
            frac(tp, tp + fn_),
        ];
        let got = [r.f1, r.fpr, r.fnr, r.ppv, r.recall];
        let counts_ok = r.counts == ConfusionCounts { tp, fp, fn_, tn };
        if got != expected || !counts_ok {
            bad.push(i);
        }
    }
    // spot values worked by hand
    let hand = {
        let ids1: BTreeSet<String> = ["a0", "a1", "a2", "a3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ids2: BTreeSet<String> = ["b0", "b1", "b2", "b3"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let p = |a: &str, b: &str| (a.to_string(), b.to_string());
        let truth: BTreeSet<_> = [p("a0", "b0"), p("a1", "b1"), p("a2", "b2")].into();
        let dec: BTreeSet<_> = [p("a0", "b0"), p("a1", "b2"), p("a3", "b3")].into();
        let r = compute_metrics(
            &dec,
            &truth,
            &Scope::AllPairs {
                ids1: &ids1,
                ids2: &ids2,
            },
        )
        .unwrap();
        // tp 1, fp 2, fn 2, tn 11
        r.f1 == 1.0 / 3.0
            && r.ppv == 1.0 / 3.0
            && r.recall == 1.0 / 3.0
            && r.fpr == 2.0 / 13.0
            && r.fnr == 2.0 / 3.0
    };
    outcome(
        bad.is_empty() && hand,
        format!("10 fixtures, mismatching {bad:?}, hand-worked case ok={hand}"),
    )
}

// ---------------------------------------------------------------------------
// 8. EM monotonicity and parameter recovery

fn planted_counts(
    rng: &mut ChaCha8Rng,
    n: usize,
    pi: f64,
    m: &[f64],
    u: &[f64],
) -> BTreeMap<Pattern, f64> {
    let mut counts = BTreeMap::new();
    for _ in 0..n {
        let probs = if rng.gen_bool(pi) { m } else { u };
        let mut bits: Pattern = 0;
        for (k, &p) in probs.iter().enumerate() {
            if rng.gen_bool(p) {
                bits |= 1 << k;
            }
        }
        *counts.entry(bits).or_insert(0.0) += 1.0;
    }
    counts
}

fn categorical_schema(k: usize) -> AttributeSchema {
    AttributeSchema::new(
        (0..k)
            .map(|i| Feature::categorical(&format!("F{i}")))
            .collect(),
    )
    .unwrap()
}

fn criterion_em() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut decreasing = 0;
    for _ in 0..20 {
        let k = rng.gen_range(2..=8);
        let m: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..0.99)).collect();
        let u: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..0.6)).collect();
        let pi = rng.gen_range(0.01..0.5);
        let n = rng.gen_range(200..5000);
        let counts = planted_counts(&mut rng, n, pi, &m, &u);
        if counts.len() < 2 {
            continue;
        }
        let model = fs_em_fit(&counts, &categorical_schema(k), &[], &EmOptions::default()).unwrap();
        let trace = &model.diagnostics.log_likelihood;
        if trace.windows(2).any(|w| w[1] < w[0]) || model.diagnostics.monotonicity_violations > 0 {
            decreasing += 1;
        }
    }
    let (m, u, pi) = ([0.95, 0.9, 0.85, 0.8, 0.9], [0.3, 0.1, 0.2, 0.05, 0.4], 0.2);
    let counts = planted_counts(&mut rng, 10_000, pi, &m, &u);
    let model = fs_em_fit(&counts, &categorical_schema(5), &[], &EmOptions::default()).unwrap();
    let err = m
        .iter()
        .zip(&model.m)
        .chain(u.iter().zip(&model.u))
        .map(|(a, b)| (a - b).abs())
        .fold((pi - model.pi).abs(), f64::max);
    outcome(
        decreasing == 0 && err <= 0.05,
        format!("20 datasets, {decreasing} with a decrease; planted recovery max error {err:.4}"),
    )
}

// ---------------------------------------------------------------------------
// 9. CLI determinism across thread counts

/// Runs one command with the working directory already set to the run's
/// scratch directory, so the recorded configuration holds only relative paths.
fn hhlink(threads: usize, args: &[&str]) {
    let threads = threads.to_string();
    let mut argv = vec![
        "--quiet",
        "--seed",
        "17",
        "--threads",
        &threads,
        "-o",
        "out",
    ];
    argv.extend([
        "--set",
        "simulate.n_households=100",
        "--set",
        "hhlink.individual.cv_folds=5",
    ]);
    argv.extend(["--set", "validate.n_repeats=2"]);
    argv.extend(args);
    if let Err(e) = hhlink_cli::run_args(argv) {
        panic!("hhlink {args:?} failed: {e}");
    }
}

/// Restores the previous working directory on drop, also after a panic.
struct WorkingDir(std::path::PathBuf);

impl WorkingDir {
    fn enter(dir: &Path) -> Self {
        let previous = std::env::current_dir().unwrap();
        std::env::set_current_dir(dir).unwrap();
        WorkingDir(previous)
    }
}

impl Drop for WorkingDir {
    fn drop(&mut self) {
        let _ = std::env::set_current_dir(&self.0);
    }
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn criterion_determinism() -> Outcome {
    let runs = [1usize, 3, 3];
    let mut snaps = Vec::new();
    for &threads in &runs {
        let dir = tempfile::tempdir().unwrap();
        let _cwd = WorkingDir::enter(dir.path());
        for args in [
            &["simulate", "--waves", "3"][..],
            &["train"],
            &["predict"],
            &["evaluate"],
            &["train", "--method", "fs-baseline"],
            &["predict", "--method", "fs-baseline"],
            &["evaluate", "--method", "fs-baseline"],
            &["compare"],
            &["validate", "--mode", "internal"],
            &["validate", "--mode", "external"],
        ] {
            hhlink(threads, args);
        }
        snaps.push(snapshot(&dir.path().join("out")));
    }
    let differing: Vec<&String> = snaps[0]
        .iter()
        .filter(|(name, bytes)| snaps[1..].iter().any(|s| s.get(*name) != Some(*bytes)))
        .map(|(name, _)| name)
        .collect();
    let same_names = snaps.iter().all(|s| s.keys().eq(snaps[0].keys()));
    outcome(
        differing.is_empty() && same_names,
        format!(
            "threads {runs:?}: {} files compared, differing {differing:?}",
            snaps[0].len()
        ),
    )
}

// ---------------------------------------------------------------------------
// 10. External survey data (optional)

fn criterion_external_data() -> Option<Outcome> {
    let dir = std::path::PathBuf::from(std::env::var_os("HHLINK_SHIW_DIR")?);
    let schema = AttributeSchema::shiw_default();
    let policy = MissingPolicy::default();
    let wave = |w: usize| {
        let raw = load_wave(
            &dir.join(format!("wave{w}.csv")),
            &schema,
            &format!("wave{w}"),
        )
        .unwrap();
        hhlink::data::apply_missing_policy(&raw, &schema, &policy)
    };
    let (w1, w2, w3) = (wave(1), wave(2), wave(3));
    let t12 = load_truth(
        &dir.join("truth_households.csv"),
        &dir.join("truth_individuals.csv"),
    )
    .unwrap();
    let t23 = load_truth(
        &dir.join("truth23_households.csv"),
        &dir.join("truth23_individuals.csv"),
    )
    .unwrap();
    let proportion = t12.household_pairs.len() as f64 / w1.n_households() as f64;
    let train = WavePair {
        wave1: w1,
        wave2: w2.clone(),
        truth: t12,
    };
    let test = WavePair {
        wave1: w2,
        wave2: w3,
        truth: t23,
    };
    let r = external_validation(&train, &test, &schema, &HhlinkConfig::default(), None).unwrap();
    let (rec_train, rec_test) = (
        100.0 * r.train.household.recall,
        100.0 * r.test.household.recall,
    );
    let pass = (proportion - 0.4665).abs() < 0.01
        && (r.tau - 0.11).abs() <= 0.05
        && (rec_train - 72.34).abs() <= 5.0
        && (rec_test - 54.44).abs() <= 5.0;
    Some(outcome(
        pass,
        format!(
            "match proportion {:.2}%, tau {:.3}, household recall {rec_train:.2} / {rec_test:.2}",
            100.0 * proportion,
            r.tau
        ),
    ))
}

fn run(n: usize, name: &str, f: fn() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    });
    let verdict = if result.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {n:>2} {verdict} {name}: {} [{:.1} s]",
        result.detail,
        start.elapsed().as_secs_f64()
    );
    result.pass
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("assignment oracle", criterion_assignment),
        ("Hausdorff oracle", criterion_hausdorff),
        ("likelihood gradient", criterion_gradient),
        ("ridge path", criterion_ridge_path),
        ("noiseless end-to-end", criterion_noiseless),
        ("method separation", criterion_separation),
        ("metric identities", criterion_metrics),
        ("EM monotonicity and recovery", criterion_em),
        ("CLI determinism", criterion_determinism),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        if !run(i + 1, name, *f) {
            failed.push(i + 1);
        }
    }
    match catch_unwind(criterion_external_data) {
        Ok(None) => println!("criterion 10 SKIP external survey data: HHLINK_SHIW_DIR not set"),
        Ok(Some(r)) => println!(
            "criterion 10 {} external survey data (optional): {}",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        ),
        Err(_) => {
            println!("criterion 10 FAIL external survey data (optional): could not be evaluated")
        }
    }
    if failed.is_empty() {
        println!("acceptance: all required criteria passed");
    } else {
        println!("acceptance: required criteria failed: {failed:?}");
        std::process::exit(1);
    }
}
