//! Linkage metrics over explicit pair universes, per-entity accounting, and
//! the internal (repeated split) and external (next wave) validation harnesses.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeSchema, GroundTruth, Wave};
use crate::household::{rank_of_truth, RankHistogram};
use crate::pipeline::{
    run_fs, run_hhlink, train_hhlink, FsConfig, HhlinkConfig, HhlinkModel, HhlinkOutput,
};
use crate::stats::{mean, sample_std};
use crate::{Error, Result};

pub type PairSet = BTreeSet<(String, String)>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Universe {
    /// Every wave-1 x wave-2 pair.
    AllPairs,
    /// Only pairs inside predicted household matches.
    WithinMatchedHouseholds,
    /// One outcome per wave-1 entity.
    PerEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub f1: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub ppv: f64,
    pub recall: f64,
    pub counts: ConfusionCounts,
    pub universe: Universe,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn ratio(num: u64, den: u64, name: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        warnings.push(format!("{name}: zero denominator"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricReport {
    pub fn from_counts(counts: ConfusionCounts, universe: Universe) -> Self {
        let ConfusionCounts { tp, fp, fn_, tn } = counts;
        let mut warnings = Vec::new();
        MetricReport {
            f1: ratio(2 * tp, 2 * tp + fp + fn_, "f1", &mut warnings),
            fpr: ratio(fp, fp + tn, "fpr", &mut warnings),
            fnr: ratio(fn_, fn_ + tp, "fnr", &mut warnings),
            ppv: ratio(tp, tp + fp, "ppv", &mut warnings),
            recall: ratio(tp, tp + fn_, "recall", &mut warnings),
            counts,
            universe,
            warnings,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// True when every metric equals its recomputation from the counts.
    pub fn is_consistent(&self) -> bool {
        let again = MetricReport::from_counts(self.counts, self.universe);
        [
            (self.f1, again.f1),
            (self.fpr, again.fpr),
            (self.fnr, again.fnr),
            (self.ppv, again.ppv),
            (self.recall, again.recall),
        ]
        .iter()
        .all(|(a, b)| a == b)
    }

    fn named(&self) -> [(&'static str, f64); 5] {
        [
            ("f1", self.f1),
            ("fpr", self.fpr),
            ("fnr", self.fnr),
            ("ppv", self.ppv),
            ("recall", self.recall),
        ]
    }
}

/// Which pairs are counted.
#[derive(Debug, Clone)]
pub enum Scope<'a> {
    AllPairs {
        ids1: &'a BTreeSet<String>,
        ids2: &'a BTreeSet<String>,
    },
    /// The scored pairs inside predicted household matches.
    Within { candidates: &'a PairSet },
}

fn check_ids(
    pairs: &PairSet,
    ids1: &BTreeSet<String>,
    ids2: &BTreeSet<String>,
    what: &'static str,
) -> Result<()> {
    for (a, b) in pairs {
        if !ids1.contains(a) {
            return Err(Error::UnknownId {
                kind: what,
                id: a.clone(),
            });
        }
        if !ids2.contains(b) {
            return Err(Error::UnknownId {
                kind: what,
                id: b.clone(),
            });
        }
    }
    Ok(())
}

/// Confusion counts and metrics of pair decisions against truth pairs.
pub fn compute_metrics(
    decisions: &PairSet,
    truth: &PairSet,
    scope: &Scope,
) -> Result<MetricReport> {
    match scope {
        Scope::AllPairs { ids1, ids2 } => {
            check_ids(decisions, ids1, ids2, "decided pair member")?;
            check_ids(truth, ids1, ids2, "truth pair member")?;
            let tp = decisions.intersection(truth).count() as u64;
            let fp = decisions.len() as u64 - tp;
            let fn_ = truth.len() as u64 - tp;
            let total = ids1.len() as u64 * ids2.len() as u64;
            Ok(MetricReport::from_counts(
                ConfusionCounts {
                    tp,
                    fp,
                    fn_,
                    tn: total - tp - fp - fn_,
                },
                Universe::AllPairs,
            ))
        }
        Scope::Within { candidates } => {
            if let Some(p) = decisions.iter().find(|p| !candidates.contains(*p)) {
                return Err(Error::InvalidData(format!(
                    "decided pair ({}, {}) is outside the matched households",
                    p.0, p.1
                )));
            }
            let truth_in: PairSet = truth.intersection(candidates).cloned().collect();
            let tp = decisions.intersection(&truth_in).count() as u64;
            let fp = decisions.len() as u64 - tp;
            let fn_ = truth_in.len() as u64 - tp;
            Ok(MetricReport::from_counts(
                ConfusionCounts {
                    tp,
                    fp,
                    fn_,
                    tn: candidates.len() as u64 - tp - fp - fn_,
                },
                Universe::WithinMatchedHouseholds,
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerEntityAccounting {
    pub correct_matches: u64,
    pub with_match: u64,
    pub correct_non_matches: u64,
    pub without_match: u64,
    pub correct_matches_pct: f64,
    pub correct_non_matches_pct: f64,
    pub report: MetricReport,
}

/// Per wave-1 entity: a truly matched entity is correct iff its decided
/// partner is its true partner; an unmatched one iff nothing was decided.
/// A wrong partner counts as both a false positive and a false negative.
pub fn per_entity_accounting(
    decisions: &PairSet,
    truth: &PairSet,
    wave1_ids: &BTreeSet<String>,
) -> Result<PerEntityAccounting> {
    let mut decided: BTreeMap<&str, &str> = BTreeMap::new();
    for (a, b) in decisions {
        if !wave1_ids.contains(a) {
            return Err(Error::UnknownId {
                kind: "decided wave-1 entity",
                id: a.clone(),
            });
        }
        if decided.insert(a, b).is_some() {
            return Err(Error::InvalidData(format!(
                "wave-1 entity {a} has more than one decided partner"
            )));
        }
    }
    let mut partner: BTreeMap<&str, &str> = BTreeMap::new();
    for (a, b) in truth {
        if !wave1_ids.contains(a) {
            return Err(Error::UnknownId {
                kind: "truth wave-1 entity",
                id: a.clone(),
            });
        }
        partner.insert(a, b);
    }
    let mut c = ConfusionCounts::default();
    let (mut with_match, mut without_match) = (0, 0);
    for id in wave1_ids {
        match (partner.get(id.as_str()), decided.get(id.as_str())) {
            (Some(t), Some(d)) if t == d => c.tp += 1,
            (Some(_), Some(_)) => {
                c.fp += 1;
                c.fn_ += 1;
            }
            (Some(_), None) => c.fn_ += 1,
            (None, Some(_)) => c.fp += 1,
            (None, None) => c.tn += 1,
        }
        if partner.contains_key(id.as_str()) {
            with_match += 1;
        } else {
            without_match += 1;
        }
    }
    let correct_non_matches = c.tn;
    let pct = |n: u64, d: u64| {
        if d == 0 {
            0.0
        } else {
            100.0 * n as f64 / d as f64
        }
    };
    Ok(PerEntityAccounting {
        correct_matches: c.tp,
        with_match,
        correct_non_matches,
        without_match,
        correct_matches_pct: pct(c.tp, with_match),
        correct_non_matches_pct: pct(correct_non_matches, without_match),
        report: MetricReport::from_counts(c, Universe::PerEntity),
    })
}

const HOUSEHOLD_FPR_NOTE: &str = "household FPR counts all N1 x N2 household pairs";

fn household_ids(w: &Wave) -> BTreeSet<String> {
    w.households().iter().map(|h| h.id.clone()).collect()
}

fn individual_ids(w: &Wave) -> BTreeSet<String> {
    w.individuals().map(|i| i.id.clone()).collect()
}

/// All evaluation views of one hhlink run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HhlinkReport {
    pub household: MetricReport,
    pub household_ranks: RankHistogram,
    pub household_entities: PerEntityAccounting,
    pub individual_all_pairs: MetricReport,
    pub individual_within: MetricReport,
    pub individual_entities: PerEntityAccounting,
    pub n_household_matches: usize,
    pub n_individual_matches: usize,
    pub n_candidate_individual_pairs: usize,
}

pub fn evaluate_hhlink(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    output: &HhlinkOutput,
) -> Result<HhlinkReport> {
    let (h1, h2) = (household_ids(wave1), household_ids(wave2));
    let (i1, i2) = (individual_ids(wave1), individual_ids(wave2));
    let hh_decisions = output.households.matched_ids();
    let household = compute_metrics(
        &hh_decisions,
        &truth.household_pairs,
        &Scope::AllPairs {
            ids1: &h1,
            ids2: &h2,
        },
    )?
    .with_note(HOUSEHOLD_FPR_NOTE);
    let ind_decisions = output.individuals.matched_ids();
    let candidates: PairSet = output
        .individuals
        .pairs
        .iter()
        .map(|p| (p.id1.clone(), p.id2.clone()))
        .collect();
    Ok(HhlinkReport {
        household,
        household_ranks: rank_of_truth(&output.households, truth),
        household_entities: per_entity_accounting(&hh_decisions, &truth.household_pairs, &h1)?,
        individual_all_pairs: compute_metrics(
            &ind_decisions,
            &truth.individual_pairs,
            &Scope::AllPairs {
                ids1: &i1,
                ids2: &i2,
            },
        )?,
        individual_within: compute_metrics(
            &ind_decisions,
            &truth.individual_pairs,
            &Scope::Within {
                candidates: &candidates,
            },
        )?,
        individual_entities: per_entity_accounting(&ind_decisions, &truth.individual_pairs, &i1)?,
        n_household_matches: hh_decisions.len(),
        n_individual_matches: ind_decisions.len(),
        n_candidate_individual_pairs: candidates.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsReport {
    pub individual_all_pairs: MetricReport,
    pub individual_entities: PerEntityAccounting,
    pub n_compared: usize,
    pub n_matches: usize,
}

pub fn evaluate_fs(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    linkage: &crate::baseline::FsLinkage,
) -> Result<FsReport> {
    let (i1, i2) = (individual_ids(wave1), individual_ids(wave2));
    let decisions = linkage.matched_ids();
    Ok(FsReport {
        individual_all_pairs: compute_metrics(
            &decisions,
            &truth.individual_pairs,
            &Scope::AllPairs {
                ids1: &i1,
                ids2: &i2,
            },
        )?,
        individual_entities: per_entity_accounting(&decisions, &truth.individual_pairs, &i1)?,
        n_compared: linkage.n_compared,
        n_matches: decisions.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_fraction: f64,
    pub n_repeats: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 1,
            train_fraction: 0.6,
            n_repeats: 10,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct WavePair {
    pub wave1: Wave,
    pub wave2: Wave,
    pub truth: GroundTruth,
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: WavePair,
    pub test: WavePair,
}

fn take_fraction(
    mut ids: Vec<String>,
    fraction: f64,
    rng: &mut ChaCha8Rng,
) -> (Vec<String>, Vec<String>) {
    ids.sort();
    ids.shuffle(rng);
    let k = (fraction * ids.len() as f64).round() as usize;
    let rest = ids.split_off(k);
    (ids, rest)
}

/// Samples `fraction` of the matched household pairs (kept together) and the
/// same fraction of each wave's unmatched households into training.
pub fn split(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    fraction: f64,
    seed: u64,
) -> Result<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let matched: Vec<(String, String)> = truth.household_pairs.iter().cloned().collect();
    let n_train = (fraction * matched.len() as f64).round() as usize;
    if n_train == 0 || n_train == matched.len() {
        return Err(Error::Degenerate(format!(
            "{} matched households cannot be split at fraction {fraction}",
            matched.len()
        )));
    }
    let mut order: Vec<usize> = (0..matched.len()).collect();
    order.shuffle(&mut rng);
    let (mut train1, mut train2) = (BTreeSet::new(), BTreeSet::new());
    for &i in &order[..n_train] {
        train1.insert(matched[i].0.clone());
        train2.insert(matched[i].1.clone());
    }
    let in_truth1: BTreeSet<&String> = matched.iter().map(|p| &p.0).collect();
    let in_truth2: BTreeSet<&String> = matched.iter().map(|p| &p.1).collect();
    let unmatched = |w: &Wave, matched: &BTreeSet<&String>| -> Vec<String> {
        w.households()
            .iter()
            .map(|h| h.id.clone())
            .filter(|id| !matched.contains(id))
            .collect()
    };
    let (u1, _) = take_fraction(unmatched(wave1, &in_truth1), fraction, &mut rng);
    let (u2, _) = take_fraction(unmatched(wave2, &in_truth2), fraction, &mut rng);
    train1.extend(u1);
    train2.extend(u2);
    let test1: BTreeSet<String> = household_ids(wave1).difference(&train1).cloned().collect();
    let test2: BTreeSet<String> = household_ids(wave2).difference(&train2).cloned().collect();
    let pair = |k1: &BTreeSet<String>, k2: &BTreeSet<String>, tag: &str| {
        let a = wave1.subset(format!("{}-{tag}", wave1.label), k1);
        let b = wave2.subset(format!("{}-{tag}", wave2.label), k2);
        let t = truth.restrict(&a, &b);
        WavePair {
            wave1: a,
            wave2: b,
            truth: t,
        }
    };
    Ok(Split {
        train: pair(&train1, &train2, "train"),
        test: pair(&test1, &test2, "test"),
    })
}

/// Fitted coefficients in a flat, named form for tables.
pub fn coefficient_rows(model: &HhlinkModel, schema: &AttributeSchema) -> Vec<(String, f64)> {
    let mut rows = vec![("household.beta0".to_string(), model.household.beta0)];
    for (name, b) in schema.names().zip(model.household.weights.beta()) {
        rows.push((format!("household.beta.{name}"), *b));
    }
    rows.push(("household.tau".into(), model.household.tau));
    rows.push(("individual.alpha0".into(), model.individual.alpha0));
    for (name, a) in schema.names().zip(model.individual.alpha()) {
        rows.push((format!("individual.alpha.{name}"), *a));
    }
    rows.push(("individual.lambda".into(), model.individual.lambda));
    rows
}

fn metric_rows(prefix: &str, r: &HhlinkReport) -> Vec<(String, f64)> {
    let mut rows = Vec::new();
    for (view, rep) in [
        ("household", &r.household),
        ("individual.all_pairs", &r.individual_all_pairs),
        ("individual.within", &r.individual_within),
        ("individual.per_entity", &r.individual_entities.report),
    ] {
        for (name, v) in rep.named() {
            rows.push((format!("{prefix}.{view}.{name}"), v));
        }
    }
    rows.push((
        format!("{prefix}.household.rank1_pct"),
        r.household_ranks.shares()[0],
    ));
    rows.push((
        format!("{prefix}.individual.correct_matches_pct"),
        r.individual_entities.correct_matches_pct,
    ));
    rows.push((
        format!("{prefix}.individual.correct_non_matches_pct"),
        r.individual_entities.correct_non_matches_pct,
    ));
    rows
}

fn fs_rows(prefix: &str, r: &FsReport) -> Vec<(String, f64)> {
    let mut rows: Vec<(String, f64)> = r
        .individual_all_pairs
        .named()
        .iter()
        .map(|(n, v)| (format!("{prefix}.fs.individual.all_pairs.{n}"), *v))
        .collect();
    rows.push((
        format!("{prefix}.fs.individual.correct_matches_pct"),
        r.individual_entities.correct_matches_pct,
    ));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatReport {
    pub repeat: usize,
    pub seed: u64,
    pub train: HhlinkReport,
    pub test: HhlinkReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_test: Option<FsReport>,
    pub coefficients: Vec<(String, f64)>,
}

impl RepeatReport {
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = metric_rows("train", &self.train);
        rows.extend(metric_rows("test", &self.test));
        if let Some(fs) = &self.fs_test {
            rows.extend(fs_rows("test", fs));
        }
        rows.extend(self.coefficients.iter().cloned());
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Mean and standard deviation (n - 1) of every named value across reports.
pub fn summarize(rows: &[Vec<(String, f64)>]) -> Vec<SummaryRow> {
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        for (name, v) in r {
            let entry = values.entry(name.clone()).or_insert_with(|| {
                order.push(name.clone());
                Vec::new()
            });
            entry.push(*v);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let v = &values[&name];
            SummaryRow {
                mean: mean(v),
                std: sample_std(v),
                n: v.len(),
                name,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InternalReport {
    pub spec: SplitSpec,
    pub repeats: Vec<RepeatReport>,
    pub summary: Vec<SummaryRow>,
}

/// Seeds for the repeats, drawn from the master seed.
pub fn repeat_seeds(master: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    (0..n).map(|_| rng.gen()).collect()
}

/// Repeated random splits; models are fitted on each training part and
/// evaluated on both parts. With `fs` set, the baseline is run on each test part.
pub fn internal_validation(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    schema: &AttributeSchema,
    spec: &SplitSpec,
    config: &HhlinkConfig,
    fs: Option<&FsConfig>,
) -> Result<InternalReport> {
    spec.validate()?;
    if truth.household_pairs.is_empty() {
        return Err(Error::Degenerate(
            "internal validation needs matched households".into(),
        ));
    }
    let seeds = repeat_seeds(spec.seed, spec.n_repeats);
    let repeats: Vec<Result<RepeatReport>> = seeds
        .par_iter()
        .enumerate()
        .map(|(r, &seed)| {
            let parts = split(wave1, wave2, truth, spec.train_fraction, seed)?;
            let mut cfg = config.clone();
            cfg.individual.seed = seed;
            let model = train_hhlink(
                &parts.train.wave1,
                &parts.train.wave2,
                &parts.train.truth,
                schema,
                &cfg,
            )?;
            let eval = |p: &WavePair| -> Result<HhlinkReport> {
                let out = run_hhlink(&p.wave1, &p.wave2, &model, schema, &cfg.predict)?;
                evaluate_hhlink(&p.wave1, &p.wave2, &p.truth, &out)
            };
            let fs_test = match fs {
                Some(fs) => {
                    let t = &parts.test;
                    let (_, link) = run_fs(&t.wave1, &t.wave2, schema, fs)?;
                    Some(evaluate_fs(&t.wave1, &t.wave2, &t.truth, &link)?)
                }
                None => None,
            };
            Ok(RepeatReport {
                repeat: r,
                seed,
                train: eval(&parts.train)?,
                test: eval(&parts.test)?,
                fs_test,
                coefficients: coefficient_rows(&model, schema),
            })
        })
        .collect();
    let repeats = repeats.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = summarize(&repeats.iter().map(RepeatReport::rows).collect::<Vec<_>>());
    Ok(InternalReport {
        spec: *spec,
        repeats,
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalReport {
    pub train_labels: (String, String),
    pub test_labels: (String, String),
    pub tau: f64,
    pub train: HhlinkReport,
    pub test: HhlinkReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fs_test: Option<FsReport>,
    pub coefficients: Vec<(String, f64)>,
}

/// Fits on the first wave pair and tests on the next, carrying the
/// threshold over. The test pair must start with the training pair's second wave.
pub fn external_validation(
    train: &WavePair,
    test: &WavePair,
    schema: &AttributeSchema,
    config: &HhlinkConfig,
    fs: Option<&FsConfig>,
) -> Result<ExternalReport> {
    if train.wave2.label != test.wave1.label {
        return Err(Error::InvalidData(format!(
            "wave label mismatch: training ends with '{}' but testing starts with '{}'",
            train.wave2.label, test.wave1.label
        )));
    }
    let model = train_hhlink(&train.wave1, &train.wave2, &train.truth, schema, config)?;
    let run = |p: &WavePair| -> Result<HhlinkReport> {
        let out = run_hhlink(&p.wave1, &p.wave2, &model, schema, &config.predict)?;
        evaluate_hhlink(&p.wave1, &p.wave2, &p.truth, &out)
    };
    let fs_test = match fs {
        Some(fs) => {
            let (_, link) = run_fs(&test.wave1, &test.wave2, schema, fs)?;
            Some(evaluate_fs(&test.wave1, &test.wave2, &test.truth, &link)?)
        }
        None => None,
    };
    Ok(ExternalReport {
        train_labels: (train.wave1.label.clone(), train.wave2.label.clone()),
        test_labels: (test.wave1.label.clone(), test.wave2.label.clone()),
        tau: model.household.tau,
        train: run(train)?,
        test: run(test)?,
        fs_test,
        coefficients: coefficient_rows(&model, schema),
    })
}

// ---------------------------------------------------------------------------
// Text tables

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

/// Metric table with one column per labeled report, values in percent.
pub fn metrics_table(title: &str, columns: &[(&str, &MetricReport)]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = write!(out, "{:<10}", "");
    for (name, _) in columns {
        let _ = write!(out, "{:>14}", name);
    }
    out.push('\n');
    for (i, metric) in ["F1", "FPR", "FNR", "PPV", "Recall"].iter().enumerate() {
        let _ = write!(out, "{:<10}", metric);
        for (_, r) in columns {
            let _ = write!(out, "{:>14}", pct(r.named()[i].1));
        }
        out.push('\n');
    }
    out
}

pub fn rank_table(hist: &RankHistogram) -> String {
    let mut out = String::from("Rank of the true household match\n");
    let labels = ["1", "2", "3", "4", ">=5"];
    let shares = hist.shares();
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:<10}{:>8}{:>10.2}%",
            label, hist.counts[i], shares[i]
        );
    }
    if hist.unscored > 0 {
        let _ = writeln!(out, "{:<10}{:>8}", "unscored", hist.unscored);
    }
    out
}

pub fn entity_table(rows: &[(&str, &PerEntityAccounting)]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12}{:>24}{:>24}",
        "", "Correct matches", "Correct non-matches"
    );
    for (name, e) in rows {
        let _ = writeln!(
            out,
            "{:<12}{:>24}{:>24}",
            name,
            format!("{} ({:.2}%)", e.correct_matches, e.correct_matches_pct),
            format!(
                "{} ({:.2}%)",
                e.correct_non_matches, e.correct_non_matches_pct
            ),
        );
    }
    out
}

pub fn summary_table(summary: &[SummaryRow]) -> String {
    let mut out = String::new();
    let width = summary
        .iter()
        .map(|r| r.name.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let _ = writeln!(out, "{:<width$}{:>14}{:>14}{:>6}", "", "Mean", "StDev", "n");
    for r in summary {
        let _ = writeln!(
            out,
            "{:<width$}{:>14.6}{:>14.6}{:>6}",
            r.name, r.mean, r.std, r.n
        );
    }
    out
}

pub fn hhlink_report_text(title: &str, r: &HhlinkReport) -> String {
    let mut out = format!("== {title} ==\n");
    out += &metrics_table(
        "Metrics (%)",
        &[
            ("Household", &r.household),
            ("Ind. all", &r.individual_all_pairs),
            ("Ind. within", &r.individual_within),
        ],
    );
    out.push('\n');
    out += &rank_table(&r.household_ranks);
    out.push('\n');
    out += &entity_table(&[
        ("Households", &r.household_entities),
        ("Individuals", &r.individual_entities),
    ]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn }
    }

    #[test]
    fn metric_arithmetic() {
        let r = MetricReport::from_counts(counts(2, 1, 1, 0), Universe::AllPairs);
        assert_eq!(r.f1, 4.0 / 6.0);
        let r = MetricReport::from_counts(counts(3, 0, 0, 10), Universe::AllPairs);
        assert_eq!((r.f1, r.fpr, r.fnr), (1.0, 0.0, 0.0));
        assert!(r.warnings.is_empty());
        let empty = MetricReport::from_counts(counts(0, 0, 0, 0), Universe::AllPairs);
        assert_eq!(empty.f1, 0.0);
        assert_eq!(empty.warnings.len(), 5);
        assert!(empty.is_consistent());
    }

    fn set(pairs: &[(&str, &str)]) -> PairSet {
        pairs
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect()
    }

    fn ids(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn all_pairs_universe() {
        let (i1, i2) = (ids(&["a", "b", "c"]), ids(&["x", "y"]));
        let truth = set(&[("a", "x"), ("b", "y")]);
        let dec = set(&[("a", "x"), ("c", "y")]);
        let r = compute_metrics(
            &dec,
            &truth,
            &Scope::AllPairs {
                ids1: &i1,
                ids2: &i2,
            },
        )
        .unwrap();
        assert_eq!(r.counts, counts(1, 1, 1, 3));
        let bad = set(&[("q", "x")]);
        assert!(compute_metrics(
            &bad,
            &truth,
            &Scope::AllPairs {
                ids1: &i1,
                ids2: &i2
            }
        )
        .is_err());
    }

    #[test]
    fn within_universe_ignores_outside_truth() {
        let candidates = set(&[("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")]);
        let truth = set(&[("a", "x"), ("c", "z")]);
        let dec = set(&[("a", "x"), ("b", "y")]);
        let r = compute_metrics(
            &dec,
            &truth,
            &Scope::Within {
                candidates: &candidates,
            },
        )
        .unwrap();
        assert_eq!(r.counts, counts(1, 1, 0, 2));
        let outside = set(&[("c", "z")]);
        assert!(compute_metrics(
            &outside,
            &truth,
            &Scope::Within {
                candidates: &candidates
            }
        )
        .is_err());
    }

    #[test]
    fn per_entity_cases() {
        let w1 = ids(&["a", "b", "c", "d"]);
        let truth = set(&[("a", "x"), ("b", "y")]);
        let oracle = per_entity_accounting(&truth, &truth, &w1).unwrap();
        assert_eq!(
            (oracle.correct_matches_pct, oracle.correct_non_matches_pct),
            (100.0, 100.0)
        );
        let nothing = per_entity_accounting(&PairSet::new(), &truth, &w1).unwrap();
        assert_eq!(
            (nothing.correct_matches_pct, nothing.correct_non_matches_pct),
            (0.0, 100.0)
        );
        let wrong = per_entity_accounting(&set(&[("a", "y"), ("c", "z")]), &truth, &w1).unwrap();
        assert_eq!(wrong.report.counts, counts(0, 2, 2, 1));
        assert!(per_entity_accounting(&set(&[("a", "x"), ("a", "y")]), &truth, &w1).is_err());
    }

    #[test]
    fn summary_uses_sample_std() {
        let rows = vec![vec![("m".to_string(), 1.0)], vec![("m".to_string(), 3.0)]];
        let s = summarize(&rows);
        assert_eq!(s[0].mean, 2.0);
        assert!((s[0].std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(summarize(&rows[..1])[0].std, 0.0);
    }

    #[test]
    fn split_partitions_each_wave() {
        let cfg = crate::data::SyntheticConfig {
            n_households: 60,
            ..Default::default()
        };
        let (w1, w2, truth) = crate::data::generate_synthetic(&cfg).unwrap();
        let s = split(&w1, &w2, &truth, 0.6, 3).unwrap();
        let again = split(&w1, &w2, &truth, 0.6, 3).unwrap();
        assert_eq!(s.train.truth, again.train.truth);
        for (whole, a, b) in [
            (&w1, &s.train.wave1, &s.test.wave1),
            (&w2, &s.train.wave2, &s.test.wave2),
        ] {
            let (ha, hb) = (household_ids(a), household_ids(b));
            assert!(ha.is_disjoint(&hb));
            assert_eq!(
                ha.union(&hb).cloned().collect::<BTreeSet<_>>(),
                household_ids(whole)
            );
        }
        // matched pairs never straddle the split
        assert_eq!(
            s.train.truth.household_pairs.len() + s.test.truth.household_pairs.len(),
            truth.household_pairs.len()
        );
        let n = truth.household_pairs.len() as f64;
        assert_eq!(
            s.train.truth.household_pairs.len(),
            (0.6 * n).round() as usize
        );
        assert!(split(&w1, &w2, &GroundTruth::default(), 0.6, 3).is_err());
    }
}
