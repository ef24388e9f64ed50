//! Individual matching inside matched households: a ridge-penalized logistic
//! model with nonnegative weights, `q = sigmoid(alpha0 - sum_k alpha_k d_k)`,
//! followed by an exact one-to-one assignment per household pair.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::assign;
use crate::data::{read_table, AttributeSchema, GroundTruth, Individual, Wave};
use crate::distance::{pair_distance, Encoder, FeatureSpace, FeatureWeights, DEFAULT_YEAR_SCALE};
use crate::household::HouseholdPrediction;
use crate::stats::{log_sigmoid, sigmoid};
use crate::{Error, Result};

/// Convergence threshold on the infinity norm of the parameter change.
const PARAM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    /// Mean held-out deviance per pair, averaged over folds.
    pub deviance: f64,
    /// Standard error of the fold deviances.
    pub deviance_se: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RidgeDiagnostics {
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_pairs: usize,
    pub n_positive: usize,
    pub n_patterns: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualModel {
    pub alpha0: f64,
    pub weights: FeatureWeights,
    pub lambda: f64,
    pub cv_curve: Vec<CvPoint>,
    pub diagnostics: RidgeDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    alpha0: f64,
    alpha: Vec<f64>,
    lambda: f64,
    #[serde(default = "default_year_scale")]
    year_scale: f64,
    #[serde(default)]
    cv_curve: Vec<CvPoint>,
    #[serde(default)]
    diagnostics: RidgeDiagnostics,
}

fn default_year_scale() -> f64 {
    DEFAULT_YEAR_SCALE
}

impl IndividualModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            alpha0: self.alpha0,
            alpha: self.weights.beta().to_vec(),
            lambda: self.lambda,
            year_scale: self.weights.year_scale(),
            cv_curve: self.cv_curve.clone(),
            diagnostics: self.diagnostics.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if !(f.lambda >= 0.0) {
            return Err(Error::Config(format!(
                "lambda {} must be nonnegative",
                f.lambda
            )));
        }
        Ok(IndividualModel {
            alpha0: f.alpha0,
            weights: FeatureWeights::new(f.alpha, f.year_scale)?,
            lambda: f.lambda,
            cv_curve: f.cv_curve,
            diagnostics: f.diagnostics,
        })
    }

    pub fn alpha(&self) -> &[f64] {
        self.weights.beta()
    }
}

/// Probability that two individuals of matched households are the same person.
pub fn individual_score(
    a: &Individual,
    b: &Individual,
    model: &IndividualModel,
    schema: &AttributeSchema,
) -> Result<f64> {
    Ok(sigmoid(
        model.alpha0 - pair_distance(a, b, &model.weights, schema)?,
    ))
}

/// Labeled member pairs: one row of K feature distances per pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledPairs {
    pub k: usize,
    pub features: Vec<f64>,
    pub labels: Vec<bool>,
}

impl LabeledPairs {
    pub fn new(k: usize) -> Self {
        LabeledPairs {
            k,
            ..Default::default()
        }
    }

    pub fn push(&mut self, d: &[f64], y: bool) {
        assert_eq!(d.len(), self.k);
        self.features.extend_from_slice(d);
        self.labels.push(y);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.k..(i + 1) * self.k]
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|y| **y).count()
    }

    /// Collapses identical feature vectors into counted patterns.
    pub fn aggregate(&self, rows: impl IntoIterator<Item = usize>) -> Patterns {
        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut out = Patterns {
            k: self.k,
            ..Default::default()
        };
        for i in rows {
            let key: Vec<u64> = self.row(i).iter().map(|x| x.to_bits()).collect();
            let p = *index.entry(key).or_insert_with(|| {
                out.features.extend_from_slice(self.row(i));
                out.positive.push(0.0);
                out.negative.push(0.0);
                out.positive.len() - 1
            });
            if self.labels[i] {
                out.positive[p] += 1.0;
            } else {
                out.negative[p] += 1.0;
            }
        }
        out
    }
}

/// Distinct feature vectors with their positive and negative counts.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Patterns {
    pub k: usize,
    pub features: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl Patterns {
    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    fn row(&self, p: usize) -> &[f64] {
        &self.features[p * self.k..(p + 1) * self.k]
    }

    pub fn n_rows(&self) -> f64 {
        self.positive.iter().sum::<f64>() + self.negative.iter().sum::<f64>()
    }

    fn eta(&self, p: usize, theta: &[f64]) -> f64 {
        theta[0]
            - self
                .row(p)
                .iter()
                .zip(&theta[1..])
                .map(|(d, a)| d * a)
                .sum::<f64>()
    }

    /// Sum of Bernoulli log-likelihood terms.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        (0..self.len())
            .map(|p| {
                let eta = self.eta(p, theta);
                let mut v = 0.0;
                if self.positive[p] > 0.0 {
                    v += self.positive[p] * log_sigmoid(eta);
                }
                if self.negative[p] > 0.0 {
                    v += self.negative[p] * log_sigmoid(-eta);
                }
                v
            })
            .sum()
    }

    /// Mean log-likelihood minus `lambda * sum_k alpha_k^2`.
    pub fn penalized_objective(&self, theta: &[f64], lambda: f64) -> f64 {
        self.log_likelihood(theta) / self.n_rows()
            - lambda * theta[1..].iter().map(|a| a * a).sum::<f64>()
    }
}

/// Every member pair of every truly matched household pair, labeled by the
/// individual truth.
pub fn build_training_pairs(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    schema: &AttributeSchema,
    year_scale: f64,
) -> Result<LabeledPairs> {
    let h1 = wave1.household_index();
    let h2 = wave2.household_index();
    let space = FeatureSpace::new(schema, year_scale);
    let mut enc = Encoder::default();
    let k = schema.len();
    let mut out = LabeledPairs::new(k);
    let mut d = vec![0.0; k];
    for (a, b) in &truth.household_pairs {
        let hs = &wave1.households()[*h1.get(a.as_str()).ok_or_else(|| Error::UnknownId {
            kind: "wave-1 household",
            id: a.clone(),
        })?];
        let ht = &wave2.households()[*h2.get(b.as_str()).ok_or_else(|| Error::UnknownId {
            kind: "wave-2 household",
            id: b.clone(),
        })?];
        let es = enc.household(&space, hs);
        let et = enc.household(&space, ht);
        for (i, pi) in hs.members.iter().enumerate() {
            for (j, pj) in ht.members.iter().enumerate() {
                space.feature_vector(es.member(i), et.member(j), &mut d);
                let y = truth
                    .individual_pairs
                    .contains(&(pi.id.clone(), pj.id.clone()));
                out.push(&d, y);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    /// `(alpha0, alpha_1, ..., alpha_K)`.
    pub theta: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximizes the penalized mean log-likelihood at a single `lambda`.
///
/// Each iteration builds the quadratic model of the objective at the current
/// point (the IRLS normal equations), maximizes it under `alpha >= 0` by cyclic
/// coordinate ascent with clipping, and halves the step until the objective
/// does not decrease.
pub fn fit_ridge(
    patterns: &Patterns,
    lambda: f64,
    init: Option<&[f64]>,
    max_iter: usize,
) -> RidgeFit {
    let k = patterns.k;
    let dim = k + 1;
    let n = patterns.n_rows();
    let mut theta = match init {
        Some(t) => t.to_vec(),
        None => {
            let pos: f64 = patterns.positive.iter().sum();
            let rate = (pos / n).clamp(1e-6, 1.0 - 1e-6);
            std::iter::once((rate / (1.0 - rate)).ln())
                .chain(std::iter::repeat(0.0).take(k))
                .collect()
        }
    };
    theta[1..].iter_mut().for_each(|a| *a = a.max(0.0));
    let mut objective = patterns.penalized_objective(&theta, lambda);
    let mut converged = false;
    let mut iterations = 0;
    let mut z = vec![0.0; dim];
    while iterations < max_iter {
        iterations += 1;
        let mut g = vec![0.0; dim];
        let mut a = vec![0.0; dim * dim];
        for p in 0..patterns.len() {
            z[0] = 1.0;
            for (zk, d) in z[1..].iter_mut().zip(patterns.row(p)) {
                *zk = -d;
            }
            let q = sigmoid(patterns.eta(p, &theta));
            let c = patterns.positive[p] + patterns.negative[p];
            let resid = patterns.positive[p] - c * q;
            let w = c * q * (1.0 - q);
            for j in 0..dim {
                g[j] += resid * z[j];
                for l in 0..dim {
                    a[j * dim + l] += w * z[j] * z[l];
                }
            }
        }
        g.iter_mut().for_each(|v| *v /= n);
        a.iter_mut().for_each(|v| *v /= n);
        for j in 1..dim {
            g[j] -= 2.0 * lambda * theta[j];
            a[j * dim + j] += 2.0 * lambda;
        }

        // maximize g.delta - delta' A delta / 2 subject to theta + delta >= 0 on the weights
        let mut delta = vec![0.0; dim];
        for _ in 0..1000 {
            let mut change = 0.0f64;
            for j in 0..dim {
                let ajj = a[j * dim + j];
                if ajj <= 1e-300 {
                    continue;
                }
                let mut r = g[j];
                for l in 0..dim {
                    if l != j {
                        r -= a[j * dim + l] * delta[l];
                    }
                }
                let mut next = r / ajj;
                if j > 0 {
                    next = next.max(-theta[j]);
                }
                change = change.max((next - delta[j]).abs());
                delta[j] = next;
            }
            if change < 1e-13 {
                break;
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-10 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(&delta)
                .enumerate()
                .map(|(j, (t, d))| {
                    if j == 0 {
                        t + step * d
                    } else {
                        (t + step * d).max(0.0)
                    }
                })
                .collect();
            let value = patterns.penalized_objective(&trial, lambda);
            if value.is_finite() && value >= objective - 1e-15 * objective.abs() {
                accepted = Some((trial, value));
                break;
            }
            step *= 0.5;
        }
        let Some((next, value)) = accepted else {
            converged = true;
            break;
        };
        let moved = next
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        theta = next;
        objective = value;
        if moved < PARAM_TOL {
            converged = true;
            break;
        }
    }
    RidgeFit {
        theta,
        objective,
        iterations,
        converged,
    }
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndividualFitConfig {
    pub lambda_grid: Vec<f64>,
    pub cv_folds: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub year_scale: f64,
}

impl Default for IndividualFitConfig {
    fn default() -> Self {
        IndividualFitConfig {
            lambda_grid: log_grid(1e-4, 1e2, 50),
            cv_folds: 10,
            seed: 1,
            max_iter: 200,
            year_scale: DEFAULT_YEAR_SCALE,
        }
    }
}

impl IndividualFitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|l| !(*l >= 0.0) || !l.is_finite())
        {
            return Err(Error::Config(
                "lambda grid must be a nonempty list of finite nonnegative values".into(),
            ));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config(format!(
                "cv_folds must be at least 2, got {}",
                self.cv_folds
            )));
        }
        Ok(())
    }
}

/// Stratified fold assignment: positives and negatives are shuffled
/// separately and dealt round-robin.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0; labels.len()];
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            out[i] = pos % folds;
        }
    }
    out
}

/// Fits the individual model: cross-validates the ridge penalty over the grid,
/// then refits on all pairs at the penalty with the smallest mean deviance.
pub fn fit_individual(
    pairs: &LabeledPairs,
    config: &IndividualFitConfig,
) -> Result<IndividualModel> {
    config.validate()?;
    let n_pos = pairs.n_positive();
    if n_pos == 0 || n_pos == pairs.len() {
        return Err(Error::Degenerate(format!(
            "individual training pairs need both labels ({} positive of {})",
            n_pos,
            pairs.len()
        )));
    }
    let folds = config.cv_folds.min(n_pos).min(pairs.len() - n_pos);
    if folds < 2 {
        return Err(Error::Degenerate(
            "too few pairs of each label for cross-validation".into(),
        ));
    }
    // descending lambda so each fit warm-starts from a more heavily penalized one
    let mut grid = config.lambda_grid.clone();
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup();

    let assignment = stratified_folds(&pairs.labels, folds, config.seed);
    let fold_deviances: Vec<Vec<f64>> = (0..folds)
        .into_par_iter()
        .map(|f| {
            let train = pairs.aggregate((0..pairs.len()).filter(|&i| assignment[i] != f));
            let test = pairs.aggregate((0..pairs.len()).filter(|&i| assignment[i] == f));
            let mut warm: Option<Vec<f64>> = None;
            grid.iter()
                .map(|&lambda| {
                    let fit = fit_ridge(&train, lambda, warm.as_deref(), config.max_iter);
                    let dev = -2.0 * test.log_likelihood(&fit.theta) / test.n_rows();
                    warm = Some(fit.theta);
                    dev
                })
                .collect()
        })
        .collect();
    let cv_curve: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let devs: Vec<f64> = fold_deviances.iter().map(|f| f[g]).collect();
            CvPoint {
                lambda,
                deviance: crate::stats::mean(&devs),
                deviance_se: crate::stats::sample_std(&devs) / (devs.len() as f64).sqrt(),
            }
        })
        .collect();
    // ties go to the larger penalty, which comes first
    let best = cv_curve
        .iter()
        .fold(None::<&CvPoint>, |best, p| match best {
            Some(b) if b.deviance <= p.deviance => Some(b),
            _ => Some(p),
        })
        .expect("nonempty grid");
    let lambda = best.lambda;
    fit_at(pairs, lambda, config, cv_curve)
}

/// Fits on all pairs at a fixed penalty.
pub fn fit_at(
    pairs: &LabeledPairs,
    lambda: f64,
    config: &IndividualFitConfig,
    cv_curve: Vec<CvPoint>,
) -> Result<IndividualModel> {
    let patterns = pairs.aggregate(0..pairs.len());
    let fit = fit_ridge(&patterns, lambda, None, config.max_iter);
    if !fit.converged {
        log::warn!(
            "individual fit at lambda {lambda} did not converge in {} iterations",
            fit.iterations
        );
    }
    if fit.theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::Degenerate(format!(
            "individual fit at lambda {lambda} diverged"
        )));
    }
    Ok(IndividualModel {
        alpha0: fit.theta[0],
        weights: FeatureWeights::new(fit.theta[1..].to_vec(), config.year_scale)?,
        lambda,
        cv_curve,
        diagnostics: RidgeDiagnostics {
            objective: fit.objective,
            iterations: fit.iterations,
            converged: fit.converged,
            n_pairs: pairs.len(),
            n_positive: pairs.n_positive(),
            n_patterns: patterns.len(),
        },
    })
}

/// One scored member pair inside a predicted household match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedPair {
    pub id1: String,
    pub id2: String,
    pub q: f64,
    pub matched: bool,
    pub household1: String,
    pub household2: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Linkage {
    /// All member pairs of the predicted household matches, in household-pair
    /// order and row-major within each.
    pub pairs: Vec<LinkedPair>,
    pub unmatched_wave1: Vec<String>,
    pub unmatched_wave2: Vec<String>,
    pub objective: f64,
    /// Matches dropped because a wave-2 individual was claimed twice.
    pub duplicate_claims_dropped: usize,
}

impl Linkage {
    pub fn matches(&self) -> impl Iterator<Item = &LinkedPair> {
        self.pairs.iter().filter(|p| p.matched)
    }

    pub fn matched_ids(&self) -> std::collections::BTreeSet<(String, String)> {
        self.matches()
            .map(|p| (p.id1.clone(), p.id2.clone()))
            .collect()
    }

    /// Writes `individual_id_1,individual_id_2,q,matched_flag,household_pair`.
    pub fn write_csv(&self, path: &Path, matched_only: bool) -> Result<()> {
        write_matches_csv(
            path,
            self.pairs
                .iter()
                .filter(|p| p.matched || !matched_only)
                .map(|p| {
                    (
                        p.id1.as_str(),
                        p.id2.as_str(),
                        p.q,
                        p.matched,
                        format!("{}|{}", p.household1, p.household2),
                    )
                }),
        )
    }
    /// Reads a file written by [`Linkage::write_csv`]. Only the pair rows are
    /// stored in the file, so the unmatched lists and objective are left empty.
    pub fn read_csv(path: &Path) -> Result<Self> {
        Ok(Linkage {
            pairs: read_matches_csv(path)?,
            ..Linkage::default()
        })
    }
}

/// Reads an individual match file (the format of [`write_matches_csv`]).
pub fn read_matches_csv(path: &Path) -> Result<Vec<LinkedPair>> {
    let parse_err = |row, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    read_table(
        path,
        &[
            "individual_id_1",
            "individual_id_2",
            "q",
            "matched_flag",
            "household_pair",
        ],
    )?
    .into_iter()
    .map(|(row, rec)| {
        let q: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(row, format!("invalid score {:?}", &rec[2])))?;
        let matched = match &rec[3] {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(row, format!("invalid matched_flag {other:?}"))),
        };
        let (h1, h2) = rec[4].split_once('|').ok_or_else(|| {
            parse_err(
                row,
                format!("household_pair {:?} is not of the form h1|h2", &rec[4]),
            )
        })?;
        Ok(LinkedPair {
            id1: rec[0].to_string(),
            id2: rec[1].to_string(),
            q,
            matched,
            household1: h1.to_string(),
            household2: h2.to_string(),
        })
    })
    .collect()
}

/// Shared writer for individual match files.
pub fn write_matches_csv<'a>(
    path: &Path,
    rows: impl Iterator<Item = (&'a str, &'a str, f64, bool, String)>,
) -> Result<()> {
    let err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record([
        "individual_id_1",
        "individual_id_2",
        "q",
        "matched_flag",
        "household_pair",
    ])
    .map_err(err)?;
    for (a, b, q, m, hh) in rows {
        w.write_record([a, b, &q.to_string(), if m { "1" } else { "0" }, &hh])
            .map_err(err)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Scores and assigns individuals within each predicted household match.
pub fn link_individuals(
    wave1: &Wave,
    wave2: &Wave,
    households: &HouseholdPrediction,
    model: &IndividualModel,
    schema: &AttributeSchema,
) -> Result<Linkage> {
    if model.weights.len() != schema.len() {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: model.weights.len(),
        });
    }
    let h1 = wave1.household_index();
    let h2 = wave2.household_index();
    let mut jobs = Vec::new();
    for p in households.matches() {
        let (a, b) = (
            &households.wave1_ids[p.s as usize],
            &households.wave2_ids[p.t as usize],
        );
        let s = *h1.get(a.as_str()).ok_or_else(|| Error::UnknownId {
            kind: "wave-1 household",
            id: a.clone(),
        })?;
        let t = *h2.get(b.as_str()).ok_or_else(|| Error::UnknownId {
            kind: "wave-2 household",
            id: b.clone(),
        })?;
        jobs.push((&wave1.households()[s], &wave2.households()[t]));
    }
    let space = FeatureSpace::new(schema, model.weights.year_scale());
    let alpha = model.alpha();
    let per_pair: Vec<Result<(Vec<LinkedPair>, f64)>> = jobs
        .par_iter()
        .map(|(hs, ht)| {
            let mut enc = Encoder::default();
            let es = enc.household(&space, hs);
            let et = enc.household(&space, ht);
            let (m, n) = (hs.len(), ht.len());
            let mut d = vec![0.0; space.len()];
            let mut q = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    space.feature_vector(es.member(i), et.member(j), &mut d);
                    let dist: f64 = d.iter().zip(alpha).map(|(x, a)| x * a).sum();
                    q.push(sigmoid(model.alpha0 - dist));
                }
            }
            let result = assign(&q, m, n)?;
            let mut matched = vec![false; m * n];
            for &(r, c) in &result.pairs {
                matched[r * n + c] = true;
            }
            let mut out = Vec::with_capacity(m * n);
            for i in 0..m {
                for j in 0..n {
                    out.push(LinkedPair {
                        id1: hs.members[i].id.clone(),
                        id2: ht.members[j].id.clone(),
                        q: q[i * n + j],
                        matched: matched[i * n + j],
                        household1: hs.id.clone(),
                        household2: ht.id.clone(),
                    });
                }
            }
            Ok((out, result.objective))
        })
        .collect();

    let mut linkage = Linkage::default();
    for r in per_pair {
        let (pairs, _) = r?;
        linkage.pairs.extend(pairs);
    }
    // a wave-2 individual can only be claimed twice if household matching was many-to-one
    let mut claims: HashMap<String, usize> = HashMap::new();
    for i in 0..linkage.pairs.len() {
        if !linkage.pairs[i].matched {
            continue;
        }
        let id2 = linkage.pairs[i].id2.clone();
        match claims.get(&id2) {
            None => {
                claims.insert(id2, i);
            }
            Some(&prev) => {
                linkage.duplicate_claims_dropped += 1;
                if linkage.pairs[i].q > linkage.pairs[prev].q {
                    linkage.pairs[prev].matched = false;
                    claims.insert(id2, i);
                } else {
                    linkage.pairs[i].matched = false;
                }
            }
        }
    }
    if linkage.duplicate_claims_dropped > 0 {
        log::warn!(
            "{} duplicate claims on wave-2 individuals were dropped",
            linkage.duplicate_claims_dropped
        );
    }
    linkage.objective = linkage.matches().map(|p| p.q).sum();
    let matched1: std::collections::HashSet<&str> =
        linkage.matches().map(|p| p.id1.as_str()).collect();
    let matched2: std::collections::HashSet<&str> =
        linkage.matches().map(|p| p.id2.as_str()).collect();
    let unmatched1 = wave1
        .individuals()
        .filter(|i| !matched1.contains(i.id.as_str()))
        .map(|i| i.id.clone())
        .collect();
    let unmatched2 = wave2
        .individuals()
        .filter(|i| !matched2.contains(i.id.as_str()))
        .map(|i| i.id.clone())
        .collect();
    linkage.unmatched_wave1 = unmatched1;
    linkage.unmatched_wave2 = unmatched2;
    Ok(linkage)
}
