//! Household matching: a logistic model on the learned-weight Hausdorff
//! distance, `p = sigmoid(beta0 - delta)`, fitted by maximum likelihood with
//! nonnegative feature weights, plus a threshold calibrated to the known match
//! proportion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{read_table, AttributeSchema, GroundTruth, Wave};
use crate::distance::{
    candidate_pairs, EncodedWave, Encoder, FeatureSpace, FeatureWeights, DEFAULT_YEAR_SCALE,
};
use crate::optim::{minimize, Bounds, MinimizeOptions};
use crate::stats::{log_sigmoid, sigmoid};
use crate::{Error, Result};

/// Fixed-size chunks keep the reduction order independent of the thread count.
const CHUNK: usize = 4096;

pub fn match_probability(delta: f64, beta0: f64) -> f64 {
    sigmoid(beta0 - delta)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub log_likelihood: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub n_pairs: usize,
    pub n_positive: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdModel {
    pub beta0: f64,
    pub weights: FeatureWeights,
    pub tau: f64,
    pub diagnostics: FitDiagnostics,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    beta0: f64,
    beta: Vec<f64>,
    year_scale: f64,
    tau: f64,
    #[serde(default)]
    diagnostics: FitDiagnostics,
}

impl HouseholdModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile {
            beta0: self.beta0,
            beta: self.weights.beta().to_vec(),
            year_scale: self.weights.year_scale(),
            tau: self.tau,
            diagnostics: self.diagnostics.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ModelFile = serde_json::from_str(text)?;
        if !(0.0..=1.0).contains(&f.tau) {
            return Err(Error::Config(format!("tau {} is outside [0, 1]", f.tau)));
        }
        Ok(HouseholdModel {
            beta0: f.beta0,
            weights: FeatureWeights::new(f.beta, f.year_scale)?,
            tau: f.tau,
            diagnostics: f.diagnostics,
        })
    }

    /// Parameter vector `(beta0, beta_1, ..., beta_K)`.
    pub fn params(&self) -> Vec<f64> {
        std::iter::once(self.beta0)
            .chain(self.weights.beta().iter().copied())
            .collect()
    }
}

/// How the training pairs are drawn from the candidate set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub enum PairSampling {
    /// Every candidate pair (all wave-1 x wave-2 pairs, or all within-block pairs).
    #[default]
    All,
    /// All positives plus `ratio` uniformly drawn negatives per positive.
    /// Unweighted likelihood; not an unbiased estimate of the full one.
    SubsampleNegatives { ratio: usize, seed: u64 },
}

/// Encoded waves with the labeled household pairs entering the likelihood.
#[derive(Debug, Clone)]
pub struct HouseholdTrainingSet {
    space: FeatureSpace,
    wave1: EncodedWave,
    wave2: EncodedWave,
    pairs: Vec<(u32, u32)>,
    labels: Vec<bool>,
}

impl HouseholdTrainingSet {
    pub fn from_truth(
        wave1: &Wave,
        wave2: &Wave,
        truth: &GroundTruth,
        schema: &AttributeSchema,
        year_scale: f64,
        blocking: Option<&str>,
        sampling: &PairSampling,
    ) -> Result<Self> {
        let h1 = wave1.household_index();
        let h2 = wave2.household_index();
        let mut positives = BTreeSet::new();
        for (a, b) in &truth.household_pairs {
            let s = *h1.get(a.as_str()).ok_or_else(|| Error::UnknownId {
                kind: "wave-1 household",
                id: a.clone(),
            })?;
            let t = *h2.get(b.as_str()).ok_or_else(|| Error::UnknownId {
                kind: "wave-2 household",
                id: b.clone(),
            })?;
            positives.insert((s as u32, t as u32));
        }
        let mut pairs = candidate_pairs(wave1, wave2, schema, blocking)?;
        if let PairSampling::SubsampleNegatives { ratio, seed } = sampling {
            let (pos, neg): (Vec<_>, Vec<_>) =
                pairs.into_iter().partition(|p| positives.contains(p));
            let want = (ratio * pos.len()).min(neg.len());
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut picked: Vec<usize> =
                rand::seq::index::sample(&mut rng, neg.len(), want).into_vec();
            picked.sort_unstable();
            pairs = pos
                .into_iter()
                .chain(picked.into_iter().map(|i| neg[i]))
                .collect();
            pairs.sort_unstable();
        }
        let labels = pairs.iter().map(|p| positives.contains(p)).collect();
        Ok(Self::encode(
            wave1, wave2, schema, year_scale, pairs, labels,
        ))
    }

    /// Uses explicit labels, which must cover every candidate pair.
    pub fn from_labels(
        wave1: &Wave,
        wave2: &Wave,
        schema: &AttributeSchema,
        year_scale: f64,
        blocking: Option<&str>,
        labels: &BTreeMap<(String, String), bool>,
    ) -> Result<Self> {
        let pairs = candidate_pairs(wave1, wave2, schema, blocking)?;
        let mut out = Vec::with_capacity(pairs.len());
        for &(s, t) in &pairs {
            let key = (
                wave1.households()[s as usize].id.clone(),
                wave2.households()[t as usize].id.clone(),
            );
            match labels.get(&key) {
                Some(&y) => out.push(y),
                None => {
                    return Err(Error::InvalidData(format!(
                        "label table has no entry for household pair ({}, {})",
                        key.0, key.1
                    )))
                }
            }
        }
        Ok(Self::encode(wave1, wave2, schema, year_scale, pairs, out))
    }

    fn encode(
        wave1: &Wave,
        wave2: &Wave,
        schema: &AttributeSchema,
        year_scale: f64,
        pairs: Vec<(u32, u32)>,
        labels: Vec<bool>,
    ) -> Self {
        let space = FeatureSpace::new(schema, year_scale);
        let mut enc = Encoder::default();
        let e1 = enc.wave(&space, wave1);
        let e2 = enc.wave(&space, wave2);
        HouseholdTrainingSet {
            space,
            wave1: e1,
            wave2: e2,
            pairs,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.labels.iter().filter(|y| **y).count()
    }

    pub fn n_features(&self) -> usize {
        self.space.len()
    }

    /// Log-likelihood and its (sub)gradient with respect to `(beta0, beta)`.
    ///
    /// The weight gradient uses the feature distances of the member pair that
    /// attains the Hausdorff maximum.
    pub fn log_likelihood(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let k = self.space.len();
        assert_eq!(params.len(), k + 1, "expected {} parameters", k + 1);
        let (beta0, beta) = (params[0], &params[1..]);
        let partials: Vec<(f64, Vec<f64>)> = self
            .pairs
            .par_chunks(CHUNK)
            .zip(self.labels.par_chunks(CHUNK))
            .map(|(pairs, labels)| {
                let mut scratch = Vec::new();
                let mut value = 0.0;
                let mut grad = vec![0.0; k + 1];
                for (&(s, t), &y) in pairs.iter().zip(labels) {
                    let hs = &self.wave1.households[s as usize];
                    let ht = &self.wave2.households[t as usize];
                    let arg = self.space.hausdorff(hs, ht, beta, &mut scratch);
                    let eta = beta0 - arg.delta;
                    let (yf, p) = (if y { 1.0 } else { 0.0 }, sigmoid(eta));
                    value += if y {
                        log_sigmoid(eta)
                    } else {
                        log_sigmoid(-eta)
                    };
                    let r = yf - p;
                    grad[0] += r;
                    let idx = arg.row * ht.len() + arg.col;
                    let fv = &scratch[idx * k..(idx + 1) * k];
                    for (g, d) in grad[1..].iter_mut().zip(fv) {
                        *g -= r * d;
                    }
                }
                (value, grad)
            })
            .collect();
        let mut value = 0.0;
        let mut grad = vec![0.0; k + 1];
        for (v, g) in partials {
            value += v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (value, grad)
    }

    /// Smallest gap, over all scored pairs, between the attaining distance and
    /// any competitor whose feature vector differs. Small gaps mean the
    /// likelihood is near a kink at `beta`.
    pub fn kink_margin(&self, beta: &[f64]) -> f64 {
        let k = self.space.len();
        let mut margin = f64::INFINITY;
        let mut scratch = Vec::new();
        for &(s, t) in &self.pairs {
            let hs = &self.wave1.households[s as usize];
            let ht = &self.wave2.households[t as usize];
            let arg = self.space.hausdorff(hs, ht, beta, &mut scratch);
            let (m, n) = (hs.len(), ht.len());
            let fv = |idx: usize| &scratch[idx * k..(idx + 1) * k];
            let dist = |idx: usize| fv(idx).iter().zip(beta).map(|(d, b)| d * b).sum::<f64>();
            let best = arg.row * n + arg.col;
            for idx in 0..m * n {
                if fv(idx) != fv(best) {
                    margin = margin.min((dist(idx) - arg.delta).abs());
                }
            }
        }
        margin
    }
}

/// Household log-likelihood at `(beta0, beta)` for the labeled pairs.
pub fn household_log_likelihood(
    set: &HouseholdTrainingSet,
    beta0: f64,
    beta: &[f64],
) -> (f64, Vec<f64>) {
    let params: Vec<f64> = std::iter::once(beta0).chain(beta.iter().copied()).collect();
    set.log_likelihood(&params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HouseholdFitConfig {
    /// Starting `(beta0, beta_1..beta_K)`; defaults to `beta0 = 0`, unit weights.
    pub init: Option<Vec<f64>>,
    pub max_iter: usize,
    pub tol: f64,
    pub blocking: Option<String>,
    pub sampling: PairSampling,
    pub year_scale: f64,
}

impl Default for HouseholdFitConfig {
    fn default() -> Self {
        HouseholdFitConfig {
            init: None,
            max_iter: 500,
            tol: 1e-9,
            blocking: None,
            sampling: PairSampling::All,
            year_scale: DEFAULT_YEAR_SCALE,
        }
    }
}

/// Maximizes the household likelihood from `init` on a prepared training set.
/// Returns the parameters and diagnostics; no threshold.
pub fn maximize_likelihood(
    set: &HouseholdTrainingSet,
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, FitDiagnostics) {
    let objective = |x: &[f64]| {
        let (v, g) = set.log_likelihood(x);
        (-v, g.into_iter().map(|gi| -gi).collect::<Vec<_>>())
    };
    let bounds = Bounds::free_intercept(set.n_features() + 1);
    let opts = MinimizeOptions {
        max_iter,
        tol,
        ..MinimizeOptions::default()
    };
    let min = minimize(&objective, init, &bounds, &opts);
    let mut x = min.x;
    // the projection in the optimizer already clamps; keep weights exactly >= 0
    x[1..].iter_mut().for_each(|b| *b = b.max(0.0));
    let diag = FitDiagnostics {
        log_likelihood: -min.value,
        iterations: min.iterations,
        evaluations: min.evaluations,
        converged: min.converged,
        n_pairs: set.len(),
        n_positive: set.n_positive(),
    };
    (x, diag)
}

/// Fits the household model and calibrates its threshold on the training waves.
pub fn fit(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    schema: &AttributeSchema,
    config: &HouseholdFitConfig,
) -> Result<HouseholdModel> {
    if truth.household_pairs.is_empty() {
        return Err(Error::Degenerate(
            "no true household matches; the threshold cannot be calibrated".into(),
        ));
    }
    let k = schema.len();
    let init = match &config.init {
        Some(v) if v.len() != k + 1 => {
            return Err(Error::Dimension {
                expected: k + 1,
                got: v.len(),
            })
        }
        Some(v) => v.clone(),
        None => std::iter::once(0.0)
            .chain(std::iter::repeat(1.0).take(k))
            .collect(),
    };
    let set = HouseholdTrainingSet::from_truth(
        wave1,
        wave2,
        truth,
        schema,
        config.year_scale,
        config.blocking.as_deref(),
        &config.sampling,
    )?;
    if set.n_positive() == 0 {
        return Err(Error::Degenerate(
            "no true household pair is among the scored pairs".into(),
        ));
    }
    let (params, diagnostics) = maximize_likelihood(&set, &init, config.max_iter, config.tol);
    if !diagnostics.converged {
        log::warn!(
            "household fit did not converge after {} iterations",
            diagnostics.iterations
        );
    }
    let mut model = HouseholdModel {
        beta0: params[0],
        weights: FeatureWeights::new(params[1..].to_vec(), config.year_scale)?,
        tau: 0.0,
        diagnostics,
    };
    let options = PredictOptions {
        blocking: config.blocking.clone(),
        one_to_one: false,
    };
    let scored = predict(wave1, wave2, &model, schema, &options)?;
    let target = truth.household_pairs.len() as f64 / wave1.n_households() as f64;
    model.tau = calibrate_tau(&scored.max_probabilities(), target.min(1.0))?;
    Ok(model)
}

/// Largest threshold whose match proportion among wave-1 households is
/// closest to `target`. Households without candidates enter as `-inf`.
///
/// Candidates are the observed maxima plus 0 and 1.
pub fn calibrate_tau(max_probabilities: &[f64], target: f64) -> Result<f64> {
    if max_probabilities.is_empty() {
        return Err(Error::InvalidData(
            "no household probabilities to calibrate on".into(),
        ));
    }
    if !(target > 0.0 && target <= 1.0) {
        return Err(Error::Config(format!(
            "target proportion {target} is outside (0, 1]"
        )));
    }
    let mut sorted: Vec<f64> = max_probabilities.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut candidates: Vec<f64> = sorted.iter().copied().filter(|p| p.is_finite()).collect();
    candidates.extend([0.0, 1.0]);
    candidates.sort_by(|a, b| b.total_cmp(a));
    candidates.dedup();
    let n = sorted.len() as f64;
    let mut best = (f64::INFINITY, 1.0);
    for tau in candidates {
        let count = sorted.partition_point(|&p| p >= tau);
        let gap = (count as f64 / n - target).abs();
        if gap < best.0 {
            best = (gap, tau);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictOptions {
    pub blocking: Option<String>,
    /// Keep only the most probable wave-1 claimant of each wave-2 household.
    pub one_to_one: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub s: u32,
    pub t: u32,
    pub p: f64,
    pub matched: bool,
}

/// Scored household pairs with match decisions, ordered by `s`, then `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseholdPrediction {
    pub wave1_ids: Vec<String>,
    pub wave2_ids: Vec<String>,
    pub pairs: Vec<ScoredPair>,
    pub tau: f64,
    /// Wave-1 households whose best probability was shared by several candidates.
    pub ties: Vec<u32>,
    /// Matches removed by the one-to-one filter.
    pub dropped_by_one_to_one: usize,
    offsets: Vec<usize>,
}

impl HouseholdPrediction {
    /// Applies the decision rule to scored pairs (sorted by `s`, then `t`).
    pub fn decide(
        wave1_ids: Vec<String>,
        wave2_ids: Vec<String>,
        scores: Vec<(u32, u32, f64)>,
        tau: f64,
        one_to_one: bool,
    ) -> Self {
        let mut pairs: Vec<ScoredPair> = scores
            .into_iter()
            .map(|(s, t, p)| ScoredPair {
                s,
                t,
                p,
                matched: false,
            })
            .collect();
        pairs.sort_by_key(|p| (p.s, p.t));
        let mut offsets = vec![0; wave1_ids.len() + 1];
        for p in &pairs {
            offsets[p.s as usize + 1] += 1;
        }
        for i in 0..wave1_ids.len() {
            offsets[i + 1] += offsets[i];
        }
        let mut ties = Vec::new();
        for s in 0..wave1_ids.len() {
            let group = &pairs[offsets[s]..offsets[s + 1]];
            let Some((best_idx, best_p)) = group
                .iter()
                .enumerate()
                .reduce(|best, cur| {
                    let better = cur.1.p > best.1.p
                        || (cur.1.p == best.1.p
                            && wave2_ids[cur.1.t as usize] < wave2_ids[best.1.t as usize]);
                    if better {
                        cur
                    } else {
                        best
                    }
                })
                .map(|(i, p)| (i, p.p))
            else {
                continue;
            };
            if group.iter().filter(|p| p.p == best_p).count() > 1 {
                ties.push(s as u32);
            }
            if best_p >= tau {
                pairs[offsets[s] + best_idx].matched = true;
            }
        }
        let mut dropped = 0;
        if one_to_one {
            let mut claims: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, p) in pairs.iter().enumerate().filter(|(_, p)| p.matched) {
                claims.entry(p.t).or_default().push(i);
            }
            for idxs in claims.values().filter(|v| v.len() > 1) {
                let keep = *idxs
                    .iter()
                    .reduce(|a, b| {
                        let (pa, pb) = (&pairs[*a], &pairs[*b]);
                        if pb.p > pa.p
                            || (pb.p == pa.p && wave1_ids[pb.s as usize] < wave1_ids[pa.s as usize])
                        {
                            b
                        } else {
                            a
                        }
                    })
                    .expect("non-empty");
                for &i in idxs {
                    if i != keep {
                        pairs[i].matched = false;
                        dropped += 1;
                    }
                }
            }
        }
        HouseholdPrediction {
            wave1_ids,
            wave2_ids,
            pairs,
            tau,
            ties,
            dropped_by_one_to_one: dropped,
            offsets,
        }
    }

    /// Scored pairs of wave-1 household `s`.
    pub fn candidates(&self, s: usize) -> &[ScoredPair] {
        &self.pairs[self.offsets[s]..self.offsets[s + 1]]
    }

    /// Best probability per wave-1 household, `-inf` when it has no candidates.
    pub fn max_probabilities(&self) -> Vec<f64> {
        (0..self.wave1_ids.len())
            .map(|s| {
                self.candidates(s)
                    .iter()
                    .map(|p| p.p)
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect()
    }

    pub fn matches(&self) -> impl Iterator<Item = &ScoredPair> {
        self.pairs.iter().filter(|p| p.matched)
    }

    /// Matched household id pairs.
    pub fn matched_ids(&self) -> BTreeSet<(String, String)> {
        self.matches()
            .map(|p| {
                (
                    self.wave1_ids[p.s as usize].clone(),
                    self.wave2_ids[p.t as usize].clone(),
                )
            })
            .collect()
    }

    /// Writes `household_id_1,household_id_2,p,match_flag`; with `matched_only`
    /// only decided matches are written.
    pub fn write_csv(&self, path: &Path, matched_only: bool) -> Result<()> {
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["household_id_1", "household_id_2", "p", "match_flag"])
            .map_err(err)?;
        for p in self.pairs.iter().filter(|p| p.matched || !matched_only) {
            w.write_record([
                self.wave1_ids[p.s as usize].as_str(),
                self.wave2_ids[p.t as usize].as_str(),
                &p.p.to_string(),
                if p.matched { "1" } else { "0" },
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
    /// Reads a file written by [`HouseholdPrediction::write_csv`], keeping the
    /// stored match flags. Ids are resolved against the given household id
    /// lists (normally those of the two waves).
    pub fn read_csv(
        path: &Path,
        wave1_ids: Vec<String>,
        wave2_ids: Vec<String>,
        tau: f64,
    ) -> Result<Self> {
        let index = |ids: &[String]| -> HashMap<String, u32> {
            ids.iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), i as u32))
                .collect()
        };
        let (idx1, idx2) = (index(&wave1_ids), index(&wave2_ids));
        let parse_err = |row, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            message,
        };
        let mut scores = Vec::new();
        let mut flags = BTreeMap::new();
        for (row, rec) in read_table(
            path,
            &["household_id_1", "household_id_2", "p", "match_flag"],
        )? {
            let s = *idx1
                .get(&rec[0])
                .ok_or_else(|| parse_err(row, format!("unknown wave-1 household {:?}", &rec[0])))?;
            let t = *idx2
                .get(&rec[1])
                .ok_or_else(|| parse_err(row, format!("unknown wave-2 household {:?}", &rec[1])))?;
            let p: f64 = rec[2]
                .parse()
                .map_err(|_| parse_err(row, format!("invalid probability {:?}", &rec[2])))?;
            let matched = match &rec[3] {
                "1" => true,
                "0" => false,
                other => return Err(parse_err(row, format!("invalid match_flag {other:?}"))),
            };
            if flags.insert((s, t), matched).is_some() {
                return Err(parse_err(row, "duplicate household pair".into()));
            }
            scores.push((s, t, p));
        }
        let mut pred =
            HouseholdPrediction::decide(wave1_ids, wave2_ids, scores, f64::INFINITY, false);
        pred.tau = tau;
        for p in &mut pred.pairs {
            p.matched = flags[&(p.s, p.t)];
        }
        Ok(pred)
    }
}

/// Scores every candidate household pair and applies the argmax-and-threshold rule.
pub fn predict(
    wave1: &Wave,
    wave2: &Wave,
    model: &HouseholdModel,
    schema: &AttributeSchema,
    options: &PredictOptions,
) -> Result<HouseholdPrediction> {
    if model.weights.len() != schema.len() {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: model.weights.len(),
        });
    }
    let pairs = candidate_pairs(wave1, wave2, schema, options.blocking.as_deref())?;
    let space = FeatureSpace::new(schema, model.weights.year_scale());
    let mut enc = Encoder::default();
    let e1 = enc.wave(&space, wave1);
    let e2 = enc.wave(&space, wave2);
    let beta = model.weights.beta();
    let scores: Vec<(u32, u32, f64)> = pairs
        .par_iter()
        .map_init(Vec::new, |scratch, &(s, t)| {
            let arg = space.hausdorff(
                &e1.households[s as usize],
                &e2.households[t as usize],
                beta,
                scratch,
            );
            (s, t, match_probability(arg.delta, model.beta0))
        })
        .collect();
    Ok(HouseholdPrediction::decide(
        wave1.households().iter().map(|h| h.id.clone()).collect(),
        wave2.households().iter().map(|h| h.id.clone()).collect(),
        scores,
        model.tau,
        options.one_to_one,
    ))
}

/// Where the true partner of each matched wave-1 household ranks among its
/// candidates by descending probability (ties share the best rank).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankHistogram {
    /// Counts for ranks 1, 2, 3, 4 and 5 or worse.
    pub counts: [usize; 5],
    /// True pairs that were never scored (excluded by blocking).
    pub unscored: usize,
}

impl RankHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.unscored
    }

    /// Percentage of truly matched households per rank bucket.
    pub fn shares(&self) -> [f64; 5] {
        let total = self.total().max(1) as f64;
        self.counts.map(|c| 100.0 * c as f64 / total)
    }
}

pub fn rank_of_truth(prediction: &HouseholdPrediction, truth: &GroundTruth) -> RankHistogram {
    let s_index: BTreeMap<&str, usize> = prediction
        .wave1_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut hist = RankHistogram::default();
    for (a, b) in &truth.household_pairs {
        let Some(&s) = s_index.get(a.as_str()) else {
            continue;
        };
        let group = prediction.candidates(s);
        let Some(own) = group
            .iter()
            .find(|p| prediction.wave2_ids[p.t as usize] == *b)
        else {
            hist.unscored += 1;
            continue;
        };
        let rank = 1 + group.iter().filter(|p| p.p > own.p).count();
        hist.counts[rank.min(5) - 1] += 1;
    }
    hist
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Feature, Household, Individual, Value};

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn prediction_csv_round_trip_keeps_flags() {
        let scores = vec![(0, 0, 0.9), (0, 1, 0.2), (1, 1, 0.7), (1, 0, 0.7)];
        let mut pred = HouseholdPrediction::decide(ids("a", 3), ids("b", 2), scores, 0.5, false);
        // a flag that the rule would not produce must survive the round trip
        pred.pairs[1].matched = true;
        let f = tempfile::NamedTempFile::new().unwrap();
        pred.write_csv(f.path(), false).unwrap();
        let back = HouseholdPrediction::read_csv(f.path(), ids("a", 3), ids("b", 2), 0.5).unwrap();
        assert_eq!(back.pairs, pred.pairs);
        assert_eq!(back.matched_ids(), pred.matched_ids());
        assert!(back.candidates(2).is_empty());
        assert!(matches!(
            HouseholdPrediction::read_csv(f.path(), ids("a", 1), ids("b", 2), 0.5),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn probability_values() {
        assert_eq!(match_probability(1.3, 1.3), 0.5);
        assert_eq!(match_probability(0.0, 0.0), 0.5);
        assert!((match_probability(3f64.ln(), 0.0) - 0.25).abs() < 1e-15);
        let tiny = match_probability(1000.0, 0.0);
        assert!(tiny >= 0.0 && tiny.is_finite());
        assert_eq!(match_probability(0.0, 1000.0), 1.0);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(calibrate_tau(&[0.9, 0.8, 0.2, 0.1], 0.5).unwrap(), 0.8);
        assert_eq!(calibrate_tau(&[0.9, 0.8, 0.2, 0.1], 1.0).unwrap(), 0.1);
        // 0.25 and 0.75 are equally close to 0.5; the larger threshold wins
        assert_eq!(calibrate_tau(&[0.9, 0.6, 0.6, 0.1], 0.5).unwrap(), 0.9);
        assert_eq!(calibrate_tau(&[0.3, f64::NEG_INFINITY], 1.0).unwrap(), 0.3);
        assert!(calibrate_tau(&[], 0.5).is_err());
        assert!(calibrate_tau(&[0.5], 0.0).is_err());
    }

    #[test]
    fn decisions_follow_argmax_and_threshold() {
        let scores = vec![(0, 0, 0.2), (0, 1, 0.4), (1, 0, 0.05), (1, 1, 0.01)];
        let pred =
            HouseholdPrediction::decide(ids("a", 2), ids("b", 2), scores.clone(), 0.3, false);
        let m: Vec<_> = pred.matches().map(|p| (p.s, p.t)).collect();
        assert_eq!(m, vec![(0, 1)]);

        let none =
            HouseholdPrediction::decide(ids("a", 2), ids("b", 2), scores.clone(), 0.9, false);
        assert_eq!(none.matches().count(), 0);

        let all = HouseholdPrediction::decide(ids("a", 2), ids("b", 2), scores, 0.0, false);
        assert_eq!(all.matches().count(), 2);
    }

    #[test]
    fn argmax_ties_go_to_the_smaller_id() {
        let w2 = vec!["z".to_string(), "m".to_string()];
        let pred = HouseholdPrediction::decide(
            ids("a", 1),
            w2,
            vec![(0, 0, 0.7), (0, 1, 0.7)],
            0.5,
            false,
        );
        let m: Vec<_> = pred.matches().map(|p| p.t).collect();
        assert_eq!(m, vec![1]);
        assert_eq!(pred.ties, vec![0]);
    }

    #[test]
    fn one_to_one_filter_keeps_the_best_claim() {
        let scores = vec![(0, 0, 0.6), (1, 0, 0.8), (2, 0, 0.8), (2, 1, 0.1)];
        let many =
            HouseholdPrediction::decide(ids("a", 3), ids("b", 2), scores.clone(), 0.5, false);
        assert_eq!(many.matches().count(), 3);
        let one = HouseholdPrediction::decide(ids("a", 3), ids("b", 2), scores, 0.5, true);
        let m: Vec<_> = one.matches().map(|p| (p.s, p.t)).collect();
        assert_eq!(m, vec![(1, 0)]);
        assert_eq!(one.dropped_by_one_to_one, 2);
    }

    #[test]
    fn decisions_invariant_under_monotone_transform() {
        let scores = vec![
            (0, 0, 0.2),
            (0, 1, 0.4),
            (1, 0, 0.35),
            (1, 1, 0.01),
            (2, 1, 0.3),
        ];
        let base =
            HouseholdPrediction::decide(ids("a", 3), ids("b", 2), scores.clone(), 0.3, false);
        let f = |p: f64| p.sqrt() * 3.0 + 1.0;
        let mapped = scores.iter().map(|&(s, t, p)| (s, t, f(p))).collect();
        let other = HouseholdPrediction::decide(ids("a", 3), ids("b", 2), mapped, f(0.3), false);
        assert_eq!(base.matched_ids(), other.matched_ids());
    }

    #[test]
    fn ranks_use_competition_ranking() {
        let w1 = ids("a", 2);
        let w2 = ids("b", 2);
        let truth = GroundTruth::new([("a0".into(), "b0".into()), ("a1".into(), "b1".into())], []);
        let uniform = HouseholdPrediction::decide(
            w1.clone(),
            w2.clone(),
            vec![(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)],
            0.0,
            false,
        );
        assert_eq!(rank_of_truth(&uniform, &truth).counts, [2, 0, 0, 0, 0]);
        let worse = HouseholdPrediction::decide(
            w1,
            w2,
            vec![(0, 0, 0.9), (0, 1, 0.1), (1, 0, 0.9), (1, 1, 0.1)],
            0.0,
            false,
        );
        let hist = rank_of_truth(&worse, &truth);
        assert_eq!(hist.counts, [1, 1, 0, 0, 0]);
        assert_eq!(hist.shares()[0], 50.0);
    }

    fn tiny_waves() -> (Wave, Wave, AttributeSchema) {
        let schema =
            AttributeSchema::new(vec![Feature::categorical("SEX"), Feature::year("ANASC")])
                .unwrap();
        let hh = |hid: &str, people: &[(&str, i32)]| {
            let members = people
                .iter()
                .enumerate()
                .map(|(i, (s, y))| {
                    Individual::new(
                        format!("{hid}-{i}"),
                        hid,
                        vec![Value::code(s), Value::Year(*y)],
                    )
                })
                .collect();
            Household::new(hid, members).unwrap()
        };
        let w1 = Wave::new(
            "1",
            vec![
                hh("A", &[("1", 1950), ("2", 1952)]),
                hh("B", &[("1", 1990)]),
            ],
        )
        .unwrap();
        let w2 = Wave::new(
            "2",
            vec![
                hh("X", &[("1", 1990)]),
                hh("Y", &[("2", 1952), ("1", 1950)]),
            ],
        )
        .unwrap();
        (w1, w2, schema)
    }

    #[test]
    fn likelihood_closed_forms() {
        let (w1, w2, schema) = tiny_waves();
        let truth = GroundTruth::new([("A".into(), "Y".into()), ("B".into(), "X".into())], []);
        let set = HouseholdTrainingSet::from_truth(
            &w1,
            &w2,
            &truth,
            &schema,
            50.0,
            None,
            &PairSampling::All,
        )
        .unwrap();
        assert_eq!(set.len(), 4);
        let (v, _) = household_log_likelihood(&set, 0.0, &[0.0, 0.0]);
        assert!((v - 4.0 * 0.5f64.ln()).abs() < 1e-12);

        // single pair, y = 1, delta = 0, beta0 = 0
        let one = GroundTruth::new([("B".into(), "X".into())], []);
        let w1b = Wave::new("1", vec![w1.households()[1].clone()]).unwrap();
        let w2b = Wave::new("2", vec![w2.households()[0].clone()]).unwrap();
        let set = HouseholdTrainingSet::from_truth(
            &w1b,
            &w2b,
            &one,
            &schema,
            50.0,
            None,
            &PairSampling::All,
        )
        .unwrap();
        let (v, g) = household_log_likelihood(&set, 0.0, &[1.0, 1.0]);
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
        assert!((g[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn label_table_must_be_complete() {
        let (w1, w2, schema) = tiny_waves();
        let mut labels = BTreeMap::new();
        labels.insert(("A".to_string(), "X".to_string()), false);
        labels.insert(("A".to_string(), "Y".to_string()), true);
        labels.insert(("B".to_string(), "X".to_string()), true);
        assert!(HouseholdTrainingSet::from_labels(&w1, &w2, &schema, 50.0, None, &labels).is_err());
        labels.insert(("B".to_string(), "Y".to_string()), false);
        let set =
            HouseholdTrainingSet::from_labels(&w1, &w2, &schema, 50.0, None, &labels).unwrap();
        assert_eq!(set.n_positive(), 2);
    }

    #[test]
    fn fit_rejects_empty_truth() {
        let (w1, w2, schema) = tiny_waves();
        let err = fit(
            &w1,
            &w2,
            &GroundTruth::default(),
            &schema,
            &HouseholdFitConfig::default(),
        );
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn model_json_round_trip() {
        let model = HouseholdModel {
            beta0: -0.27,
            weights: FeatureWeights::new(vec![2.82, 13.74], 50.0).unwrap(),
            tau: 0.11,
            diagnostics: FitDiagnostics::default(),
        };
        let text = model.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["beta0", "beta", "year_scale", "tau", "diagnostics"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(HouseholdModel::from_json(&text).unwrap(), model);
    }

    #[test]
    fn subsampling_keeps_all_positives() {
        let cfg = crate::data::SyntheticConfig {
            n_households: 40,
            ..Default::default()
        };
        let (w1, w2, truth) = crate::data::generate_synthetic(&cfg).unwrap();
        let schema = AttributeSchema::shiw_default();
        let sampling = PairSampling::SubsampleNegatives { ratio: 3, seed: 5 };
        let set =
            HouseholdTrainingSet::from_truth(&w1, &w2, &truth, &schema, 50.0, None, &sampling)
                .unwrap();
        let pos = truth.household_pairs.len();
        assert_eq!(set.n_positive(), pos);
        assert_eq!(set.len(), pos * 4);
    }
}
