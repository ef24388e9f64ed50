//! Fellegi-Sunter baseline: binary agreement patterns over blocked individual
//! pairs, conditional-independence mixture fitted by EM, posterior match
//! probabilities and a greedy one-to-one decision.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{AttributeSchema, Individual, Value, Wave};
use crate::distance::value_distance;
use crate::individual::write_matches_csv;
use crate::{Error, Result};

const CLAMP: f64 = 1e-6;
/// Relative size of a log-likelihood change that is indistinguishable from
/// rounding in its evaluation.
const LL_RESOLUTION: f64 = 1e-13;

/// Agreement bitmask: bit `k` is set when feature `k` agrees exactly.
pub type Pattern = u32;

/// Component `k` is true iff feature `k` has distance zero (exact agreement;
/// missing never agrees).
pub fn agreement_pattern(a: &Individual, b: &Individual, schema: &AttributeSchema) -> Vec<bool> {
    (0..schema.len())
        .map(|k| value_distance(&a.values[k], &b.values[k], schema.kind(k), 1.0) == 0.0)
        .collect()
}

pub fn pattern_bits(agree: &[bool]) -> Pattern {
    agree
        .iter()
        .enumerate()
        .fold(0, |acc, (k, &a)| if a { acc | (1 << k) } else { acc })
}

fn agrees(p: Pattern, k: usize) -> bool {
    p & (1 << k) != 0
}

/// Individual pairs sharing every blocking value, as `(wave-1 index,
/// wave-2 index)` into the waves' individual order, sorted. A missing key
/// never matches anything.
pub fn blocked_pairs(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    keys: &[String],
) -> Result<Vec<(u32, u32)>> {
    let cols: Vec<usize> = keys
        .iter()
        .map(|k| schema.require(k))
        .collect::<Result<_>>()?;
    let key_of = |ind: &'_ Individual| -> Option<Vec<Value>> {
        let vals: Vec<Value> = cols.iter().map(|&c| ind.values[c].clone()).collect();
        if vals.iter().any(Value::is_missing) {
            None
        } else {
            Some(vals)
        }
    };
    let mut index: HashMap<Vec<Value>, Vec<u32>> = HashMap::new();
    for (j, ind) in wave2.individuals().enumerate() {
        if let Some(key) = key_of(ind) {
            index.entry(key).or_default().push(j as u32);
        }
    }
    let mut out = Vec::new();
    for (i, ind) in wave1.individuals().enumerate() {
        if let Some(js) = key_of(ind).and_then(|k| index.get(&k)) {
            out.extend(js.iter().map(|&j| (i as u32, j)));
        }
    }
    Ok(out)
}

/// Number of blocked pairs computed from block sizes alone.
pub fn blocked_pair_count(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    keys: &[String],
) -> Result<usize> {
    let cols: Vec<usize> = keys
        .iter()
        .map(|k| schema.require(k))
        .collect::<Result<_>>()?;
    let sizes = |w: &Wave| {
        let mut m: BTreeMap<Vec<String>, usize> = BTreeMap::new();
        for ind in w.individuals() {
            if cols.iter().all(|&c| !ind.values[c].is_missing()) {
                *m.entry(cols.iter().map(|&c| ind.values[c].to_cell()).collect())
                    .or_default() += 1;
            }
        }
        m
    };
    let (a, b) = (sizes(wave1), sizes(wave2));
    Ok(a.iter()
        .map(|(k, n)| n * b.get(k).copied().unwrap_or(0))
        .sum())
}

/// Counts of each observed agreement pattern, in pattern order.
pub fn pattern_counts(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    pairs: &[(u32, u32)],
) -> BTreeMap<Pattern, f64> {
    let p1: Vec<&Individual> = wave1.individuals().collect();
    let p2: Vec<&Individual> = wave2.individuals().collect();
    let mut counts = BTreeMap::new();
    for &(i, j) in pairs {
        let bits = pattern_bits(&agreement_pattern(p1[i as usize], p2[j as usize], schema));
        *counts.entry(bits).or_insert(0.0) += 1.0;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub m0: f64,
    pub u0: f64,
    pub pi0: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iter: 1000,
            tol: 1e-8,
            m0: 0.9,
            u0: 0.1,
            pi0: 0.05,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Log-likelihood before the first update and after each iteration.
    pub log_likelihood: Vec<f64>,
    /// Iterations where the log-likelihood decreased beyond rounding.
    pub monotonicity_violations: usize,
    /// Features whose fitted m does not exceed u.
    pub inverted_features: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsModel {
    pub m: Vec<f64>,
    pub u: Vec<f64>,
    pub pi: f64,
    pub threshold: f64,
    pub blocking_keys: Vec<String>,
    #[serde(default)]
    pub diagnostics: EmDiagnostics,
}

impl FsModel {
    fn log_components(&self, p: Pattern) -> (f64, f64) {
        let mut lm = self.pi.ln();
        let mut lu = (1.0 - self.pi).ln();
        for k in 0..self.m.len() {
            if agrees(p, k) {
                lm += self.m[k].ln();
                lu += self.u[k].ln();
            } else {
                lm += (1.0 - self.m[k]).ln();
                lu += (1.0 - self.u[k]).ln();
            }
        }
        (lm, lu)
    }

    /// Posterior match probability of an agreement pattern.
    pub fn posterior(&self, p: Pattern) -> f64 {
        let (lm, lu) = self.log_components(p);
        crate::stats::sigmoid(lm - lu)
    }

    fn log_likelihood(&self, counts: &BTreeMap<Pattern, f64>) -> f64 {
        counts
            .iter()
            .map(|(&p, &c)| {
                let (lm, lu) = self.log_components(p);
                let top = lm.max(lu);
                c * (top + ((lm - top).exp() + (lu - top).exp()).ln())
            })
            .sum()
    }
}

/// Fits the two-class mixture to the pattern counts by EM.
pub fn fs_em_fit(
    counts: &BTreeMap<Pattern, f64>,
    schema: &AttributeSchema,
    blocking_keys: &[String],
    options: &EmOptions,
) -> Result<FsModel> {
    let k = schema.len();
    if k > 32 {
        return Err(Error::Schema(format!(
            "agreement patterns support at most 32 features, got {k}"
        )));
    }
    if counts.len() < 2 {
        return Err(Error::Degenerate(format!(
            "EM needs at least two distinct agreement patterns, found {}",
            counts.len()
        )));
    }
    let clamp = |x: f64| x.clamp(CLAMP, 1.0 - CLAMP);
    let mut model = FsModel {
        m: vec![options.m0; k],
        u: vec![options.u0; k],
        pi: options.pi0,
        threshold: 0.5,
        blocking_keys: blocking_keys.to_vec(),
        diagnostics: EmDiagnostics::default(),
    };
    let total: f64 = counts.values().sum();
    let mut ll = model.log_likelihood(counts);
    let mut diag = EmDiagnostics {
        log_likelihood: vec![ll],
        ..Default::default()
    };
    for _ in 0..options.max_iter {
        diag.iterations += 1;
        let mut mass = 0.0;
        let mut agree_m = vec![0.0; k];
        let mut agree_u = vec![0.0; k];
        for (&p, &c) in counts {
            let g = model.posterior(p);
            mass += c * g;
            for j in 0..k {
                if agrees(p, j) {
                    agree_m[j] += c * g;
                    agree_u[j] += c * (1.0 - g);
                }
            }
        }
        let rest = total - mass;
        let next_pi = clamp(mass / total);
        let next_m: Vec<f64> = agree_m
            .iter()
            .map(|a| clamp(if mass > 0.0 { a / mass } else { 0.5 }))
            .collect();
        let next_u: Vec<f64> = agree_u
            .iter()
            .map(|a| clamp(if rest > 0.0 { a / rest } else { 0.5 }))
            .collect();
        let change = std::iter::once((next_pi - model.pi).abs())
            .chain(next_m.iter().zip(&model.m).map(|(a, b)| (a - b).abs()))
            .chain(next_u.iter().zip(&model.u).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        let previous = (
            model.pi,
            std::mem::replace(&mut model.m, next_m),
            std::mem::replace(&mut model.u, next_u),
        );
        model.pi = next_pi;
        let next_ll = model.log_likelihood(counts);
        if next_ll < ll {
            if ll - next_ll <= LL_RESOLUTION * ll.abs().max(1.0) {
                // the step is below what the likelihood can resolve: keep the
                // previous parameters and stop
                (model.pi, model.m, model.u) = previous;
                diag.converged = true;
                break;
            }
            diag.monotonicity_violations += 1;
            log::warn!("EM log-likelihood decreased from {ll} to {next_ll}");
        }
        ll = next_ll;
        diag.log_likelihood.push(ll);
        if change < options.tol {
            diag.converged = true;
            break;
        }
    }
    diag.inverted_features = schema
        .names()
        .enumerate()
        .filter(|(j, _)| model.m[*j] <= model.u[*j])
        .map(|(_, n)| n.to_string())
        .collect();
    if !diag.inverted_features.is_empty() {
        log::warn!("m <= u after EM for features {:?}", diag.inverted_features);
    }
    model.diagnostics = diag;
    Ok(model)
}

/// Blocks, counts patterns and fits EM in one step.
pub fn fs_fit_waves(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    blocking_keys: &[String],
    options: &EmOptions,
) -> Result<FsModel> {
    let pairs = blocked_pairs(wave1, wave2, schema, blocking_keys)?;
    fs_em_fit(
        &pattern_counts(wave1, wave2, schema, &pairs),
        schema,
        blocking_keys,
        options,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FsPair {
    pub id1: String,
    pub id2: String,
    pub posterior: f64,
    pub matched: bool,
    pub household1: String,
    pub household2: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FsLinkage {
    /// Blocked pairs with posterior above the threshold, in decision order.
    pub candidates: Vec<FsPair>,
    pub n_compared: usize,
}

impl FsLinkage {
    pub fn matches(&self) -> impl Iterator<Item = &FsPair> {
        self.candidates.iter().filter(|p| p.matched)
    }

    pub fn matched_ids(&self) -> std::collections::BTreeSet<(String, String)> {
        self.matches()
            .map(|p| (p.id1.clone(), p.id2.clone()))
            .collect()
    }

    /// Same columns as the individual matcher's file; `household_pair` holds
    /// the two individuals' households.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_matches_csv(
            path,
            self.candidates.iter().map(|p| {
                (
                    p.id1.as_str(),
                    p.id2.as_str(),
                    p.posterior,
                    p.matched,
                    format!("{}|{}", p.household1, p.household2),
                )
            }),
        )
    }
}

/// Scores blocked pairs and resolves matches greedily by descending posterior.
pub fn fs_predict(
    wave1: &Wave,
    wave2: &Wave,
    model: &FsModel,
    schema: &AttributeSchema,
) -> Result<FsLinkage> {
    if model.m.len() != schema.len() || model.u.len() != schema.len() {
        return Err(Error::Dimension {
            expected: schema.len(),
            got: model.m.len(),
        });
    }
    let pairs = blocked_pairs(wave1, wave2, schema, &model.blocking_keys)?;
    let p1: Vec<&Individual> = wave1.individuals().collect();
    let p2: Vec<&Individual> = wave2.individuals().collect();
    let mut cache: HashMap<Pattern, f64> = HashMap::new();
    let mut candidates: Vec<FsPair> = Vec::new();
    for &(i, j) in &pairs {
        let (a, b) = (p1[i as usize], p2[j as usize]);
        let bits = pattern_bits(&agreement_pattern(a, b, schema));
        let post = *cache.entry(bits).or_insert_with(|| model.posterior(bits));
        if post > model.threshold {
            candidates.push(FsPair {
                id1: a.id.clone(),
                id2: b.id.clone(),
                posterior: post,
                matched: false,
                household1: a.household_id.clone(),
                household2: b.household_id.clone(),
            });
        }
    }
    candidates.sort_by(|x, y| {
        y.posterior
            .total_cmp(&x.posterior)
            .then_with(|| x.id1.cmp(&y.id1))
            .then_with(|| x.id2.cmp(&y.id2))
    });
    let mut used1 = std::collections::HashSet::new();
    let mut used2 = std::collections::HashSet::new();
    for c in candidates.iter_mut() {
        if !used1.contains(&c.id1) && !used2.contains(&c.id2) {
            used1.insert(c.id1.clone());
            used2.insert(c.id2.clone());
            c.matched = true;
        }
    }
    Ok(FsLinkage {
        candidates,
        n_compared: pairs.len(),
    })
}
