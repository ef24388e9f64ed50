//! Feature distances between individuals and the Hausdorff distance between
//! households.
//!
//! Categorical features contribute 0 on agreement and 1 otherwise; year
//! features contribute `|a - b| / year_scale`. A missing value on either side
//! is maximally dissimilar (1). The weighted distance between two individuals
//! is `sum_k beta_k * d_k`, and the household distance is the symmetric
//! Hausdorff distance over member sets under that weighted distance.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AttributeSchema, FeatureKind, Household, Individual, Value, Wave};
use crate::{Error, Result};

pub const DEFAULT_YEAR_SCALE: f64 = 50.0;

/// Nonnegative per-feature weights plus the divisor applied to year gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    beta: Vec<f64>,
    year_scale: f64,
}

impl FeatureWeights {
    pub fn new(beta: Vec<f64>, year_scale: f64) -> Result<Self> {
        if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::Config(format!(
                "feature weight {b} is not a finite nonnegative number"
            )));
        }
        if !(year_scale > 0.0 && year_scale.is_finite()) {
            return Err(Error::Config(format!(
                "year_scale must be positive, got {year_scale}"
            )));
        }
        Ok(FeatureWeights { beta, year_scale })
    }

    /// All weights equal to one, default year scale.
    pub fn unit(k: usize) -> Self {
        FeatureWeights {
            beta: vec![1.0; k],
            year_scale: DEFAULT_YEAR_SCALE,
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn year_scale(&self) -> f64 {
        self.year_scale
    }

    pub fn len(&self) -> usize {
        self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta.is_empty()
    }

    fn check(&self, schema: &AttributeSchema) -> Result<()> {
        if self.beta.len() != schema.len() {
            return Err(Error::Dimension {
                expected: schema.len(),
                got: self.beta.len(),
            });
        }
        Ok(())
    }
}

/// Distance between two values of one feature.
pub fn value_distance(a: &Value, b: &Value, kind: FeatureKind, year_scale: f64) -> f64 {
    match (a, b) {
        (Value::Missing | Value::MissingAtRandom, _)
        | (_, Value::Missing | Value::MissingAtRandom) => 1.0,
        (Value::Year(x), Value::Year(y)) if kind == FeatureKind::Year => {
            (x - y).abs() as f64 / year_scale
        }
        (x, y) => {
            if x == y {
                0.0
            } else {
                1.0
            }
        }
    }
}

/// Distance between two individuals on feature `k`.
pub fn feature_distance(
    a: &Individual,
    b: &Individual,
    k: usize,
    schema: &AttributeSchema,
    year_scale: f64,
) -> f64 {
    value_distance(&a.values[k], &b.values[k], schema.kind(k), year_scale)
}

/// Weighted sum of feature distances.
pub fn pair_distance(
    a: &Individual,
    b: &Individual,
    w: &FeatureWeights,
    schema: &AttributeSchema,
) -> Result<f64> {
    w.check(schema)?;
    for ind in [a, b] {
        if ind.values.len() != schema.len() {
            return Err(Error::Dimension {
                expected: schema.len(),
                got: ind.values.len(),
            });
        }
    }
    Ok((0..schema.len())
        .map(|k| w.beta[k] * feature_distance(a, b, k, schema, w.year_scale))
        .sum())
}

/// Member-by-member weighted distances between two households.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols.len() + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub fn distance_matrix(
    hs: &Household,
    ht: &Household,
    w: &FeatureWeights,
    schema: &AttributeSchema,
) -> Result<DistanceMatrix> {
    for h in [hs, ht] {
        if h.members.is_empty() {
            return Err(Error::EmptyHousehold(h.id.clone()));
        }
    }
    let mut values = Vec::with_capacity(hs.len() * ht.len());
    for a in &hs.members {
        for b in &ht.members {
            values.push(pair_distance(a, b, w, schema)?);
        }
    }
    Ok(DistanceMatrix {
        rows: hs.members.iter().map(|m| m.id.clone()).collect(),
        cols: ht.members.iter().map(|m| m.id.clone()).collect(),
        values,
    })
}

/// Hausdorff distance between the member sets of two households.
pub fn hausdorff(
    hs: &Household,
    ht: &Household,
    w: &FeatureWeights,
    schema: &AttributeSchema,
) -> Result<f64> {
    w.check(schema)?;
    for h in [hs, ht] {
        if h.members.is_empty() {
            return Err(Error::EmptyHousehold(h.id.clone()));
        }
    }
    let space = FeatureSpace::new(schema, w.year_scale);
    let mut enc = Encoder::default();
    let a = enc.household(&space, hs);
    let b = enc.household(&space, ht);
    let mut scratch = Vec::new();
    Ok(space.hausdorff(&a, &b, &w.beta, &mut scratch).delta)
}

// ---------------------------------------------------------------------------
// Encoded representation used by the fitting and scoring loops.

/// A feature value with categories interned to integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Code(u32),
    Year(i32),
    Missing,
}

/// Feature kinds plus the year divisor.
#[derive(Debug, Clone)]
pub struct FeatureSpace {
    kinds: Vec<FeatureKind>,
    year_scale: f64,
}

/// Maximizing member pair of a Hausdorff evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HausdorffArgmax {
    pub delta: f64,
    pub row: usize,
    pub col: usize,
}

impl FeatureSpace {
    pub fn new(schema: &AttributeSchema, year_scale: f64) -> Self {
        FeatureSpace {
            kinds: schema.features().iter().map(|f| f.kind).collect(),
            year_scale,
        }
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn year_scale(&self) -> f64 {
        self.year_scale
    }

    #[inline]
    pub fn cell_distance(&self, a: Cell, b: Cell) -> f64 {
        match (a, b) {
            (Cell::Missing, _) | (_, Cell::Missing) => 1.0,
            (Cell::Year(x), Cell::Year(y)) => (x - y).abs() as f64 / self.year_scale,
            (x, y) => {
                if x == y {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Writes the K feature distances of two encoded individuals into `out`.
    #[inline]
    pub fn feature_vector(&self, a: &[Cell], b: &[Cell], out: &mut [f64]) {
        for k in 0..self.kinds.len() {
            out[k] = self.cell_distance(a[k], b[k]);
        }
    }

    /// Hausdorff distance with the member pair that attains it.
    ///
    /// Each directed term keeps the first minimizing column (row) and the first
    /// maximizing row (column); when the two directed terms are equal the
    /// row-to-column pair is reported. `scratch` receives the feature vectors
    /// of every member pair, row-major.
    pub fn hausdorff(
        &self,
        hs: &EncodedHousehold,
        ht: &EncodedHousehold,
        beta: &[f64],
        scratch: &mut Vec<f64>,
    ) -> HausdorffArgmax {
        let k = self.kinds.len();
        let (m, n) = (hs.len(), ht.len());
        scratch.resize(m * n * (k + 1), 0.0);
        let (features, dist) = scratch.split_at_mut(m * n * k);
        for i in 0..m {
            for j in 0..n {
                let idx = i * n + j;
                let f = &mut features[idx * k..(idx + 1) * k];
                self.feature_vector(hs.member(i), ht.member(j), f);
                dist[idx] = f.iter().zip(beta).map(|(d, b)| d * b).sum();
            }
        }
        directed_hausdorff(&dist[..m * n], m, n)
    }
}

/// Hausdorff value and attaining pair for a row-major `m x n` distance matrix.
pub fn directed_hausdorff(dist: &[f64], m: usize, n: usize) -> HausdorffArgmax {
    let mut forward = HausdorffArgmax {
        delta: f64::NEG_INFINITY,
        row: 0,
        col: 0,
    };
    for i in 0..m {
        let row = &dist[i * n..(i + 1) * n];
        let (mut jmin, mut vmin) = (0, row[0]);
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v < vmin {
                vmin = v;
                jmin = j;
            }
        }
        if vmin > forward.delta {
            forward = HausdorffArgmax {
                delta: vmin,
                row: i,
                col: jmin,
            };
        }
    }
    let mut backward = HausdorffArgmax {
        delta: f64::NEG_INFINITY,
        row: 0,
        col: 0,
    };
    for j in 0..n {
        let (mut imin, mut vmin) = (0, dist[j]);
        for i in 1..m {
            let v = dist[i * n + j];
            if v < vmin {
                vmin = v;
                imin = i;
            }
        }
        if vmin > backward.delta {
            backward = HausdorffArgmax {
                delta: vmin,
                row: imin,
                col: j,
            };
        }
    }
    if backward.delta > forward.delta {
        backward
    } else {
        forward
    }
}

#[derive(Debug, Clone)]
pub struct EncodedHousehold {
    cells: Vec<Cell>,
    k: usize,
}

impl EncodedHousehold {
    pub fn len(&self) -> usize {
        self.cells.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn member(&self, i: usize) -> &[Cell] {
        &self.cells[i * self.k..(i + 1) * self.k]
    }
}

#[derive(Debug, Clone)]
pub struct EncodedWave {
    pub households: Vec<EncodedHousehold>,
}

/// Interns category strings per feature so both waves share one code table.
#[derive(Debug, Default)]
pub struct Encoder {
    tables: Vec<HashMap<String, u32>>,
}

impl Encoder {
    pub fn cell(&mut self, k: usize, v: &Value) -> Cell {
        if self.tables.len() <= k {
            self.tables.resize_with(k + 1, HashMap::new);
        }
        match v {
            Value::Missing | Value::MissingAtRandom => Cell::Missing,
            Value::Year(y) => Cell::Year(*y),
            Value::Code(c) => {
                let table = &mut self.tables[k];
                let next = table.len() as u32;
                Cell::Code(*table.entry(c.clone()).or_insert(next))
            }
        }
    }

    pub fn individual(&mut self, ind: &Individual) -> Vec<Cell> {
        ind.values
            .iter()
            .enumerate()
            .map(|(k, v)| self.cell(k, v))
            .collect()
    }

    pub fn household(&mut self, space: &FeatureSpace, h: &Household) -> EncodedHousehold {
        let cells = h.members.iter().flat_map(|m| self.individual(m)).collect();
        EncodedHousehold {
            cells,
            k: space.len(),
        }
    }

    pub fn wave(&mut self, space: &FeatureSpace, w: &Wave) -> EncodedWave {
        EncodedWave {
            households: w
                .households()
                .iter()
                .map(|h| self.household(space, h))
                .collect(),
        }
    }
}

/// Household pairs to score: all of them, or those sharing a value of the
/// blocking feature between any two members. Ordered by `s`, then `t`.
pub fn candidate_pairs(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    block_key: Option<&str>,
) -> Result<Vec<(u32, u32)>> {
    let (n1, n2) = (wave1.n_households(), wave2.n_households());
    let Some(key) = block_key else {
        return Ok((0..n1 as u32)
            .flat_map(|s| (0..n2 as u32).map(move |t| (s, t)))
            .collect());
    };
    let k = schema.require(key)?;
    let mut index: HashMap<&Value, Vec<u32>> = HashMap::new();
    for (t, h) in wave2.households().iter().enumerate() {
        let mut keys: Vec<&Value> = h
            .members
            .iter()
            .map(|m| &m.values[k])
            .filter(|v| !v.is_missing())
            .collect();
        keys.sort();
        keys.dedup();
        for v in keys {
            index.entry(v).or_default().push(t as u32);
        }
    }
    let mut out = Vec::new();
    for (s, h) in wave1.households().iter().enumerate() {
        let mut ts: Vec<u32> = h
            .members
            .iter()
            .filter_map(|m| index.get(&m.values[k]))
            .flatten()
            .copied()
            .collect();
        ts.sort_unstable();
        ts.dedup();
        out.extend(ts.into_iter().map(|t| (s as u32, t)));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HausdorffEntry {
    pub s: u32,
    pub t: u32,
    pub delta: f64,
}

/// Sparse table of household distances.
#[derive(Debug, Clone, PartialEq)]
pub struct HausdorffTable {
    pub wave1_ids: Vec<String>,
    pub wave2_ids: Vec<String>,
    pub entries: Vec<HausdorffEntry>,
}

impl HausdorffTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["household_id_1", "household_id_2", "delta"])
            .map_err(err)?;
        for e in &self.entries {
            w.write_record([
                self.wave1_ids[e.s as usize].as_str(),
                self.wave2_ids[e.t as usize].as_str(),
                &e.delta.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Hausdorff distance for every candidate household pair.
pub fn all_pairs_hausdorff(
    wave1: &Wave,
    wave2: &Wave,
    w: &FeatureWeights,
    schema: &AttributeSchema,
    block_key: Option<&str>,
) -> Result<HausdorffTable> {
    w.check(schema)?;
    let pairs = candidate_pairs(wave1, wave2, schema, block_key)?;
    let space = FeatureSpace::new(schema, w.year_scale);
    let mut enc = Encoder::default();
    let e1 = enc.wave(&space, wave1);
    let e2 = enc.wave(&space, wave2);
    let entries = pairs
        .par_iter()
        .map_init(Vec::new, |scratch, &(s, t)| HausdorffEntry {
            s,
            t,
            delta: space
                .hausdorff(
                    &e1.households[s as usize],
                    &e2.households[t as usize],
                    &w.beta,
                    scratch,
                )
                .delta,
        })
        .collect();
    Ok(HausdorffTable {
        wave1_ids: wave1.households().iter().map(|h| h.id.clone()).collect(),
        wave2_ids: wave2.households().iter().map(|h| h.id.clone()).collect(),
        entries,
    })
}
