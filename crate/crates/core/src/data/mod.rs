//! Records, households, survey waves and ground truth.

mod io;
pub(crate) use io::read_table;
mod missing;
mod synth;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_truth, load_wave, write_truth, write_wave};
pub use missing::{apply_missing_policy, MissingPolicy, NOT_BORN_IN_ITALY, NOT_EMPLOYED_SECTOR};
pub use synth::{carry_forward, generate_panel, generate_synthetic, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Categorical,
    Year,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<BTreeSet<String>>,
}

impl Feature {
    pub fn categorical(name: &str) -> Self {
        Feature {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            levels: None,
        }
    }

    pub fn year(name: &str) -> Self {
        Feature {
            name: name.to_string(),
            kind: FeatureKind::Year,
            levels: None,
        }
    }
}

/// Ordered list of matching attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct AttributeSchema {
    features: Vec<Feature>,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    features: Vec<Feature>,
}

impl TryFrom<SchemaRepr> for AttributeSchema {
    type Error = Error;

    fn try_from(repr: SchemaRepr) -> Result<Self> {
        AttributeSchema::new(repr.features)
    }
}

impl From<AttributeSchema> for SchemaRepr {
    fn from(schema: AttributeSchema) -> Self {
        SchemaRepr {
            features: schema.features,
        }
    }
}

impl AttributeSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Schema("at least one feature is required".into()));
        }
        let mut seen = BTreeSet::new();
        for f in &features {
            if f.name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if f.name == "individual_id" || f.name == "household_id" {
                return Err(Error::Schema(format!("reserved feature name {:?}", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature {:?}", f.name)));
            }
            if f.kind == FeatureKind::Year && f.levels.is_some() {
                return Err(Error::Schema(format!(
                    "year feature {:?} cannot carry a level set",
                    f.name
                )));
            }
        }
        Ok(AttributeSchema { features })
    }

    /// The eight survey attributes: sex, citizenship, year of birth, education,
    /// region of birth, employer sector, region of residence, employment status.
    pub fn shiw_default() -> Self {
        let features = vec![
            Feature::categorical("SEX"),
            Feature::categorical("CIT"),
            Feature::year("ANASC"),
            Feature::categorical("STUDIO"),
            Feature::categorical("NASCREG"),
            Feature::categorical("NACE"),
            Feature::categorical("IREG"),
            Feature::categorical("QUAL"),
        ];
        AttributeSchema::new(features).expect("default schema is valid")
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn kind(&self, k: usize) -> FeatureKind {
        self.features[k].kind
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }
}

/// One attribute value of a record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Value {
    Code(String),
    Year(i32),
    /// Empty cell, before the missing-value policy has run.
    Missing,
    /// Missing after policy application; compares as maximally dissimilar.
    MissingAtRandom,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing | Value::MissingAtRandom)
    }

    pub fn code(s: &str) -> Self {
        Value::Code(s.to_string())
    }

    /// CSV cell representation; missing values become the empty string.
    pub fn to_cell(&self) -> String {
        match self {
            Value::Code(c) => c.clone(),
            Value::Year(y) => y.to_string(),
            Value::Missing | Value::MissingAtRandom => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: String,
    pub household_id: String,
    pub values: Vec<Value>,
}

impl Individual {
    pub fn new(id: impl Into<String>, household_id: impl Into<String>, values: Vec<Value>) -> Self {
        Individual {
            id: id.into(),
            household_id: household_id.into(),
            values,
        }
    }

    /// Checks arity and value kinds against `schema`.
    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        if self.values.len() != schema.len() {
            return Err(Error::Dimension {
                expected: schema.len(),
                got: self.values.len(),
            });
        }
        for (v, f) in self.values.iter().zip(schema.features()) {
            match (v, f.kind) {
                (Value::Year(y), FeatureKind::Year) if *y <= 0 => {
                    return Err(Error::InvalidData(format!(
                        "individual {:?}: non-positive year {y} in {}",
                        self.id, f.name
                    )));
                }
                (Value::Year(_), FeatureKind::Categorical)
                | (Value::Code(_), FeatureKind::Year) => {
                    return Err(Error::InvalidData(format!(
                        "individual {:?}: value of wrong kind in {}",
                        self.id, f.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: String,
    pub members: Vec<Individual>,
}

impl Household {
    pub fn new(id: impl Into<String>, members: Vec<Individual>) -> Result<Self> {
        let id = id.into();
        if members.is_empty() {
            return Err(Error::EmptyHousehold(id));
        }
        let mut seen = BTreeSet::new();
        for m in &members {
            if m.household_id != id {
                return Err(Error::InvalidData(format!(
                    "individual {:?} has household_id {:?}, expected {:?}",
                    m.id, m.household_id, id
                )));
            }
            if !seen.insert(m.id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate individual {:?} in household {:?}",
                    m.id, id
                )));
            }
        }
        Ok(Household { id, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// All households observed in one survey wave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub label: String,
    households: Vec<Household>,
}

impl Wave {
    pub fn new(label: impl Into<String>, households: Vec<Household>) -> Result<Self> {
        let mut hh_ids = BTreeSet::new();
        let mut ind_ids = BTreeSet::new();
        for h in &households {
            if !hh_ids.insert(h.id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate household {:?}",
                    h.id
                )));
            }
            for m in &h.members {
                if !ind_ids.insert(m.id.as_str()) {
                    return Err(Error::InvalidData(format!(
                        "duplicate individual {:?}",
                        m.id
                    )));
                }
            }
        }
        Ok(Wave {
            label: label.into(),
            households,
        })
    }

    pub fn households(&self) -> &[Household] {
        &self.households
    }

    pub fn into_households(self) -> Vec<Household> {
        self.households
    }

    /// Household count (N).
    pub fn n_households(&self) -> usize {
        self.households.len()
    }

    /// Individual count (n).
    pub fn n_individuals(&self) -> usize {
        self.households.iter().map(Household::len).sum()
    }

    pub fn individuals(&self) -> impl Iterator<Item = &Individual> {
        self.households.iter().flat_map(|h| h.members.iter())
    }

    pub fn household_index(&self) -> HashMap<&str, usize> {
        self.households
            .iter()
            .enumerate()
            .map(|(i, h)| (h.id.as_str(), i))
            .collect()
    }

    /// Maps each individual id to its household id.
    pub fn individual_households(&self) -> HashMap<&str, &str> {
        self.individuals()
            .map(|m| (m.id.as_str(), m.household_id.as_str()))
            .collect()
    }

    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        self.individuals().try_for_each(|m| m.validate(schema))
    }

    /// Keeps only households whose id is in `keep`, preserving order.
    pub fn subset(&self, label: impl Into<String>, keep: &BTreeSet<String>) -> Wave {
        Wave {
            label: label.into(),
            households: self
                .households
                .iter()
                .filter(|h| keep.contains(&h.id))
                .cloned()
                .collect(),
        }
    }
}

/// Known true matches between two waves.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub household_pairs: BTreeSet<(String, String)>,
    pub individual_pairs: BTreeSet<(String, String)>,
}

impl GroundTruth {
    pub fn new(
        household_pairs: impl IntoIterator<Item = (String, String)>,
        individual_pairs: impl IntoIterator<Item = (String, String)>,
    ) -> Self {
        GroundTruth {
            household_pairs: household_pairs.into_iter().collect(),
            individual_pairs: individual_pairs.into_iter().collect(),
        }
    }

    pub fn household_partner_map(&self) -> BTreeMap<&str, &str> {
        self.household_pairs
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect()
    }

    pub fn individual_partner_map(&self) -> BTreeMap<&str, &str> {
        self.individual_pairs
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect()
    }

    /// Checks one-to-one structure, id existence, and that every individual
    /// pair lies inside a true household pair.
    pub fn validate(&self, wave1: &Wave, wave2: &Wave) -> Result<()> {
        let h1 = wave1.household_index();
        let h2 = wave2.household_index();
        let mut seen1 = BTreeSet::new();
        let mut seen2 = BTreeSet::new();
        for (a, b) in &self.household_pairs {
            if !h1.contains_key(a.as_str()) {
                return Err(Error::UnknownId {
                    kind: "wave-1 household",
                    id: a.clone(),
                });
            }
            if !h2.contains_key(b.as_str()) {
                return Err(Error::UnknownId {
                    kind: "wave-2 household",
                    id: b.clone(),
                });
            }
            if !seen1.insert(a) || !seen2.insert(b) {
                return Err(Error::InvalidData(format!(
                    "household truth is not one-to-one at ({a}, {b})"
                )));
            }
        }
        let i1 = wave1.individual_households();
        let i2 = wave2.individual_households();
        let mut seen1 = BTreeSet::new();
        let mut seen2 = BTreeSet::new();
        for (a, b) in &self.individual_pairs {
            let ha = i1.get(a.as_str()).ok_or_else(|| Error::UnknownId {
                kind: "wave-1 individual",
                id: a.clone(),
            })?;
            let hb = i2.get(b.as_str()).ok_or_else(|| Error::UnknownId {
                kind: "wave-2 individual",
                id: b.clone(),
            })?;
            if !seen1.insert(a) || !seen2.insert(b) {
                return Err(Error::InvalidData(format!(
                    "individual truth is not one-to-one at ({a}, {b})"
                )));
            }
            if !self
                .household_pairs
                .contains(&(ha.to_string(), hb.to_string()))
            {
                return Err(Error::InvalidData(format!(
                    "individual pair ({a}, {b}) is outside every true household pair"
                )));
            }
        }
        Ok(())
    }

    /// Restricts the truth to households present in both waves.
    pub fn restrict(&self, wave1: &Wave, wave2: &Wave) -> GroundTruth {
        let h1 = wave1.household_index();
        let h2 = wave2.household_index();
        let i1 = wave1.individual_households();
        let i2 = wave2.individual_households();
        GroundTruth {
            household_pairs: self
                .household_pairs
                .iter()
                .filter(|(a, b)| h1.contains_key(a.as_str()) && h2.contains_key(b.as_str()))
                .cloned()
                .collect(),
            individual_pairs: self
                .individual_pairs
                .iter()
                .filter(|(a, b)| i1.contains_key(a.as_str()) && i2.contains_key(b.as_str()))
                .cloned()
                .collect(),
        }
    }
}
