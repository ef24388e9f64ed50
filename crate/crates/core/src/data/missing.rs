use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{AttributeSchema, Value, Wave};

/// Extra region-of-birth category for people born abroad.
pub const NOT_BORN_IN_ITALY: &str = "NOT_BORN_IN_ITALY";
/// Extra sector category for people who are not in work.
pub const NOT_EMPLOYED_SECTOR: &str = "NOT_EMPLOYED_SECTOR";

/// Which columns carry the structurally missing values and which employment
/// status codes explain an empty sector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissingPolicy {
    pub birth_region_feature: String,
    pub sector_feature: String,
    pub status_feature: String,
    pub not_employed_status_codes: BTreeSet<String>,
}

impl Default for MissingPolicy {
    fn default() -> Self {
        MissingPolicy {
            birth_region_feature: "NASCREG".into(),
            sector_feature: "NACE".into(),
            status_feature: "QUAL".into(),
            // unemployed, pensioner, student, other not in work
            not_employed_status_codes: ["4", "5", "6", "7"].iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Replaces structurally missing values with synthetic categories and marks
/// whatever is left as missing-at-random.
///
/// Features named by the policy but absent from the schema are skipped.
pub fn apply_missing_policy(wave: &Wave, schema: &AttributeSchema, policy: &MissingPolicy) -> Wave {
    let birth = schema.index_of(&policy.birth_region_feature);
    let sector = schema.index_of(&policy.sector_feature);
    let status = schema.index_of(&policy.status_feature);

    let mut out = wave.clone();
    for h in &mut out.households {
        for m in &mut h.members {
            if let Some(k) = birth {
                if m.values[k].is_missing() {
                    m.values[k] = Value::code(NOT_BORN_IN_ITALY);
                }
            }
            if let (Some(k), Some(q)) = (sector, status) {
                let not_employed = matches!(&m.values[q], Value::Code(c) if policy.not_employed_status_codes.contains(c));
                if m.values[k].is_missing() && not_employed {
                    m.values[k] = Value::code(NOT_EMPLOYED_SECTOR);
                }
            }
            for v in &mut m.values {
                if *v == Value::Missing {
                    *v = Value::MissingAtRandom;
                }
            }
        }
    }
    out
}
