//! Synthetic multi-wave household panels with known matches.
//!
//! Households carry a shared region of residence and mostly a shared region of
//! birth, members have correlated ages, and carried-forward households lose and
//! gain members between waves. Values follow the default eight-attribute schema.

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttributeSchema, GroundTruth, Household, Individual, Value, Wave};
use crate::{Error, Result};

const SEX: usize = 0;
const CIT: usize = 1;
const ANASC: usize = 2;
const STUDIO: usize = 3;
const NASCREG: usize = 4;
const NACE: usize = 5;
const IREG: usize = 6;
const QUAL: usize = 7;
const N_FEATURES: usize = 8;

const MAX_HOUSEHOLD_SIZE: usize = 8;
const REFERENCE_YEAR: i32 = 2014;
const FOREIGN_RATE: f64 = 0.07;
const SAME_BIRTH_REGION_RATE: f64 = 0.85;
const SECTOR_MAR_RATE: f64 = 0.003;

const STUDIO_WEIGHTS: [f64; 8] = [0.05, 0.15, 0.30, 0.05, 0.28, 0.05, 0.10, 0.02];
const REGION_WEIGHTS: [f64; 20] = [
    7.3, 0.2, 16.6, 1.8, 8.1, 2.0, 2.6, 7.3, 6.2, 1.5, 2.5, 9.8, 2.2, 0.5, 9.6, 6.7, 0.9, 3.2, 8.3,
    2.7,
];
const SECTOR_WEIGHTS: [f64; 22] = [
    3.0, 0.3, 15.0, 1.0, 0.8, 6.0, 13.0, 4.0, 5.0, 2.5, 2.5, 1.0, 4.0, 4.0, 7.0, 7.0, 8.0, 1.5,
    2.0, 3.0, 0.5, 0.2,
];
/// Employment status codes: 1 employee, 2 self-employed, 3 professional,
/// 4 unemployed, 5 pensioner, 6 student, 7 other not in work.
const WORKING_AGE_STATUS: [(&str, f64); 5] = [
    ("1", 0.55),
    ("2", 0.12),
    ("3", 0.05),
    ("4", 0.10),
    ("7", 0.18),
];

fn is_employed(status: &str) -> bool {
    matches!(status, "1" | "2" | "3")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_households: usize,
    /// Probability of household sizes 1, 2, ..., up to 8.
    pub household_size_distribution: Vec<f64>,
    pub carry_forward_rate: f64,
    /// Per-feature probability of a spurious change between waves, schema order.
    pub attribute_flip_rates: Vec<f64>,
    pub member_leave_rate: f64,
    pub member_join_rate: f64,
    pub age_increment: i32,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 1,
            n_households: 500,
            household_size_distribution: vec![0.26, 0.30, 0.19, 0.16, 0.06, 0.02, 0.007, 0.003],
            carry_forward_rate: 0.5,
            attribute_flip_rates: vec![0.05; N_FEATURES],
            member_leave_rate: 0.1,
            member_join_rate: 0.1,
            age_increment: 2,
        }
    }
}

impl SyntheticConfig {
    /// All rates zero, full carry-forward.
    pub fn noiseless(seed: u64, n_households: usize, age_increment: i32) -> Self {
        SyntheticConfig {
            seed,
            n_households,
            carry_forward_rate: 1.0,
            attribute_flip_rates: vec![0.0; N_FEATURES],
            member_leave_rate: 0.0,
            member_join_rate: 0.0,
            age_increment,
            ..SyntheticConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rate = |name: &str, r: f64| {
            if (0.0..=1.0).contains(&r) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {r} is outside [0, 1]")))
            }
        };
        rate("carry_forward_rate", self.carry_forward_rate)?;
        rate("member_leave_rate", self.member_leave_rate)?;
        rate("member_join_rate", self.member_join_rate)?;
        if self.attribute_flip_rates.len() != N_FEATURES {
            return Err(Error::Config(format!(
                "attribute_flip_rates needs {N_FEATURES} entries, got {}",
                self.attribute_flip_rates.len()
            )));
        }
        for &r in &self.attribute_flip_rates {
            rate("attribute_flip_rates", r)?;
        }
        let sizes = &self.household_size_distribution;
        if sizes.is_empty() || sizes.len() > MAX_HOUSEHOLD_SIZE {
            return Err(Error::Config(format!(
                "household_size_distribution needs 1..={MAX_HOUSEHOLD_SIZE} entries"
            )));
        }
        for &p in sizes {
            rate("household_size_distribution", p)?;
        }
        let total: f64 = sizes.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "household_size_distribution sums to {total}, not 1"
            )));
        }
        if self.n_households == 0 {
            return Err(Error::Config("n_households must be positive".into()));
        }
        Ok(())
    }
}

/// Generates two waves and their truth.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(Wave, Wave, GroundTruth)> {
    let (mut waves, mut truths) = generate_panel(config, 2)?;
    let truth = truths.pop().expect("two waves have one truth");
    let w2 = waves.pop().expect("second wave");
    let w1 = waves.pop().expect("first wave");
    Ok((w1, w2, truth))
}

/// Generates `n_waves` consecutive waves; `truths[i]` links wave `i` to `i + 1`.
pub fn generate_panel(
    config: &SyntheticConfig,
    n_waves: usize,
) -> Result<(Vec<Wave>, Vec<GroundTruth>)> {
    config.validate()?;
    if n_waves == 0 {
        return Err(Error::Config("at least one wave is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gen = Generator::new(config)?;
    let households = (0..config.n_households)
        .map(|_| gen.fresh_household(&mut rng, REFERENCE_YEAR))
        .collect();
    let first = assemble(&mut rng, households, "A", &wave_label(0));
    let mut waves = vec![first.0];
    let mut truths = Vec::new();
    for w in 1..n_waves {
        let year = REFERENCE_YEAR + config.age_increment * w as i32;
        let (next, truth) = gen.carry_forward(&mut rng, &waves[w - 1], w, year);
        waves.push(next);
        truths.push(truth);
    }
    Ok((waves, truths))
}

/// Produces the wave following `previous` under `config` (its seed drives the
/// draw), with ids prefixed by `prefix`.
pub fn carry_forward(
    previous: &Wave,
    config: &SyntheticConfig,
    prefix: &str,
    label: &str,
) -> Result<(Wave, GroundTruth)> {
    config.validate()?;
    let schema = AttributeSchema::shiw_default();
    previous.validate(&schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gen = Generator::new(config)?;
    let year = REFERENCE_YEAR + config.age_increment;
    Ok(gen.carry_forward_with(&mut rng, previous, prefix, label, year))
}

fn wave_label(w: usize) -> String {
    format!("wave{}", w + 1)
}

fn wave_prefix(w: usize) -> String {
    let letters = b"ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    match letters.get(w) {
        Some(&c) => (c as char).to_string(),
        None => format!("W{w}_"),
    }
}

/// A household before ids are assigned: members plus, for carried members,
/// the id they had in the previous wave.
struct Draft {
    previous_id: Option<String>,
    members: Vec<(Option<String>, Vec<Value>)>,
}

/// Shuffles households and members, assigns ids, and derives the truth.
fn assemble(
    rng: &mut ChaCha8Rng,
    mut drafts: Vec<Draft>,
    prefix: &str,
    label: &str,
) -> (Wave, GroundTruth) {
    drafts.shuffle(rng);
    let width = (drafts.len().max(1) as f64).log10().floor() as usize + 1;
    let mut households = Vec::with_capacity(drafts.len());
    let mut truth = GroundTruth::default();
    for (h, mut draft) in drafts.into_iter().enumerate() {
        let hid = format!("{prefix}{:0width$}", h + 1);
        draft.members.shuffle(rng);
        let members = draft
            .members
            .into_iter()
            .enumerate()
            .map(|(k, (prev, values))| {
                let id = format!("{hid}-{:02}", k + 1);
                if let Some(prev) = prev {
                    truth.individual_pairs.insert((prev, id.clone()));
                }
                Individual::new(id, hid.clone(), values)
            })
            .collect();
        if let Some(prev) = draft.previous_id {
            truth.household_pairs.insert((prev, hid.clone()));
        }
        households.push(Household::new(hid, members).expect("generated households are non-empty"));
    }
    (
        Wave::new(label, households).expect("generated ids are unique"),
        truth,
    )
}

struct Generator<'a> {
    config: &'a SyntheticConfig,
    sizes: WeightedIndex<f64>,
    studio: WeightedIndex<f64>,
    region: WeightedIndex<f64>,
    sector: WeightedIndex<f64>,
    status: WeightedIndex<f64>,
}

impl<'a> Generator<'a> {
    fn new(config: &'a SyntheticConfig) -> Result<Self> {
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w.iter().copied())
                .map_err(|e| Error::Config(format!("bad weights: {e}")))
        };
        Ok(Generator {
            config,
            sizes: weighted(&config.household_size_distribution)?,
            studio: weighted(&STUDIO_WEIGHTS)?,
            region: weighted(&REGION_WEIGHTS)?,
            sector: weighted(&SECTOR_WEIGHTS)?,
            status: weighted(&WORKING_AGE_STATUS.map(|(_, w)| w))?,
        })
    }

    fn region_code(&self, rng: &mut ChaCha8Rng) -> String {
        (self.region.sample(rng) + 1).to_string()
    }

    fn fresh_household(&self, rng: &mut ChaCha8Rng, year: i32) -> Draft {
        let size = self.sizes.sample(rng) + 1;
        let ireg = self.region_code(rng);
        let home_birth = if rng.gen_bool(SAME_BIRTH_REGION_RATE) {
            ireg.clone()
        } else {
            rng.gen_range(1..=21).to_string()
        };
        let foreign = rng.gen_bool(FOREIGN_RATE);
        let head_year = rng.gen_range(year - 84..=year - 20);
        let head_sex = rng.gen_range(1..=2);
        let mut members = Vec::with_capacity(size);
        for k in 0..size {
            let (sex, born) = match k {
                0 => (head_sex, head_year),
                1 => {
                    let sex = if rng.gen_bool(0.9) {
                        3 - head_sex
                    } else {
                        head_sex
                    };
                    (sex, (head_year + rng.gen_range(-6..=6)).min(year - 18))
                }
                // heads are at least 20, so the range is never empty
                _ => (
                    rng.gen_range(1..=2),
                    rng.gen_range(head_year + 18..=(head_year + 42).min(year)),
                ),
            };
            let adult_foreign = foreign && (k < 2 || rng.gen_bool(0.5));
            members.push((
                None,
                self.person(rng, year, sex, born, &ireg, &home_birth, adult_foreign),
            ));
        }
        Draft {
            previous_id: None,
            members,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn person(
        &self,
        rng: &mut ChaCha8Rng,
        year: i32,
        sex: i32,
        born: i32,
        ireg: &str,
        home_birth: &str,
        foreign: bool,
    ) -> Vec<Value> {
        let age = year - born;
        let cit = if foreign && rng.gen_bool(0.7) {
            "2"
        } else {
            "1"
        };
        let birth = if foreign {
            Value::Missing
        } else {
            Value::code(home_birth)
        };
        let studio = if age < 14 {
            rng.gen_range(1..=2).to_string()
        } else {
            (self.studio.sample(rng) + 1).to_string()
        };
        let status = if age < 20 {
            "6".to_string()
        } else if age > 65 && rng.gen_bool(0.85) {
            "5".to_string()
        } else {
            WORKING_AGE_STATUS[self.status.sample(rng)].0.to_string()
        };
        let sector = self.sector_for(rng, &status);
        let mut values = vec![Value::Missing; N_FEATURES];
        values[SEX] = Value::Code(sex.to_string());
        values[CIT] = Value::code(cit);
        values[ANASC] = Value::Year(born.max(1));
        values[STUDIO] = Value::Code(studio);
        values[NASCREG] = birth;
        values[NACE] = sector;
        values[IREG] = Value::code(ireg);
        values[QUAL] = Value::Code(status);
        values
    }

    fn sector_for(&self, rng: &mut ChaCha8Rng, status: &str) -> Value {
        if is_employed(status) && !rng.gen_bool(SECTOR_MAR_RATE) {
            Value::Code((self.sector.sample(rng) + 1).to_string())
        } else {
            Value::Missing
        }
    }

    /// Ages a retained member and applies spurious attribute changes.
    fn evolve(&self, rng: &mut ChaCha8Rng, values: &[Value]) -> Vec<Value> {
        let mut out = values.to_vec();
        if let Value::Year(y) = out[ANASC] {
            out[ANASC] = Value::Year((y + self.config.age_increment).max(1));
        }
        for k in 0..N_FEATURES {
            if !rng.gen_bool(self.config.attribute_flip_rates[k]) {
                continue;
            }
            out[k] = match k {
                ANASC => match out[ANASC] {
                    Value::Year(y) => {
                        let delta = *[-2, -1, 1, 2].choose(rng).expect("non-empty");
                        Value::Year((y + delta).max(1))
                    }
                    ref other => other.clone(),
                },
                SEX | CIT => flip_code(rng, &out[k], 2),
                STUDIO => flip_code(rng, &out[k], 8),
                NASCREG => flip_code(rng, &out[k], 21),
                IREG => flip_code(rng, &out[k], 20),
                NACE => match &out[QUAL] {
                    Value::Code(s) if is_employed(s) => flip_code(rng, &out[k], 22),
                    _ => out[k].clone(),
                },
                QUAL => {
                    let new = flip_code(rng, &out[k], 7);
                    if let Value::Code(s) = &new {
                        let employed = is_employed(s);
                        if employed && out[NACE].is_missing() {
                            out[NACE] = Value::Code((self.sector.sample(rng) + 1).to_string());
                        } else if !employed {
                            out[NACE] = Value::Missing;
                        }
                    }
                    new
                }
                _ => unreachable!("eight features"),
            };
        }
        out
    }

    fn joiner(&self, rng: &mut ChaCha8Rng, year: i32, household: &[Value]) -> Vec<Value> {
        let ireg = match &household[IREG] {
            Value::Code(c) => c.clone(),
            _ => self.region_code(rng),
        };
        let home_birth = match &household[NASCREG] {
            Value::Code(c) if rng.gen_bool(0.7) => c.clone(),
            _ => rng.gen_range(1..=21).to_string(),
        };
        let born = rng.gen_range(year - 80..=year);
        let sex = rng.gen_range(1..=2);
        let foreign = rng.gen_bool(FOREIGN_RATE);
        self.person(rng, year, sex, born.max(1), &ireg, &home_birth, foreign)
    }

    fn carry_forward(
        &mut self,
        rng: &mut ChaCha8Rng,
        previous: &Wave,
        w: usize,
        year: i32,
    ) -> (Wave, GroundTruth) {
        self.carry_forward_with(rng, previous, &wave_prefix(w), &wave_label(w), year)
    }

    fn carry_forward_with(
        &mut self,
        rng: &mut ChaCha8Rng,
        previous: &Wave,
        prefix: &str,
        label: &str,
        year: i32,
    ) -> (Wave, GroundTruth) {
        let cfg = self.config;
        let mut drafts = Vec::with_capacity(previous.n_households());
        for h in previous.households() {
            if !rng.gen_bool(cfg.carry_forward_rate) {
                continue;
            }
            let mut members = Vec::with_capacity(h.len() + 1);
            let mut joiners = 0;
            for m in &h.members {
                if !rng.gen_bool(cfg.member_leave_rate) {
                    members.push((Some(m.id.clone()), self.evolve(rng, &m.values)));
                }
                if rng.gen_bool(cfg.member_join_rate) {
                    joiners += 1;
                }
            }
            if members.is_empty() && joiners == 0 {
                joiners = 1;
            }
            let template = &h.members[0].values;
            for _ in 0..joiners {
                if members.len() >= MAX_HOUSEHOLD_SIZE {
                    break;
                }
                members.push((None, self.joiner(rng, year, template)));
            }
            drafts.push(Draft {
                previous_id: Some(h.id.clone()),
                members,
            });
        }
        let fresh = previous.n_households() - drafts.len();
        for _ in 0..fresh {
            drafts.push(self.fresh_household(rng, year));
        }
        assemble(rng, drafts, prefix, label)
    }
}

fn flip_code(rng: &mut ChaCha8Rng, current: &Value, n_levels: u32) -> Value {
    let current = match current {
        Value::Code(c) => c.parse::<u32>().ok(),
        _ => None,
    };
    loop {
        let candidate = rng.gen_range(1..=n_levels);
        if Some(candidate) != current || n_levels == 1 {
            return Value::Code(candidate.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_carry_forward_has_no_truth() {
        let cfg = SyntheticConfig {
            carry_forward_rate: 0.0,
            n_households: 50,
            ..SyntheticConfig::default()
        };
        let (w1, w2, truth) = generate_synthetic(&cfg).unwrap();
        assert!(truth.household_pairs.is_empty());
        assert!(truth.individual_pairs.is_empty());
        assert_eq!(w1.n_households(), 50);
        assert_eq!(w2.n_households(), 50);
    }

    #[test]
    fn noiseless_members_differ_only_in_birth_year() {
        let cfg = SyntheticConfig::noiseless(3, 120, 2);
        let (w1, w2, truth) = generate_synthetic(&cfg).unwrap();
        assert_eq!(truth.household_pairs.len(), 120);
        assert_eq!(truth.individual_pairs.len(), w1.n_individuals());
        let find = |w: &Wave, id: &str| w.individuals().find(|m| m.id == id).cloned().unwrap();
        for (a, b) in &truth.individual_pairs {
            let (a, b) = (find(&w1, a), find(&w2, b));
            for k in 0..N_FEATURES {
                match (&a.values[k], &b.values[k]) {
                    (Value::Year(x), Value::Year(y)) => assert_eq!(*y, x + 2),
                    (x, y) => assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let cfg = SyntheticConfig {
            seed: 7,
            n_households: 80,
            ..SyntheticConfig::default()
        };
        assert_eq!(
            generate_synthetic(&cfg).unwrap(),
            generate_synthetic(&cfg).unwrap()
        );
        let other = SyntheticConfig {
            seed: 8,
            ..cfg.clone()
        };
        assert_ne!(
            generate_synthetic(&cfg).unwrap().0,
            generate_synthetic(&other).unwrap().0
        );
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = |f: fn(&mut SyntheticConfig)| {
            let mut c = SyntheticConfig::default();
            f(&mut c);
            assert!(matches!(c.validate(), Err(Error::Config(_))));
        };
        bad(|c| c.carry_forward_rate = 1.5);
        bad(|c| c.member_join_rate = -0.1);
        bad(|c| c.attribute_flip_rates = vec![0.1; 3]);
        bad(|c| c.household_size_distribution = vec![0.5, 0.4]);
        bad(|c| c.household_size_distribution = vec![0.1; 9]);
        bad(|c| c.n_households = 0);
    }

    #[test]
    fn household_match_rate_tracks_carry_forward() {
        for (seed, p) in [(11u64, 0.5), (12, 0.3), (13, 0.8)] {
            let n = 600;
            let cfg = SyntheticConfig {
                seed,
                n_households: n,
                carry_forward_rate: p,
                ..SyntheticConfig::default()
            };
            let (_, _, truth) = generate_synthetic(&cfg).unwrap();
            let rate = truth.household_pairs.len() as f64 / n as f64;
            let bound = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
            assert!((rate - p).abs() <= bound, "rate {rate} vs {p} ± {bound}");
        }
    }

    #[test]
    fn panel_waves_chain_truths() {
        let cfg = SyntheticConfig {
            n_households: 60,
            ..SyntheticConfig::default()
        };
        let (waves, truths) = generate_panel(&cfg, 3).unwrap();
        assert_eq!(waves.len(), 3);
        assert_eq!(truths.len(), 2);
        truths[0].validate(&waves[0], &waves[1]).unwrap();
        truths[1].validate(&waves[1], &waves[2]).unwrap();
        assert!(waves[2].households()[0].id.starts_with('C'));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn truth_invariants_hold(
            seed in 0u64..1000,
            n in 1usize..60,
            carry in 0.0f64..=1.0,
            flip in 0.0f64..=0.5,
            leave in 0.0f64..=1.0,
            join in 0.0f64..=1.0,
            inc in 0i32..5,
        ) {
            let cfg = SyntheticConfig {
                seed,
                n_households: n,
                carry_forward_rate: carry,
                attribute_flip_rates: vec![flip; N_FEATURES],
                member_leave_rate: leave,
                member_join_rate: join,
                age_increment: inc,
                ..SyntheticConfig::default()
            };
            let (w1, w2, truth) = generate_synthetic(&cfg).unwrap();
            let schema = AttributeSchema::shiw_default();
            w1.validate(&schema).unwrap();
            w2.validate(&schema).unwrap();
            truth.validate(&w1, &w2).unwrap();
            prop_assert!(w2.households().iter().all(|h| h.len() <= MAX_HOUSEHOLD_SIZE));
        }
    }
}
