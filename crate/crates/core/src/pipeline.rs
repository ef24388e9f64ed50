//! End-to-end training and prediction for both linkage methods.

use serde::{Deserialize, Serialize};

use crate::baseline::{fs_fit_waves, fs_predict, EmOptions, FsLinkage, FsModel};
use crate::data::{apply_missing_policy, AttributeSchema, GroundTruth, MissingPolicy, Wave};
use crate::household::{
    self, HouseholdFitConfig, HouseholdModel, HouseholdPrediction, PredictOptions,
};
use crate::individual::{
    build_training_pairs, fit_individual, link_individuals, IndividualFitConfig, IndividualModel,
    Linkage,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HhlinkConfig {
    pub household: HouseholdFitConfig,
    pub individual: IndividualFitConfig,
    pub predict: PredictOptions,
}

impl HhlinkConfig {
    pub fn validate(&self) -> Result<()> {
        self.individual.validate()?;
        if !(self.household.year_scale > 0.0)
            || self.household.year_scale != self.individual.year_scale
        {
            return Err(Error::Config(format!(
                "year_scale must be positive and shared by both models (household {}, individual {})",
                self.household.year_scale, self.individual.year_scale
            )));
        }
        if self.predict.blocking != self.household.blocking {
            log::info!("prediction blocking differs from training blocking");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsConfig {
    pub blocking_keys: Vec<String>,
    pub threshold: f64,
    pub em: EmOptions,
}

impl Default for FsConfig {
    fn default() -> Self {
        FsConfig {
            blocking_keys: vec!["SEX".into(), "NASCREG".into()],
            threshold: 0.5,
            em: EmOptions::default(),
        }
    }
}

impl FsConfig {
    pub fn validate(&self, schema: &AttributeSchema) -> Result<()> {
        for k in &self.blocking_keys {
            schema.require(k)?;
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!(
                "FS threshold {} must lie in (0, 1)",
                self.threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HhlinkModel {
    pub household: HouseholdModel,
    pub individual: IndividualModel,
}

#[derive(Debug, Clone)]
pub struct HhlinkOutput {
    pub households: HouseholdPrediction,
    pub individuals: Linkage,
}

/// Applies the missing-value policy to both waves.
pub fn prepare(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    policy: &MissingPolicy,
) -> (Wave, Wave) {
    (
        apply_missing_policy(wave1, schema, policy),
        apply_missing_policy(wave2, schema, policy),
    )
}

/// Fits the household model, then the individual model on the members of
/// truly matched households.
pub fn train_hhlink(
    wave1: &Wave,
    wave2: &Wave,
    truth: &GroundTruth,
    schema: &AttributeSchema,
    config: &HhlinkConfig,
) -> Result<HhlinkModel> {
    config.validate()?;
    truth.validate(wave1, wave2)?;
    let household = household::fit(wave1, wave2, truth, schema, &config.household)?;
    let pairs = build_training_pairs(wave1, wave2, truth, schema, config.individual.year_scale)?;
    let individual = fit_individual(&pairs, &config.individual)?;
    Ok(HhlinkModel {
        household,
        individual,
    })
}

pub fn run_hhlink(
    wave1: &Wave,
    wave2: &Wave,
    model: &HhlinkModel,
    schema: &AttributeSchema,
    options: &PredictOptions,
) -> Result<HhlinkOutput> {
    let households = household::predict(wave1, wave2, &model.household, schema, options)?;
    let individuals = link_individuals(wave1, wave2, &households, &model.individual, schema)?;
    Ok(HhlinkOutput {
        households,
        individuals,
    })
}

/// Fits the Fellegi-Sunter mixture on the waves to be linked (it is
/// unsupervised) and links them.
pub fn run_fs(
    wave1: &Wave,
    wave2: &Wave,
    schema: &AttributeSchema,
    config: &FsConfig,
) -> Result<(FsModel, FsLinkage)> {
    config.validate(schema)?;
    let mut model = fs_fit_waves(wave1, wave2, schema, &config.blocking_keys, &config.em)?;
    model.threshold = config.threshold;
    let linkage = fs_predict(wave1, wave2, &model, schema)?;
    Ok((model, linkage))
}
