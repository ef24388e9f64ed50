use std::fmt::Write as _;
use std::path::Path;

use hhlink::baseline::{blocked_pair_count, fs_predict, FsLinkage, FsModel, FsPair};
use hhlink::data::{
    generate_panel, load_truth, load_wave, write_truth, write_wave, AttributeSchema, GroundTruth,
    Wave,
};
use hhlink::distance::all_pairs_hausdorff;
use hhlink::evaluation::{
    entity_table, evaluate_fs, evaluate_hhlink, external_validation, hhlink_report_text,
    internal_validation, metrics_table, split, summary_table, FsReport, HhlinkReport, WavePair,
};
use hhlink::household::{HouseholdModel, HouseholdPrediction};
use hhlink::individual::{read_matches_csv, IndividualModel, Linkage};
use hhlink::pipeline::{prepare, run_fs, run_hhlink, train_hhlink, HhlinkModel, HhlinkOutput};
use serde::{Deserialize, Serialize};

use crate::config::{self, Method, RunConfig};
use crate::{CliError, ValidationMode};

const HOUSEHOLD_MODEL: &str = "household_model.json";
const INDIVIDUAL_MODEL: &str = "individual_model.json";
const FS_MODEL: &str = "fs_model.json";
const HOUSEHOLD_MATCHES: &str = "household_matches.csv";
const HOUSEHOLD_SCORES: &str = "household_scores.csv";
const INDIVIDUAL_MATCHES: &str = "individual_matches.csv";
const FS_MATCHES: &str = "fs_matches.csv";

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::new("E_OUTPUT", format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::new("E_IO", format!("cannot read {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(hhlink::Error::from)?;
    write_text(path, &(text + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    Ok(serde_json::from_str(&read_text(path)?).map_err(hhlink::Error::from)?)
}

/// Writes `<stem>.json` and `<stem>.txt` into the output directory.
fn write_report<T: Serialize>(
    cfg: &RunConfig,
    stem: &str,
    value: &T,
    text: &str,
) -> Result<(), CliError> {
    write_json(&cfg.output_path(&format!("{stem}.json")), value)?;
    write_text(&cfg.output_path(&format!("{stem}.txt")), text)
}

fn load_prepared(cfg: &RunConfig, schema: &AttributeSchema, w: usize) -> Result<Wave, CliError> {
    let wave = load_wave(&cfg.wave_path(w), schema, &format!("wave{w}"))?;
    Ok(hhlink::data::apply_missing_policy(
        &wave,
        schema,
        &cfg.missing,
    ))
}

fn load_pair(cfg: &RunConfig, schema: &AttributeSchema) -> Result<(Wave, Wave), CliError> {
    let (w1, w2) = (
        load_wave(&cfg.wave_path(1), schema, "wave1")?,
        load_wave(&cfg.wave_path(2), schema, "wave2")?,
    );
    Ok(prepare(&w1, &w2, schema, &cfg.missing))
}

/// Truth linking wave `w` to wave `w + 1`; missing files are a distinct error.
fn require_truth(cfg: &RunConfig, w: usize) -> Result<GroundTruth, CliError> {
    let (h, i) = cfg.truth_paths(w);
    for path in [&h, &i] {
        if !path.exists() {
            return Err(CliError::new(
                "E_MISSING_TRUTH",
                format!("truth file {} not found", path.display()),
            ));
        }
    }
    Ok(load_truth(&h, &i)?)
}

fn optional_truth(cfg: &RunConfig, w: usize) -> Result<Option<GroundTruth>, CliError> {
    let (h, i) = cfg.truth_paths(w);
    if h.exists() && i.exists() {
        Ok(Some(load_truth(&h, &i)?))
    } else {
        Ok(None)
    }
}

fn household_ids(w: &Wave) -> Vec<String> {
    w.households().iter().map(|h| h.id.clone()).collect()
}

fn fs_report_text(title: &str, r: &FsReport) -> String {
    let mut out = format!("== {title} ==\n");
    out += &metrics_table("Metrics (%)", &[("Ind. all", &r.individual_all_pairs)]);
    out.push('\n');
    out += &entity_table(&[("Individuals", &r.individual_entities)]);
    let _ = writeln!(
        out,
        "\nCompared pairs: {}  Matches: {}",
        r.n_compared, r.n_matches
    );
    out
}

pub fn simulate(cfg: &RunConfig, waves: usize) -> Result<(), CliError> {
    if !(2..=3).contains(&waves) {
        return Err(CliError::config(format!(
            "--waves must be 2 or 3, got {waves}"
        )));
    }
    if cfg.schema.is_some() {
        log::warn!("the generator always uses the survey schema; the configured schema is ignored");
    }
    let schema = AttributeSchema::shiw_default();
    let (ws, truths) = generate_panel(&cfg.simulate, waves)?;
    for (i, w) in ws.iter().enumerate() {
        write_wave(w, &schema, &cfg.output_path(&format!("wave{}.csv", i + 1)))?;
    }
    let names = [
        (config::TRUTH_HOUSEHOLDS, config::TRUTH_INDIVIDUALS),
        (config::TRUTH23_HOUSEHOLDS, config::TRUTH23_INDIVIDUALS),
    ];
    for (t, (h, i)) in truths.iter().zip(names) {
        write_truth(t, &cfg.output_path(h), &cfg.output_path(i))?;
    }
    let (w1, w2, t) = (&ws[0], &ws[1], &truths[0]);
    say!(
        "simulated: N1={} n1={} N2={} n2={} matched households={} match proportion={:.4}",
        w1.n_households(),
        w1.n_individuals(),
        w2.n_households(),
        w2.n_individuals(),
        t.household_pairs.len(),
        t.household_pairs.len() as f64 / w1.n_households() as f64
    );
    Ok(())
}

fn load_hhlink_model(cfg: &RunConfig) -> Result<HhlinkModel, CliError> {
    let household = HouseholdModel::from_json(&read_text(&cfg.model_path(HOUSEHOLD_MODEL))?)?;
    let individual = IndividualModel::from_json(&read_text(&cfg.model_path(INDIVIDUAL_MODEL))?)?;
    Ok(HhlinkModel {
        household,
        individual,
    })
}

pub fn train(cfg: &RunConfig, schema: &AttributeSchema) -> Result<(), CliError> {
    let (w1, w2) = load_pair(cfg, schema)?;
    match cfg.method {
        Method::Hhlink => {
            let truth = require_truth(cfg, 1)?;
            let model = train_hhlink(&w1, &w2, &truth, schema, &cfg.hhlink)?;
            write_text(
                &cfg.output_path(HOUSEHOLD_MODEL),
                &model.household.to_json()?,
            )?;
            write_text(
                &cfg.output_path(INDIVIDUAL_MODEL),
                &model.individual.to_json()?,
            )?;
            let out = run_hhlink(&w1, &w2, &model, schema, &cfg.hhlink.predict)?;
            let report = evaluate_hhlink(&w1, &w2, &truth, &out)?;
            write_report(
                cfg,
                "train_report",
                &report,
                &hhlink_report_text("Training data", &report),
            )?;
            say!(
                "trained: tau={:.6} lambda={:e} training household F1={:.4} individual F1={:.4}",
                model.household.tau,
                model.individual.lambda,
                report.household.f1,
                report.individual_all_pairs.f1
            );
        }
        Method::FsBaseline => {
            let (model, linkage) = run_fs(&w1, &w2, schema, &cfg.fs)?;
            write_json(&cfg.output_path(FS_MODEL), &model)?;
            if let Some(truth) = optional_truth(cfg, 1)? {
                let report = evaluate_fs(&w1, &w2, &truth, &linkage)?;
                write_report(
                    cfg,
                    "fs_train_report",
                    &report,
                    &fs_report_text("Training data", &report),
                )?;
            }
            say!(
                "trained: pi={:.6} EM iterations={} converged={}",
                model.pi,
                model.diagnostics.iterations,
                model.diagnostics.converged
            );
        }
    }
    Ok(())
}

pub fn predict(cfg: &RunConfig, schema: &AttributeSchema) -> Result<(), CliError> {
    let (w1, w2) = load_pair(cfg, schema)?;
    match cfg.method {
        Method::Hhlink => {
            let model = load_hhlink_model(cfg)?;
            let out = run_hhlink(&w1, &w2, &model, schema, &cfg.hhlink.predict)?;
            out.households
                .write_csv(&cfg.output_path(HOUSEHOLD_MATCHES), true)?;
            if cfg.output.household_scores {
                out.households
                    .write_csv(&cfg.output_path(HOUSEHOLD_SCORES), false)?;
            }
            out.individuals
                .write_csv(&cfg.output_path(INDIVIDUAL_MATCHES), false)?;
            if cfg.output.distances {
                let table = all_pairs_hausdorff(
                    &w1,
                    &w2,
                    &model.household.weights,
                    schema,
                    cfg.hhlink.predict.blocking.as_deref(),
                )?;
                table.write_csv(&cfg.output_path("household_distances.csv"))?;
            }
            say!(
                "predicted: {} household matches, {} individual matches",
                out.households.matches().count(),
                out.individuals.matches().count()
            );
        }
        Method::FsBaseline => {
            let model: FsModel = read_json(&cfg.model_path(FS_MODEL))?;
            let linkage = fs_predict(&w1, &w2, &model, schema)?;
            linkage.write_csv(&cfg.output_path(FS_MATCHES))?;
            say!(
                "predicted: {} individual matches among {} compared pairs",
                linkage.matches().count(),
                linkage.n_compared
            );
        }
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, schema: &AttributeSchema) -> Result<(), CliError> {
    let (w1, w2) = load_pair(cfg, schema)?;
    let truth = require_truth(cfg, 1)?;
    truth.validate(&w1, &w2)?;
    match cfg.method {
        Method::Hhlink => {
            let scores = cfg.output_path(HOUSEHOLD_SCORES);
            let source = if scores.exists() {
                scores
            } else {
                log::warn!("no {HOUSEHOLD_SCORES}; ranks of the true match are computed from matched pairs only");
                cfg.output_path(HOUSEHOLD_MATCHES)
            };
            let tau = HouseholdModel::from_json(&read_text(&cfg.model_path(HOUSEHOLD_MODEL))?)?.tau;
            let households = HouseholdPrediction::read_csv(
                &source,
                household_ids(&w1),
                household_ids(&w2),
                tau,
            )?;
            let individuals = Linkage::read_csv(&cfg.output_path(INDIVIDUAL_MATCHES))?;
            let report = evaluate_hhlink(
                &w1,
                &w2,
                &truth,
                &HhlinkOutput {
                    households,
                    individuals,
                },
            )?;
            write_report(
                cfg,
                "evaluation_report",
                &report,
                &hhlink_report_text("Evaluation", &report),
            )?;
            say!(
                "evaluated: household F1={:.4} individual F1={:.4}",
                report.household.f1,
                report.individual_all_pairs.f1
            );
        }
        Method::FsBaseline => {
            let keys = match read_json::<FsModel>(&cfg.model_path(FS_MODEL)) {
                Ok(m) => m.blocking_keys,
                Err(_) => cfg.fs.blocking_keys.clone(),
            };
            let candidates = read_matches_csv(&cfg.output_path(FS_MATCHES))?
                .into_iter()
                .map(|p| FsPair {
                    id1: p.id1,
                    id2: p.id2,
                    posterior: p.q,
                    matched: p.matched,
                    household1: p.household1,
                    household2: p.household2,
                })
                .collect();
            let linkage = FsLinkage {
                candidates,
                n_compared: blocked_pair_count(&w1, &w2, schema, &keys)?,
            };
            let report = evaluate_fs(&w1, &w2, &truth, &linkage)?;
            write_report(
                cfg,
                "fs_evaluation_report",
                &report,
                &fs_report_text("Evaluation", &report),
            )?;
            say!(
                "evaluated: individual F1={:.4}",
                report.individual_all_pairs.f1
            );
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Comparison {
    /// "split" (held-out part of the first wave pair) or "next-wave".
    mode: String,
    test_labels: (String, String),
    hhlink: HhlinkReport,
    fs: FsReport,
}

fn comparison_text(c: &Comparison) -> String {
    let mut out = format!(
        "== Comparison on {} -> {} ({}) ==\n",
        c.test_labels.0, c.test_labels.1, c.mode
    );
    out += &metrics_table(
        "Individual pairs (%)",
        &[
            ("hhlink", &c.hhlink.individual_all_pairs),
            ("FS", &c.fs.individual_all_pairs),
        ],
    );
    out.push('\n');
    out += &entity_table(&[
        ("hhlink", &c.hhlink.individual_entities),
        ("FS", &c.fs.individual_entities),
    ]);
    out
}

/// Trains hhlink and runs both methods on the same test pair: the next wave
/// pair when a third wave with truth is configured, otherwise a held-out split.
pub fn compare(cfg: &RunConfig, schema: &AttributeSchema) -> Result<(), CliError> {
    let (w1, w2) = load_pair(cfg, schema)?;
    let truth = require_truth(cfg, 1)?;
    let third = cfg.wave_path(3);
    let (mode, train, test) = match optional_truth(cfg, 2)? {
        Some(t23) if third.exists() => {
            let w3 = load_prepared(cfg, schema, 3)?;
            let train = WavePair {
                wave1: w1,
                wave2: w2.clone(),
                truth,
            };
            let test = WavePair {
                wave1: w2,
                wave2: w3,
                truth: t23,
            };
            ("next-wave", train, test)
        }
        _ => {
            let parts = split(&w1, &w2, &truth, cfg.validate.train_fraction, cfg.seed)?;
            ("split", parts.train, parts.test)
        }
    };
    let model = train_hhlink(
        &train.wave1,
        &train.wave2,
        &train.truth,
        schema,
        &cfg.hhlink,
    )?;
    let out = run_hhlink(
        &test.wave1,
        &test.wave2,
        &model,
        schema,
        &cfg.hhlink.predict,
    )?;
    let hhlink = evaluate_hhlink(&test.wave1, &test.wave2, &test.truth, &out)?;
    let (_, linkage) = run_fs(&test.wave1, &test.wave2, schema, &cfg.fs)?;
    let fs = evaluate_fs(&test.wave1, &test.wave2, &test.truth, &linkage)?;
    let comparison = Comparison {
        mode: mode.into(),
        test_labels: (test.wave1.label.clone(), test.wave2.label.clone()),
        hhlink,
        fs,
    };
    write_report(
        cfg,
        "compare_report",
        &comparison,
        &comparison_text(&comparison),
    )?;
    say!(
        "compared ({mode}): individual F1 hhlink={:.4} FS={:.4}",
        comparison.hhlink.individual_all_pairs.f1,
        comparison.fs.individual_all_pairs.f1
    );
    Ok(())
}

pub fn validate(
    cfg: &RunConfig,
    schema: &AttributeSchema,
    mode: ValidationMode,
) -> Result<(), CliError> {
    let fs = cfg.validate.include_fs.then_some(&cfg.fs);
    let (w1, w2) = load_pair(cfg, schema)?;
    let truth = require_truth(cfg, 1)?;
    match mode {
        ValidationMode::Internal => {
            let report =
                internal_validation(&w1, &w2, &truth, schema, &cfg.split_spec(), &cfg.hhlink, fs)?;
            let mut text = format!(
                "== Internal validation: {} repeats, training fraction {} ==\n",
                report.spec.n_repeats, report.spec.train_fraction
            );
            text += &summary_table(&report.summary);
            write_report(cfg, "validation_report", &report, &text)?;
            let mut csv = String::from("repeat,seed,name,value\n");
            for r in &report.repeats {
                for (name, value) in r.rows() {
                    let _ = writeln!(csv, "{},{},{},{}", r.repeat, r.seed, name, value);
                }
            }
            write_text(&cfg.output_path("validation_repeats.csv"), &csv)?;
            say!("validated: {} repeats", report.repeats.len());
        }
        ValidationMode::External => {
            let third = cfg.wave_path(3);
            if !third.exists() {
                return Err(CliError::new(
                    "E_MISSING_INPUT",
                    format!(
                        "external validation needs a third wave ({} not found)",
                        third.display()
                    ),
                ));
            }
            let w3 = load_prepared(cfg, schema, 3)?;
            let t23 = require_truth(cfg, 2)?;
            let train = WavePair {
                wave1: w1,
                wave2: w2.clone(),
                truth,
            };
            let test = WavePair {
                wave1: w2,
                wave2: w3,
                truth: t23,
            };
            let report = external_validation(&train, &test, schema, &cfg.hhlink, fs)?;
            let mut text = hhlink_report_text(
                &format!(
                    "Training {} -> {}",
                    report.train_labels.0, report.train_labels.1
                ),
                &report.train,
            );
            text.push('\n');
            text += &hhlink_report_text(
                &format!(
                    "Testing {} -> {}",
                    report.test_labels.0, report.test_labels.1
                ),
                &report.test,
            );
            if let Some(f) = &report.fs_test {
                text.push('\n');
                text += &fs_report_text("Fellegi-Sunter on the test pair", f);
            }
            let _ = writeln!(text, "\ntau = {}", report.tau);
            for (name, value) in &report.coefficients {
                let _ = writeln!(text, "{name:<24}{value:>14.6}");
            }
            write_report(cfg, "validation_report", &report, &text)?;
            say!(
                "validated (external): household F1 train={:.4} test={:.4}",
                report.train.household.f1,
                report.test.household.f1
            );
        }
    }
    Ok(())
}
