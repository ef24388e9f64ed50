use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::path::Path;

use super::{AttributeSchema, FeatureKind, GroundTruth, Household, Individual, Value, Wave};
use crate::{Error, Result};

const ID_COL: &str = "individual_id";
const HH_COL: &str = "household_id";

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a normalized wave CSV. Empty cells become [`Value::Missing`].
///
/// Row numbers in errors are file line numbers (the header is row 1).
pub fn load_wave(path: &Path, schema: &AttributeSchema, wave_label: &str) -> Result<Wave> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(open(path)?);
    let headers = reader.headers().map_err(csv_err(path))?.clone();

    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };

    // column position of each schema feature, plus the two id columns
    let mut feature_cols = vec![None; schema.len()];
    let mut id_col = None;
    let mut hh_col = None;
    for (pos, name) in headers.iter().enumerate() {
        let slot = match name {
            ID_COL => &mut id_col,
            HH_COL => &mut hh_col,
            other => match schema.index_of(other) {
                Some(k) => &mut feature_cols[k],
                None => return Err(parse_err(1, format!("unknown column {other:?}"))),
            },
        };
        if slot.replace(pos).is_some() {
            return Err(parse_err(1, format!("duplicate column {name:?}")));
        }
    }
    let id_col = id_col.ok_or_else(|| parse_err(1, format!("missing column {ID_COL:?}")))?;
    let hh_col = hh_col.ok_or_else(|| parse_err(1, format!("missing column {HH_COL:?}")))?;
    let feature_cols = feature_cols
        .into_iter()
        .zip(schema.names())
        .map(|(c, name)| c.ok_or_else(|| parse_err(1, format!("missing column {name:?}"))))
        .collect::<Result<Vec<_>>>()?;

    let mut first_row: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Individual>> = HashMap::new();

    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(csv_err(path))?;
        let id = record.get(id_col).unwrap_or("").to_string();
        let hh = record.get(hh_col).unwrap_or("").to_string();
        if id.is_empty() {
            return Err(parse_err(row, "empty individual_id".into()));
        }
        if hh.is_empty() {
            return Err(parse_err(row, "empty household_id".into()));
        }
        if let Some(&first) = first_row.get(&id) {
            return Err(Error::DuplicateIndividual {
                id,
                first_row: first,
                second_row: row,
            });
        }
        first_row.insert(id.clone(), row);

        let mut values = Vec::with_capacity(schema.len());
        for (feature, &col) in schema.features().iter().zip(&feature_cols) {
            let cell = record.get(col).unwrap_or("").trim();
            let value = if cell.is_empty() {
                Value::Missing
            } else {
                match feature.kind {
                    FeatureKind::Year => match cell.parse::<i32>() {
                        Ok(y) if y > 0 => Value::Year(y),
                        _ => {
                            return Err(parse_err(
                                row,
                                format!(
                                    "{}: expected a positive integer year, got {cell:?}",
                                    feature.name
                                ),
                            ))
                        }
                    },
                    FeatureKind::Categorical => {
                        if let Some(levels) = &feature.levels {
                            if !levels.contains(cell) {
                                return Err(parse_err(
                                    row,
                                    format!("{}: unknown category {cell:?}", feature.name),
                                ));
                            }
                        }
                        Value::Code(cell.to_string())
                    }
                }
            };
            values.push(value);
        }
        if !groups.contains_key(&hh) {
            order.push(hh.clone());
        }
        groups
            .entry(hh.clone())
            .or_default()
            .push(Individual::new(id, hh, values));
    }

    let households = order
        .into_iter()
        .map(|hh| {
            let members = groups.remove(&hh).unwrap_or_default();
            Household::new(hh, members)
        })
        .collect::<Result<Vec<_>>>()?;
    Wave::new(wave_label, households)
}

/// Writes a wave in the normalized CSV layout (schema column order).
pub fn write_wave(wave: &Wave, schema: &AttributeSchema, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec![ID_COL, HH_COL];
    header.extend(schema.names());
    w.write_record(&header).map_err(csv_err(path))?;
    for m in wave.individuals() {
        let mut rec = vec![m.id.clone(), m.household_id.clone()];
        rec.extend(m.values.iter().map(Value::to_cell));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load_pairs(path: &Path) -> Result<BTreeSet<(String, String)>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let headers = reader.headers().map_err(csv_err(path))?.clone();
    if headers.len() != 2 || &headers[0] != "id_wave1" || &headers[1] != "id_wave2" {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: "expected header id_wave1,id_wave2".into(),
        });
    }
    let mut out = BTreeSet::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let pair = (rec[0].to_string(), rec[1].to_string());
        if !out.insert(pair) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                message: format!("duplicate pair ({}, {})", &rec[0], &rec[1]),
            });
        }
    }
    Ok(out)
}

fn write_pairs(pairs: &BTreeSet<(String, String)>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["id_wave1", "id_wave2"])
        .map_err(csv_err(path))?;
    for (a, b) in pairs {
        w.write_record([a, b]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a CSV whose header must equal `header`, returning each record with
/// its file line number.
pub(crate) fn read_table(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let found = reader.headers().map_err(csv_err(path))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            message: format!("expected header {}", header.join(",")),
        });
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| rec.map(|r| (i + 2, r)).map_err(csv_err(path)))
        .collect()
}

pub fn load_truth(households: &Path, individuals: &Path) -> Result<GroundTruth> {
    Ok(GroundTruth {
        household_pairs: load_pairs(households)?,
        individual_pairs: load_pairs(individuals)?,
    })
}

pub fn write_truth(truth: &GroundTruth, households: &Path, individuals: &Path) -> Result<()> {
    write_pairs(&truth.household_pairs, households)?;
    write_pairs(&truth.individual_pairs, individuals)
}
