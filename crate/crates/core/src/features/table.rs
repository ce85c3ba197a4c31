//! CSV feature tables: `county_id,year,f0000..f{N-1},label` with one row per
//! county-year. Values are written with 18 significant digits so every f64
//! round-trips exactly; NaN is serialized as an empty field.

use super::FeatureError;
use std::path::Path;

/// Keeps i/o failures (missing file, permissions) distinguishable from
/// malformed-data failures by unwrapping them out of `csv::Error`.
fn csv_err(path: &Path, e: csv::Error) -> FeatureError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(source) = e.into_kind() {
            return FeatureError::Io {
                path: path.to_path_buf(),
                source,
            };
        }
        unreachable!("is_io_error guarantees an Io kind");
    }
    FeatureError::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// One county-year row: features plus the yield label (NaN when the label is
/// unknown at prediction time).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub county_id: String,
    pub year: i32,
    pub features: Vec<f64>,
    pub label: f64,
}

/// A rectangular set of samples sharing one feature width.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub n_features: usize,
    pub samples: Vec<Sample>,
}

impl FeatureTable {
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, sample: Sample) -> Result<(), FeatureError> {
        if sample.features.len() != self.n_features {
            return Err(FeatureError::Table {
                path: Path::new("<memory>").to_path_buf(),
                reason: format!(
                    "row {}-{} has {} features, table width is {}",
                    sample.county_id,
                    sample.year,
                    sample.features.len(),
                    self.n_features
                ),
            });
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Keeps only the first `n_features` feature columns of every row.
    /// Used to derive the in-year table from an end-of-year table, since the
    /// in-year remote-sensing block is a prefix of the end-of-year layout,
    /// but the handcrafted tail must be carried over.
    pub fn with_rs_prefix(&self, rs_len: usize, handcrafted: usize) -> FeatureTable {
        let full_rs = self.n_features - handcrafted;
        assert!(rs_len <= full_rs);
        let mut out = FeatureTable::new(rs_len + handcrafted);
        for s in &self.samples {
            let mut features = s.features[..rs_len].to_vec();
            features.extend_from_slice(&s.features[full_rs..]);
            out.samples.push(Sample {
                county_id: s.county_id.clone(),
                year: s.year,
                features,
                label: s.label,
            });
        }
        out
    }
}

/// Column names `f0000..f{N-1}`, zero-padded to at least four digits.
pub fn feature_column_names(n: usize) -> Vec<String> {
    let width = n.saturating_sub(1).to_string().len().max(4);
    (0..n).map(|i| format!("f{i:0width$}")).collect()
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.17e}")
    }
}

fn parse_value(field: &str, path: &Path, context: &str) -> Result<f64, FeatureError> {
    if field.is_empty() {
        return Ok(f64::NAN);
    }
    field.parse::<f64>().map_err(|e| FeatureError::Table {
        path: path.to_path_buf(),
        reason: format!("{context}: cannot parse {field:?}: {e}"),
    })
}

pub fn write_feature_table(table: &FeatureTable, path: &Path) -> Result<(), FeatureError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header = Vec::with_capacity(table.n_features + 3);
    header.push("county_id".to_string());
    header.push("year".to_string());
    header.extend(feature_column_names(table.n_features));
    header.push("label".to_string());
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for s in &table.samples {
        record.clear();
        record.push(s.county_id.clone());
        record.push(s.year.to_string());
        record.extend(s.features.iter().map(|&v| format_value(v)));
        record.push(format_value(s.label));
        writer.write_record(&record).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(|e| FeatureError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

pub fn read_feature_table(path: &Path) -> Result<FeatureTable, FeatureError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_err(path, e))?
        .clone();
    if header.len() < 3 {
        return Err(FeatureError::Table {
            path: path.to_path_buf(),
            reason: format!("header has only {} columns", header.len()),
        });
    }
    let n_features = header.len() - 3;
    if &header[0] != "county_id" || &header[1] != "year" || &header[header.len() - 1] != "label" {
        return Err(FeatureError::Table {
            path: path.to_path_buf(),
            reason: "header must be county_id,year,f...,label".to_string(),
        });
    }
    let expected_names = feature_column_names(n_features);
    for (i, name) in expected_names.iter().enumerate() {
        if &header[2 + i] != name {
            return Err(FeatureError::Table {
                path: path.to_path_buf(),
                reason: format!(
                    "feature column {} is named {:?}, expected {:?}",
                    i,
                    &header[2 + i],
                    name
                ),
            });
        }
    }

    let mut table = FeatureTable::new(n_features);
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != header.len() {
            return Err(FeatureError::Table {
                path: path.to_path_buf(),
                reason: format!(
                    "row {} has {} fields, header has {}",
                    row_idx + 1,
                    record.len(),
                    header.len()
                ),
            });
        }
        let county_id = record[0].to_string();
        let year: i32 = record[1].parse().map_err(|e| FeatureError::Table {
            path: path.to_path_buf(),
            reason: format!("row {}: bad year {:?}: {}", row_idx + 1, &record[1], e),
        })?;
        let mut features = Vec::with_capacity(n_features);
        for i in 0..n_features {
            features.push(parse_value(
                &record[2 + i],
                path,
                &format!("row {} col {}", row_idx + 1, expected_names[i]),
            )?);
        }
        let label = parse_value(&record[record.len() - 1], path, &format!("row {} label", row_idx + 1))?;
        table.samples.push(Sample {
            county_id,
            year,
            features,
            label,
        });
    }
    Ok(table)
}
