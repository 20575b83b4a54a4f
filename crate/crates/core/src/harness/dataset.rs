//! CSV ingestion with dense label coding.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{0} contains no data rows")]
    Empty(String),
    #[error("label column {0} not found")]
    MissingLabelColumn(String),
    #[error("row {row}, column {column}: `{value}` is not a finite number")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("row {row} has {got} fields, expected {expected}")]
    RaggedRow { row: usize, expected: usize, got: usize },
    #[error("dataset has no feature columns")]
    NoFeatures,
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Last,
    Index(usize),
    Name(String),
}

impl FromStr for LabelColumn {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => s
                .parse::<usize>()
                .map(LabelColumn::Index)
                .unwrap_or_else(|_| LabelColumn::Name(s.to_string())),
        })
    }
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Last => f.write_str("last"),
            LabelColumn::Index(i) => write!(f, "{i}"),
            LabelColumn::Name(n) => f.write_str(n),
        }
    }
}

impl LabelColumn {
    fn resolve(&self, header: &[String]) -> Result<usize, DatasetError> {
        match self {
            LabelColumn::Last if !header.is_empty() => Ok(header.len() - 1),
            LabelColumn::Index(i) if *i < header.len() => Ok(*i),
            LabelColumn::Name(n) => header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| DatasetError::MissingLabelColumn(n.clone())),
            other => Err(DatasetError::MissingLabelColumn(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    /// Dense class codes `0..C`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Write in the format read by [`load_dataset`] with the label last.
    pub fn write_csv(&self, path: &Path) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names.clone();
        header.push("label".into());
        w.write_record(&header)?;
        for (x, &y) in self.features.iter().zip(&self.labels) {
            let mut row: Vec<String> = x.iter().map(|v| v.to_string()).collect();
            row.push(self.class_names[y].clone());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

fn parse_cell(value: &str, row: usize, column: &str) -> Result<f64, DatasetError> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| DatasetError::NonNumeric {
            row,
            column: column.to_string(),
            value: value.to_string(),
        })
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(io)?;
    let header: Vec<String> = reader.headers().map_err(io)?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(io)?;
    if rows.is_empty() {
        return Err(DatasetError::Empty(path.display().to_string()));
    }
    Ok(Table { header, rows })
}

/// Load a headed CSV file; every column except the label must be numeric.
///
/// Rows are 1-based in error messages, counting the header as row 1.
pub fn load_dataset(path: &Path, label: &LabelColumn) -> Result<Dataset, DatasetError> {
    let table = read_table(path)?;
    let label_at = label.resolve(&table.header)?;
    let feature_cols: Vec<usize> = (0..table.header.len()).filter(|&c| c != label_at).collect();
    if feature_cols.is_empty() {
        return Err(DatasetError::NoFeatures);
    }
    let mut codes = HashMap::new();
    let mut class_names = Vec::new();
    let mut features = Vec::with_capacity(table.rows.len());
    let mut labels = Vec::with_capacity(table.rows.len());
    for (r, record) in table.rows.iter().enumerate() {
        let row = r + 2;
        if record.len() != table.header.len() {
            return Err(DatasetError::RaggedRow {
                row,
                expected: table.header.len(),
                got: record.len(),
            });
        }
        let x = feature_cols
            .iter()
            .map(|&c| parse_cell(&record[c], row, &table.header[c]))
            .collect::<Result<Vec<_>, _>>()?;
        let name = record[label_at].to_string();
        let code = *codes.entry(name.clone()).or_insert_with(|| {
            class_names.push(name);
            class_names.len() - 1
        });
        features.push(x);
        labels.push(code);
    }
    Ok(Dataset {
        name: dataset_name(path),
        feature_names: feature_cols.iter().map(|&c| table.header[c].clone()).collect(),
        features,
        labels,
        class_names,
    })
}

/// Load numeric rows, optionally dropping a label column.
pub fn load_features(path: &Path, drop: Option<&LabelColumn>) -> Result<Vec<Vec<f64>>, DatasetError> {
    let table = read_table(path)?;
    let skip = drop.map(|l| l.resolve(&table.header)).transpose()?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(r, record)| {
            (0..record.len())
                .filter(|&c| Some(c) != skip)
                .map(|c| parse_cell(&record[c], r + 2, table.header.get(c).map_or("?", String::as_str)))
                .collect()
        })
        .collect()
}

/// Per-feature min-max scaling to `[0, 1]`; constant features map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for x in rows {
            for j in 0..d {
                min[j] = min[j].min(x[j]);
                max[j] = max[j].max(x[j]);
            }
        }
        Self { min, max }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
            .collect()
    }
}
