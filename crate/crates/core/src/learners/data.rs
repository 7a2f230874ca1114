use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::LearnerError;

/// A CSV table as strings, before any typing or encoding.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read_csv(path: &Path) -> Result<Self, LearnerError> {
        let file = std::fs::File::open(path).map_err(|e| LearnerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_reader(file).map_err(|e| match e {
            LearnerError::Csv(m) => LearnerError::Csv(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_reader(reader: impl std::io::Read) -> Result<Self, LearnerError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let columns: Vec<String> = rdr
            .headers()
            .map_err(|e| LearnerError::Csv(e.to_string()))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c) {
                return Err(LearnerError::DuplicateColumn(c.clone()));
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| LearnerError::Csv(e.to_string()))?;
            rows.push(rec.iter().map(|v| v.trim().to_string()).collect());
        }
        if rows.is_empty() {
            return Err(LearnerError::Empty);
        }
        Ok(RawTable { columns, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, LearnerError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| LearnerError::UnknownColumn(name.to_string()))
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Row subset in the given order.
    pub fn take_rows(&self, idx: &[usize]) -> RawTable {
        RawTable { columns: self.columns.clone(), rows: idx.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    /// Columns for which `keep` holds, in their original order.
    pub fn retain_columns(&self, keep: impl Fn(&str) -> bool) -> RawTable {
        let idx: Vec<usize> = (0..self.columns.len()).filter(|&i| keep(&self.columns[i])).collect();
        RawTable {
            columns: idx.iter().map(|&i| self.columns[i].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&i| r[i].clone()).collect()).collect(),
        }
    }

    /// Column-wise concatenation of two tables with equal row counts.
    pub fn hstack(&self, other: &RawTable) -> Result<RawTable, LearnerError> {
        assert_eq!(self.n_rows(), other.n_rows(), "hstack needs equal row counts");
        if let Some(c) = other.columns.iter().find(|c| self.columns.contains(c)) {
            return Err(LearnerError::DuplicateColumn(c.clone()));
        }
        let columns = self.columns.iter().chain(&other.columns).cloned().collect();
        let rows = self.rows.iter().zip(&other.rows).map(|(a, b)| a.iter().chain(b).cloned().collect()).collect();
        Ok(RawTable { columns, rows })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

pub type SchemaHints = BTreeMap<String, ColumnKind>;

/// How the label column becomes a binary target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelRule {
    /// Exactly two distinct values; the larger one (numerically when both
    /// parse as numbers, otherwise lexicographically) is the positive class.
    Auto,
    GreaterThan(f64),
    Equals(String),
}

impl std::str::FromStr for LabelRule {
    type Err = String;

    /// `auto`, `> 20`, or `= value`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            Ok(LabelRule::Auto)
        } else if let Some(rest) = s.strip_prefix('>') {
            rest.trim().parse().map(LabelRule::GreaterThan).map_err(|_| format!("bad threshold in {s:?}"))
        } else if let Some(rest) = s.strip_prefix('=') {
            Ok(LabelRule::Equals(rest.trim().to_string()))
        } else {
            Err(format!("label rule {s:?} is not auto, '> x' or '= v'"))
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn binarize(column: &str, values: &[&str], rule: &LabelRule) -> Result<Vec<bool>, LearnerError> {
    match rule {
        LabelRule::GreaterThan(t) => values
            .iter()
            .map(|v| {
                parse_number(v).map(|x| x > *t).ok_or_else(|| LearnerError::NonBinaryLabel {
                    column: column.to_string(),
                    detail: format!("{v:?} is not numeric"),
                })
            })
            .collect(),
        LabelRule::Equals(pos) => Ok(values.iter().map(|v| v == pos).collect()),
        LabelRule::Auto => {
            let distinct: BTreeSet<&str> = values.iter().copied().collect();
            if distinct.len() != 2 {
                return Err(LearnerError::NonBinaryLabel {
                    column: column.to_string(),
                    detail: format!("{} distinct values and no binarization rule", distinct.len()),
                });
            }
            let mut d: Vec<&str> = distinct.into_iter().collect();
            if let (Some(a), Some(b)) = (parse_number(d[0]), parse_number(d[1])) {
                if a > b {
                    d.swap(0, 1);
                }
            }
            let positive = d[1];
            Ok(values.iter().map(|v| *v == positive).collect())
        }
    }
}

/// Encoded design matrix with binary labels.
///
/// Numeric columns are kept raw here and z-scored at fit time with
/// training-split statistics; categorical columns are one-hot encoded as
/// `"{col}={value}"` with values in sorted order.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Array2<f64>,
    pub labels: Vec<bool>,
    pub column_names: Vec<String>,
    /// Whether each encoded column is numeric (and so standardized).
    pub numeric: Vec<bool>,
    /// Raw column each encoded column came from.
    pub sources: Vec<String>,
}

impl Dataset {
    pub fn from_table(
        table: &RawTable,
        label_column: &str,
        hints: &SchemaHints,
        rule: &LabelRule,
    ) -> Result<Self, LearnerError> {
        if table.rows.is_empty() {
            return Err(LearnerError::Empty);
        }
        let label_idx = table.column_index(label_column)?;
        for (r, row) in table.rows.iter().enumerate() {
            if row.len() != table.columns.len() {
                return Err(LearnerError::Csv(format!("row {} has {} fields", r + 1, row.len())));
            }
            if let Some(c) = row.iter().position(|v| v.is_empty()) {
                return Err(LearnerError::MissingValue { row: r + 1, column: table.columns[c].clone() });
            }
        }
        let label_values: Vec<&str> = table.rows.iter().map(|r| r[label_idx].as_str()).collect();
        let labels = binarize(label_column, &label_values, rule)?;

        let n = table.n_rows();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let (mut names, mut numeric, mut sources) = (Vec::new(), Vec::new(), Vec::new());
        for (j, col) in table.columns.iter().enumerate() {
            if j == label_idx {
                continue;
            }
            let values: Vec<&str> = table.rows.iter().map(|r| r[j].as_str()).collect();
            let parsed: Option<Vec<f64>> = values.iter().map(|v| parse_number(v)).collect();
            let kind = match hints.get(col) {
                Some(k) => *k,
                None if parsed.is_some() => ColumnKind::Numeric,
                None => ColumnKind::Categorical,
            };
            match kind {
                ColumnKind::Numeric => {
                    let parsed = parsed.ok_or_else(|| LearnerError::NonNumeric(col.clone()))?;
                    cols.push(parsed);
                    names.push(col.clone());
                    numeric.push(true);
                    sources.push(col.clone());
                }
                ColumnKind::Categorical => {
                    let levels: BTreeSet<&str> = values.iter().copied().collect();
                    for level in levels {
                        cols.push(values.iter().map(|v| if *v == level { 1.0 } else { 0.0 }).collect());
                        names.push(format!("{col}={level}"));
                        numeric.push(false);
                        sources.push(col.clone());
                    }
                }
            }
        }
        let mut features = Array2::zeros((n, cols.len()));
        for (j, c) in cols.iter().enumerate() {
            for (i, v) in c.iter().enumerate() {
                features[[i, j]] = *v;
            }
        }
        Ok(Dataset { features, labels, column_names: names, numeric, sources })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    /// Encoded columns whose raw source satisfies `keep`, in original order.
    pub fn select_sources(&self, keep: impl Fn(&str) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.n_features()).filter(|&j| keep(&self.sources[j])).collect();
        Dataset {
            features: self.features.select(ndarray::Axis(1), &idx),
            labels: self.labels.clone(),
            column_names: idx.iter().map(|&j| self.column_names[j].clone()).collect(),
            numeric: idx.iter().map(|&j| self.numeric[j]).collect(),
            sources: idx.iter().map(|&j| self.sources[j].clone()).collect(),
        }
    }
}

pub fn ingest_csv(path: &Path, label_column: &str, hints: &SchemaHints, rule: &LabelRule) -> Result<Dataset, LearnerError> {
    Dataset::from_table(&RawTable::read_csv(path)?, label_column, hints, rule)
}

/// Per-column mean and standard deviation fitted on a set of rows.
#[derive(Clone, Debug)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits on `rows`; columns with `mask[j] == false` pass through.
    pub fn fit(x: &Array2<f64>, rows: &[usize], mask: &[bool]) -> Self {
        let d = x.ncols();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in (0..d).filter(|&j| mask[j]) {
            let m = rows.iter().map(|&i| x[[i, j]]).sum::<f64>() / n;
            let var = rows.iter().map(|&i| (x[[i, j]] - m).powi(2)).sum::<f64>() / n;
            mean[j] = m;
            if var > 0.0 {
                scale[j] = var.sqrt();
            }
        }
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[j]) / self.scale[j];
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(csv: &str) -> RawTable {
        RawTable::from_reader(csv.as_bytes()).unwrap()
    }

    #[test]
    fn one_hot_names_are_deterministic() {
        let t = table("color,size,label\nred,1.5,0\nblue,2,1\nred,3,1\n");
        let ds = Dataset::from_table(&t, "label", &SchemaHints::new(), &LabelRule::Auto).unwrap();
        assert_eq!(ds.column_names, ["color=blue", "color=red", "size"]);
        assert_eq!(ds.numeric, [false, false, true]);
        assert_eq!(ds.labels, [false, true, true]);
        assert_eq!(ds.features.row(0).to_vec(), [0.0, 1.0, 1.5]);
    }

    #[test]
    fn hints_force_categorical() {
        let t = table("zip,label\n94305,a\n10001,b\n");
        let hints = SchemaHints::from([("zip".to_string(), ColumnKind::Categorical)]);
        let ds = Dataset::from_table(&t, "label", &hints, &LabelRule::Auto).unwrap();
        assert_eq!(ds.column_names, ["zip=10001", "zip=94305"]);
        assert_eq!(ds.labels, [false, true]);
    }

    #[test]
    fn commute_label_binarized_above_twenty_minutes() {
        let t = table("AGEP,JWMNP\n30,5\n40,20\n50,21\n60,45\n");
        let rule: LabelRule = "> 20".parse().unwrap();
        let ds = Dataset::from_table(&t, "JWMNP", &SchemaHints::new(), &rule).unwrap();
        assert_eq!(ds.labels, [false, false, true, true]);
    }

    #[test]
    fn non_binary_label_without_rule_is_an_error() {
        let t = table("x,y\n1,a\n2,b\n3,c\n");
        assert!(matches!(
            Dataset::from_table(&t, "y", &SchemaHints::new(), &LabelRule::Auto),
            Err(LearnerError::NonBinaryLabel { .. })
        ));
    }

    #[test]
    fn empty_and_missing_are_errors() {
        assert!(matches!(RawTable::from_reader("a,b\n".as_bytes()), Err(LearnerError::Empty)));
        let t = table("a,b\n1,\n2,1\n");
        assert!(matches!(
            Dataset::from_table(&t, "a", &SchemaHints::new(), &LabelRule::Auto),
            Err(LearnerError::MissingValue { row: 1, .. })
        ));
        assert!(matches!(
            Dataset::from_table(&t, "zzz", &SchemaHints::new(), &LabelRule::Auto),
            Err(LearnerError::UnknownColumn(_))
        ));
    }

    #[test]
    fn standardizer_uses_only_training_rows() {
        let x = Array2::from_shape_vec((4, 1), vec![1.0, 2.0, 3.0, 100.0]).unwrap();
        let s = Standardizer::fit(&x, &[0, 1, 2], &[true]);
        let z = s.transform(&x);
        let train: Vec<f64> = (0..3).map(|i| z[[i, 0]]).collect();
        let mean = train.iter().sum::<f64>() / 3.0;
        let var = train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);
        assert!(z[[3, 0]] > 10.0);
    }

    #[test]
    fn encoding_is_column_wise_independent() {
        let t = table("a,b,c,label\nx,1,p,0\ny,2,q,1\nx,3,p,1\n");
        let full = Dataset::from_table(&t, "label", &SchemaHints::new(), &LabelRule::Auto).unwrap();
        let narrow_table = RawTable {
            columns: vec!["a".into(), "label".into()],
            rows: t.rows.iter().map(|r| vec![r[0].clone(), r[3].clone()]).collect(),
        };
        let narrow = Dataset::from_table(&narrow_table, "label", &SchemaHints::new(), &LabelRule::Auto).unwrap();
        assert_eq!(full.select_sources(|s| s == "a"), narrow);
    }
}
