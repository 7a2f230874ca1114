//! Pair dataset directory: `pairNNNN.txt` holds two whitespace-separated
//! numeric columns, `pairNNNN.json` holds the metadata.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CausalError, CausalPair, Direction};
use crate::prompts::VariableMeta;

/// Pairs dropped by default: multivariate or incomplete in the benchmark.
pub const DEFAULT_EXCLUDED: [u32; 10] = [52, 53, 54, 55, 71, 81, 82, 83, 86, 105];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VarRecord {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PairMetadata {
    pub pair_id: String,
    pub a: VarRecord,
    pub b: VarRecord,
    pub context: String,
    #[serde(default)]
    pub ground_truth: Option<Direction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPair {
    pub pair_id: String,
    pub reason: String,
}

#[derive(Clone, Debug, Default)]
pub struct PairDataset {
    pub pairs: Vec<CausalPair>,
    pub excluded: Vec<ExcludedPair>,
}

impl PairDataset {
    pub fn excluded_ids(&self) -> impl Iterator<Item = &str> {
        self.excluded.iter().map(|e| e.pair_id.as_str())
    }
}

/// Trailing decimal number of a pair id (`"pair0052"` -> 52).
pub fn pair_number(pair_id: &str) -> Option<u32> {
    let digits: String = pair_id.chars().rev().take_while(char::is_ascii_digit).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

#[derive(Debug)]
pub(crate) enum SampleProblem {
    Columns(usize, usize),
    NotNumeric(usize),
}

pub(crate) fn parse_samples(text: &str) -> Result<Vec<(f64, f64)>, SampleProblem> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(SampleProblem::Columns(i + 1, fields.len()));
        }
        let parse = |s: &str| s.parse::<f64>().ok().filter(|v| v.is_finite());
        match (parse(fields[0]), parse(fields[1])) {
            (Some(x), Some(y)) => out.push((x, y)),
            _ => return Err(SampleProblem::NotNumeric(i + 1)),
        }
    }
    Ok(out)
}

fn variable(r: &VarRecord) -> Result<VariableMeta, crate::prompts::PromptError> {
    match r.description.as_deref().filter(|d| !d.trim().is_empty()) {
        Some(d) => VariableMeta::new(r.name.clone(), d),
        None => VariableMeta::name_only(r.name.clone()),
    }
}

/// Loads every `*.json` metadata file in `dir` (sorted by name) with its
/// samples file. Pairs in `exclude`, pairs whose samples are not exactly two
/// finite numeric columns, and pairs with fewer than ten rows are listed in
/// `excluded` and never scored.
pub fn load_pair_dataset(dir: &Path, exclude: &[u32]) -> Result<PairDataset, CausalError> {
    let io = |p: &Path, e: &dyn std::fmt::Display| CausalError::Dataset(format!("{}: {e}", p.display()));
    let mut meta_files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, &e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    meta_files.sort();
    if meta_files.is_empty() {
        return Err(CausalError::Dataset(format!("{}: no pair metadata files", dir.display())));
    }

    let mut ds = PairDataset::default();
    for meta_path in meta_files {
        let text = std::fs::read_to_string(&meta_path).map_err(|e| io(&meta_path, &e))?;
        let meta: PairMetadata = serde_json::from_str(&text).map_err(|e| io(&meta_path, &e))?;
        let mut exclude_with = |reason: String| {
            ds.excluded.push(ExcludedPair { pair_id: meta.pair_id.clone(), reason });
        };
        if pair_number(&meta.pair_id).is_some_and(|n| exclude.contains(&n)) {
            exclude_with("excluded by list".into());
            continue;
        }
        let samples_path = meta_path.with_extension("txt");
        let raw = std::fs::read_to_string(&samples_path).map_err(|e| io(&samples_path, &e))?;
        let samples = match parse_samples(&raw) {
            Ok(s) => s,
            Err(SampleProblem::Columns(line, n)) => {
                exclude_with(format!("line {line} has {n} columns; not a univariate pair"));
                continue;
            }
            Err(SampleProblem::NotNumeric(line)) => {
                exclude_with(format!("line {line} has missing or non-numeric values"));
                continue;
            }
        };
        if samples.len() < super::reci::MIN_SAMPLES {
            exclude_with(format!("only {} samples", samples.len()));
            continue;
        }
        let prompt_err = |e: crate::prompts::PromptError| io(&meta_path, &e);
        ds.pairs.push(CausalPair {
            pair_id: meta.pair_id.clone(),
            a: variable(&meta.a).map_err(prompt_err)?,
            b: variable(&meta.b).map_err(prompt_err)?,
            brief_context: meta.context.clone(),
            samples,
            ground_truth: meta.ground_truth,
        });
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_numbers() {
        assert_eq!(pair_number("pair0052"), Some(52));
        assert_eq!(pair_number("105"), Some(105));
        assert_eq!(pair_number("abc"), None);
    }

    #[test]
    fn sample_parsing() {
        assert_eq!(parse_samples("1 2\n\n3\t4.5\n").unwrap(), [(1.0, 2.0), (3.0, 4.5)]);
        assert!(matches!(parse_samples("1 2 3\n"), Err(SampleProblem::Columns(1, 3))));
        assert!(matches!(parse_samples("1 2\n1 NaN\n"), Err(SampleProblem::NotNumeric(2))));
        assert!(matches!(parse_samples("1 NA\n"), Err(SampleProblem::NotNumeric(1))));
    }

    fn write_pair(dir: &Path, id: &str, samples: &str, truth: Option<&str>) {
        let meta = serde_json::json!({
            "pair_id": id,
            "a": {"name": "Altitude", "description": "the height above sea level"},
            "b": {"name": "Temperature", "description": "the mean temperature"},
            "context": "the weather",
            "ground_truth": truth,
        });
        std::fs::write(dir.join(format!("{id}.json")), meta.to_string()).unwrap();
        std::fs::write(dir.join(format!("{id}.txt")), samples).unwrap();
    }

    #[test]
    fn loader_applies_exclusions() {
        let dir = tempfile::tempdir().unwrap();
        let good: String = (0..12).map(|i| format!("{i} {}\n", i * i)).collect();
        write_pair(dir.path(), "pair0001", &good, Some("a->b"));
        write_pair(dir.path(), "pair0052", &good, Some("a->b"));
        write_pair(dir.path(), "pair0003", "1 2 3\n", Some("b->a"));
        write_pair(dir.path(), "pair0004", "1 2\n", Some("b->a"));
        let ds = load_pair_dataset(dir.path(), &DEFAULT_EXCLUDED).unwrap();
        assert_eq!(ds.pairs.len(), 1);
        assert_eq!(ds.pairs[0].pair_id, "pair0001");
        assert_eq!(ds.pairs[0].ground_truth, Some(Direction::XCausesY));
        assert_eq!(ds.excluded_ids().collect::<Vec<_>>(), ["pair0003", "pair0004", "pair0052"]);
    }
}
