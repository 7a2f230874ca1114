//! Feature scoring by answer log-odds, threshold selection, and the
//! dataset-corruption harness.
//!
//! A variable's score is `log p(positive | c) - log p(negative | c)` for the
//! rendered prompt `c`; it is kept when the score is strictly greater than
//! the threshold.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learners::{self, Dataset, LabelRule, LearnerError, LearnerId, RawTable, SchemaHints};
use crate::lm::{LmClient, LmError, TokenScoreRequest};
use crate::prompts::{render_feature_prompt, PromptError, TaskContext, VariableMeta};
use crate::seed;

pub const DEFAULT_TAU: f64 = 0.0;

#[derive(Debug, Error)]
pub enum FeatError {
    #[error("no variables to score")]
    NoVariables,
    #[error("variable {0:?} listed twice")]
    DuplicateVariable(String),
    #[error("template {0} must have exactly two answer tokens (positive first)")]
    AnswerCount(String),
    #[error("prompt for variable {variable:?}: {source}")]
    Prompt { variable: String, source: PromptError },
    #[error("scoring variable {variable:?}: {source}")]
    Lm { variable: String, source: LmError },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("label column {0:?} is among the scored features")]
    LabelLeakage(String),
    #[error("label column {0:?} must exist in the base table only")]
    LabelInNuisance(String),
    #[error("selection run has no score for feature column {0:?}")]
    UncoveredFeature(String),
    #[error("subsample of {requested} rows exceeds the {available} rows available")]
    SubsampleTooLarge { requested: usize, available: usize },
    #[error("metadata {path}: {message}")]
    Metadata { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub variable: VariableMeta,
    pub score: f64,
    pub kept: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRun {
    pub tau: f64,
    pub scores: Vec<FeatureScore>,
    pub template_id: String,
    pub backend_id: String,
}

impl SelectionRun {
    pub fn kept_names(&self) -> Vec<&str> {
        self.scores.iter().filter(|s| s.kept).map(|s| s.variable.name.as_str()).collect()
    }

    pub fn score_of(&self, name: &str) -> Option<&FeatureScore> {
        self.scores.iter().find(|s| s.variable.name == name)
    }

    /// The same scores re-thresholded at `tau`.
    pub fn with_tau(&self, tau: f64) -> SelectionRun {
        let mut run = self.clone();
        run.tau = tau;
        for s in &mut run.scores {
            s.kept = keep(s.score, tau);
        }
        run
    }
}

pub fn keep(score: f64, tau: f64) -> bool {
    score > tau
}

pub fn apply_threshold(scores: &[f64], tau: f64) -> Vec<bool> {
    scores.iter().map(|&s| keep(s, tau)).collect()
}

pub fn score_feature(v: &VariableMeta, ctx: &TaskContext, client: &LmClient) -> Result<f64, FeatError> {
    if ctx.answer_tokens.len() != 2 {
        return Err(FeatError::AnswerCount(ctx.id.clone()));
    }
    let rendered =
        render_feature_prompt(ctx, v).map_err(|source| FeatError::Prompt { variable: v.name.clone(), source })?;
    let lm_err = |source| FeatError::Lm { variable: v.name.clone(), source };
    let req = TokenScoreRequest::new(rendered.prompt, rendered.answer_tokens).map_err(lm_err)?;
    let out = client.score_candidates(&req).map_err(lm_err)?;
    Ok(out.entries[0].logprob - out.entries[1].logprob)
}

/// Scores every variable (concurrently) and applies the threshold. The
/// first failure aborts the run and names the variable.
pub fn select(variables: &[VariableMeta], ctx: &TaskContext, tau: f64, client: &LmClient) -> Result<SelectionRun, FeatError> {
    if variables.is_empty() {
        return Err(FeatError::NoVariables);
    }
    let mut seen = BTreeSet::new();
    for v in variables {
        if !seen.insert(&v.name) {
            return Err(FeatError::DuplicateVariable(v.name.clone()));
        }
    }
    let scores: Vec<f64> =
        variables.par_iter().map(|v| score_feature(v, ctx, client)).collect::<Result<_, _>>()?;
    Ok(SelectionRun {
        tau,
        scores: variables
            .iter()
            .zip(scores)
            .map(|(v, score)| FeatureScore { variable: v.clone(), score, kept: keep(score, tau) })
            .collect(),
        template_id: ctx.id.clone(),
        backend_id: client.backend_id().to_string(),
    })
}

#[derive(Deserialize)]
struct MetaRecord {
    name: String,
    #[serde(default)]
    description: Option<String>,
}

/// Variable metadata from CSV (columns `name,description`) or a JSON array
/// of `{name, description}` objects, chosen by file extension. An empty
/// description yields a name-only variable.
pub fn load_metadata(path: &Path) -> Result<Vec<VariableMeta>, FeatError> {
    let err = |message: String| FeatError::Metadata { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let records: Vec<MetaRecord> = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))?
    } else {
        csv::Reader::from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(|e| err(e.to_string()))?
    };
    records
        .into_iter()
        .map(|r| match r.description.filter(|d| !d.trim().is_empty()) {
            Some(d) => VariableMeta::new(r.name, d),
            None => VariableMeta::name_only(r.name),
        })
        .collect::<Result<_, _>>()
        .map_err(|e| err(e.to_string()))
}

/// Splits table columns into those with metadata (in column order) and
/// those without, which cannot be scored and are dropped with a warning.
pub fn partition_scoreable(columns: &[String], metadata: &[VariableMeta]) -> (Vec<VariableMeta>, Vec<String>) {
    let by_name: BTreeMap<&str, &VariableMeta> = metadata.iter().map(|m| (m.name.as_str(), m)).collect();
    let mut scoreable = Vec::new();
    let mut dropped = Vec::new();
    for c in columns {
        match by_name.get(c.as_str()) {
            Some(m) => scoreable.push((*m).clone()),
            None => {
                log::warn!("column {c:?} has no metadata and is excluded");
                dropped.push(c.clone());
            }
        }
    }
    (scoreable, dropped)
}

#[derive(Clone, Debug)]
pub struct CorruptionSpec {
    pub base_table: RawTable,
    pub nuisance_table: RawTable,
    pub label_column: String,
    /// Rows in the merged table; defaults to the smaller table's row count.
    pub subsample_rows: Option<usize>,
    pub seed: u64,
    pub train_fraction: f64,
    pub hints: SchemaHints,
    pub label_rule: LabelRule,
}

impl CorruptionSpec {
    pub fn new(base_table: RawTable, nuisance_table: RawTable, label_column: impl Into<String>, seed: u64) -> Self {
        CorruptionSpec {
            base_table,
            nuisance_table,
            label_column: label_column.into(),
            subsample_rows: None,
            seed,
            train_fraction: 0.8,
            hints: SchemaHints::new(),
            label_rule: LabelRule::Auto,
        }
    }

    /// Seeded row subsample of each table, joined column-wise.
    pub fn merged(&self) -> Result<RawTable, FeatError> {
        let available = self.base_table.n_rows().min(self.nuisance_table.n_rows());
        let n = self.subsample_rows.unwrap_or(available);
        if n > available {
            return Err(FeatError::SubsampleTooLarge { requested: n, available });
        }
        self.base_table.column_index(&self.label_column)?;
        if self.nuisance_table.columns.contains(&self.label_column) {
            return Err(FeatError::LabelInNuisance(self.label_column.clone()));
        }
        let pick = |t: &RawTable, stream: u64| {
            let mut idx: Vec<usize> = (0..t.n_rows()).collect();
            idx.shuffle(&mut seed::rng(seed::child_seed(self.seed, "merge", stream)));
            idx.truncate(n);
            t.take_rows(&idx)
        };
        Ok(pick(&self.base_table, 0).hstack(&pick(&self.nuisance_table, 1))?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionReport {
    pub learner: LearnerId,
    pub acc_base: f64,
    pub acc_corrupted: f64,
    pub acc_filtered: f64,
    pub rows: usize,
    pub kept_features: Vec<String>,
}

/// Trains on base features only, on all merged features, and on the kept
/// merged features, with one shared train/test split.
pub fn run_corruption_experiment(
    spec: &CorruptionSpec,
    run: &SelectionRun,
    learner: LearnerId,
) -> Result<CorruptionReport, FeatError> {
    if run.score_of(&spec.label_column).is_some() {
        return Err(FeatError::LabelLeakage(spec.label_column.clone()));
    }
    let merged = spec.merged()?;
    for c in merged.columns.iter().filter(|c| **c != spec.label_column) {
        if run.score_of(c).is_none() {
            return Err(FeatError::UncoveredFeature(c.clone()));
        }
    }
    let full = Dataset::from_table(&merged, &spec.label_column, &spec.hints, &spec.label_rule)?;
    let base_cols: BTreeSet<&str> = spec.base_table.columns.iter().map(String::as_str).collect();
    let kept: BTreeSet<&str> = run.kept_names().into_iter().collect();

    let fit = |ds: &Dataset| learners::fit_predict(ds, learner, spec.seed, spec.train_fraction).map(|r| r.accuracy);
    let acc_base = fit(&full.select_sources(|s| base_cols.contains(s)))?;
    let acc_corrupted = fit(&full)?;
    let acc_filtered = fit(&full.select_sources(|s| kept.contains(s)))?;
    Ok(CorruptionReport {
        learner,
        acc_base,
        acc_corrupted,
        acc_filtered,
        rows: merged.n_rows(),
        kept_features: merged.columns.iter().filter(|c| kept.contains(c.as_str())).cloned().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{StubBackend, StubTable};
    use crate::prompts::Builtin;
    use std::sync::Arc;

    fn setup(entries: &[(&str, f64, f64)]) -> (LmClient, TaskContext, Vec<VariableMeta>) {
        let ctx = TaskContext::builtin(Builtin::Census);
        let mut table = StubTable::default();
        let mut vars = Vec::new();
        for (name, t, f) in entries {
            let v = VariableMeta::new(*name, format!("the {name}")).unwrap();
            let p = render_feature_prompt(&ctx, &v).unwrap();
            table.insert_scores(p.prompt.text(), [(" T", *t), (" F", *f)]);
            vars.push(v);
        }
        (LmClient::in_memory(Arc::new(StubBackend::new(table))), ctx, vars)
    }

    #[test]
    fn score_is_log_odds() {
        let (client, ctx, vars) = setup(&[("a", -0.2, -1.8), ("b", -1.0, -1.0), ("c", -3.0, -0.5)]);
        let scores: Vec<f64> = vars.iter().map(|v| score_feature(v, &ctx, &client).unwrap()).collect();
        assert_eq!(scores, [-0.2 - -1.8, 0.0, -2.5]);
        assert!((scores[0] - 1.6).abs() < 1e-15);
    }

    #[test]
    fn select_applies_strict_threshold_in_input_order() {
        let (client, ctx, vars) = setup(&[("a", -0.2, -1.8), ("b", -1.0, -1.0), ("c", -3.0, -0.5)]);
        let run = select(&vars, &ctx, 0.0, &client).unwrap();
        assert_eq!(run.scores.iter().map(|s| s.kept).collect::<Vec<_>>(), [true, false, false]);
        assert_eq!(run.scores.iter().map(|s| s.variable.name.as_str()).collect::<Vec<_>>(), ["a", "b", "c"]);
        assert!(run.with_tau(-10.0).scores.iter().all(|s| s.kept));
        assert_eq!(run.template_id, "census");
        assert!(run.backend_id.starts_with("stub:"));
    }

    #[test]
    fn failure_names_the_variable() {
        let (client, ctx, mut vars) = setup(&[("a", -0.2, -1.8)]);
        vars.push(VariableMeta::new("unlisted", "x").unwrap());
        match select(&vars, &ctx, 0.0, &client) {
            Err(FeatError::Lm { variable, .. }) => assert_eq!(variable, "unlisted"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(select(&[], &ctx, 0.0, &client), Err(FeatError::NoVariables)));
    }

    #[test]
    fn metadata_loading_and_partition() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("m.csv");
        std::fs::write(&csv, "name,description\nAGEP,age of the person\nRAC1P,\n").unwrap();
        let m = load_metadata(&csv).unwrap();
        assert_eq!(m[0], VariableMeta::new("AGEP", "age of the person").unwrap());
        assert_eq!(m[1], VariableMeta::name_only("RAC1P").unwrap());
        let json = dir.path().join("m.json");
        std::fs::write(&json, r#"[{"name":"AGEP","description":"age of the person"}]"#).unwrap();
        assert_eq!(load_metadata(&json).unwrap()[0], m[0]);

        let cols: Vec<String> = ["RT", "AGEP", "RAC1P"].iter().map(|s| s.to_string()).collect();
        let (ok, dropped) = partition_scoreable(&cols, &m);
        assert_eq!(ok.len(), 2);
        assert_eq!(dropped, ["RT"]);
    }

    fn tables() -> (RawTable, RawTable) {
        let base = RawTable::from_reader("x1,y\n1,0\n2,0\n3,1\n4,1\n5,0\n6,1\n".as_bytes()).unwrap();
        let nuis = RawTable::from_reader("n1\n9\n8\n7\n6\n".as_bytes()).unwrap();
        (base, nuis)
    }

    #[test]
    fn merge_respects_row_counts_and_label_placement() {
        let (base, nuis) = tables();
        let spec = CorruptionSpec::new(base.clone(), nuis.clone(), "y", 1);
        let merged = spec.merged().unwrap();
        assert_eq!(merged.n_rows(), 4);
        assert_eq!(merged.columns, ["x1", "y", "n1"]);
        let mut s2 = spec.clone();
        s2.subsample_rows = Some(3);
        assert_eq!(s2.merged().unwrap().n_rows(), 3);
        s2.subsample_rows = Some(5);
        assert!(matches!(s2.merged(), Err(FeatError::SubsampleTooLarge { .. })));
        let nuis_with_label = RawTable::from_reader("y\n1\n0\n1\n0\n".as_bytes()).unwrap();
        let bad = CorruptionSpec::new(base, nuis_with_label, "y", 1);
        assert!(matches!(bad.merged(), Err(FeatError::LabelInNuisance(_))));
    }

    #[test]
    fn label_among_scored_features_is_leakage() {
        let (base, nuis) = tables();
        let spec = CorruptionSpec::new(base, nuis, "y", 1);
        let fs = |n: &str| FeatureScore { variable: VariableMeta::name_only(n).unwrap(), score: 1.0, kept: true };
        let run = SelectionRun {
            tau: 0.0,
            scores: vec![fs("x1"), fs("y"), fs("n1")],
            template_id: "t".into(),
            backend_id: "b".into(),
        };
        assert!(matches!(
            run_corruption_experiment(&spec, &run, LearnerId::Logreg),
            Err(FeatError::LabelLeakage(_))
        ));
        let run = SelectionRun { scores: vec![fs("x1")], ..run };
        assert!(matches!(
            run_corruption_experiment(&spec, &run, LearnerId::Logreg),
            Err(FeatError::UncoveredFeature(c)) if c == "n1"
        ));
    }
}
