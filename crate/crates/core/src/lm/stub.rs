//! Table-driven deterministic backend.
//!
//! File format: a JSON object keyed by the hex SHA-256 of the exact prompt
//! text. Each value maps candidate strings to log-probabilities, plus an
//! optional `"*"` entry holding the full next-token distribution:
//!
//! ```json
//! { "9c1e…": { " Y": -0.2, " N": -1.8, "*": { " Y": -0.2, " N": -1.8, " M": -4.0 } } }
//! ```
//!
//! Candidate lookups consult the explicit entries first and then `"*"`.
//! Anything else is a [`LmError::MissingStubEntry`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Backend, BackendConfig, LmError, Prompt, ScoreMode};
use crate::util::sha256_hex;

const DISTRIBUTION_KEY: &str = "*";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StubEntry {
    pub candidates: BTreeMap<String, f64>,
    pub distribution: Option<BTreeMap<String, f64>>,
}

impl Serialize for StubEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        for (k, v) in &self.candidates {
            m.serialize_entry(k, v)?;
        }
        if let Some(d) = &self.distribution {
            m.serialize_entry(DISTRIBUTION_KEY, d)?;
        }
        m.end()
    }
}

impl<'de> Deserialize<'de> for StubEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Value {
            Num(f64),
            Dist(BTreeMap<String, f64>),
        }
        let raw: BTreeMap<String, Value> = BTreeMap::deserialize(d)?;
        let mut entry = StubEntry::default();
        for (k, v) in raw {
            match (k.as_str(), v) {
                (DISTRIBUTION_KEY, Value::Dist(dist)) => entry.distribution = Some(dist),
                (DISTRIBUTION_KEY, Value::Num(_)) => {
                    return Err(serde::de::Error::custom("\"*\" must map tokens to log-probabilities"))
                }
                (_, Value::Num(x)) => {
                    entry.candidates.insert(k, x);
                }
                (_, Value::Dist(_)) => {
                    return Err(serde::de::Error::custom(format!("candidate {k:?} must map to a number")))
                }
            }
        }
        Ok(entry)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StubTable {
    pub entries: BTreeMap<String, StubEntry>,
}

impl StubTable {
    pub fn load(path: &Path) -> Result<Self, LmError> {
        let err = |message: String| LmError::StubTable { path: path.display().to_string(), message };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        crate::util::write_atomic(path, self.to_json().as_bytes())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("stub table serializes")
    }

    fn entry_mut(&mut self, prompt: &str) -> &mut StubEntry {
        self.entries.entry(sha256_hex(prompt.as_bytes())).or_default()
    }

    pub fn insert_scores<'a>(&mut self, prompt: &str, scores: impl IntoIterator<Item = (&'a str, f64)>) {
        let e = self.entry_mut(prompt);
        for (c, v) in scores {
            e.candidates.insert(c.to_string(), v);
        }
    }

    pub fn insert_distribution<'a>(&mut self, prompt: &str, dist: impl IntoIterator<Item = (&'a str, f64)>) {
        let e = self.entry_mut(prompt);
        e.distribution = Some(dist.into_iter().map(|(t, v)| (t.to_string(), v)).collect());
    }

    pub fn lookup(&self, prompt: &Prompt, candidate: &str) -> Result<f64, LmError> {
        let sha = prompt.sha256();
        let entry = self
            .entries
            .get(&sha)
            .ok_or_else(|| LmError::MissingStubEntry { prompt_sha: sha.clone(), candidate: None })?;
        entry
            .candidates
            .get(candidate)
            .or_else(|| entry.distribution.as_ref().and_then(|d| d.get(candidate)))
            .copied()
            .ok_or(LmError::MissingStubEntry { prompt_sha: sha, candidate: Some(candidate.to_string()) })
    }
}

pub struct StubBackend {
    table: StubTable,
    id: String,
}

impl StubBackend {
    pub fn new(table: StubTable) -> Self {
        let id = format!("stub:{}", &sha256_hex(table.to_json().as_bytes())[..16]);
        StubBackend { table, id }
    }

    pub fn from_config(cfg: &BackendConfig) -> Result<Self, LmError> {
        let path = cfg
            .stub_table_path
            .as_deref()
            .ok_or_else(|| LmError::Config("stub backend requires stub_table_path".into()))?;
        Ok(Self::new(StubTable::load(path)?))
    }

    pub fn table(&self) -> &StubTable {
        &self.table
    }
}

impl Backend for StubBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model_name(&self) -> &str {
        "stub"
    }

    fn max_top_k(&self) -> usize {
        super::MAX_HTTP_TOP_K
    }

    fn score(&self, prompt: &Prompt, candidates: &[String], _mode: ScoreMode) -> Result<Vec<f64>, LmError> {
        candidates.iter().map(|c| self.table.lookup(prompt, c)).collect()
    }

    fn top_tokens(&self, prompt: &Prompt, _top_k: usize) -> Result<Vec<(String, f64)>, LmError> {
        let sha = prompt.sha256();
        self.table
            .entries
            .get(&sha)
            .and_then(|e| e.distribution.as_ref())
            .map(|d| d.iter().map(|(k, v)| (k.clone(), *v)).collect())
            .ok_or(LmError::MissingStubEntry { prompt_sha: sha, candidate: Some(DISTRIBUTION_KEY.into()) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_round_trip_and_format() {
        let mut t = StubTable::default();
        t.insert_scores("P1", [("Y", -0.2), ("N", -1.8)]);
        t.insert_distribution("P1", [("Good", -0.1)]);
        let json = t.to_json();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let key = sha256_hex(b"P1");
        assert_eq!(v[&key]["Y"], -0.2);
        assert_eq!(v[&key]["*"]["Good"], -0.1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        t.save(&path).unwrap();
        assert_eq!(StubTable::load(&path).unwrap(), t);
    }

    #[test]
    fn malformed_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        std::fs::write(&path, r#"{"abc": {"*": 1.0}}"#).unwrap();
        assert!(matches!(StubTable::load(&path), Err(LmError::StubTable { .. })));
        std::fs::write(&path, "not json").unwrap();
        assert!(matches!(StubTable::load(&path), Err(LmError::StubTable { .. })));
    }

    #[test]
    fn candidate_falls_through_to_distribution() {
        let mut t = StubTable::default();
        t.insert_distribution("P", [("A", -0.5)]);
        assert_eq!(t.lookup(&Prompt::new("P").unwrap(), "A").unwrap(), -0.5);
    }
}
