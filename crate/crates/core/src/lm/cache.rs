use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};

use super::LmError;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CacheKey {
    pub backend_id: String,
    pub model_name: String,
    pub prompt_sha: String,
    pub candidates: Vec<String>,
    pub top_k: Option<usize>,
    pub mode: String,
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: CacheKey,
    entries: Vec<(String, f64)>,
}

type Slot = Arc<OnceCell<Vec<(String, f64)>>>;

/// Result cache with in-flight deduplication.
///
/// Each key owns a once-cell: the first caller runs the fetch while any
/// concurrent caller for the same key blocks on it. Failed fetches leave the
/// cell empty. Successful fetches are appended to the JSON-lines file when
/// one is configured; later lines win on reload.
pub struct ScoreCache {
    slots: Mutex<HashMap<CacheKey, Slot>>,
    log: Option<Mutex<File>>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        ScoreCache { slots: Mutex::new(HashMap::new()), log: None }
    }

    pub fn open(path: Option<&Path>) -> Result<Self, LmError> {
        let Some(path) = path else {
            return Ok(Self::in_memory());
        };
        let mut slots = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: CacheLine = serde_json::from_str(&line).map_err(|e| {
                    std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1))
                })?;
                slots.insert(parsed.key, Arc::new(OnceCell::with_value(parsed.entries)));
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ScoreCache { slots: Mutex::new(slots), log: Some(Mutex::new(file)) })
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().values().filter(|c| c.get().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the cached value, or runs `fetch` exactly once per key.
    /// The flag is true when this call did not run `fetch` itself.
    pub fn get_or_fetch<F>(&self, key: CacheKey, fetch: F) -> Result<(Vec<(String, f64)>, bool), LmError>
    where
        F: FnOnce() -> Result<Vec<(String, f64)>, LmError>,
    {
        let slot = {
            let mut slots = self.slots.lock().unwrap();
            slots.entry(key.clone()).or_default().clone()
        };
        let mut fetched = false;
        let value = slot.get_or_try_init(|| {
            fetched = true;
            let entries = fetch()?;
            self.append(&key, &entries)?;
            Ok::<_, LmError>(entries)
        })?;
        Ok((value.clone(), !fetched))
    }

    fn append(&self, key: &CacheKey, entries: &[(String, f64)]) -> Result<(), LmError> {
        if let Some(log) = &self.log {
            let line = serde_json::to_string(&CacheLine { key: key.clone(), entries: entries.to_vec() })
                .expect("cache line serializes");
            let mut f = log.lock().unwrap();
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        Ok(())
    }
}
