use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::LmError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Stub,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub auth_token_env: String,
    pub model_name: Option<String>,
    pub stub_table_path: Option<PathBuf>,
    pub max_retries: u32,
    pub request_timeout_secs: f64,
    /// Append-only JSON-lines cache; in-memory only when unset.
    pub cache_path: Option<PathBuf>,
    pub max_prompt_chars: Option<usize>,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            kind: BackendKind::Stub,
            base_url: None,
            auth_token_env: "LMPRIOR_API_TOKEN".to_string(),
            model_name: None,
            stub_table_path: None,
            max_retries: 3,
            request_timeout_secs: 30.0,
            cache_path: None,
            max_prompt_chars: None,
        }
    }
}

impl BackendConfig {
    pub fn stub(path: impl Into<PathBuf>) -> Self {
        BackendConfig { kind: BackendKind::Stub, stub_table_path: Some(path.into()), ..Default::default() }
    }

    pub fn http(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        BackendConfig {
            kind: BackendKind::Http,
            base_url: Some(base_url.into()),
            model_name: Some(model_name.into()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), LmError> {
        match self.kind {
            BackendKind::Http => {
                if self.base_url.as_deref().is_none_or(str::is_empty) {
                    return Err(LmError::Config("http backend requires base_url".into()));
                }
                if self.model_name.as_deref().is_none_or(str::is_empty) {
                    return Err(LmError::Config("http backend requires model_name".into()));
                }
            }
            BackendKind::Stub => {
                let path = self
                    .stub_table_path
                    .as_ref()
                    .ok_or_else(|| LmError::Config("stub backend requires stub_table_path".into()))?;
                if !path.is_file() {
                    return Err(LmError::StubTable {
                        path: path.display().to_string(),
                        message: "file does not exist".into(),
                    });
                }
            }
        }
        if !(self.request_timeout_secs > 0.0 && self.request_timeout_secs.is_finite()) {
            return Err(LmError::Config("request_timeout_secs must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn http_requires_url_and_model() {
        let mut cfg = BackendConfig::http("http://localhost:1", "m");
        assert!(cfg.validate().is_ok());
        cfg.model_name = None;
        assert!(matches!(cfg.validate(), Err(LmError::Config(_))));
        cfg = BackendConfig::http("", "m");
        assert!(matches!(cfg.validate(), Err(LmError::Config(_))));
    }

    #[test]
    fn stub_requires_existing_file() {
        let cfg = BackendConfig::stub("/definitely/not/here.json");
        assert!(matches!(cfg.validate(), Err(LmError::StubTable { .. })));
        assert!(matches!(
            BackendConfig { kind: BackendKind::Stub, ..Default::default() }.validate(),
            Err(LmError::Config(_))
        ));
    }

    #[test]
    fn parses_from_toml() {
        let cfg: BackendConfig = toml::from_str(
            r#"
            kind = "http"
            base_url = "http://x"
            model_name = "base-model"
            max_retries = 5
            "#,
        )
        .unwrap();
        assert_eq!(cfg.max_retries, 5);
        assert_eq!(cfg.auth_token_env, "LMPRIOR_API_TOKEN");
    }
}
