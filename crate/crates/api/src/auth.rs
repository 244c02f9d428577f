//! Static bearer tokens.
//!
//! The token file is JSON:
//!
//! ```json
//! {"tokens": [{"token": "s3cret", "role": "admin", "subject_id": "ops"}]}
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use http::HeaderMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Student,
    Instructor,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiToken {
    pub token: String,
    pub role: Role,
    pub subject_id: String,
}

#[derive(Debug, Error)]
pub enum TokenFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Malformed {
        path: String,
        source: serde_json::Error,
    },
    #[error("duplicate or empty token in token file")]
    BadToken,
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    by_token: BTreeMap<String, ApiToken>,
}

#[derive(Deserialize)]
struct TokenFile {
    tokens: Vec<ApiToken>,
}

impl TokenTable {
    pub fn new(tokens: impl IntoIterator<Item = ApiToken>) -> Result<Self, TokenFileError> {
        let mut by_token = BTreeMap::new();
        for t in tokens {
            if t.token.is_empty() || by_token.contains_key(&t.token) {
                return Err(TokenFileError::BadToken);
            }
            by_token.insert(t.token.clone(), t);
        }
        Ok(TokenTable { by_token })
    }

    pub fn load(path: &Path) -> Result<Self, TokenFileError> {
        let shown = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| TokenFileError::Io {
            path: shown.clone(),
            source,
        })?;
        let file: TokenFile =
            serde_json::from_str(&text).map_err(|source| TokenFileError::Malformed {
                path: shown,
                source,
            })?;
        Self::new(file.tokens)
    }

    /// The token named by an `Authorization: Bearer` header, if known.
    pub fn resolve(&self, headers: &HeaderMap) -> Option<&ApiToken> {
        let value = headers.get(http::header::AUTHORIZATION)?.to_str().ok()?;
        let token = value.strip_prefix("Bearer ")?.trim();
        self.by_token.get(token)
    }
}
