use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use axum::extract::FromRequestParts;
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use axum::http::StatusCode;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;
use crate::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    /// Labels posts.
    Annotator,
    /// Resolves tasks without a majority.
    Adjudicator,
    /// Rates summaries on the clinical axes.
    Clinician,
    /// Starts runs and creates annotation tasks.
    Admin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub token: String,
    pub rater_id: String,
    pub roles: BTreeSet<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub rater_id: String,
    pub roles: BTreeSet<Role>,
}

impl Identity {
    pub fn require(&self, role: Role) -> Result<(), ApiError> {
        if self.roles.contains(&role) || self.roles.contains(&Role::Admin) {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("`{}` lacks the {role:?} role", self.rater_id).to_lowercase()))
        }
    }

    /// Fails unless the caller acts as `rater_id`.
    pub fn require_self(&self, rater_id: &str) -> Result<(), ApiError> {
        if self.rater_id == rater_id {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!("token belongs to `{}`, not `{rater_id}`", self.rater_id)))
        }
    }
}

/// Static bearer tokens.
#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    by_token: HashMap<String, Identity>,
}

impl TokenTable {
    pub fn new(entries: Vec<TokenEntry>) -> Result<Self, String> {
        if entries.is_empty() {
            return Err("token list is empty".into());
        }
        let mut by_token = HashMap::new();
        for e in entries {
            if e.token.trim().is_empty() || e.rater_id.trim().is_empty() {
                return Err("tokens and rater ids must be non-empty".into());
            }
            if e.roles.is_empty() {
                return Err(format!("`{}` has no roles", e.rater_id));
            }
            let id = Identity { rater_id: e.rater_id.clone(), roles: e.roles };
            if by_token.insert(e.token, id).is_some() {
                return Err(format!("duplicate token for `{}`", e.rater_id));
            }
        }
        Ok(TokenTable { by_token })
    }

    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let entries = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        TokenTable::new(entries)
    }

    pub fn lookup(&self, token: &str) -> Option<&Identity> {
        self.by_token.get(token)
    }
}

/// The authenticated caller.
pub struct Caller(pub Identity);

impl FromRequestParts<AppState> for Caller {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let unauthorized = |m: &str| ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", m);
        let header = parts
            .headers
            .get(AUTHORIZATION)
            .ok_or_else(|| unauthorized("missing bearer token"))?
            .to_str()
            .map_err(|_| unauthorized("malformed authorization header"))?;
        let token = header.strip_prefix("Bearer ").ok_or_else(|| unauthorized("expected a bearer token"))?;
        state.tokens().lookup(token.trim()).cloned().map(Caller).ok_or_else(|| unauthorized("unknown token"))
    }
}
