//! Canonical compact JWT encoding for ledger-anchored access tokens.
//!
//! Tokens are unsecured JWTs (`alg` = `none`, empty signature segment).
//! Their integrity comes from byte equality with the metadata stored in the
//! registry, so every encoder must produce identical bytes for equal claim
//! sets: the header is fixed, payload keys are written in the order
//! `iss, sub, aud, jti, exp, cnf` without whitespace, and base64url is
//! unpadded.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::keys::{Address, PublicKey};
use crate::registry::TokenId;

pub const HEADER_JSON: &str = r#"{"alg":"none","typ":"JWT"}"#;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenFormatError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("missing claim `{0}`")]
    MissingClaim(&'static str),
    #[error("invalid claims: {0}")]
    InvalidClaims(String),
}

/// RFC 7800 confirmation claim naming the delegee key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Confirmation {
    pub kid: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimSet {
    /// Registry contract address of the issuing authorization server.
    pub iss: Address,
    /// Client identity: a hex public key or a `0x` address.
    pub sub: String,
    /// Resource URI.
    pub aud: String,
    pub jti: TokenId,
    /// Expiration, Unix seconds.
    pub exp: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cnf: Option<Confirmation>,
}

impl ClaimSet {
    pub fn validate(&self) -> Result<(), TokenFormatError> {
        if self.sub.is_empty() {
            return Err(TokenFormatError::InvalidClaims("empty sub".into()));
        }
        if self.aud.is_empty() {
            return Err(TokenFormatError::InvalidClaims("empty aud".into()));
        }
        if self.exp == 0 {
            return Err(TokenFormatError::InvalidClaims("exp must be positive".into()));
        }
        if let Some(cnf) = &self.cnf {
            if cnf.kid.is_empty() {
                return Err(TokenFormatError::InvalidClaims("empty cnf.kid".into()));
            }
        }
        Ok(())
    }

    /// Ledger address the `sub` claim refers to.
    pub fn subject_address(&self) -> Result<Address, TokenFormatError> {
        principal_address(&self.sub)
    }

    /// Ledger address of the delegee named in `cnf.kid`, if any.
    pub fn delegee_address(&self) -> Option<Result<Address, TokenFormatError>> {
        self.cnf.as_ref().map(|c| principal_address(&c.kid))
    }
}

/// Resolves a principal written either as a `0x` address or as a hex
/// Ed25519 public key.
pub fn principal_address(principal: &str) -> Result<Address, TokenFormatError> {
    if principal.starts_with("0x") {
        return principal
            .parse::<Address>()
            .map_err(|e| TokenFormatError::InvalidClaims(format!("principal {principal:?}: {e}")));
    }
    principal
        .parse::<PublicKey>()
        .map(|pk| pk.address())
        .map_err(|e| TokenFormatError::InvalidClaims(format!("principal {principal:?}: {e}")))
}

pub fn encode(claims: &ClaimSet) -> Result<String, TokenFormatError> {
    claims.validate()?;
    let payload =
        serde_json::to_vec(claims).map_err(|e| TokenFormatError::InvalidClaims(e.to_string()))?;
    Ok(format!(
        "{}.{}.",
        URL_SAFE_NO_PAD.encode(HEADER_JSON),
        URL_SAFE_NO_PAD.encode(payload)
    ))
}

fn malformed(msg: impl Into<String>) -> TokenFormatError {
    TokenFormatError::Malformed(msg.into())
}

fn decode_segment(segment: &str, what: &str) -> Result<Map<String, Value>, TokenFormatError> {
    let bytes = URL_SAFE_NO_PAD
        .decode(segment)
        .map_err(|e| malformed(format!("{what}: {e}")))?;
    match serde_json::from_slice(&bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(malformed(format!("{what} is not a JSON object"))),
        Err(e) => Err(malformed(format!("{what}: {e}"))),
    }
}

fn string_claim(
    map: &Map<String, Value>,
    name: &'static str,
) -> Result<String, TokenFormatError> {
    match map.get(name) {
        None => Err(TokenFormatError::MissingClaim(name)),
        Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
        Some(Value::String(_)) => Err(TokenFormatError::InvalidClaims(format!("empty {name}"))),
        Some(_) => Err(malformed(format!("`{name}` must be a string"))),
    }
}

pub fn decode(jwt: &str) -> Result<ClaimSet, TokenFormatError> {
    let parts: Vec<&str> = jwt.split('.').collect();
    if parts.len() != 3 {
        return Err(malformed(format!("expected 3 segments, got {}", parts.len())));
    }
    if !parts[2].is_empty() {
        return Err(malformed("signed tokens are not accepted"));
    }

    let header = decode_segment(parts[0], "header")?;
    match header.get("alg") {
        Some(Value::String(alg)) if alg == "none" => {}
        _ => return Err(malformed("header alg must be \"none\"")),
    }
    for (key, value) in &header {
        match key.as_str() {
            "alg" => {}
            "typ" if value == "JWT" => {}
            other => return Err(malformed(format!("unsupported header member `{other}`"))),
        }
    }

    let payload = decode_segment(parts[1], "payload")?;
    if let Some(unknown) = payload
        .keys()
        .find(|k| !matches!(k.as_str(), "iss" | "sub" | "aud" | "jti" | "exp" | "cnf"))
    {
        return Err(malformed(format!("unknown claim `{unknown}`")));
    }
    let iss = string_claim(&payload, "iss")?
        .parse::<Address>()
        .map_err(|e| malformed(format!("iss: {e}")))?;
    let sub = string_claim(&payload, "sub")?;
    let aud = string_claim(&payload, "aud")?;
    let jti = string_claim(&payload, "jti")?
        .parse::<TokenId>()
        .map_err(|e| malformed(format!("jti: {e}")))?;
    let exp = match payload.get("exp") {
        None => return Err(TokenFormatError::MissingClaim("exp")),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| malformed("`exp` must be a non-negative integer"))?,
    };
    let cnf = match payload.get("cnf") {
        None => None,
        Some(v) => Some(
            Confirmation::deserialize(v).map_err(|e| malformed(format!("cnf: {e}")))?,
        ),
    };
    let claims = ClaimSet {
        iss,
        sub,
        aud,
        jti,
        exp,
        cnf,
    };
    claims.validate()?;
    Ok(claims)
}

/// Canonical encoding of `jwt`'s claims with `cnf` removed.
pub fn strip_cnf(jwt: &str) -> Result<String, TokenFormatError> {
    let mut claims = decode(jwt)?;
    claims.cnf = None;
    encode(&claims)
}
