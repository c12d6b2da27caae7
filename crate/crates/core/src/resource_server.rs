//! Resource server: ledger-backed token verification and sessions.
//!
//! A presented JWT is accepted in three ordered steps. First the claims
//! are checked locally (known issuer contract, hosted audience, not
//! expired). Then `owner_of(jti)` must be the subject's address. Finally
//! `token_uri(jti)` must equal the presented JWT byte for byte. For a
//! delegated JWT carrying `cnf`, the last comparison uses the JWT with
//! `cnf` removed and `get_approved(jti)` must be the delegee's address.
//! The client then proves possession of the expected key by signing a
//! fresh nonce together with the audience, and receives a session.
//!
//! The server only reads the ledger. Sessions are dropped when a Transfer
//! event for their token is observed, either live or by replaying the
//! event log from a persisted block cursor.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use parking_lot::Mutex;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::LedgerReader;
use crate::clock::Clock;
use crate::keys::{random_hex128, Address, PublicKey, Signature};
use crate::ledger::{EventFilter, LedgerError, LedgerEvent};
use crate::registry::{RegistryError, RegistryEvent, TokenId};
use crate::token_format::{self, ClaimSet, TokenFormatError};

pub const DEFAULT_MAX_SESSION_TTL: u64 = 900;
pub const CHALLENGE_TTL: u64 = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceError {
    #[error("malformed token: {0}")]
    Malformed(String),
    #[error("issuer contract is not configured")]
    UnknownIssuer,
    #[error("audience is not hosted here")]
    AudienceMismatch,
    #[error("token expired")]
    Expired,
    #[error("token owner does not match the subject")]
    OwnerMismatch,
    #[error("ledger metadata does not match the token")]
    MetadataMismatch,
    #[error("unknown token")]
    UnknownToken,
    #[error("delegee is not approved for this token")]
    NotApproved,
    #[error("token carries no delegation")]
    NotDelegated,
    #[error("unknown challenge")]
    UnknownChallenge,
    #[error("challenge expired")]
    ChallengeExpired,
    #[error("challenge already used")]
    ChallengeUsed,
    #[error("key does not belong to the expected prover")]
    WrongKey,
    #[error("bad signature")]
    BadSignature,
    #[error("ledger: {0}")]
    Ledger(LedgerError),
}

impl From<TokenFormatError> for ResourceError {
    fn from(e: TokenFormatError) -> Self {
        ResourceError::Malformed(e.to_string())
    }
}

impl From<LedgerError> for ResourceError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Registry(RegistryError::UnknownToken) => ResourceError::UnknownToken,
            other => ResourceError::Ledger(other),
        }
    }
}

/// Reasons the session fast path denies a request.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccessDenied {
    #[error("unknown session")]
    UnknownSession,
    #[error("session expired")]
    SessionExpired,
    #[error("session is for a different resource")]
    ResourceMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceConfig {
    pub contract_address: Address,
    /// Hosted resource URIs and the payload served for each.
    pub resources: BTreeMap<String, String>,
    pub max_session_ttl: u64,
    pub clock_skew: u64,
    /// Text file holding the last processed block number.
    pub cursor_path: Option<PathBuf>,
}

impl ResourceConfig {
    pub fn new(contract_address: Address) -> Self {
        ResourceConfig {
            contract_address,
            resources: BTreeMap::new(),
            max_session_ttl: DEFAULT_MAX_SESSION_TTL,
            clock_skew: 0,
            cursor_path: None,
        }
    }

    pub fn with_resource(mut self, uri: impl Into<String>, payload: impl Into<String>) -> Self {
        self.resources.insert(uri.into(), payload.into());
        self
    }
}

/// A JWT that passed ledger verification, with the address that must now
/// prove key possession.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedToken {
    pub claims: ClaimSet,
    pub jwt: String,
    pub prover: Address,
    pub delegated: bool,
    /// Ledger head read before the checks; transfers up to this block
    /// are already reflected in the result.
    pub verified_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub jwt: String,
    pub token_id: TokenId,
    pub subject_address: Address,
    pub resource: String,
    pub expires: u64,
    pub verified_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeState {
    pub challenge_id: String,
    pub nonce: String,
    pub token: VerifiedToken,
    pub issued_at: u64,
    pub used: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Challenge {
    pub challenge_id: String,
    pub nonce: String,
}

/// Bytes signed in answer to a challenge: the raw nonce followed by the
/// audience URI.
pub fn challenge_message(nonce_hex: &str, aud: &str) -> Vec<u8> {
    let mut msg = hex::decode(nonce_hex).unwrap_or_else(|_| nonce_hex.as_bytes().to_vec());
    msg.extend_from_slice(aud.as_bytes());
    msg
}

/// Persistent part of the server state.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerState {
    pub sessions: BTreeMap<String, Session>,
    pub cursor: u64,
}

pub struct ResourceServer {
    config: ResourceConfig,
    ledger: Arc<dyn LedgerReader>,
    clock: Arc<dyn Clock>,
    sessions: Mutex<HashMap<String, Session>>,
    challenges: Mutex<HashMap<String, ChallengeState>>,
    /// Serializes event processing and guards the cursor.
    cursor: Mutex<u64>,
}

impl ResourceServer {
    pub fn new(config: ResourceConfig, ledger: Arc<dyn LedgerReader>, clock: Arc<dyn Clock>) -> Self {
        let cursor = config
            .cursor_path
            .as_ref()
            .and_then(|p| fs::read_to_string(p).ok())
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0);
        ResourceServer {
            config,
            ledger,
            clock,
            sessions: Mutex::new(HashMap::new()),
            challenges: Mutex::new(HashMap::new()),
            cursor: Mutex::new(cursor),
        }
    }

    pub fn config(&self) -> &ResourceConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    fn check_claims(&self, claims: &ClaimSet, now: u64) -> Result<(), ResourceError> {
        if claims.iss != self.config.contract_address {
            return Err(ResourceError::UnknownIssuer);
        }
        if !self.config.resources.contains_key(&claims.aud) {
            return Err(ResourceError::AudienceMismatch);
        }
        if claims.exp.saturating_add(self.config.clock_skew) <= now {
            return Err(ResourceError::Expired);
        }
        Ok(())
    }

    fn check_owner(&self, claims: &ClaimSet) -> Result<(), ResourceError> {
        let subject = claims.subject_address()?;
        if self.ledger.owner_of(&claims.jti)? != subject {
            return Err(ResourceError::OwnerMismatch);
        }
        Ok(())
    }

    /// Verifies a JWT presented by its subject.
    pub fn verify_access_request(&self, jwt: &str, now: u64) -> Result<VerifiedToken, ResourceError> {
        let verified_at = self.ledger.head()?;
        let claims = token_format::decode(jwt)?;
        self.check_claims(&claims, now)?;
        self.check_owner(&claims)?;
        if self.ledger.token_uri(&claims.jti)? != jwt {
            return Err(ResourceError::MetadataMismatch);
        }
        Ok(VerifiedToken {
            prover: claims.subject_address()?,
            claims,
            jwt: jwt.to_string(),
            delegated: false,
            verified_at,
        })
    }

    /// Verifies a JWT presented by a delegee named in its `cnf` claim.
    pub fn verify_delegated_request(
        &self,
        jwt: &str,
        now: u64,
    ) -> Result<VerifiedToken, ResourceError> {
        let verified_at = self.ledger.head()?;
        let claims = token_format::decode(jwt)?;
        let delegee = claims
            .delegee_address()
            .ok_or(ResourceError::NotDelegated)??;
        self.check_claims(&claims, now)?;
        self.check_owner(&claims)?;
        if self.ledger.token_uri(&claims.jti)? != token_format::strip_cnf(jwt)? {
            return Err(ResourceError::MetadataMismatch);
        }
        if self.ledger.get_approved(&claims.jti)? != Some(delegee) {
            return Err(ResourceError::NotApproved);
        }
        Ok(VerifiedToken {
            prover: delegee,
            claims,
            jwt: jwt.to_string(),
            delegated: true,
            verified_at,
        })
    }

    /// Dispatches on the presence of `cnf`.
    pub fn verify(&self, jwt: &str, now: u64) -> Result<VerifiedToken, ResourceError> {
        let claims = token_format::decode(jwt)?;
        if claims.cnf.is_some() {
            self.verify_delegated_request(jwt, now)
        } else {
            self.verify_access_request(jwt, now)
        }
    }

    pub fn issue_challenge(&self, token: VerifiedToken) -> Challenge {
        let mut nonce = [0u8; 16];
        OsRng.fill_bytes(&mut nonce);
        let state = ChallengeState {
            challenge_id: random_hex128(),
            nonce: hex::encode(nonce),
            token,
            issued_at: self.clock.now(),
            used: false,
        };
        let challenge = Challenge {
            challenge_id: state.challenge_id.clone(),
            nonce: state.nonce.clone(),
        };
        let mut challenges = self.challenges.lock();
        let now = state.issued_at;
        challenges.retain(|_, c| !c.used && now.saturating_sub(c.issued_at) <= CHALLENGE_TTL);
        challenges.insert(state.challenge_id.clone(), state);
        challenge
    }

    /// Verifies the token and opens a challenge in one step.
    pub fn begin_access(&self, jwt: &str) -> Result<Challenge, ResourceError> {
        let token = self.verify(jwt, self.clock.now())?;
        Ok(self.issue_challenge(token))
    }

    /// Checks the possession proof, re-checks the ledger, and opens a
    /// session. The challenge is consumed only by a successful answer.
    pub fn verify_challenge_response(
        &self,
        challenge_id: &str,
        signature: &Signature,
        pub_key: &PublicKey,
        now: u64,
    ) -> Result<Session, ResourceError> {
        let token = {
            let mut challenges = self.challenges.lock();
            let state = challenges
                .get_mut(challenge_id)
                .ok_or(ResourceError::UnknownChallenge)?;
            if state.used {
                return Err(ResourceError::ChallengeUsed);
            }
            if now.saturating_sub(state.issued_at) > CHALLENGE_TTL {
                return Err(ResourceError::ChallengeExpired);
            }
            if pub_key.address() != state.token.prover {
                return Err(ResourceError::WrongKey);
            }
            let msg = challenge_message(&state.nonce, &state.token.claims.aud);
            if !pub_key.verify(&msg, signature) {
                return Err(ResourceError::BadSignature);
            }
            state.used = true;
            state.token.clone()
        };

        let token = if token.delegated {
            self.verify_delegated_request(&token.jwt, now)?
        } else {
            self.verify_access_request(&token.jwt, now)?
        };
        let ttl = token
            .claims
            .exp
            .saturating_sub(now)
            .min(self.config.max_session_ttl);
        let session = Session {
            session_id: random_hex128(),
            jwt: token.jwt.clone(),
            token_id: token.claims.jti,
            subject_address: token.prover,
            resource: token.claims.aud.clone(),
            expires: now + ttl,
            verified_at: token.verified_at,
        };
        self.sessions
            .lock()
            .insert(session.session_id.clone(), session.clone());
        Ok(session)
    }

    /// Session fast path; never reads the ledger.
    pub fn access_with_session(
        &self,
        session_id: &str,
        resource_uri: &str,
        now: u64,
    ) -> Result<String, AccessDenied> {
        let mut sessions = self.sessions.lock();
        let session = sessions
            .get(session_id)
            .ok_or(AccessDenied::UnknownSession)?;
        if now >= session.expires {
            sessions.remove(session_id);
            return Err(AccessDenied::SessionExpired);
        }
        if session.resource != resource_uri {
            return Err(AccessDenied::ResourceMismatch);
        }
        Ok(self
            .config
            .resources
            .get(resource_uri)
            .cloned()
            .unwrap_or_default())
    }

    pub fn payload(&self, resource_uri: &str) -> Option<&str> {
        self.config.resources.get(resource_uri).map(String::as_str)
    }

    /// Drops sessions bound to the event's token that were verified before
    /// the event's block. Idempotent.
    pub fn handle_transfer_event(&self, ev: &LedgerEvent) {
        if let RegistryEvent::Transfer { token_id, .. } = &ev.event {
            let stale = |id: &TokenId, at: u64| id == token_id && at < ev.block_number;
            self.sessions
                .lock()
                .retain(|_, s| !stale(&s.token_id, s.verified_at));
            self.challenges
                .lock()
                .retain(|_, c| !stale(&c.token.claims.jti, c.token.verified_at));
        }
    }

    pub fn cursor(&self) -> u64 {
        *self.cursor.lock()
    }

    fn persist_cursor(&self, block: u64) -> io::Result<()> {
        if let Some(path) = &self.config.cursor_path {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, format!("{block}\n"))?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }

    /// Replays Transfer events of blocks `from_cursor..=head` and advances
    /// the cursor to head, persisting it after each block with events.
    pub fn recover_missed_events(&self, from_cursor: u64) -> Result<u64, ResourceError> {
        let mut cursor = self.cursor.lock();
        let head = self.ledger.head()?;
        if from_cursor > head {
            return Err(LedgerError::RangeBeyondHead {
                from: from_cursor,
                to: head,
                head,
            }
            .into());
        }
        let events = self
            .ledger
            .get_events(&EventFilter::transfers(), from_cursor, head)?;
        let mut i = 0;
        while i < events.len() {
            let block = events[i].block_number;
            while i < events.len() && events[i].block_number == block {
                self.handle_transfer_event(&events[i]);
                i += 1;
            }
            self.persist_cursor(block)
                .map_err(|e| ResourceError::Ledger(LedgerError::Persistence(e.to_string())))?;
            *cursor = block;
        }
        self.persist_cursor(head)
            .map_err(|e| ResourceError::Ledger(LedgerError::Persistence(e.to_string())))?;
        *cursor = head;
        Ok(head)
    }

    /// Catches up from the stored cursor.
    pub fn sync_events(&self) -> Result<u64, ResourceError> {
        let from = self.cursor();
        self.recover_missed_events(from)
    }

    pub fn export_state(&self) -> ServerState {
        ServerState {
            sessions: self
                .sessions
                .lock()
                .iter()
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            cursor: self.cursor(),
        }
    }

    pub fn import_state(&self, state: ServerState) {
        *self.sessions.lock() = state.sessions.into_iter().collect();
        *self.cursor.lock() = state.cursor;
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().len()
    }
}

/// Background loop polling the ledger for new Transfer events.
pub struct EventListener {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl EventListener {
    pub fn spawn(server: Arc<ResourceServer>, poll: Duration) -> Self {
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                if let Err(e) = server.sync_events() {
                    eprintln!("event sync failed: {e}");
                }
                thread::sleep(poll);
            }
        });
        EventListener {
            stop,
            handle: Some(handle),
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for EventListener {
    fn drop(&mut self) {
        self.shutdown();
    }
}
