//! Client side of the protocol.
//!
//! The servers are reached through [`AuthServerApi`] and
//! [`ResourceServerApi`]; both are implemented in-process by the server
//! types here and over HTTP by the command-line crate.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{LedgerAccount, LedgerWriter};
use crate::auth_server::{
    pop_message, AuthError, AuthorizationServer, ClientRegistration, IssuedToken, NonceChallenge,
    NonceResponse, TokenRequest,
};
use crate::keys::{Address, Keypair, PublicKey, Signature};
use crate::ledger::{EventFilter, LedgerError, Receipt};
use crate::registry::{Call, RegistryError, RegistryEvent, TokenId};
use crate::resource_server::{
    challenge_message, AccessDenied, Challenge, ResourceError, ResourceServer,
};
use crate::token_format::{self, Confirmation, TokenFormatError};

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClientError {
    #[error("authorization server: {0}")]
    Auth(AuthError),
    #[error("resource server: {0}")]
    Resource(ResourceError),
    #[error("access denied: {0}")]
    Denied(AccessDenied),
    #[error("ledger: {0}")]
    Ledger(LedgerError),
    #[error("token format: {0}")]
    Format(String),
    #[error("token {0} is not owned by this client")]
    NotOwner(TokenId),
    #[error("token {0} is not reserved")]
    NotReserved(TokenId),
    #[error("transport: {0}")]
    Transport(String),
}

impl From<AuthError> for ClientError {
    fn from(e: AuthError) -> Self {
        ClientError::Auth(e)
    }
}

impl From<ResourceError> for ClientError {
    fn from(e: ResourceError) -> Self {
        ClientError::Resource(e)
    }
}

impl From<AccessDenied> for ClientError {
    fn from(e: AccessDenied) -> Self {
        ClientError::Denied(e)
    }
}

impl From<LedgerError> for ClientError {
    fn from(e: LedgerError) -> Self {
        ClientError::Ledger(e)
    }
}

impl From<TokenFormatError> for ClientError {
    fn from(e: TokenFormatError) -> Self {
        ClientError::Format(e.to_string())
    }
}

pub trait AuthServerApi: Send + Sync {
    fn register(&self, pub_key: &str) -> Result<ClientRegistration, ClientError>;
    fn token_nonce(&self) -> Result<NonceChallenge, ClientError>;
    fn request_token(&self, req: &TokenRequest) -> Result<IssuedToken, ClientError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionGrant {
    pub session_id: String,
    pub payload: String,
    pub expires: u64,
}

pub trait ResourceServerApi: Send + Sync {
    /// Presents a JWT; a valid one is answered with a challenge.
    fn access(&self, jwt: &str) -> Result<Challenge, ClientError>;
    fn respond(
        &self,
        challenge_id: &str,
        signature: &Signature,
        pub_key: &PublicKey,
    ) -> Result<SessionGrant, ClientError>;
    fn resource(&self, session_id: &str, resource_uri: &str) -> Result<String, ClientError>;
}

impl AuthServerApi for AuthorizationServer {
    fn register(&self, pub_key: &str) -> Result<ClientRegistration, ClientError> {
        Ok(self.register_client(pub_key)?)
    }

    fn token_nonce(&self) -> Result<NonceChallenge, ClientError> {
        Ok(self.issue_nonce())
    }

    fn request_token(&self, req: &TokenRequest) -> Result<IssuedToken, ClientError> {
        Ok(AuthorizationServer::request_token(self, req)?)
    }
}

impl ResourceServerApi for ResourceServer {
    fn access(&self, jwt: &str) -> Result<Challenge, ClientError> {
        Ok(self.begin_access(jwt)?)
    }

    fn respond(
        &self,
        challenge_id: &str,
        signature: &Signature,
        pub_key: &PublicKey,
    ) -> Result<SessionGrant, ClientError> {
        let session = self.verify_challenge_response(challenge_id, signature, pub_key, self.now())?;
        Ok(SessionGrant {
            payload: self.payload(&session.resource).unwrap_or_default().to_string(),
            session_id: session.session_id,
            expires: session.expires,
        })
    }

    fn resource(&self, session_id: &str, resource_uri: &str) -> Result<String, ClientError> {
        Ok(self.access_with_session(session_id, resource_uri, self.now())?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnedToken {
    pub token_id: TokenId,
    pub jwt: String,
}

/// Adds a `cnf` claim naming `delegee` to a subject-held JWT.
pub fn build_delegated_jwt(jwt: &str, delegee: &PublicKey) -> Result<String, TokenFormatError> {
    let mut claims = token_format::decode(jwt)?;
    claims.cnf = Some(Confirmation {
        kid: delegee.to_string(),
    });
    token_format::encode(&claims)
}

pub struct Client {
    account: LedgerAccount,
    tokens: Mutex<BTreeMap<TokenId, String>>,
}

impl Client {
    pub fn new(keys: Keypair, ledger: Arc<dyn LedgerWriter>) -> Self {
        Client {
            account: LedgerAccount::new(keys, ledger),
            tokens: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn keys(&self) -> &Keypair {
        self.account.keys()
    }

    pub fn address(&self) -> Address {
        self.account.address()
    }

    pub fn public_key(&self) -> PublicKey {
        self.keys().public()
    }

    pub fn account(&self) -> &LedgerAccount {
        &self.account
    }

    pub fn register(&self, auth: &dyn AuthServerApi) -> Result<ClientRegistration, ClientError> {
        auth.register(&self.public_key().to_string())
    }

    /// Redeems a grant with a fresh proof of possession.
    pub fn request_access_token(
        &self,
        auth: &dyn AuthServerApi,
        grant_id: &str,
        resource_uri: &str,
    ) -> Result<IssuedToken, ClientError> {
        let challenge = auth.token_nonce()?;
        let req = TokenRequest {
            grant_id: grant_id.to_string(),
            pub_key: self.public_key().to_string(),
            resource_uri: resource_uri.to_string(),
            nonce_response: NonceResponse {
                signature: self.keys().sign(&pop_message(&challenge.nonce)),
                nonce: challenge.nonce,
            },
        };
        let issued = auth.request_token(&req)?;
        self.tokens.lock().insert(issued.token_id, issued.jwt.clone());
        Ok(issued)
    }

    pub fn cached_jwt(&self, token_id: &TokenId) -> Option<String> {
        self.tokens.lock().get(token_id).cloned()
    }

    /// Drops the local token cache; tokens can be recovered from the ledger.
    pub fn forget_tokens(&self) {
        self.tokens.lock().clear();
    }

    /// Rebuilds the set of held tokens from Transfer events, then confirms
    /// each against `owner_of` and reads its JWT from the registry.
    pub fn list_owned_tokens(&self) -> Result<Vec<OwnedToken>, ClientError> {
        let ledger = self.account.ledger();
        let me = self.address();
        let head = ledger.head()?;
        let mut held = BTreeSet::new();
        for ev in ledger.get_events(&EventFilter::transfers(), 0, head)? {
            if let RegistryEvent::Transfer { from, to, token_id } = ev.event {
                if to == me {
                    held.insert(token_id);
                } else if from == me {
                    held.remove(&token_id);
                }
            }
        }
        let mut owned = Vec::new();
        for token_id in held {
            match ledger.owner_of(&token_id) {
                Ok(owner) if owner == me => {}
                Ok(_) | Err(LedgerError::Registry(RegistryError::UnknownToken)) => continue,
                Err(e) => return Err(e.into()),
            }
            let jwt = ledger.token_uri(&token_id)?;
            self.tokens.lock().insert(token_id, jwt.clone());
            owned.push(OwnedToken { token_id, jwt });
        }
        Ok(owned)
    }

    /// Runs the challenge-response exchange for `jwt` and returns the
    /// session with the first payload.
    pub fn access_resource(
        &self,
        rs: &dyn ResourceServerApi,
        jwt: &str,
    ) -> Result<SessionGrant, ClientError> {
        let aud = token_format::decode(jwt)?.aud;
        let challenge = rs.access(jwt)?;
        let signature = self.keys().sign(&challenge_message(&challenge.nonce, &aud));
        rs.respond(&challenge.challenge_id, &signature, &self.public_key())
    }

    /// Approves `delegee` for the token and returns the JWT it should
    /// present.
    pub fn delegate_token(
        &self,
        token_id: &TokenId,
        delegee: &PublicKey,
    ) -> Result<String, ClientError> {
        let ledger = self.account.ledger();
        if ledger.owner_of(token_id)? != self.address() {
            return Err(ClientError::NotOwner(*token_id));
        }
        let jwt = ledger.token_uri(token_id)?;
        let delegated = build_delegated_jwt(&jwt, delegee)?;
        self.account.execute(
            Call::Approve {
                approved: delegee.address(),
                token_id: *token_id,
            },
            0,
        )?;
        Ok(delegated)
    }

    /// Pays the reservation price and takes ownership in one transaction.
    pub fn pay_and_claim(&self, token_id: &TokenId) -> Result<Receipt, ClientError> {
        let ledger = self.account.ledger();
        let reservation = ledger
            .reservation(token_id)?
            .ok_or(ClientError::NotReserved(*token_id))?;
        let receipt = self
            .account
            .execute(Call::Claim { token_id: *token_id }, reservation.price)?;
        let jwt = ledger.token_uri(token_id)?;
        self.tokens.lock().insert(*token_id, jwt);
        Ok(receipt)
    }
}
