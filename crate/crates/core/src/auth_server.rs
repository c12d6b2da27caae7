//! Authorization server: registration, grants, and ledger-anchored issuance.
//!
//! The server's operator key owns the registry. Each issued JWT is minted
//! as a registry token whose id is the `jti` claim and whose metadata is
//! the compact JWT, then transferred to the client. The JWT is handed out
//! only after both transactions are sealed. Revocation transfers the token
//! back to the operator; the server never contacts clients or resource
//! servers to revoke.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::access::{LedgerAccount, LedgerWriter};
use crate::clock::Clock;
use crate::keys::{random_hex128, Address, KeyError, Keypair, PublicKey, Signature};
use crate::ledger::LedgerError;
use crate::registry::{Call, RegistryError, TokenId};
use crate::token_format::{self, ClaimSet, TokenFormatError};

pub const DEFAULT_TOKEN_LIFETIME: u64 = 3600;
pub const NONCE_TTL: u64 = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuthError {
    #[error("malformed public key: {0}")]
    MalformedKey(String),
    #[error("address {0} is already registered to a different key")]
    AddressCollision(Address),
    #[error("client is not registered")]
    NotRegistered,
    #[error("invalid credential")]
    Unauthorized,
    #[error("unknown grant")]
    UnknownGrant,
    #[error("grant already used")]
    GrantUsed,
    #[error("grant expired")]
    GrantExpired,
    #[error("grant is bound to a different client or resource")]
    GrantMismatch,
    #[error("proof of possession failed")]
    BadPoP,
    #[error("unknown token")]
    UnknownToken,
    #[error("token format: {0}")]
    Format(String),
    #[error("registry rejected the transaction: {0}")]
    Registry(RegistryError),
    #[error("ledger: {0}")]
    Ledger(LedgerError),
}

impl From<LedgerError> for AuthError {
    fn from(e: LedgerError) -> Self {
        match e {
            LedgerError::Registry(RegistryError::UnknownToken) => AuthError::UnknownToken,
            LedgerError::Registry(r) => AuthError::Registry(r),
            other => AuthError::Ledger(other),
        }
    }
}

impl From<TokenFormatError> for AuthError {
    fn from(e: TokenFormatError) -> Self {
        AuthError::Format(e.to_string())
    }
}

impl From<KeyError> for AuthError {
    fn from(e: KeyError) -> Self {
        AuthError::MalformedKey(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientRegistration {
    pub client_pub_key: PublicKey,
    pub client_address: Address,
    pub registered_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorizationGrant {
    pub grant_id: String,
    pub bound_client: Address,
    pub bound_resource: String,
    pub used: bool,
    pub expires: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceChallenge {
    pub nonce: String,
    pub expires: u64,
}

/// Client's answer to a token-request nonce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceResponse {
    pub nonce: String,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRequest {
    pub grant_id: String,
    pub pub_key: String,
    pub resource_uri: String,
    pub nonce_response: NonceResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuedToken {
    pub jwt: String,
    pub token_id: TokenId,
    pub included_block: u64,
}

/// Bytes a client signs to prove possession of its key for `nonce`.
pub fn pop_message(nonce: &str) -> Vec<u8> {
    format!("ledger-oauth/token-request\n{nonce}").into_bytes()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthServerConfig {
    /// Credential of the administrator allowed to revoke and reserve.
    pub admin_credential: String,
    /// Shared secret resource owners present when issuing grants.
    pub owner_credential: String,
    pub token_lifetime: u64,
}

impl AuthServerConfig {
    pub fn new(admin_credential: impl Into<String>, owner_credential: impl Into<String>) -> Self {
        AuthServerConfig {
            admin_credential: admin_credential.into(),
            owner_credential: owner_credential.into(),
            token_lifetime: DEFAULT_TOKEN_LIFETIME,
        }
    }
}

pub struct AuthorizationServer {
    config: AuthServerConfig,
    operator: LedgerAccount,
    contract: Address,
    clock: Arc<dyn Clock>,
    registrations: Mutex<HashMap<Address, ClientRegistration>>,
    grants: Mutex<HashMap<String, AuthorizationGrant>>,
    nonces: Mutex<HashMap<String, u64>>,
}

impl AuthorizationServer {
    /// Deploys a fresh registry with `root` as root key and `operator` as
    /// the issuing key, and returns a server bound to it.
    pub fn deploy(
        ledger: Arc<dyn LedgerWriter>,
        root: &Keypair,
        operator: Keypair,
        config: AuthServerConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, AuthError> {
        let root_account = LedgerAccount::new(root.clone(), ledger.clone());
        root_account.execute(
            Call::Deploy {
                operator: operator.address(),
            },
            0,
        )?;
        Self::attach(ledger, operator, config, clock)
    }

    /// Binds to an already deployed registry operated by `operator`.
    pub fn attach(
        ledger: Arc<dyn LedgerWriter>,
        operator: Keypair,
        config: AuthServerConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, AuthError> {
        let contract = ledger.contract_address()?;
        if ledger.operator()? != operator.address() {
            return Err(AuthError::Registry(RegistryError::NotOperator));
        }
        Ok(AuthorizationServer {
            config,
            operator: LedgerAccount::new(operator, ledger),
            contract,
            clock,
            registrations: Mutex::new(HashMap::new()),
            grants: Mutex::new(HashMap::new()),
            nonces: Mutex::new(HashMap::new()),
        })
    }

    pub fn contract_address(&self) -> Address {
        self.contract
    }

    pub fn operator_address(&self) -> Address {
        self.operator.address()
    }

    pub fn config(&self) -> &AuthServerConfig {
        &self.config
    }

    fn check_admin(&self, credential: &str) -> Result<(), AuthError> {
        if credential == self.config.admin_credential {
            Ok(())
        } else {
            Err(AuthError::Unauthorized)
        }
    }

    pub fn register_client(&self, pub_key: &str) -> Result<ClientRegistration, AuthError> {
        let key: PublicKey = pub_key.parse()?;
        let address = key.address();
        let mut regs = self.registrations.lock();
        if let Some(existing) = regs.get(&address) {
            if existing.client_pub_key != key {
                return Err(AuthError::AddressCollision(address));
            }
            return Ok(existing.clone());
        }
        let reg = ClientRegistration {
            client_pub_key: key,
            client_address: address,
            registered_at: self.clock.now(),
        };
        regs.insert(address, reg.clone());
        Ok(reg)
    }

    pub fn issue_grant(
        &self,
        owner_credential: &str,
        client_address: Address,
        resource_uri: &str,
        ttl: u64,
    ) -> Result<AuthorizationGrant, AuthError> {
        if owner_credential != self.config.owner_credential {
            return Err(AuthError::Unauthorized);
        }
        let grant = AuthorizationGrant {
            grant_id: random_hex128(),
            bound_client: client_address,
            bound_resource: resource_uri.to_string(),
            used: false,
            expires: self.clock.now().saturating_add(ttl),
        };
        self.grants
            .lock()
            .insert(grant.grant_id.clone(), grant.clone());
        Ok(grant)
    }

    pub fn issue_nonce(&self) -> NonceChallenge {
        let nonce = random_hex128();
        let now = self.clock.now();
        let mut nonces = self.nonces.lock();
        nonces.retain(|_, issued| now.saturating_sub(*issued) <= NONCE_TTL);
        nonces.insert(nonce.clone(), now);
        NonceChallenge {
            nonce,
            expires: now + NONCE_TTL,
        }
    }

    fn check_pop(&self, key: &PublicKey, response: &NonceResponse) -> Result<(), AuthError> {
        let now = self.clock.now();
        let issued = self
            .nonces
            .lock()
            .remove(&response.nonce)
            .ok_or(AuthError::BadPoP)?;
        if now.saturating_sub(issued) > NONCE_TTL {
            return Err(AuthError::BadPoP);
        }
        if !key.verify(&pop_message(&response.nonce), &response.signature) {
            return Err(AuthError::BadPoP);
        }
        Ok(())
    }

    /// Marks the grant used if it is valid for this client and resource.
    fn take_grant(
        &self,
        grant_id: &str,
        client: Address,
        resource_uri: &str,
    ) -> Result<(), AuthError> {
        let now = self.clock.now();
        let mut grants = self.grants.lock();
        let grant = grants.get_mut(grant_id).ok_or(AuthError::UnknownGrant)?;
        if grant.used {
            return Err(AuthError::GrantUsed);
        }
        if now >= grant.expires {
            return Err(AuthError::GrantExpired);
        }
        if grant.bound_client != client || grant.bound_resource != resource_uri {
            return Err(AuthError::GrantMismatch);
        }
        grant.used = true;
        Ok(())
    }

    fn release_grant(&self, grant_id: &str) {
        if let Some(g) = self.grants.lock().get_mut(grant_id) {
            g.used = false;
        }
    }

    pub fn grant(&self, grant_id: &str) -> Option<AuthorizationGrant> {
        self.grants.lock().get(grant_id).cloned()
    }

    fn claims_for(&self, sub: String, aud: &str, lifetime: u64) -> ClaimSet {
        ClaimSet {
            iss: self.contract,
            sub,
            aud: aud.to_string(),
            jti: TokenId::random(),
            exp: self.clock.now() + lifetime.max(1),
            cnf: None,
        }
    }

    /// Redeems a grant: mints the token to the operator, transfers it to
    /// the client, and returns the JWT once both are sealed.
    pub fn request_token(&self, req: &TokenRequest) -> Result<IssuedToken, AuthError> {
        let key: PublicKey = req.pub_key.parse()?;
        let client = key.address();
        self.check_pop(&key, &req.nonce_response)?;
        if !self.registrations.lock().contains_key(&client) {
            return Err(AuthError::NotRegistered);
        }
        self.take_grant(&req.grant_id, client, &req.resource_uri)?;

        let issued = self.mint_and_transfer(key, client, &req.resource_uri);
        if issued.is_err() {
            self.release_grant(&req.grant_id);
        }
        issued
    }

    fn mint_and_transfer(
        &self,
        key: PublicKey,
        client: Address,
        resource_uri: &str,
    ) -> Result<IssuedToken, AuthError> {
        let claims = self.claims_for(key.to_string(), resource_uri, self.config.token_lifetime);
        let jwt = token_format::encode(&claims)?;
        let operator = self.operator.address();
        let hashes = self.operator.submit_all(vec![
            (
                Call::Mint {
                    token_id: claims.jti,
                    metadata: jwt.clone(),
                    to: operator,
                },
                0,
            ),
            (
                Call::TransferFrom {
                    from: operator,
                    to: client,
                    token_id: claims.jti,
                },
                0,
            ),
        ])?;
        let mut included_block = 0;
        for hash in &hashes {
            let receipt = self.operator.wait(hash)?;
            if let Some(e) = receipt.error() {
                return Err(AuthError::Registry(e.clone()));
            }
            included_block = included_block.max(receipt.block_number);
        }
        Ok(IssuedToken {
            jwt,
            token_id: claims.jti,
            included_block,
        })
    }

    /// Transfers the token back to the operator address.
    pub fn revoke_token(&self, admin_credential: &str, token_id: &TokenId) -> Result<u64, AuthError> {
        self.check_admin(admin_credential)?;
        let ledger = self.operator.ledger();
        let owner = ledger.owner_of(token_id)?;
        let receipt = self.operator.execute(
            Call::TransferFrom {
                from: owner,
                to: self.operator.address(),
                token_id: *token_id,
            },
            0,
        )?;
        Ok(receipt.block_number)
    }

    /// Mints a token held by the operator and reserved for `client_address`
    /// until it pays `price`.
    pub fn reserve_token(
        &self,
        admin_credential: &str,
        client_address: Address,
        resource_uri: &str,
        price: u64,
        lifetime: u64,
    ) -> Result<IssuedToken, AuthError> {
        self.check_admin(admin_credential)?;
        let claims = self.claims_for(client_address.to_string(), resource_uri, lifetime);
        let jwt = token_format::encode(&claims)?;
        let receipt = self.operator.execute(
            Call::MintReserved {
                token_id: claims.jti,
                metadata: jwt.clone(),
                beneficiary: client_address,
                price,
            },
            0,
        )?;
        Ok(IssuedToken {
            jwt,
            token_id: claims.jti,
            included_block: receipt.block_number,
        })
    }

    /// Housekeeping: destroys a token, e.g. after it has expired.
    pub fn burn_token(&self, admin_credential: &str, token_id: &TokenId) -> Result<u64, AuthError> {
        self.check_admin(admin_credential)?;
        let receipt = self
            .operator
            .execute(Call::Burn { token_id: *token_id }, 0)?;
        Ok(receipt.block_number)
    }
}
