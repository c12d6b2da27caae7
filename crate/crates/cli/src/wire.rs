//! JSON bodies exchanged over HTTP.

use ledger_oauth::keys::{Address, PublicKey, Signature};
use ledger_oauth::registry::TokenId;
use serde::{Deserialize, Serialize};

/// Error body: the typed error plus a readable message.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody<E> {
    pub error: E,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub role: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ViewQuery {
    pub token_id: Option<TokenId>,
    pub address: Option<Address>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EventsQuery {
    pub from: u64,
    pub to: Option<u64>,
    pub name: Option<String>,
    pub token_id: Option<TokenId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockQuery {
    pub number: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReceiptQuery {
    pub hash: String,
    pub wait_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewResult<T> {
    pub result: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRequest {
    pub pub_key: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrantRequest {
    pub owner_credential: String,
    pub client_address: Address,
    pub resource_uri: String,
    pub ttl: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdminTokenRequest {
    pub admin_credential: String,
    pub token_id: TokenId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReserveRequest {
    pub admin_credential: String,
    pub client_address: Address,
    pub resource_uri: String,
    pub price: u64,
    pub lifetime: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockNumber {
    pub block: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccessRequest {
    pub jwt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChallengeResponse {
    pub challenge_id: String,
    pub signature: Signature,
    pub pub_key: PublicKey,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResourceQuery {
    pub session: String,
    pub uri: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Payload {
    pub payload: String,
}
