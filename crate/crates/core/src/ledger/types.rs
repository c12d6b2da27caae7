use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::keys::{Address, Keypair, PublicKey, Signature};
use crate::registry::{Call, RegistryError, RegistryEvent, TokenId};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash32([u8; 32]);

impl Hash32 {
    pub fn of(data: &[u8]) -> Self {
        Hash32(Sha256::digest(data).into())
    }
}

impl fmt::Display for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for Hash32 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash32({self})")
    }
}

impl FromStr for Hash32 {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.strip_prefix("0x").ok_or("hash lacks 0x")?;
        let bytes = hex::decode(body).map_err(|e| e.to_string())?;
        Ok(Hash32(bytes.try_into().map_err(|_| "hash is not 32 bytes")?))
    }
}

impl Serialize for Hash32 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Hash32 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub type TxHash = Hash32;

/// A signed registry call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub public_key: PublicKey,
    pub nonce: u64,
    pub call: Call,
    pub value: u64,
    pub signature: Signature,
}

impl Transaction {
    /// Bytes covered by the sender's signature.
    pub fn signing_bytes(sender: &Address, nonce: u64, call: &Call, value: u64) -> Vec<u8> {
        format!("ledger-oauth/tx\n{sender}\n{nonce}\n{call}\n{value}").into_bytes()
    }

    pub fn sign(keys: &Keypair, nonce: u64, call: Call, value: u64) -> Self {
        let sender = keys.address();
        let signature = keys.sign(&Self::signing_bytes(&sender, nonce, &call, value));
        Transaction {
            sender,
            public_key: keys.public(),
            nonce,
            call,
            value,
            signature,
        }
    }

    /// Key matches sender and signature covers the fields.
    pub fn verify(&self) -> bool {
        self.public_key.address() == self.sender
            && self.public_key.verify(
                &Self::signing_bytes(&self.sender, self.nonce, &self.call, self.value),
                &self.signature,
            )
    }

    pub fn hash(&self) -> TxHash {
        let mut bytes = Self::signing_bytes(&self.sender, self.nonce, &self.call, self.value);
        bytes.extend_from_slice(self.signature.as_bytes());
        Hash32::of(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "error")]
pub enum TxStatus {
    Success,
    Failed(RegistryError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_hash: TxHash,
    pub block_number: u64,
    pub index: usize,
    pub sender: Address,
    pub operation: String,
    pub gas_used: u64,
    pub fee: u64,
    pub status: TxStatus,
}

impl Receipt {
    pub fn succeeded(&self) -> bool {
        self.status == TxStatus::Success
    }

    pub fn error(&self) -> Option<&RegistryError> {
        match &self.status {
            TxStatus::Success => None,
            TxStatus::Failed(e) => Some(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingReceipt {
    pub tx_hash: TxHash,
    pub accepted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventName {
    Transfer,
    Approval,
}

impl FromStr for EventName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Transfer" => Ok(EventName::Transfer),
            "Approval" => Ok(EventName::Approval),
            other => Err(format!("unknown event {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub block_number: u64,
    pub event_index: usize,
    pub tx_hash: TxHash,
    pub event: RegistryEvent,
}

impl LedgerEvent {
    pub fn name(&self) -> EventName {
        match self.event {
            RegistryEvent::Transfer { .. } => EventName::Transfer,
            RegistryEvent::Approval { .. } => EventName::Approval,
        }
    }

    pub fn token_id(&self) -> TokenId {
        self.event.token_id()
    }
}

/// Selects events by kind and, optionally, token.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventFilter {
    pub name: Option<EventName>,
    pub token_id: Option<TokenId>,
}

impl EventFilter {
    pub fn transfers() -> Self {
        EventFilter {
            name: Some(EventName::Transfer),
            token_id: None,
        }
    }

    pub fn for_token(mut self, token_id: TokenId) -> Self {
        self.token_id = Some(token_id);
        self
    }

    pub fn matches(&self, ev: &LedgerEvent) -> bool {
        self.name.is_none_or(|n| n == ev.name()) && self.token_id.is_none_or(|t| t == ev.token_id())
    }
}

/// Balance credit outside of transactions (faucet).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credit {
    pub address: Address,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub number: u64,
    pub timestamp: u64,
    pub parent_hash: Hash32,
    pub credits: Vec<Credit>,
    pub transactions: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
    pub events: Vec<LedgerEvent>,
}

impl Block {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("block serialization is infallible")
    }

    pub fn hash(&self) -> Hash32 {
        Hash32::of(&self.canonical_bytes())
    }
}
