//! Non-fungible token registry with operator-only issuance.
//!
//! The contract follows ERC-721 ownership and approval semantics with the
//! restrictions needed for access tokens: only the operator may mint, burn
//! or move tokens, token owners may only approve a delegee, and the token
//! metadata (the compact JWT) is fixed at mint time. A separate root key
//! designates the operator. Reserved tokens are held by the operator until
//! the designated beneficiary claims them with a payment.

mod call;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use call::Call;

use crate::keys::Address;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegistryError {
    #[error("caller is not the operator")]
    NotOperator,
    #[error("caller is not the root key")]
    NotRoot,
    #[error("caller is neither the token owner nor the operator")]
    NotAuthorized,
    #[error("token id was already used")]
    DuplicateTokenId,
    #[error("unknown token")]
    UnknownToken,
    #[error("from address is not the current owner")]
    FromMismatch,
    #[error("token is not reserved")]
    NotReserved,
    #[error("caller is not the reservation beneficiary")]
    NotBeneficiary,
    #[error("attached value is below the reservation price")]
    InsufficientPayment,
    #[error("operation does not accept a value")]
    NotPayable,
    #[error("registry has not been deployed")]
    NotDeployed,
    #[error("registry is already deployed")]
    AlreadyDeployed,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// 256-bit token identifier, rendered as `0x` followed by 64 lowercase hex digits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId([u8; 32]);

impl TokenId {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        TokenId(bytes)
    }

    pub fn random() -> Self {
        let mut b = [0u8; 32];
        OsRng.fill_bytes(&mut b);
        TokenId(b)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(self.0))
    }
}

impl fmt::Debug for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenId({self})")
    }
}

impl FromStr for TokenId {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s
            .strip_prefix("0x")
            .ok_or_else(|| RegistryError::InvalidArgument(format!("token id {s:?} lacks 0x")))?;
        let bytes = hex::decode(body)
            .map_err(|e| RegistryError::InvalidArgument(format!("token id {s:?}: {e}")))?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| {
            RegistryError::InvalidArgument(format!("token id {s:?} is not 32 bytes"))
        })?;
        Ok(TokenId(arr))
    }
}

impl Serialize for TokenId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TokenId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reservation {
    pub beneficiary: Address,
    pub price: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub token_id: TokenId,
    pub owner: Address,
    pub metadata: String,
    pub approved: Option<Address>,
    pub reservation: Option<Reservation>,
}

/// Event emitted by a registry call; the ledger stamps block position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum RegistryEvent {
    Transfer {
        from: Address,
        to: Address,
        token_id: TokenId,
    },
    Approval {
        owner: Address,
        approved: Address,
        token_id: TokenId,
    },
}

impl RegistryEvent {
    pub fn token_id(&self) -> TokenId {
        match self {
            RegistryEvent::Transfer { token_id, .. } | RegistryEvent::Approval { token_id, .. } => {
                *token_id
            }
        }
    }
}

/// Value movement requested by a payable call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Payment {
    pub to: Address,
    pub amount: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outcome {
    pub events: Vec<RegistryEvent>,
    pub payment: Option<Payment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    root: Address,
    operator: Address,
    contract_address: Address,
    tokens: BTreeMap<TokenId, TokenRecord>,
    /// Every id ever minted, burned ones included.
    used_ids: BTreeSet<TokenId>,
}

impl Registry {
    pub fn new(root: Address, operator: Address, contract_address: Address) -> Self {
        Registry {
            root,
            operator,
            contract_address,
            tokens: BTreeMap::new(),
            used_ids: BTreeSet::new(),
        }
    }

    pub fn root(&self) -> Address {
        self.root
    }

    pub fn operator(&self) -> Address {
        self.operator
    }

    pub fn contract_address(&self) -> Address {
        self.contract_address
    }

    pub fn owner_of(&self, token_id: &TokenId) -> Result<Address, RegistryError> {
        self.record(token_id).map(|r| r.owner)
    }

    pub fn token_uri(&self, token_id: &TokenId) -> Result<&str, RegistryError> {
        self.record(token_id).map(|r| r.metadata.as_str())
    }

    pub fn get_approved(&self, token_id: &TokenId) -> Result<Option<Address>, RegistryError> {
        self.record(token_id).map(|r| r.approved)
    }

    pub fn reservation(&self, token_id: &TokenId) -> Result<Option<&Reservation>, RegistryError> {
        self.record(token_id).map(|r| r.reservation.as_ref())
    }

    pub fn record(&self, token_id: &TokenId) -> Result<&TokenRecord, RegistryError> {
        self.tokens.get(token_id).ok_or(RegistryError::UnknownToken)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &TokenRecord> {
        self.tokens.values()
    }

    pub fn was_used(&self, token_id: &TokenId) -> bool {
        self.used_ids.contains(token_id)
    }

    fn require_operator(&self, caller: Address) -> Result<(), RegistryError> {
        if caller == self.operator {
            Ok(())
        } else {
            Err(RegistryError::NotOperator)
        }
    }

    fn require_fresh(&self, token_id: &TokenId) -> Result<(), RegistryError> {
        if self.used_ids.contains(token_id) {
            Err(RegistryError::DuplicateTokenId)
        } else {
            Ok(())
        }
    }

    fn record_mut(&mut self, token_id: &TokenId) -> Result<&mut TokenRecord, RegistryError> {
        self.tokens
            .get_mut(token_id)
            .ok_or(RegistryError::UnknownToken)
    }

    /// Applies one call on behalf of `caller` with `value` attached.
    ///
    /// All preconditions are checked before any field is written, so an
    /// error leaves the registry untouched.
    pub fn execute(
        &mut self,
        caller: Address,
        value: u64,
        call: &Call,
    ) -> Result<Outcome, RegistryError> {
        if value > 0 && !matches!(call, Call::Claim { .. }) {
            return Err(RegistryError::NotPayable);
        }
        call.validate()?;
        match call {
            Call::Deploy { .. } => Err(RegistryError::AlreadyDeployed),
            Call::Mint {
                token_id,
                metadata,
                to,
            } => self.mint(caller, *token_id, metadata, *to, None),
            Call::MintReserved {
                token_id,
                metadata,
                beneficiary,
                price,
            } => {
                let reservation = Reservation {
                    beneficiary: *beneficiary,
                    price: *price,
                };
                self.mint(caller, *token_id, metadata, self.operator, Some(reservation))
            }
            Call::Burn { token_id } => self.burn(caller, token_id),
            Call::TransferFrom { from, to, token_id } => {
                self.transfer_from(caller, *from, *to, token_id)
            }
            Call::Approve { approved, token_id } => self.approve(caller, *approved, token_id),
            Call::SetOperator { new_operator } => {
                if caller != self.root {
                    return Err(RegistryError::NotRoot);
                }
                if new_operator.is_zero() {
                    return Err(RegistryError::InvalidArgument("zero operator".into()));
                }
                self.operator = *new_operator;
                Ok(Outcome::default())
            }
            Call::Claim { token_id } => self.claim(caller, value, token_id),
        }
    }

    fn mint(
        &mut self,
        caller: Address,
        token_id: TokenId,
        metadata: &str,
        to: Address,
        reservation: Option<Reservation>,
    ) -> Result<Outcome, RegistryError> {
        self.require_operator(caller)?;
        self.require_fresh(&token_id)?;
        if to.is_zero() {
            return Err(RegistryError::InvalidArgument("mint to zero address".into()));
        }
        self.used_ids.insert(token_id);
        self.tokens.insert(
            token_id,
            TokenRecord {
                token_id,
                owner: to,
                metadata: metadata.to_string(),
                approved: None,
                reservation,
            },
        );
        Ok(Outcome {
            events: vec![RegistryEvent::Transfer {
                from: Address::ZERO,
                to,
                token_id,
            }],
            payment: None,
        })
    }

    fn burn(&mut self, caller: Address, token_id: &TokenId) -> Result<Outcome, RegistryError> {
        self.require_operator(caller)?;
        let record = self.tokens.remove(token_id).ok_or(RegistryError::UnknownToken)?;
        Ok(Outcome {
            events: vec![RegistryEvent::Transfer {
                from: record.owner,
                to: Address::ZERO,
                token_id: *token_id,
            }],
            payment: None,
        })
    }

    fn transfer_from(
        &mut self,
        caller: Address,
        from: Address,
        to: Address,
        token_id: &TokenId,
    ) -> Result<Outcome, RegistryError> {
        self.require_operator(caller)?;
        if to.is_zero() {
            return Err(RegistryError::InvalidArgument(
                "transfer to zero address".into(),
            ));
        }
        let record = self.record_mut(token_id)?;
        if record.owner != from {
            return Err(RegistryError::FromMismatch);
        }
        record.owner = to;
        record.approved = None;
        record.reservation = None;
        Ok(Outcome {
            events: vec![RegistryEvent::Transfer {
                from,
                to,
                token_id: *token_id,
            }],
            payment: None,
        })
    }

    fn approve(
        &mut self,
        caller: Address,
        approved: Address,
        token_id: &TokenId,
    ) -> Result<Outcome, RegistryError> {
        let operator = self.operator;
        let record = self.record_mut(token_id)?;
        if caller != record.owner && caller != operator {
            return Err(RegistryError::NotAuthorized);
        }
        // approving the zero address clears the approval, as in ERC-721
        record.approved = (!approved.is_zero()).then_some(approved);
        Ok(Outcome {
            events: vec![RegistryEvent::Approval {
                owner: record.owner,
                approved,
                token_id: *token_id,
            }],
            payment: None,
        })
    }

    fn claim(
        &mut self,
        caller: Address,
        value: u64,
        token_id: &TokenId,
    ) -> Result<Outcome, RegistryError> {
        let operator = self.operator;
        let record = self.record_mut(token_id)?;
        let reservation = record.reservation.as_ref().ok_or(RegistryError::NotReserved)?;
        if reservation.beneficiary != caller {
            return Err(RegistryError::NotBeneficiary);
        }
        if value < reservation.price {
            return Err(RegistryError::InsufficientPayment);
        }
        let price = reservation.price;
        let from = record.owner;
        record.owner = caller;
        record.approved = None;
        record.reservation = None;
        Ok(Outcome {
            events: vec![RegistryEvent::Transfer {
                from,
                to: caller,
                token_id: *token_id,
            }],
            payment: Some(Payment {
                to: operator,
                amount: price,
            }),
        })
    }
}
