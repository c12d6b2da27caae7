//! Canonical text encoding of registry calls carried inside transactions.
//!
//! A call is written as `name(arg0,arg1,...)` with no whitespace. Arguments
//! are addresses and token ids as `0x`-prefixed lowercase hex, integers in
//! decimal without leading zeros, and metadata as compact JWT text (the
//! base64url alphabet plus `.`). None of these alphabets contain `(`, `)`
//! or `,`, so the encoding is unambiguous and parsing is the exact inverse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{RegistryError, TokenId};
use crate::keys::Address;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    /// Creates the registry; the sender becomes root.
    Deploy { operator: Address },
    Mint {
        token_id: TokenId,
        metadata: String,
        to: Address,
    },
    Burn { token_id: TokenId },
    TransferFrom {
        from: Address,
        to: Address,
        token_id: TokenId,
    },
    Approve { approved: Address, token_id: TokenId },
    SetOperator { new_operator: Address },
    MintReserved {
        token_id: TokenId,
        metadata: String,
        beneficiary: Address,
        price: u64,
    },
    Claim { token_id: TokenId },
}

impl Call {
    pub fn name(&self) -> &'static str {
        match self {
            Call::Deploy { .. } => "deploy",
            Call::Mint { .. } => "mint",
            Call::Burn { .. } => "burn",
            Call::TransferFrom { .. } => "transfer_from",
            Call::Approve { .. } => "approve",
            Call::SetOperator { .. } => "set_operator",
            Call::MintReserved { .. } => "mint_reserved",
            Call::Claim { .. } => "claim",
        }
    }

    fn args(&self) -> Vec<String> {
        match self {
            Call::Deploy { operator } => vec![operator.to_string()],
            Call::Mint {
                token_id,
                metadata,
                to,
            } => vec![token_id.to_string(), metadata.clone(), to.to_string()],
            Call::Burn { token_id } | Call::Claim { token_id } => vec![token_id.to_string()],
            Call::TransferFrom { from, to, token_id } => {
                vec![from.to_string(), to.to_string(), token_id.to_string()]
            }
            Call::Approve { approved, token_id } => {
                vec![approved.to_string(), token_id.to_string()]
            }
            Call::SetOperator { new_operator } => vec![new_operator.to_string()],
            Call::MintReserved {
                token_id,
                metadata,
                beneficiary,
                price,
            } => vec![
                token_id.to_string(),
                metadata.clone(),
                beneficiary.to_string(),
                price.to_string(),
            ],
        }
    }

    /// Checks that every argument stays inside its alphabet.
    pub fn validate(&self) -> Result<(), RegistryError> {
        match self {
            Call::Mint { metadata, .. } | Call::MintReserved { metadata, .. } => {
                check_metadata(metadata)
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn check_metadata(metadata: &str) -> Result<(), RegistryError> {
    let ok = !metadata.is_empty()
        && metadata
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(RegistryError::InvalidArgument(
            "metadata must be compact JWT text".into(),
        ))
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.name(), self.args().join(","))
    }
}

fn bad(msg: impl Into<String>) -> RegistryError {
    RegistryError::InvalidArgument(msg.into())
}

fn parse_u64(s: &str) -> Result<u64, RegistryError> {
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) || !s.bytes().all(|b| b.is_ascii_digit())
    {
        return Err(bad(format!("non-canonical integer {s:?}")));
    }
    s.parse().map_err(|_| bad(format!("integer out of range {s:?}")))
}

fn parse_address(s: &str) -> Result<Address, RegistryError> {
    let addr: Address = s.parse().map_err(|e| bad(format!("address {s:?}: {e}")))?;
    if addr.to_string() != s {
        return Err(bad(format!("non-canonical address {s:?}")));
    }
    Ok(addr)
}

fn parse_token(s: &str) -> Result<TokenId, RegistryError> {
    let id: TokenId = s.parse()?;
    if id.to_string() != s {
        return Err(bad(format!("non-canonical token id {s:?}")));
    }
    Ok(id)
}

impl FromStr for Call {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let open = s.find('(').ok_or_else(|| bad("missing '('"))?;
        let body = s[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| bad("missing ')'"))?;
        let name = &s[..open];
        let args: Vec<&str> = if body.is_empty() {
            Vec::new()
        } else {
            body.split(',').collect()
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(bad(format!("{name} takes {n} arguments, got {}", args.len())))
            }
        };
        let call = match name {
            "deploy" => {
                arity(1)?;
                Call::Deploy {
                    operator: parse_address(args[0])?,
                }
            }
            "mint" => {
                arity(3)?;
                Call::Mint {
                    token_id: parse_token(args[0])?,
                    metadata: args[1].to_string(),
                    to: parse_address(args[2])?,
                }
            }
            "burn" => {
                arity(1)?;
                Call::Burn {
                    token_id: parse_token(args[0])?,
                }
            }
            "transfer_from" => {
                arity(3)?;
                Call::TransferFrom {
                    from: parse_address(args[0])?,
                    to: parse_address(args[1])?,
                    token_id: parse_token(args[2])?,
                }
            }
            "approve" => {
                arity(2)?;
                Call::Approve {
                    approved: parse_address(args[0])?,
                    token_id: parse_token(args[1])?,
                }
            }
            "set_operator" => {
                arity(1)?;
                Call::SetOperator {
                    new_operator: parse_address(args[0])?,
                }
            }
            "mint_reserved" => {
                arity(4)?;
                Call::MintReserved {
                    token_id: parse_token(args[0])?,
                    metadata: args[1].to_string(),
                    beneficiary: parse_address(args[2])?,
                    price: parse_u64(args[3])?,
                }
            }
            "claim" => {
                arity(1)?;
                Call::Claim {
                    token_id: parse_token(args[0])?,
                }
            }
            other => return Err(bad(format!("unknown operation {other:?}"))),
        };
        call.validate()?;
        Ok(call)
    }
}

impl Serialize for Call {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Call {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
