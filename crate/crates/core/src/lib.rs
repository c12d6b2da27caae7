//! OAuth 2.0 access tokens backed by a non-fungible token registry.
//!
//! An authorization server mints one registry token per issued JWT, with
//! the token id equal to the `jti` claim and the compact JWT stored as
//! immutable metadata. Resource servers validate a presented JWT purely by
//! reading the ledger: the token must be owned by the JWT subject (or
//! approved for a delegee) and its metadata must equal the JWT bytes.
//! Revocation is a transfer back to the server, observed through the
//! ledger's event log.

pub mod access;
pub mod auth_server;
pub mod client_sdk;
pub mod clock;
pub mod keys;
pub mod ledger;
pub mod registry;
pub mod resource_server;
pub mod token_format;
