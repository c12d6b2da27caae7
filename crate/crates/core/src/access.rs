//! Ledger access seams shared by the servers and the client library.
//!
//! [`LedgerReader`] exposes view calls and the event log only; a resource
//! server is handed nothing else and so has no way to write. Signing
//! parties use [`LedgerWriter`] through a [`LedgerAccount`], which
//! serializes nonce assignment per key.

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::keys::{Address, Keypair};
use crate::ledger::{
    EventFilter, Ledger, LedgerError, LedgerEvent, PendingReceipt, Receipt, Transaction, TxHash,
};
use crate::registry::{Call, Reservation, TokenId};

pub trait LedgerReader: Send + Sync {
    fn head(&self) -> Result<u64, LedgerError>;
    fn owner_of(&self, token_id: &TokenId) -> Result<Address, LedgerError>;
    fn token_uri(&self, token_id: &TokenId) -> Result<String, LedgerError>;
    fn get_approved(&self, token_id: &TokenId) -> Result<Option<Address>, LedgerError>;
    fn reservation(&self, token_id: &TokenId) -> Result<Option<Reservation>, LedgerError>;
    fn balance(&self, addr: &Address) -> Result<u64, LedgerError>;
    fn contract_address(&self) -> Result<Address, LedgerError>;
    fn operator(&self) -> Result<Address, LedgerError>;
    fn get_events(
        &self,
        filter: &EventFilter,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<LedgerEvent>, LedgerError>;
}

pub trait LedgerWriter: LedgerReader {
    fn next_nonce(&self, addr: &Address) -> Result<u64, LedgerError>;
    fn submit(&self, tx: Transaction) -> Result<PendingReceipt, LedgerError>;
    fn wait_for_receipt(&self, hash: &TxHash, timeout: Duration) -> Result<Receipt, LedgerError>;
}

impl LedgerReader for Ledger {
    fn head(&self) -> Result<u64, LedgerError> {
        Ok(Ledger::head(self))
    }

    fn owner_of(&self, token_id: &TokenId) -> Result<Address, LedgerError> {
        Ledger::owner_of(self, token_id)
    }

    fn token_uri(&self, token_id: &TokenId) -> Result<String, LedgerError> {
        Ledger::token_uri(self, token_id)
    }

    fn get_approved(&self, token_id: &TokenId) -> Result<Option<Address>, LedgerError> {
        Ledger::get_approved(self, token_id)
    }

    fn reservation(&self, token_id: &TokenId) -> Result<Option<Reservation>, LedgerError> {
        Ledger::reservation(self, token_id)
    }

    fn balance(&self, addr: &Address) -> Result<u64, LedgerError> {
        Ok(Ledger::balance(self, addr))
    }

    fn contract_address(&self) -> Result<Address, LedgerError> {
        Ledger::contract_address(self)
    }

    fn operator(&self) -> Result<Address, LedgerError> {
        Ledger::operator(self)
    }

    fn get_events(
        &self,
        filter: &EventFilter,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<LedgerEvent>, LedgerError> {
        Ledger::get_events(self, filter, from_block, to_block)
    }
}

impl LedgerWriter for Ledger {
    fn next_nonce(&self, addr: &Address) -> Result<u64, LedgerError> {
        Ok(Ledger::next_nonce(self, addr))
    }

    fn submit(&self, tx: Transaction) -> Result<PendingReceipt, LedgerError> {
        self.submit_transaction(tx)
    }

    fn wait_for_receipt(&self, hash: &TxHash, timeout: Duration) -> Result<Receipt, LedgerError> {
        Ledger::wait_for_receipt(self, hash, timeout)
    }
}

pub const DEFAULT_INCLUSION_TIMEOUT: Duration = Duration::from_secs(60);

/// A key pair bound to a ledger connection.
pub struct LedgerAccount {
    keys: Keypair,
    ledger: Arc<dyn LedgerWriter>,
    submit_lock: Mutex<()>,
    timeout: Duration,
}

impl LedgerAccount {
    pub fn new(keys: Keypair, ledger: Arc<dyn LedgerWriter>) -> Self {
        LedgerAccount {
            keys,
            ledger,
            submit_lock: Mutex::new(()),
            timeout: DEFAULT_INCLUSION_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn keys(&self) -> &Keypair {
        &self.keys
    }

    pub fn address(&self) -> Address {
        self.keys.address()
    }

    pub fn ledger(&self) -> &Arc<dyn LedgerWriter> {
        &self.ledger
    }

    /// Signs and submits a batch with consecutive nonces.
    pub fn submit_all(&self, calls: Vec<(Call, u64)>) -> Result<Vec<TxHash>, LedgerError> {
        let _guard = self.submit_lock.lock();
        let mut nonce = self.ledger.next_nonce(&self.address())?;
        let mut hashes = Vec::with_capacity(calls.len());
        for (call, value) in calls {
            let tx = Transaction::sign(&self.keys, nonce, call, value);
            hashes.push(self.ledger.submit(tx)?.tx_hash);
            nonce += 1;
        }
        Ok(hashes)
    }

    pub fn submit(&self, call: Call, value: u64) -> Result<TxHash, LedgerError> {
        Ok(self.submit_all(vec![(call, value)])?[0])
    }

    pub fn wait(&self, hash: &TxHash) -> Result<Receipt, LedgerError> {
        self.ledger.wait_for_receipt(hash, self.timeout)
    }

    /// Submits one call and waits for its sealed receipt; a failed
    /// execution comes back as the registry error.
    pub fn execute(&self, call: Call, value: u64) -> Result<Receipt, LedgerError> {
        let hash = self.submit(call, value)?;
        let receipt = self.wait(&hash)?;
        match receipt.error() {
            None => Ok(receipt),
            Some(e) => Err(LedgerError::Registry(e.clone())),
        }
    }
}
