//! Deterministic state transition: accounts, registry and block assembly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::gas::GasSchedule;
use super::types::{Block, Credit, Hash32, LedgerEvent, Receipt, Transaction, TxStatus};
use crate::keys::Address;
use crate::registry::{Call, Registry, RegistryError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub balance: u64,
    /// Nonce expected on the next transaction.
    pub nonce: u64,
}

/// Everything derived from the block sequence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pub height: u64,
    pub last_hash: Hash32,
    pub last_timestamp: u64,
    pub accounts: BTreeMap<Address, Account>,
    pub registry: Option<Registry>,
    /// Gas fees removed from balances.
    pub fees_collected: u64,
    /// Total faucet credits ever applied.
    pub minted_supply: u64,
}

impl ChainState {
    pub fn genesis(timestamp: u64, faucet: &[Credit]) -> (Self, Block) {
        let mut state = ChainState {
            height: 0,
            last_hash: Hash32::default(),
            last_timestamp: timestamp,
            accounts: BTreeMap::new(),
            registry: None,
            fees_collected: 0,
            minted_supply: 0,
        };
        for credit in faucet {
            state.apply_credit(credit);
        }
        let block = Block {
            number: 0,
            timestamp,
            parent_hash: Hash32::default(),
            credits: faucet.to_vec(),
            transactions: Vec::new(),
            receipts: Vec::new(),
            events: Vec::new(),
        };
        state.last_hash = block.hash();
        (state, block)
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.accounts.get(addr).map_or(0, |a| a.balance)
    }

    pub fn total_balances(&self) -> u64 {
        self.accounts.values().map(|a| a.balance).sum()
    }

    fn touch(&mut self, addr: Address) -> &mut Account {
        self.accounts.entry(addr).or_default()
    }

    fn apply_credit(&mut self, credit: &Credit) {
        self.touch(credit.address).balance += credit.amount;
        self.minted_supply += credit.amount;
    }

    /// Applies credits then transactions in order and seals the result.
    pub fn apply_block(
        &mut self,
        timestamp: u64,
        credits: Vec<Credit>,
        transactions: Vec<Transaction>,
        schedule: &GasSchedule,
        gas_price: u64,
    ) -> Block {
        let number = self.height + 1;
        let timestamp = timestamp.max(self.last_timestamp);
        for credit in &credits {
            self.apply_credit(credit);
        }
        let mut receipts = Vec::with_capacity(transactions.len());
        let mut events = Vec::new();
        for (index, tx) in transactions.iter().enumerate() {
            let tx_hash = tx.hash();
            let gas_used = schedule.cost(&tx.call);
            let fee = gas_used.saturating_mul(gas_price);
            let status = match self.apply_transaction(tx, fee) {
                Ok(emitted) => {
                    for event in emitted {
                        events.push(LedgerEvent {
                            block_number: number,
                            event_index: events.len(),
                            tx_hash,
                            event,
                        });
                    }
                    TxStatus::Success
                }
                Err(e) => TxStatus::Failed(e),
            };
            receipts.push(Receipt {
                tx_hash,
                block_number: number,
                index,
                sender: tx.sender,
                operation: tx.call.name().to_string(),
                gas_used,
                fee,
                status,
            });
        }
        let block = Block {
            number,
            timestamp,
            parent_hash: self.last_hash,
            credits,
            transactions,
            receipts,
            events,
        };
        self.height = number;
        self.last_hash = block.hash();
        self.last_timestamp = timestamp;
        block
    }

    /// Charges the fee and bumps the nonce unconditionally; registry and
    /// value effects apply only on success.
    fn apply_transaction(
        &mut self,
        tx: &Transaction,
        fee: u64,
    ) -> Result<Vec<crate::registry::RegistryEvent>, RegistryError> {
        let fee = {
            let account = self.touch(tx.sender);
            account.nonce += 1;
            let charged = fee.min(account.balance);
            account.balance -= charged;
            charged
        };
        self.fees_collected += fee;

        if self.balance(&tx.sender) < tx.value {
            return Err(RegistryError::InvalidArgument(
                "insufficient funds for attached value".into(),
            ));
        }

        if let Call::Deploy { operator } = &tx.call {
            if self.registry.is_some() {
                return Err(RegistryError::AlreadyDeployed);
            }
            if tx.value > 0 {
                return Err(RegistryError::NotPayable);
            }
            if operator.is_zero() {
                return Err(RegistryError::InvalidArgument("zero operator".into()));
            }
            let mut seed = tx.sender.as_bytes().to_vec();
            seed.extend_from_slice(&tx.nonce.to_be_bytes());
            let contract = Address::from_hash_of(&seed);
            self.registry = Some(Registry::new(tx.sender, *operator, contract));
            self.touch(*operator);
            return Ok(Vec::new());
        }

        let registry = self.registry.as_mut().ok_or(RegistryError::NotDeployed)?;
        let outcome = registry.execute(tx.sender, tx.value, &tx.call)?;
        if let Call::SetOperator { new_operator } = &tx.call {
            self.touch(*new_operator);
        }
        if let Some(payment) = outcome.payment {
            self.touch(tx.sender).balance -= payment.amount;
            self.touch(payment.to).balance += payment.amount;
        }
        for event in &outcome.events {
            if let crate::registry::RegistryEvent::Transfer { to, .. } = event {
                if !to.is_zero() {
                    self.touch(*to);
                }
            }
        }
        Ok(outcome.events)
    }
}
