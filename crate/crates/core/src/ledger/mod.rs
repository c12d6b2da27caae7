//! Single-node append-only ledger hosting the token registry.
//!
//! Transactions are admitted to a FIFO mempool after signature, nonce and
//! balance checks, and take effect only when a block is sealed. Sealed
//! blocks are immutable; the event log they carry is the source for
//! subscriptions and for replay after downtime. All writes go through one
//! write lock; views read the state as of the latest sealed block.

mod chain;
mod gas;
mod store;
mod types;

use std::collections::{HashMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc, Weak};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use chain::{Account, ChainState};
pub use gas::{GasSchedule, View};
pub use store::{Store, BLOCK_LOG_FILE, FORMAT_VERSION, SNAPSHOT_FILE};
pub use types::{
    Block, Credit, EventFilter, EventName, Hash32, LedgerEvent, PendingReceipt, Receipt,
    Transaction, TxHash, TxStatus,
};

use crate::clock::{Clock, SystemClock};
use crate::keys::Address;
use crate::registry::{Registry, RegistryError, Reservation, TokenId};

pub const DEFAULT_BLOCK_INTERVAL_MS: u64 = 13_000;

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LedgerError {
    #[error("bad nonce: expected {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("insufficient funds: need {needed}, available {available}")]
    InsufficientFunds { needed: u64, available: u64 },
    #[error("unknown sender {0}")]
    UnknownSender(Address),
    #[error("transaction signature does not verify")]
    BadSignature,
    #[error("invalid call: {0}")]
    InvalidCall(String),
    #[error("block range {from}..={to} is beyond head {head}")]
    RangeBeyondHead { from: u64, to: u64, head: u64 },
    #[error("unknown block {0}")]
    UnknownBlock(u64),
    #[error("unknown transaction {0}")]
    UnknownTransaction(TxHash),
    #[error("timed out waiting for the ledger")]
    Timeout,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("persistence: {0}")]
    Persistence(String),
    #[error("transport: {0}")]
    Transport(String),
}

impl From<std::io::Error> for LedgerError {
    fn from(e: std::io::Error) -> Self {
        LedgerError::Persistence(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockMode {
    /// Blocks are sealed only by explicit `advance_block` calls.
    Manual,
    /// Waiting on a pending transaction seals a block immediately.
    OnDemand,
    /// A producer thread seals a block every interval.
    Timed { interval_ms: u64 },
}

impl BlockMode {
    /// `block_interval_ms` = 0 selects on-demand sealing.
    pub fn from_interval_ms(ms: u64) -> Self {
        if ms == 0 {
            BlockMode::OnDemand
        } else {
            BlockMode::Timed { interval_ms: ms }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerConfig {
    pub mode: BlockMode,
    pub gas_price: u64,
    pub faucet: Vec<Credit>,
    pub gas_schedule: GasSchedule,
    pub genesis_timestamp: u64,
}

impl Default for LedgerConfig {
    fn default() -> Self {
        LedgerConfig {
            mode: BlockMode::Timed {
                interval_ms: DEFAULT_BLOCK_INTERVAL_MS,
            },
            gas_price: 0,
            faucet: Vec::new(),
            gas_schedule: GasSchedule::default(),
            genesis_timestamp: 0,
        }
    }
}

impl LedgerConfig {
    pub fn manual() -> Self {
        LedgerConfig {
            mode: BlockMode::Manual,
            ..Default::default()
        }
    }

    pub fn on_demand() -> Self {
        LedgerConfig {
            mode: BlockMode::OnDemand,
            ..Default::default()
        }
    }

    pub fn with_faucet(mut self, address: Address, amount: u64) -> Self {
        self.faucet.push(Credit { address, amount });
        self
    }

    pub fn with_gas_price(mut self, price: u64) -> Self {
        self.gas_price = price;
        self
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct PendingAccount {
    next_nonce: u64,
    spend: u64,
}

struct Inner {
    chain: ChainState,
    blocks: Vec<Block>,
    receipts: HashMap<TxHash, (u64, usize)>,
    mempool: VecDeque<Transaction>,
    pending_credits: Vec<Credit>,
    pending: HashMap<Address, PendingAccount>,
}

impl Inner {
    fn index_block(&mut self, block: &Block) {
        for r in &block.receipts {
            self.receipts.insert(r.tx_hash, (block.number, r.index));
        }
    }

    fn registry(&self) -> Result<&Registry, RegistryError> {
        self.chain.registry.as_ref().ok_or(RegistryError::NotDeployed)
    }

    fn check_range(&self, from: u64, to: u64) -> Result<(), LedgerError> {
        let head = self.chain.height;
        if from > to || to > head {
            return Err(LedgerError::RangeBeyondHead { from, to, head });
        }
        Ok(())
    }
}

struct Subscriber {
    filter: EventFilter,
    tx: mpsc::Sender<LedgerEvent>,
}

/// Receiving end of an event subscription.
pub struct Subscription {
    rx: mpsc::Receiver<LedgerEvent>,
}

impl Subscription {
    pub fn try_next(&self) -> Option<LedgerEvent> {
        self.rx.try_recv().ok()
    }

    pub fn next_timeout(&self, timeout: Duration) -> Option<LedgerEvent> {
        self.rx.recv_timeout(timeout).ok()
    }

    /// Everything delivered so far without blocking.
    pub fn drain(&self) -> Vec<LedgerEvent> {
        self.rx.try_iter().collect()
    }
}

pub struct Ledger {
    config: LedgerConfig,
    clock: Arc<dyn Clock>,
    inner: RwLock<Inner>,
    sealed: Mutex<u64>,
    sealed_cv: Condvar,
    subscribers: Mutex<Vec<Subscriber>>,
    store: Option<Store>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("mode", &self.config.mode)
            .field("head", &self.head())
            .finish_non_exhaustive()
    }
}

impl Ledger {
    pub fn new(config: LedgerConfig) -> Arc<Self> {
        Self::with_clock(config, Arc::new(SystemClock))
    }

    pub fn with_clock(config: LedgerConfig, clock: Arc<dyn Clock>) -> Arc<Self> {
        let (chain, genesis) = ChainState::genesis(config.genesis_timestamp, &config.faucet);
        Arc::new(Self::from_parts(config, clock, chain, vec![genesis], None))
    }

    /// Opens (or creates) a persistent ledger in `dir`.
    ///
    /// State is restored from the snapshot when it matches the block log and
    /// the remaining blocks are re-executed; any divergence between a
    /// re-executed block and the logged one is reported as corruption.
    pub fn open(
        config: LedgerConfig,
        clock: Arc<dyn Clock>,
        dir: &Path,
    ) -> Result<Arc<Self>, LedgerError> {
        let store = Store::new(dir)?;
        let logged = store.read_blocks()?;
        if logged.is_empty() {
            let (chain, genesis) = ChainState::genesis(config.genesis_timestamp, &config.faucet);
            store.append_block(&genesis)?;
            return Ok(Arc::new(Self::from_parts(
                config,
                clock,
                chain,
                vec![genesis],
                Some(store),
            )));
        }

        let genesis = &logged[0];
        let (mut chain, rebuilt) = ChainState::genesis(genesis.timestamp, &genesis.credits);
        if &rebuilt != genesis {
            return Err(LedgerError::Persistence("genesis block mismatch".into()));
        }
        if let Some(snap) = store.read_snapshot()? {
            let usable = logged
                .get(snap.height as usize)
                .is_some_and(|b| b.hash() == snap.last_hash);
            if usable {
                chain = snap;
            }
        }
        for block in &logged[chain.height as usize + 1..] {
            let replayed = chain.apply_block(
                block.timestamp,
                block.credits.clone(),
                block.transactions.clone(),
                &config.gas_schedule,
                config.gas_price,
            );
            if &replayed != block {
                return Err(LedgerError::Persistence(format!(
                    "block {} does not replay to its logged contents",
                    block.number
                )));
            }
        }
        Ok(Arc::new(Self::from_parts(
            config,
            clock,
            chain,
            logged,
            Some(store),
        )))
    }

    fn from_parts(
        config: LedgerConfig,
        clock: Arc<dyn Clock>,
        chain: ChainState,
        blocks: Vec<Block>,
        store: Option<Store>,
    ) -> Self {
        let head = chain.height;
        let mut inner = Inner {
            chain,
            blocks: Vec::new(),
            receipts: HashMap::new(),
            mempool: VecDeque::new(),
            pending_credits: Vec::new(),
            pending: HashMap::new(),
        };
        for block in &blocks {
            inner.index_block(block);
        }
        inner.blocks = blocks;
        Ledger {
            config,
            clock,
            inner: RwLock::new(inner),
            sealed: Mutex::new(head),
            sealed_cv: Condvar::new(),
            subscribers: Mutex::new(Vec::new()),
            store,
        }
    }

    pub fn config(&self) -> &LedgerConfig {
        &self.config
    }

    /// Writes a state snapshot next to the block log.
    pub fn checkpoint(&self) -> Result<(), LedgerError> {
        if let Some(store) = &self.store {
            let inner = self.inner.read();
            store.write_snapshot(&inner.chain)?;
        }
        Ok(())
    }

    pub fn submit_transaction(&self, tx: Transaction) -> Result<PendingReceipt, LedgerError> {
        if !tx.verify() {
            return Err(LedgerError::BadSignature);
        }
        tx.call
            .validate()
            .map_err(|e| LedgerError::InvalidCall(e.to_string()))?;
        let mut inner = self.inner.write();
        let known = inner.chain.accounts.get(&tx.sender).copied().or_else(|| {
            inner
                .pending_credits
                .iter()
                .any(|c| c.address == tx.sender)
                .then(Account::default)
        });
        let account = known.ok_or(LedgerError::UnknownSender(tx.sender))?;
        let pending = inner
            .pending
            .get(&tx.sender)
            .copied()
            .unwrap_or(PendingAccount {
                next_nonce: account.nonce,
                spend: 0,
            });
        if tx.nonce != pending.next_nonce {
            return Err(LedgerError::BadNonce {
                expected: pending.next_nonce,
                got: tx.nonce,
            });
        }
        let gas = self.config.gas_schedule.cost(&tx.call);
        let needed = gas
            .saturating_mul(self.config.gas_price)
            .saturating_add(tx.value);
        let available = account.balance.saturating_sub(pending.spend);
        if needed > available {
            return Err(LedgerError::InsufficientFunds { needed, available });
        }
        let tx_hash = tx.hash();
        inner.pending.insert(
            tx.sender,
            PendingAccount {
                next_nonce: pending.next_nonce + 1,
                spend: pending.spend + needed,
            },
        );
        inner.mempool.push_back(tx);
        Ok(PendingReceipt {
            tx_hash,
            accepted: true,
        })
    }

    /// Queues a faucet credit applied at the next seal.
    pub fn credit(&self, address: Address, amount: u64) {
        self.inner
            .write()
            .pending_credits
            .push(Credit { address, amount });
    }

    /// Drains the mempool into a new sealed block.
    pub fn advance_block(&self, now: u64) -> Result<Block, LedgerError> {
        let block = {
            let mut inner = self.inner.write();
            let txs: Vec<Transaction> = inner.mempool.drain(..).collect();
            let credits = std::mem::take(&mut inner.pending_credits);
            inner.pending.clear();
            let block = inner.chain.apply_block(
                now,
                credits,
                txs,
                &self.config.gas_schedule,
                self.config.gas_price,
            );
            if let Some(store) = &self.store {
                store.append_block(&block)?;
            }
            inner.index_block(&block);
            inner.blocks.push(block.clone());
            let mut subs = self.subscribers.lock();
            subs.retain(|s| {
                block
                    .events
                    .iter()
                    .filter(|ev| s.filter.matches(ev))
                    .all(|ev| s.tx.send(ev.clone()).is_ok())
            });
            block
        };
        *self.sealed.lock() = block.number;
        self.sealed_cv.notify_all();
        Ok(block)
    }

    pub fn head(&self) -> u64 {
        self.inner.read().chain.height
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn block(&self, number: u64) -> Result<Block, LedgerError> {
        self.inner
            .read()
            .blocks
            .get(number as usize)
            .cloned()
            .ok_or(LedgerError::UnknownBlock(number))
    }

    pub fn receipt(&self, hash: &TxHash) -> Option<Receipt> {
        let inner = self.inner.read();
        let &(block, index) = inner.receipts.get(hash)?;
        inner.blocks[block as usize].receipts.get(index).cloned()
    }

    fn is_pending(&self, hash: &TxHash) -> bool {
        self.inner.read().mempool.iter().any(|tx| &tx.hash() == hash)
    }

    /// Blocks until `hash` is sealed. In on-demand mode a pending
    /// transaction triggers a seal right away.
    pub fn wait_for_receipt(&self, hash: &TxHash, timeout: Duration) -> Result<Receipt, LedgerError> {
        let deadline = Instant::now() + timeout;
        loop {
            let observed = *self.sealed.lock();
            if let Some(r) = self.receipt(hash) {
                return Ok(r);
            }
            if !self.is_pending(hash) {
                return Err(LedgerError::UnknownTransaction(*hash));
            }
            if self.config.mode == BlockMode::OnDemand {
                self.advance_block(self.clock.now())?;
                continue;
            }
            let mut sealed = self.sealed.lock();
            while *sealed == observed {
                if self.sealed_cv.wait_until(&mut sealed, deadline).timed_out() {
                    return Err(LedgerError::Timeout);
                }
            }
        }
    }

    /// Blocks until the head reaches `number`.
    pub fn wait_for_block(&self, number: u64, timeout: Duration) -> Result<u64, LedgerError> {
        let deadline = Instant::now() + timeout;
        let mut sealed = self.sealed.lock();
        while *sealed < number {
            if self.sealed_cv.wait_until(&mut sealed, deadline).timed_out() {
                return Err(LedgerError::Timeout);
            }
        }
        Ok(*sealed)
    }

    pub fn balance(&self, addr: &Address) -> u64 {
        self.inner.read().chain.balance(addr)
    }

    /// Nonce to use for the sender's next submission, counting the mempool.
    pub fn next_nonce(&self, addr: &Address) -> u64 {
        let inner = self.inner.read();
        inner
            .pending
            .get(addr)
            .map(|p| p.next_nonce)
            .or_else(|| inner.chain.accounts.get(addr).map(|a| a.nonce))
            .unwrap_or(0)
    }

    pub fn has_account(&self, addr: &Address) -> bool {
        self.inner.read().chain.accounts.contains_key(addr)
    }

    pub fn owner_of(&self, token_id: &TokenId) -> Result<Address, LedgerError> {
        Ok(self.inner.read().registry()?.owner_of(token_id)?)
    }

    pub fn token_uri(&self, token_id: &TokenId) -> Result<String, LedgerError> {
        Ok(self.inner.read().registry()?.token_uri(token_id)?.to_string())
    }

    pub fn get_approved(&self, token_id: &TokenId) -> Result<Option<Address>, LedgerError> {
        Ok(self.inner.read().registry()?.get_approved(token_id)?)
    }

    pub fn reservation(&self, token_id: &TokenId) -> Result<Option<Reservation>, LedgerError> {
        Ok(self
            .inner
            .read()
            .registry()?
            .reservation(token_id)?
            .cloned())
    }

    pub fn contract_address(&self) -> Result<Address, LedgerError> {
        Ok(self.inner.read().registry()?.contract_address())
    }

    pub fn operator(&self) -> Result<Address, LedgerError> {
        Ok(self.inner.read().registry()?.operator())
    }

    /// Copy of the registry as of the latest sealed block.
    pub fn registry_snapshot(&self) -> Option<Registry> {
        self.inner.read().chain.registry.clone()
    }

    pub fn chain_state(&self) -> ChainState {
        self.inner.read().chain.clone()
    }

    pub fn get_events(
        &self,
        filter: &EventFilter,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<LedgerEvent>, LedgerError> {
        let inner = self.inner.read();
        inner.check_range(from_block, to_block)?;
        Ok(inner.blocks[from_block as usize..=to_block as usize]
            .iter()
            .flat_map(|b| b.events.iter())
            .filter(|ev| filter.matches(ev))
            .cloned()
            .collect())
    }

    /// Delivers every matching event from `from_block` on: sealed history
    /// first, then each new block as it seals.
    pub fn subscribe(&self, filter: EventFilter, from_block: u64) -> Subscription {
        let (tx, rx) = mpsc::channel();
        let inner = self.inner.read();
        for ev in inner
            .blocks
            .iter()
            .skip(from_block as usize)
            .flat_map(|b| b.events.iter())
            .filter(|ev| filter.matches(ev))
        {
            let _ = tx.send(ev.clone());
        }
        self.subscribers.lock().push(Subscriber { filter, tx });
        drop(inner);
        Subscription { rx }
    }

    /// Starts a thread sealing a block every `interval`.
    pub fn spawn_producer(self: &Arc<Self>, interval: Duration) -> BlockProducer {
        let stop = Arc::new(AtomicBool::new(false));
        let weak: Weak<Ledger> = Arc::downgrade(self);
        let flag = stop.clone();
        let handle = thread::spawn(move || {
            let mut next = Instant::now() + interval;
            while !flag.load(Ordering::SeqCst) {
                let now = Instant::now();
                if now < next {
                    thread::sleep((next - now).min(Duration::from_millis(5)));
                    continue;
                }
                let Some(ledger) = weak.upgrade() else { break };
                if let Err(e) = ledger.advance_block(ledger.now()) {
                    eprintln!("block production failed: {e}");
                }
                next += interval;
            }
        });
        BlockProducer {
            stop,
            handle: Some(handle),
        }
    }
}

/// Handle to a timed block producer; stops the thread on drop.
pub struct BlockProducer {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl BlockProducer {
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

impl Drop for BlockProducer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::Keypair;
    use crate::registry::Call;

    const META: &str = "eyJhbGciOiJub25lIn0.eyJ4IjoxfQ.";

    struct Fixture {
        ledger: Arc<Ledger>,
        root: Keypair,
        op: Keypair,
        client: Keypair,
    }

    fn fixture(config: LedgerConfig) -> Fixture {
        let root = Keypair::from_secret([1; 32]);
        let op = Keypair::from_secret([2; 32]);
        let client = Keypair::from_secret([3; 32]);
        let config = config
            .with_faucet(root.address(), 0)
            .with_faucet(client.address(), 0);
        let ledger = Ledger::new(config);
        let f = Fixture {
            ledger,
            root,
            op,
            client,
        };
        f.send(&f.root, Call::Deploy {
            operator: f.op.address(),
        });
        f.ledger.advance_block(1).unwrap();
        f
    }

    impl Fixture {
        fn send(&self, keys: &Keypair, call: Call) -> TxHash {
            self.send_value(keys, call, 0)
        }

        fn send_value(&self, keys: &Keypair, call: Call, value: u64) -> TxHash {
            let nonce = self.ledger.next_nonce(&keys.address());
            let tx = Transaction::sign(keys, nonce, call, value);
            self.ledger.submit_transaction(tx).unwrap().tx_hash
        }
    }

    fn tid(b: u8) -> TokenId {
        TokenId::from_bytes([b; 32])
    }

    #[test]
    fn nonce_and_sender_checks() {
        let f = fixture(LedgerConfig::manual());
        let call = Call::Approve {
            approved: f.root.address(),
            token_id: tid(1),
        };
        let tx0 = Transaction::sign(&f.client, 0, call.clone(), 0);
        assert!(f.ledger.submit_transaction(tx0).unwrap().accepted);
        let replay = Transaction::sign(&f.client, 0, call.clone(), 0);
        assert_eq!(
            f.ledger.submit_transaction(replay),
            Err(LedgerError::BadNonce {
                expected: 1,
                got: 0
            })
        );
        let stranger = Keypair::from_secret([77; 32]);
        let tx = Transaction::sign(&stranger, 0, call, 0);
        assert_eq!(
            f.ledger.submit_transaction(tx),
            Err(LedgerError::UnknownSender(stranger.address()))
        );
    }

    #[test]
    fn value_beyond_balance_rejected() {
        let f = fixture(LedgerConfig::manual());
        f.ledger.credit(f.client.address(), 50);
        f.ledger.advance_block(2).unwrap();
        let tx = Transaction::sign(&f.client, 0, Call::Claim { token_id: tid(1) }, 100);
        assert_eq!(
            f.ledger.submit_transaction(tx),
            Err(LedgerError::InsufficientFunds {
                needed: 100,
                available: 50
            })
        );
    }

    #[test]
    fn tampered_transaction_rejected() {
        let f = fixture(LedgerConfig::manual());
        let mut tx = Transaction::sign(&f.client, 0, Call::Burn { token_id: tid(1) }, 0);
        tx.call = Call::Burn { token_id: tid(2) };
        assert_eq!(f.ledger.submit_transaction(tx), Err(LedgerError::BadSignature));
    }

    #[test]
    fn views_see_only_sealed_state() {
        let f = fixture(LedgerConfig::manual());
        f.send(&f.op, Call::Mint {
            token_id: tid(1),
            metadata: META.into(),
            to: f.client.address(),
        });
        assert_eq!(
            f.ledger.owner_of(&tid(1)),
            Err(LedgerError::Registry(RegistryError::UnknownToken))
        );
        f.ledger.advance_block(3).unwrap();
        assert_eq!(f.ledger.owner_of(&tid(1)).unwrap(), f.client.address());
    }

    #[test]
    fn sequential_application_within_block() {
        let f = fixture(LedgerConfig::manual());
        let other = Keypair::from_secret([9; 32]).address();
        f.send(&f.op, Call::Mint {
            token_id: tid(1),
            metadata: META.into(),
            to: f.client.address(),
        });
        f.send(&f.op, Call::TransferFrom {
            from: f.client.address(),
            to: other,
            token_id: tid(1),
        });
        let block = f.ledger.advance_block(4).unwrap();
        assert_eq!(block.transactions.len(), 2);
        assert_eq!(block.events.len(), 2);
        assert_eq!(f.ledger.owner_of(&tid(1)).unwrap(), other);
    }

    #[test]
    fn empty_block_numbering() {
        let f = fixture(LedgerConfig::manual());
        let head = f.ledger.head();
        let b = f.ledger.advance_block(10).unwrap();
        assert_eq!(b.number, head + 1);
        assert!(b.transactions.is_empty());
        let genesis = f.ledger.block(0).unwrap();
        assert_eq!(genesis.number, 0);
        assert!(genesis.transactions.is_empty());
    }

    #[test]
    fn failed_transactions_are_recorded_and_charged() {
        let root = Keypair::from_secret([1; 32]);
        let client = Keypair::from_secret([3; 32]);
        let ledger = Ledger::new(
            LedgerConfig::manual()
                .with_gas_price(1)
                .with_faucet(root.address(), 2_000_000)
                .with_faucet(client.address(), 100_000),
        );
        let deploy = Transaction::sign(&root, 0, Call::Deploy {
            operator: root.address(),
        }, 0);
        ledger.submit_transaction(deploy).unwrap();
        ledger.advance_block(1).unwrap();
        let bad = Transaction::sign(&client, 0, Call::Burn { token_id: tid(1) }, 0);
        let hash = ledger.submit_transaction(bad).unwrap().tx_hash;
        ledger.advance_block(2).unwrap();
        let receipt = ledger.receipt(&hash).unwrap();
        assert_eq!(receipt.error(), Some(&RegistryError::NotOperator));
        assert_eq!(receipt.gas_used, 85_791);
        assert_eq!(ledger.balance(&client.address()), 100_000 - 85_791);
        assert_eq!(ledger.next_nonce(&client.address()), 1);
    }

    #[test]
    fn get_events_range_checks() {
        let f = fixture(LedgerConfig::manual());
        let head = f.ledger.head();
        assert!(f.ledger.get_events(&EventFilter::default(), 0, 0).unwrap().is_empty());
        assert!(matches!(
            f.ledger.get_events(&EventFilter::default(), 0, head + 1),
            Err(LedgerError::RangeBeyondHead { .. })
        ));
        assert!(f.ledger.get_events(&EventFilter::default(), 2, 1).is_err());
    }

    #[test]
    fn subscription_filters_by_token() {
        let f = fixture(LedgerConfig::manual());
        let all = f.ledger.subscribe(EventFilter::transfers(), f.ledger.head() + 1);
        let only2 = f
            .ledger
            .subscribe(EventFilter::transfers().for_token(tid(2)), f.ledger.head() + 1);
        f.send(&f.op, Call::Mint {
            token_id: tid(1),
            metadata: META.into(),
            to: f.client.address(),
        });
        f.ledger.advance_block(5).unwrap();
        assert_eq!(all.drain().len(), 1);
        assert!(only2.drain().is_empty());
    }

    #[test]
    fn on_demand_wait_seals() {
        let f = fixture(LedgerConfig::on_demand());
        let before = f.ledger.head();
        let h = f.send(&f.op, Call::Mint {
            token_id: tid(1),
            metadata: META.into(),
            to: f.client.address(),
        });
        let r = f.ledger.wait_for_receipt(&h, Duration::from_secs(1)).unwrap();
        assert!(r.succeeded());
        assert_eq!(r.block_number, before + 1);
    }

    #[test]
    fn manual_wait_times_out() {
        let f = fixture(LedgerConfig::manual());
        let h = f.send(&f.op, Call::Burn { token_id: tid(1) });
        assert_eq!(
            f.ledger.wait_for_receipt(&h, Duration::from_millis(20)),
            Err(LedgerError::Timeout)
        );
        assert!(matches!(
            f.ledger.wait_for_receipt(&Hash32::default(), Duration::from_millis(1)),
            Err(LedgerError::UnknownTransaction(_))
        ));
    }
}
