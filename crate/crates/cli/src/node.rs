//! Starting and stopping node processes.
//!
//! Each node binds its socket synchronously (so a port conflict is
//! reported to the caller), then serves on its own thread and runtime.
//! Stopping a node shuts the server down gracefully and flushes its
//! persistent state: the ledger snapshot, or the resource server's cursor
//! and session store.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::Router;
use ledger_oauth::access::{LedgerReader, LedgerWriter};
use ledger_oauth::auth_server::{AuthServerConfig, AuthorizationServer};
use ledger_oauth::clock::SystemClock;
use ledger_oauth::keys::Keypair;
use ledger_oauth::ledger::{BlockMode, Ledger, LedgerConfig, LedgerError};
use ledger_oauth::registry::RegistryError;
use ledger_oauth::resource_server::{EventListener, ResourceConfig, ResourceServer, ServerState};
use thiserror::Error;
use tokio::sync::oneshot;

use crate::config::{AsNodeConfig, ConfigError, LedgerNodeConfig, RsNodeConfig};
use crate::remote::RemoteLedger;
use crate::server;

#[derive(Debug, Error)]
pub enum NodeError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {reason}")]
    Bind { addr: SocketAddr, reason: String },
    #[error("startup failed: {0}")]
    Startup(String),
}

fn startup(e: impl ToString) -> NodeError {
    NodeError::Startup(e.to_string())
}

type OnStop = Box<dyn FnOnce() -> Result<(), String> + Send>;

/// Handle to a serving node; dropping it stops the node.
pub struct RunningNode {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), String>>>,
}

impl RunningNode {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Shuts down and reports any error from flushing state.
    pub fn stop(mut self) -> Result<(), String> {
        self.halt()
    }

    fn halt(&mut self) -> Result<(), String> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| "node thread panicked".to_string())?,
            None => Ok(()),
        }
    }
}

impl Drop for RunningNode {
    fn drop(&mut self) {
        if let Err(e) = self.halt() {
            eprintln!("node shutdown: {e}");
        }
    }
}

pub fn bind(addr: SocketAddr) -> Result<std::net::TcpListener, NodeError> {
    let listener = std::net::TcpListener::bind(addr).map_err(|e| NodeError::Bind {
        addr,
        reason: e.to_string(),
    })?;
    listener.set_nonblocking(true).map_err(startup)?;
    Ok(listener)
}

fn serve(listener: std::net::TcpListener, router: Router, on_stop: OnStop) -> Result<RunningNode, NodeError> {
    let addr = listener.local_addr().map_err(startup)?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| e.to_string())?;
        let served = rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener)?;
            axum::serve(listener, router)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        });
        rt.shutdown_timeout(Duration::from_secs(2));
        let flushed = on_stop();
        served.map_err(|e| e.to_string())?;
        flushed
    });
    Ok(RunningNode {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

pub fn start_ledger(cfg: &LedgerNodeConfig) -> Result<RunningNode, NodeError> {
    let listener = bind(cfg.listen)?;
    let config = LedgerConfig {
        mode: BlockMode::from_interval_ms(cfg.block_interval_ms),
        gas_price: cfg.gas_price,
        faucet: cfg.faucet.clone(),
        genesis_timestamp: cfg.genesis_timestamp,
        ..LedgerConfig::default()
    };
    let ledger = match &cfg.data_dir {
        Some(dir) => Ledger::open(config, Arc::new(SystemClock), dir).map_err(startup)?,
        None => Ledger::with_clock(config, Arc::new(SystemClock)),
    };
    let producer = match ledger.config().mode {
        BlockMode::Timed { interval_ms } => {
            Some(ledger.spawn_producer(Duration::from_millis(interval_ms)))
        }
        _ => None,
    };
    let router = server::ledger_router(ledger.clone());
    serve(
        listener,
        router,
        Box::new(move || {
            drop(producer);
            ledger.checkpoint().map_err(|e| e.to_string())
        }),
    )
}

fn read_key(path: &Path) -> Result<Keypair, NodeError> {
    let text = fs::read_to_string(path)
        .map_err(|e| startup(format!("key file {}: {e}", path.display())))?;
    Keypair::from_key_file(&text).map_err(|e| startup(format!("key file {}: {e}", path.display())))
}

pub fn start_auth_from_config(cfg: &AsNodeConfig) -> Result<RunningNode, NodeError> {
    let operator = read_key(&cfg.operator_key)?;
    let root = cfg.root_key.as_deref().map(read_key).transpose()?;
    let mut config = AuthServerConfig::new(&cfg.admin_credential, &cfg.owner_credential);
    config.token_lifetime = cfg.token_lifetime;
    start_auth(cfg.listen, &cfg.ledger_rpc, operator, root.as_ref(), config)
}

/// Starts an authorization server, deploying the registry first when a
/// root key is given and none exists yet.
pub fn start_auth(
    listen: SocketAddr,
    ledger_rpc: &str,
    operator: Keypair,
    root: Option<&Keypair>,
    config: AuthServerConfig,
) -> Result<RunningNode, NodeError> {
    let listener = bind(listen)?;
    let ledger: Arc<dyn LedgerWriter> = Arc::new(RemoteLedger::new(ledger_rpc));
    let clock = Arc::new(SystemClock);
    let deployed = match ledger.contract_address() {
        Ok(_) => true,
        Err(LedgerError::Registry(RegistryError::NotDeployed)) => false,
        Err(e) => return Err(startup(e)),
    };
    let server = match (deployed, root) {
        (false, Some(root)) => AuthorizationServer::deploy(ledger, root, operator, config, clock),
        (false, None) => return Err(startup("no registry deployed and no root_key given")),
        (true, _) => AuthorizationServer::attach(ledger, operator, config, clock),
    }
    .map_err(startup)?;
    serve(
        listener,
        server::auth_router(Arc::new(server)),
        Box::new(|| Ok(())),
    )
}

const SESSIONS_FILE: &str = "sessions.json";
const CURSOR_FILE: &str = "cursor";

pub fn start_resource_from_config(cfg: &RsNodeConfig) -> Result<RunningNode, NodeError> {
    let mut config = ResourceConfig::new(cfg.contract_address);
    config.resources = cfg.resources.clone();
    config.max_session_ttl = cfg.max_session_ttl;
    config.clock_skew = cfg.clock_skew;
    start_resource(
        cfg.listen,
        &cfg.ledger_rpc,
        config,
        cfg.state_dir.clone(),
        Duration::from_millis(cfg.poll_interval_ms),
    )
}

/// Starts a resource server. With a state directory, the session store
/// saved at the last shutdown is reloaded and the events missed since the
/// stored cursor are replayed before serving.
pub fn start_resource(
    listen: SocketAddr,
    ledger_rpc: &str,
    mut config: ResourceConfig,
    state_dir: Option<PathBuf>,
    poll: Duration,
) -> Result<RunningNode, NodeError> {
    let listener = bind(listen)?;
    if let Some(dir) = &state_dir {
        fs::create_dir_all(dir).map_err(startup)?;
        config.cursor_path = Some(dir.join(CURSOR_FILE));
    }
    let ledger: Arc<dyn LedgerReader> = Arc::new(RemoteLedger::new(ledger_rpc));
    let rs = Arc::new(ResourceServer::new(config, ledger, Arc::new(SystemClock)));
    if let Some(dir) = &state_dir {
        if let Ok(text) = fs::read_to_string(dir.join(SESSIONS_FILE)) {
            let saved: ServerState = serde_json::from_str(&text).map_err(startup)?;
            let cursor = rs.cursor();
            rs.import_state(ServerState {
                sessions: saved.sessions,
                cursor,
            });
        }
    }
    rs.recover_missed_events(rs.cursor()).map_err(startup)?;
    let listener_thread = EventListener::spawn(rs.clone(), poll);
    let router = server::resource_router(rs.clone());
    serve(
        listener,
        router,
        Box::new(move || {
            listener_thread.stop();
            let Some(dir) = state_dir else { return Ok(()) };
            let state = serde_json::to_string_pretty(&rs.export_state()).map_err(|e| e.to_string())?;
            let tmp = dir.join("sessions.json.tmp");
            fs::write(&tmp, state).map_err(|e| e.to_string())?;
            fs::rename(tmp, dir.join(SESSIONS_FILE)).map_err(|e| e.to_string())
        }),
    )
}
