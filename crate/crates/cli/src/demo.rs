//! End-to-end scenarios over HTTP against an in-process cluster.
//!
//! Every scenario starts a ledger node in on-demand mode, an
//! authorization server that deploys the registry, and a resource server,
//! all on loopback ports. Transcripts print steps and block numbers only,
//! so they are identical across runs with the same seed.

use std::fmt;
use std::io::Write;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ledger_oauth::access::{LedgerReader, LedgerWriter};
use ledger_oauth::auth_server::{AuthServerConfig, IssuedToken};
use ledger_oauth::client_sdk::{Client, ClientError, ResourceServerApi, SessionGrant};
use ledger_oauth::keys::{Address, Keypair};
use ledger_oauth::ledger::{Credit, LedgerError};
use ledger_oauth::registry::{Call, RegistryError, Reservation};
use ledger_oauth::resource_server::{AccessDenied, ResourceConfig, ResourceError};
use thiserror::Error;

use crate::config::LedgerNodeConfig;
use crate::node::{self, NodeError, RunningNode};
use crate::remote::{RemoteAuth, RemoteLedger, RemoteResource};

pub const RESOURCE_URI: &str = "urn:demo:lamp";
pub const PAYLOAD: &str = "lamp=on";
pub const ADMIN: &str = "demo-admin";
pub const OWNER: &str = "demo-owner";
pub const CLIENT_FUNDS: u64 = 1_000;
pub const PRICE: u64 = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    IssueAccess,
    Revoke,
    Delegate,
    FairExchange,
    OfflineRecovery,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::IssueAccess,
        Scenario::Revoke,
        Scenario::Delegate,
        Scenario::FairExchange,
        Scenario::OfflineRecovery,
    ];
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::IssueAccess => "issue-access",
            Scenario::Revoke => "revoke",
            Scenario::Delegate => "delegate",
            Scenario::FairExchange => "fair-exchange",
            Scenario::OfflineRecovery => "offline-recovery",
        })
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.to_string() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Debug, Error)]
#[error("scenario failed at step {step} ({name}): {reason}")]
pub struct ScenarioFailed {
    pub step: usize,
    pub name: String,
    pub reason: String,
}

struct Transcript<'a> {
    out: &'a mut dyn Write,
    step: usize,
    name: String,
}

impl Transcript<'_> {
    fn begin(&mut self, name: &str) {
        self.step += 1;
        self.name = name.to_string();
    }

    fn ok(&mut self, detail: impl fmt::Display) {
        let _ = writeln!(self.out, "[{}] {}: {detail}", self.step, self.name);
    }

    fn fail(&self, reason: impl fmt::Display) -> ScenarioFailed {
        ScenarioFailed {
            step: self.step,
            name: self.name.clone(),
            reason: reason.to_string(),
        }
    }

    fn check(&self, cond: bool, reason: impl fmt::Display) -> Result<(), ScenarioFailed> {
        if cond {
            Ok(())
        } else {
            Err(self.fail(reason))
        }
    }
}

trait OrFail<T> {
    fn or_fail(self, t: &Transcript) -> Result<T, ScenarioFailed>;
}

impl<T, E: fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, t: &Transcript) -> Result<T, ScenarioFailed> {
        self.map_err(|e| t.fail(e))
    }
}

fn seeded_key(seed: u64, tag: u8) -> Keypair {
    let mut secret = [tag; 32];
    secret[..8].copy_from_slice(&seed.to_le_bytes());
    Keypair::from_secret(secret)
}

/// Loopback cluster of all three roles.
pub struct Cluster {
    // field order matters: servers stop before the ledger
    rs_node: Option<RunningNode>,
    auth_node: RunningNode,
    ledger_node: RunningNode,
    rs_addr: SocketAddr,
    rs_config: ResourceConfig,
    rs_state: tempfile::TempDir,
    pub ledger: Arc<RemoteLedger>,
    pub auth: RemoteAuth,
    pub rs: RemoteResource,
    pub operator: Address,
    pub client_keys: Keypair,
    pub delegee_keys: Keypair,
}

const POLL: Duration = Duration::from_millis(20);

impl Cluster {
    pub fn start(seed: u64) -> Result<Self, NodeError> {
        let root = seeded_key(seed, 1);
        let operator = seeded_key(seed, 2);
        let client_keys = seeded_key(seed, 3);
        let delegee_keys = seeded_key(seed, 4);
        let loopback: SocketAddr = "127.0.0.1:0".parse().expect("loopback address");

        let ledger_node = node::start_ledger(&LedgerNodeConfig {
            listen: loopback,
            data_dir: None,
            block_interval_ms: 0,
            gas_price: 0,
            faucet: vec![
                Credit {
                    address: root.address(),
                    amount: 0,
                },
                Credit {
                    address: client_keys.address(),
                    amount: CLIENT_FUNDS,
                },
            ],
            genesis_timestamp: 0,
        })?;
        let auth_node = node::start_auth(
            loopback,
            &ledger_node.url(),
            operator.clone(),
            Some(&root),
            AuthServerConfig::new(ADMIN, OWNER),
        )?;
        let ledger = Arc::new(RemoteLedger::new(&ledger_node.url()));
        let contract = ledger
            .contract_address()
            .map_err(|e| NodeError::Startup(e.to_string()))?;
        let rs_config = ResourceConfig::new(contract).with_resource(RESOURCE_URI, PAYLOAD);
        let rs_state = tempfile::tempdir().map_err(|e| NodeError::Startup(e.to_string()))?;
        let rs_node = node::start_resource(
            loopback,
            &ledger_node.url(),
            rs_config.clone(),
            Some(rs_state.path().to_path_buf()),
            POLL,
        )?;
        let rs_addr = rs_node.addr();
        Ok(Cluster {
            auth: RemoteAuth::new(&auth_node.url()),
            rs: RemoteResource::new(&rs_node.url()),
            rs_node: Some(rs_node),
            auth_node,
            ledger_node,
            rs_addr,
            rs_config,
            rs_state,
            ledger,
            operator: operator.address(),
            client_keys,
            delegee_keys,
        })
    }

    pub fn ledger_url(&self) -> String {
        self.ledger_node.url()
    }

    pub fn auth_url(&self) -> String {
        self.auth_node.url()
    }

    pub fn rs_url(&self) -> String {
        format!("http://{}", self.rs_addr)
    }

    pub fn client(&self, keys: &Keypair) -> Client {
        Client::new(keys.clone(), self.ledger.clone() as Arc<dyn LedgerWriter>)
    }

    /// Stops the resource server, flushing its cursor and sessions.
    pub fn stop_rs(&mut self) -> Result<(), String> {
        match self.rs_node.take() {
            Some(n) => n.stop(),
            None => Ok(()),
        }
    }

    /// Restarts the resource server on its previous address and state.
    pub fn restart_rs(&mut self) -> Result<(), NodeError> {
        self.stop_rs().map_err(NodeError::Startup)?;
        self.rs_node = Some(node::start_resource(
            self.rs_addr,
            &self.ledger_node.url(),
            self.rs_config.clone(),
            Some(self.rs_state.path().to_path_buf()),
            POLL,
        )?);
        Ok(())
    }

    pub fn issue(&self, client: &Client) -> Result<IssuedToken, ClientError> {
        client.register(&self.auth)?;
        let grant = self.auth.grant(OWNER, client.address(), RESOURCE_URI, 600)?;
        client.request_access_token(&self.auth, &grant.grant_id, RESOURCE_URI)
    }

    /// Polls the session fast path until the server reports it unknown.
    pub fn wait_session_dropped(&self, session: &SessionGrant) -> Result<(), String> {
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            match self.rs.resource(&session.session_id, RESOURCE_URI) {
                Err(ClientError::Denied(AccessDenied::UnknownSession)) => return Ok(()),
                Err(e) => return Err(e.to_string()),
                Ok(_) if Instant::now() > deadline => {
                    return Err("session still valid after revocation".into())
                }
                Ok(_) => std::thread::sleep(POLL),
            }
        }
    }
}

pub fn run_scenario(scenario: Scenario, seed: u64, out: &mut dyn Write) -> Result<(), ScenarioFailed> {
    let mut t = Transcript {
        out,
        step: 0,
        name: String::new(),
    };
    let _ = writeln!(t.out, "scenario {scenario}");
    t.begin("start cluster");
    let mut cluster = Cluster::start(seed).or_fail(&t)?;
    let head = cluster.ledger.head().or_fail(&t)?;
    t.ok(format!("registry deployed, head at block {head}"));
    match scenario {
        Scenario::IssueAccess => issue_access(&mut t, &cluster),
        Scenario::Revoke => revoke(&mut t, &cluster),
        Scenario::Delegate => delegate(&mut t, &cluster),
        Scenario::FairExchange => fair_exchange(&mut t, &cluster),
        Scenario::OfflineRecovery => offline_recovery(&mut t, &mut cluster),
    }?;
    let _ = writeln!(t.out, "scenario {scenario} passed");
    Ok(())
}

fn issue_and_check(t: &mut Transcript, c: &Cluster, client: &Client) -> Result<IssuedToken, ScenarioFailed> {
    t.begin("request token");
    let token = c.issue(client).or_fail(t)?;
    t.ok(format!("token minted and transferred in block {}", token.included_block));

    t.begin("ledger check");
    let owner = c.ledger.owner_of(&token.token_id).or_fail(t)?;
    t.check(owner == client.address(), "owner_of is not the client")?;
    let uri = c.ledger.token_uri(&token.token_id).or_fail(t)?;
    t.check(uri == token.jwt, "token_uri differs from the issued JWT")?;
    t.ok("owner_of = client, token_uri = JWT");
    Ok(token)
}

fn open_session(
    t: &mut Transcript,
    c: &Cluster,
    client: &Client,
    jwt: &str,
    label: &str,
) -> Result<SessionGrant, ScenarioFailed> {
    t.begin(label);
    let session = client.access_resource(&c.rs, jwt).or_fail(t)?;
    t.check(session.payload == PAYLOAD, "unexpected payload")?;
    t.ok("challenge answered, session opened");
    Ok(session)
}

fn expect_denied(t: &mut Transcript, result: Result<SessionGrant, ClientError>, allowed: &[ResourceError]) -> Result<(), ScenarioFailed> {
    match result {
        Err(ClientError::Resource(e)) if allowed.contains(&e) => {
            t.ok(format!("denied: {e}"));
            Ok(())
        }
        Err(e) => Err(t.fail(format!("unexpected error: {e}"))),
        Ok(_) => Err(t.fail("access was granted")),
    }
}

fn issue_access(t: &mut Transcript, c: &Cluster) -> Result<(), ScenarioFailed> {
    let client = c.client(&c.client_keys);
    let token = issue_and_check(t, c, &client)?;
    let session = open_session(t, c, &client, &token.jwt, "access resource")?;
    t.begin("reuse session");
    let payload = c.rs.resource(&session.session_id, RESOURCE_URI).or_fail(t)?;
    t.check(payload == PAYLOAD, "unexpected payload")?;
    t.ok("served from session");
    Ok(())
}

fn revoke(t: &mut Transcript, c: &Cluster) -> Result<(), ScenarioFailed> {
    let client = c.client(&c.client_keys);
    let first = issue_and_check(t, c, &client)?;
    t.begin("revoke before use");
    let block = c.auth.revoke(ADMIN, first.token_id).or_fail(t)?;
    t.ok(format!("transferred back in block {block}"));
    t.begin("access with revoked token");
    expect_denied(t, client.access_resource(&c.rs, &first.jwt), &[ResourceError::OwnerMismatch])?;

    let second = issue_and_check(t, c, &client)?;
    let session = open_session(t, c, &client, &second.jwt, "access resource")?;
    t.begin("revoke during session");
    let block = c.auth.revoke(ADMIN, second.token_id).or_fail(t)?;
    t.ok(format!("transferred back in block {block}"));
    t.begin("session after revocation");
    c.wait_session_dropped(&session).or_fail(t)?;
    t.ok("denied: unknown session");
    t.begin("fresh access after revocation");
    expect_denied(t, client.access_resource(&c.rs, &second.jwt), &[ResourceError::OwnerMismatch])
}

fn delegate(t: &mut Transcript, c: &Cluster) -> Result<(), ScenarioFailed> {
    let client = c.client(&c.client_keys);
    let delegee = c.client(&c.delegee_keys);
    let token = issue_and_check(t, c, &client)?;

    t.begin("delegate");
    let djwt = client
        .delegate_token(&token.token_id, &delegee.public_key())
        .or_fail(t)?;
    let approved = c.ledger.get_approved(&token.token_id).or_fail(t)?;
    t.check(approved == Some(delegee.address()), "get_approved is not the delegee")?;
    t.ok("owner approved delegee, JWT carries cnf");

    let session = open_session(t, c, &delegee, &djwt, "delegee access")?;
    t.begin("delegee sent nothing");
    let nonce = c.ledger.next_nonce(&delegee.address()).or_fail(t)?;
    t.check(nonce == 0, "delegee submitted transactions")?;
    t.ok("delegee nonce is 0");

    t.begin("revoke");
    let block = c.auth.revoke(ADMIN, token.token_id).or_fail(t)?;
    t.ok(format!("transferred back in block {block}"));
    t.begin("delegee session after revocation");
    c.wait_session_dropped(&session).or_fail(t)?;
    t.ok("denied: unknown session");
    t.begin("delegee access after revocation");
    expect_denied(
        t,
        delegee.access_resource(&c.rs, &djwt),
        &[ResourceError::OwnerMismatch, ResourceError::NotApproved],
    )
}

fn fair_exchange(t: &mut Transcript, c: &Cluster) -> Result<(), ScenarioFailed> {
    let client = c.client(&c.client_keys);
    let balances = |t: &Transcript| -> Result<(u64, u64), ScenarioFailed> {
        Ok((
            c.ledger.balance(&client.address()).or_fail(t)?,
            c.ledger.balance(&c.operator).or_fail(t)?,
        ))
    };
    let (client_start, op_start) = balances(t)?;

    t.begin("reserve");
    let token = c
        .auth
        .reserve(ADMIN, client.address(), RESOURCE_URI, PRICE, 3600)
        .or_fail(t)?;
    t.ok(format!("reserved at price {PRICE} in block {}", token.included_block));

    t.begin("inspect before paying");
    let reservation = c.ledger.reservation(&token.token_id).or_fail(t)?;
    t.check(
        reservation
            == Some(Reservation {
                beneficiary: client.address(),
                price: PRICE,
            }),
        "reservation does not name the client at the price",
    )?;
    let uri = c.ledger.token_uri(&token.token_id).or_fail(t)?;
    t.check(uri == token.jwt, "token_uri differs from the offered JWT")?;
    t.ok("reservation and JWT readable");

    t.begin("access before paying");
    expect_denied(t, client.access_resource(&c.rs, &token.jwt), &[ResourceError::OwnerMismatch])?;

    t.begin("underpay");
    match client.account().execute(Call::Claim { token_id: token.token_id }, PRICE - 1) {
        Err(LedgerError::Registry(RegistryError::InsufficientPayment)) => {}
        other => return Err(t.fail(format!("expected InsufficientPayment, got {other:?}"))),
    }
    let owner = c.ledger.owner_of(&token.token_id).or_fail(t)?;
    t.check(owner == c.operator, "ownership moved on underpayment")?;
    t.check(balances(t)? == (client_start, op_start), "balances moved on underpayment")?;
    t.ok("rejected, nothing moved");

    t.begin("pay and claim");
    let receipt = client.pay_and_claim(&token.token_id).or_fail(t)?;
    let owner = c.ledger.owner_of(&token.token_id).or_fail(t)?;
    t.check(owner == client.address(), "client does not own the token")?;
    let (client_end, op_end) = balances(t)?;
    t.check(
        client_end == client_start - PRICE && op_end == op_start + PRICE,
        "payment not credited to the operator",
    )?;
    t.check(
        client_end + op_end == client_start + op_start,
        "value not conserved",
    )?;
    t.ok(format!("ownership and {PRICE} moved in block {}", receipt.block_number));

    open_session(t, c, &client, &token.jwt, "access after claim")?;
    Ok(())
}

fn offline_recovery(t: &mut Transcript, c: &mut Cluster) -> Result<(), ScenarioFailed> {
    let client = c.client(&c.client_keys);
    let revoked = issue_and_check(t, c, &client)?;
    let kept = issue_and_check(t, c, &client)?;
    let stale = open_session(t, c, &client, &revoked.jwt, "access with first token")?;
    let live = open_session(t, c, &client, &kept.jwt, "access with second token")?;

    t.begin("stop resource server");
    c.stop_rs().or_fail(t)?;
    t.ok("stopped, state flushed");

    t.begin("revoke while offline");
    let block = c.auth.revoke(ADMIN, revoked.token_id).or_fail(t)?;
    t.ok(format!("transferred back in block {block}"));
    t.begin("seal two more blocks");
    let a = c.ledger.advance().or_fail(t)?;
    let b = c.ledger.advance().or_fail(t)?;
    t.ok(format!("sealed blocks {a} and {b}"));

    t.begin("restart resource server");
    c.restart_rs().or_fail(t)?;
    t.ok("restarted, missed events replayed");

    t.begin("stale session");
    match c.rs.resource(&stale.session_id, RESOURCE_URI) {
        Err(ClientError::Denied(AccessDenied::UnknownSession)) => t.ok("denied: unknown session"),
        other => return Err(t.fail(format!("expected denial, got {other:?}"))),
    }
    t.begin("unaffected session");
    let payload = c.rs.resource(&live.session_id, RESOURCE_URI).or_fail(t)?;
    t.check(payload == PAYLOAD, "unexpected payload")?;
    t.ok("still served");
    Ok(())
}
