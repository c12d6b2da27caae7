//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on
//! any failure or time-budget overrun.

#[path = "../../core/tests/common/jwt_reference.rs"]
#[allow(dead_code)]
mod jwt_reference;
#[path = "../../core/tests/common/registry_oracle.rs"]
#[allow(dead_code)]
mod registry_oracle;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ledger_oauth::access::LedgerAccount;
use ledger_oauth::auth_server::{AuthServerConfig, AuthorizationServer, IssuedToken};
use ledger_oauth::client_sdk::{build_delegated_jwt, Client, ResourceServerApi};
use ledger_oauth::clock::SystemClock;
use ledger_oauth::keys::{Address, Keypair};
use ledger_oauth::ledger::{
    BlockMode, EventFilter, GasSchedule, Ledger, LedgerConfig, LedgerError, Transaction, View,
    DEFAULT_BLOCK_INTERVAL_MS,
};
use ledger_oauth::registry::{Call, RegistryError, Reservation, TokenId};
use ledger_oauth::resource_server::{AccessDenied, ResourceConfig, ResourceError, ResourceServer};
use ledger_oauth::token_format::{self, ClaimSet, Confirmation};
use ledger_oauth_cli::demo::{run_scenario, Scenario};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<(), String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Outcome {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const URI: &str = "urn:acceptance:sensor";
const PAYLOAD: &str = "reading=42";

/// In-process deployment on an on-demand ledger.
struct World {
    ledger: Arc<Ledger>,
    auth: AuthorizationServer,
    rs: ResourceServer,
    operator: Address,
}

fn world_with(config: LedgerConfig, root: &Keypair) -> World {
    let ledger = Ledger::new(config.with_faucet(root.address(), 0));
    let operator = Keypair::generate();
    let operator_address = operator.address();
    let auth = AuthorizationServer::deploy(
        ledger.clone(),
        root,
        operator,
        AuthServerConfig::new("admin", "owner"),
        Arc::new(SystemClock),
    )
    .expect("deploy");
    let rs = ResourceServer::new(
        ResourceConfig::new(auth.contract_address()).with_resource(URI, PAYLOAD),
        ledger.clone(),
        Arc::new(SystemClock),
    );
    World {
        ledger,
        auth,
        rs,
        operator: operator_address,
    }
}

fn world() -> World {
    world_with(LedgerConfig::on_demand(), &Keypair::generate())
}

impl World {
    fn client(&self, keys: Keypair) -> Client {
        Client::new(keys, self.ledger.clone())
    }

    fn issue(&self, client: &Client) -> Result<IssuedToken, String> {
        client.register(&self.auth).map_err(err)?;
        let grant = self
            .auth
            .issue_grant("owner", client.address(), URI, 600)
            .map_err(err)?;
        client
            .request_access_token(&self.auth, &grant.grant_id, URI)
            .map_err(err)
    }
}

fn c1_gas_model() -> Outcome {
    let op_keys = Keypair::generate();
    let deploy_root = Keypair::generate();
    // a second registry deployment on a fresh ledger, driven manually so
    // every receipt can be read
    let ledger = Ledger::new(
        LedgerConfig::on_demand()
            .with_gas_price(1)
            .with_faucet(deploy_root.address(), 10_000_000),
    );
    let root_acct = LedgerAccount::new(deploy_root.clone(), ledger.clone());
    let op = LedgerAccount::new(op_keys.clone(), ledger.clone());
    let holder = Keypair::generate().address();
    let id = TokenId::random();
    let expected = [
        ("deploy", 1_585_444u64),
        ("mint", 254_141),
        ("approve", 45_735),
        ("transfer_from", 63_858),
        ("burn", 85_791),
    ];
    let deploy = root_acct
        .execute(Call::Deploy { operator: op.address() }, 0)
        .map_err(err)?;
    ledger.credit(op.address(), 1_000_000);
    ledger.advance_block(ledger.now()).map_err(err)?;
    let mint = op
        .execute(
            Call::Mint {
                token_id: id,
                metadata: "a.b.".into(),
                to: op.address(),
            },
            0,
        )
        .map_err(err)?;
    let approve = op
        .execute(Call::Approve { approved: holder, token_id: id }, 0)
        .map_err(err)?;
    let transfer = op
        .execute(
            Call::TransferFrom {
                from: op.address(),
                to: holder,
                token_id: id,
            },
            0,
        )
        .map_err(err)?;
    let burn = op.execute(Call::Burn { token_id: id }, 0).map_err(err)?;
    for ((name, gas), r) in expected.iter().zip([&deploy, &mint, &approve, &transfer, &burn]) {
        ensure(r.gas_used == *gas, format!("{name} charged {} gas, expected {gas}", r.gas_used))?;
        ensure(r.fee == *gas, format!("{name} fee {} at gas price 1", r.fee))?;
    }
    ensure(
        ledger.balance(&op.address()) == 1_000_000 - 254_141 - 45_735 - 63_858 - 85_791,
        "operator balance does not reflect exact fees",
    )?;

    // views: zero schedule cost and no effect on balances or nonces
    let schedule = GasSchedule::default();
    for v in [View::OwnerOf, View::TokenUri, View::GetApproved] {
        ensure(schedule.view_cost(v) == 0, format!("{v:?} is not free"))?;
    }
    let w = world();
    let client = w.client(Keypair::generate());
    let token = w.issue(&client)?;
    let before = (w.ledger.chain_state(), w.ledger.head());
    for _ in 0..10 {
        w.ledger.owner_of(&token.token_id).map_err(err)?;
        w.ledger.token_uri(&token.token_id).map_err(err)?;
        w.ledger.get_approved(&token.token_id).map_err(err)?;
    }
    ensure(
        (w.ledger.chain_state(), w.ledger.head()) == before,
        "view calls changed ledger state",
    )
}

fn c2_block_latency() -> Outcome {
    ensure(
        BlockMode::from_interval_ms(DEFAULT_BLOCK_INTERVAL_MS)
            == BlockMode::Timed { interval_ms: 13_000 },
        "default block interval is not 13 s",
    )?;
    let interval = Duration::from_millis(130);
    let tolerance = Duration::from_millis(10);
    let keys = Keypair::generate();
    let mut config = LedgerConfig::default().with_faucet(keys.address(), 0);
    config.mode = BlockMode::Timed { interval_ms: 130 };
    let ledger = Ledger::new(config);
    let _producer = ledger.spawn_producer(interval);
    let mut samples = Vec::new();
    for i in 0..5u8 {
        // align with a fresh seal so a whole interval remains
        let head = ledger.head();
        ledger
            .wait_for_block(head + 1, Duration::from_secs(2))
            .map_err(err)?;
        let nonce = ledger.next_nonce(&keys.address());
        let tx = Transaction::sign(
            &keys,
            nonce,
            Call::Deploy {
                operator: Keypair::from_secret([i + 1; 32]).address(),
            },
            0,
        );
        let start = Instant::now();
        let hash = ledger.submit_transaction(tx).map_err(err)?.tx_hash;
        ledger
            .wait_for_receipt(&hash, Duration::from_secs(2))
            .map_err(err)?;
        samples.push(start.elapsed());
    }
    samples.sort();
    let median = samples[samples.len() / 2];
    ensure(
        median + tolerance >= interval && median <= interval + tolerance,
        format!("median inclusion latency {median:?}, expected 130ms ± 10ms ({samples:?})"),
    )
}

fn c3_issue_access() -> Outcome {
    let mut transcript = Vec::new();
    run_scenario(Scenario::IssueAccess, 7, &mut transcript).map_err(err)?;
    let text = String::from_utf8_lossy(&transcript);
    ensure(
        text.contains("owner_of = client, token_uri = JWT"),
        "ledger checks missing from transcript",
    )?;
    ensure(text.contains("session opened"), "no session in transcript")
}

fn c4_revocation() -> Outcome {
    let w = world();
    let client = w.client(Keypair::generate());

    // (i) revoked before first use
    let t = w.issue(&client)?;
    w.auth.revoke_token("admin", &t.token_id).map_err(err)?;
    ensure(
        w.rs.verify_access_request(&t.jwt, w.rs.now()) == Err(ResourceError::OwnerMismatch),
        "revoked token was not rejected with OwnerMismatch",
    )?;

    // (ii) revoked while a session exists
    let t = w.issue(&client)?;
    let session = client.access_resource(&w.rs, &t.jwt).map_err(err)?;
    w.rs.sync_events().map_err(err)?;
    ensure(
        w.rs.access_with_session(&session.session_id, URI, w.rs.now()).is_ok(),
        "session unusable before revocation",
    )?;
    let sub = w.ledger.subscribe(EventFilter::transfers(), w.ledger.head() + 1);
    w.auth.revoke_token("admin", &t.token_id).map_err(err)?;
    let ev = sub
        .next_timeout(Duration::from_secs(1))
        .ok_or("no Transfer event for the revocation")?;
    w.rs.handle_transfer_event(&ev);
    ensure(
        w.rs.access_with_session(&session.session_id, URI, w.rs.now())
            == Err(AccessDenied::UnknownSession),
        "session survived revocation",
    )
}

fn c5_offline_recovery() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let w = world();
    let client = w.client(Keypair::generate());
    let mut config = w.rs.config().clone();
    config.cursor_path = Some(dir.path().join("cursor"));
    let live = ResourceServer::new(config.clone(), w.ledger.clone(), Arc::new(SystemClock));

    let stale = w.issue(&client)?;
    let kept = w.issue(&client)?;
    let s_stale = client.access_resource(&live, &stale.jwt).map_err(err)?;
    let s_kept = client.access_resource(&live, &kept.jwt).map_err(err)?;
    live.sync_events().map_err(err)?;
    let saved = live.export_state();

    // the second server goes down holding the same state
    w.auth.revoke_token("admin", &stale.token_id).map_err(err)?;
    for _ in 0..2 {
        w.ledger.advance_block(w.ledger.now()).map_err(err)?;
    }
    live.sync_events().map_err(err)?;

    let restarted = ResourceServer::new(config, w.ledger.clone(), Arc::new(SystemClock));
    restarted.import_state(saved.clone());
    restarted.recover_missed_events(saved.cursor).map_err(err)?;
    let now = restarted.now();
    ensure(
        restarted.access_with_session(&s_stale.session_id, URI, now)
            == Err(AccessDenied::UnknownSession),
        "stale session accepted after recovery",
    )?;
    ensure(
        restarted.access_with_session(&s_kept.session_id, URI, now).is_ok(),
        "unrelated session lost during recovery",
    )?;
    ensure(
        restarted.export_state() == live.export_state(),
        "recovered session store differs from the always-online server",
    )?;
    restarted.recover_missed_events(saved.cursor).map_err(err)?;
    ensure(
        restarted.export_state() == live.export_state(),
        "second replay changed the session store",
    )
}

fn c6_delegation() -> Outcome {
    let w = world();
    let owner = w.client(Keypair::generate());
    let delegee = w.client(Keypair::generate());
    let t = w.issue(&owner)?;

    let djwt = owner
        .delegate_token(&t.token_id, &delegee.public_key())
        .map_err(err)?;
    let mut expected = token_format::decode(&t.jwt).map_err(err)?;
    expected.cnf = Some(Confirmation {
        kid: delegee.public_key().to_string(),
    });
    ensure(
        token_format::decode(&djwt).map_err(err)? == expected,
        "delegated JWT is not the original claims plus cnf",
    )?;
    ensure(
        build_delegated_jwt(&t.jwt, &delegee.public_key()).map_err(err)? == djwt,
        "delegated JWT is not canonical",
    )?;
    let grant = delegee.access_resource(&w.rs, &djwt).map_err(err)?;
    ensure(grant.payload == PAYLOAD, "delegee got the wrong payload")?;
    ensure(
        w.ledger.next_nonce(&delegee.address()) == 0,
        "delegee originated transactions",
    )?;

    w.auth.revoke_token("admin", &t.token_id).map_err(err)?;
    match w.rs.verify_delegated_request(&djwt, w.rs.now()) {
        Err(ResourceError::NotApproved) | Err(ResourceError::OwnerMismatch) => {}
        other => return Err(format!("delegee not denied after revocation: {other:?}")),
    }
    match delegee.access_resource(&w.rs, &djwt) {
        Err(_) => Ok(()),
        Ok(_) => Err("delegee granted after revocation".into()),
    }
}

fn c7_fair_exchange() -> Outcome {
    let w = world();
    let buyer_keys = Keypair::generate();
    w.ledger.credit(buyer_keys.address(), 1_000);
    w.ledger.advance_block(w.ledger.now()).map_err(err)?;
    let buyer = w.client(buyer_keys);
    let conserved = || {
        let s = w.ledger.chain_state();
        ensure(
            s.total_balances() + s.fees_collected == s.minted_supply,
            "value not conserved",
        )
    };
    let balances = || (w.ledger.balance(&buyer.address()), w.ledger.balance(&w.operator));
    conserved()?;

    let t = w
        .auth
        .reserve_token("admin", buyer.address(), URI, 300, 3600)
        .map_err(err)?;
    // inspection before paying
    ensure(
        w.ledger.reservation(&t.token_id).map_err(err)?
            == Some(Reservation {
                beneficiary: buyer.address(),
                price: 300,
            }),
        "reservation not visible",
    )?;
    ensure(
        w.ledger.token_uri(&t.token_id).map_err(err)? == t.jwt,
        "offered JWT not readable before paying",
    )?;
    ensure(
        buyer.access_resource(&w.rs, &t.jwt).is_err(),
        "access granted before paying",
    )?;

    let before = balances();
    match buyer
        .account()
        .execute(Call::Claim { token_id: t.token_id }, 299)
    {
        Err(LedgerError::Registry(RegistryError::InsufficientPayment)) => {}
        other => return Err(format!("underpayment not rejected: {other:?}")),
    }
    ensure(balances() == before, "underpayment moved value")?;
    ensure(
        w.ledger.owner_of(&t.token_id).map_err(err)? == w.operator,
        "underpayment moved ownership",
    )?;
    conserved()?;

    let receipt = buyer.pay_and_claim(&t.token_id).map_err(err)?;
    let after = balances();
    ensure(
        w.ledger.owner_of(&t.token_id).map_err(err)? == buyer.address(),
        "ownership not transferred",
    )?;
    ensure(
        after == (before.0 - 300, before.1 + 300),
        format!("balances {before:?} -> {after:?}"),
    )?;
    let block = w.ledger.block(receipt.block_number).map_err(err)?;
    ensure(
        block.receipts.iter().filter(|r| r.succeeded()).count() == 1,
        "payment and transfer were not one transaction",
    )?;
    conserved()?;
    ensure(
        buyer.access_resource(&w.rs, &t.jwt).is_ok(),
        "access denied after claiming",
    )
}

fn c8_registry_properties() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&registry_oracle::history_strategy(), |ops| {
            registry_oracle::check_history(&ops).map_err(TestCaseError::fail)
        })
        .map_err(err)
}

fn c9_canonical_jwt() -> Outcome {
    use jwt_reference::*;
    ensure(
        token_format::encode(&golden_claims()).map_err(err)? == GOLDEN_JWT,
        "golden vector mismatch",
    )?;
    ensure(reference_encode(&golden_claims()) == GOLDEN_JWT, "reference encoder disagrees with golden vector")?;
    ensure(
        token_format::strip_cnf(GOLDEN_DELEGATED_JWT).map_err(err)? == GOLDEN_JWT,
        "strip_cnf does not recover the golden vector",
    )?;

    let claims = (any::<[u8; 32]>(), "[ -~]{1,24}", any::<[u8; 32]>(), 1u64.., any::<bool>())
        .prop_map(|(seed, aud, jti, exp, delegated)| {
            let k = Keypair::from_secret(seed);
            ClaimSet {
                iss: k.address(),
                sub: k.public().to_string(),
                aud,
                jti: TokenId::from_bytes(jti),
                exp,
                cnf: delegated.then(|| Confirmation {
                    kid: k.address().to_string(),
                }),
            }
        });
    let mut runner = TestRunner::new(Config {
        cases: 256,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&claims, |c| {
            let jwt = token_format::encode(&c).unwrap();
            prop_assert_eq!(&jwt, &reference_encode(&c));
            prop_assert_eq!(token_format::decode(&jwt).unwrap(), c.clone());
            let once = token_format::strip_cnf(&jwt).unwrap();
            prop_assert_eq!(token_format::strip_cnf(&once).unwrap(), once);
            Ok(())
        })
        .map_err(err)
}

fn c10_stateless_client() -> Outcome {
    let w = world();
    let keys = Keypair::generate();
    let client = w.client(keys.clone());
    let issued: Vec<IssuedToken> = (0..3).map(|_| w.issue(&client)).collect::<Result<_, _>>()?;
    w.auth
        .revoke_token("admin", &issued[2].token_id)
        .map_err(err)?;
    let before: Vec<String> = issued[..2]
        .iter()
        .map(|t| client.access_resource(&w.rs, &t.jwt).map(|g| g.payload))
        .collect::<Result<_, _>>()
        .map_err(err)?;

    // new client process: only the key survives
    drop(client);
    let fresh = w.client(keys);
    let owned = fresh.list_owned_tokens().map_err(err)?;
    let got: BTreeSet<_> = owned.iter().map(|t| (t.token_id, t.jwt.clone())).collect();
    let want: BTreeSet<_> = issued[..2]
        .iter()
        .map(|t| (t.token_id, t.jwt.clone()))
        .collect();
    ensure(got == want, "recovered token set differs from the held tokens")?;
    let after: Vec<String> = issued[..2]
        .iter()
        .map(|t| {
            let jwt = fresh.cached_jwt(&t.token_id).ok_or("token not recovered")?;
            fresh
                .access_resource(&w.rs, &jwt)
                .map(|g| g.payload)
                .map_err(err)
        })
        .collect::<Result<_, String>>()?;
    ensure(after == before, "access after wipe differs")?;
    ensure(
        w.rs.resource("nonexistent", URI).is_err(),
        "bogus session accepted",
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gas-model exactness", Duration::from_secs(1), c1_gas_model),
        ("block-latency model", Duration::from_secs(5), c2_block_latency),
        ("end-to-end issuance and access", Duration::from_secs(2), c3_issue_access),
        ("revocation before and during use", Duration::from_secs(2), c4_revocation),
        ("offline recovery", Duration::from_secs(3), c5_offline_recovery),
        ("delegation", Duration::from_secs(2), c6_delegation),
        ("fair exchange", Duration::from_secs(2), c7_fair_exchange),
        ("registry property suite", Duration::from_secs(30), c8_registry_properties),
        ("canonical JWT suite", Duration::from_secs(1), c9_canonical_jwt),
        ("stateless client", Duration::from_secs(2), c10_stateless_client),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check)
            .unwrap_or_else(|_| Err("panicked".into()))
            .and_then(|()| {
                let took = start.elapsed();
                ensure(took <= *budget, format!("took {took:?}, budget {budget:?}"))
            });
        let ms = start.elapsed().as_millis();
        match result {
            Ok(()) => println!("criterion {:>2} {name}: PASS ({ms} ms)", i + 1),
            Err(e) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({ms} ms): {e}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
