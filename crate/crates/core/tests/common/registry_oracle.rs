//! Reference model of the registry and invariant checks over random
//! operation histories.

use std::collections::{BTreeMap, BTreeSet};

use ledger_oauth::keys::{Address, Keypair};
use ledger_oauth::registry::{Call, Registry, RegistryEvent, TokenId};
use proptest::prelude::*;

pub const PRINCIPALS: usize = 6;
const ROOT: usize = 0;
const OPERATOR: usize = 1;

pub fn principal(i: usize) -> Address {
    Keypair::from_secret([i as u8 + 1; 32]).address()
}

fn token(i: u8) -> TokenId {
    TokenId::from_bytes([i + 1; 32])
}

#[derive(Debug, Clone)]
pub struct Op {
    pub caller: usize,
    pub value: u64,
    pub call: Call,
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    let who = prop_oneof![1 => Just(OPERATOR), 2 => 0..PRINCIPALS];
    let tid = (0u8..6).prop_map(token);
    let meta = prop::sample::select(vec!["aa.bb.", "cc.dd.", "ee.ff."]).prop_map(String::from);
    let addr = (0..PRINCIPALS + 1).prop_map(|i| {
        if i == PRINCIPALS {
            Address::ZERO
        } else {
            principal(i)
        }
    });
    let call = prop_oneof![
        4 => (tid.clone(), meta.clone(), addr.clone())
            .prop_map(|(token_id, metadata, to)| Call::Mint { token_id, metadata, to }),
        1 => tid.clone().prop_map(|token_id| Call::Burn { token_id }),
        4 => (addr.clone(), addr.clone(), tid.clone())
            .prop_map(|(from, to, token_id)| Call::TransferFrom { from, to, token_id }),
        3 => (addr.clone(), tid.clone())
            .prop_map(|(approved, token_id)| Call::Approve { approved, token_id }),
        2 => (tid.clone(), meta, addr.clone(), 0u64..50).prop_map(
            |(token_id, metadata, beneficiary, price)| Call::MintReserved {
                token_id,
                metadata,
                beneficiary,
                price
            }
        ),
        2 => tid.prop_map(|token_id| Call::Claim { token_id }),
        1 => addr.prop_map(|new_operator| Call::SetOperator { new_operator }),
    ];
    (who, prop_oneof![3 => Just(0u64), 1 => 0u64..60], call).prop_map(|(caller, value, call)| Op {
        caller,
        value,
        call,
    })
}

pub fn history_strategy() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(op_strategy(), 1..48)
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ModelToken {
    owner: Address,
    metadata: String,
    approved: Option<Address>,
    reservation: Option<(Address, u64)>,
}

/// Straight-line restatement of the registry rules.
struct Model {
    root: Address,
    operator: Address,
    tokens: BTreeMap<TokenId, ModelToken>,
    ever: BTreeSet<TokenId>,
}

impl Model {
    /// Returns whether the call succeeds, applying it if so.
    fn apply(&mut self, caller: Address, value: u64, call: &Call) -> bool {
        if value > 0 && !matches!(call, Call::Claim { .. }) {
            return false;
        }
        let is_op = caller == self.operator;
        match call {
            Call::Mint {
                token_id,
                metadata,
                to,
            } => {
                if !is_op || self.ever.contains(token_id) || to.is_zero() {
                    return false;
                }
                self.ever.insert(*token_id);
                self.tokens.insert(
                    *token_id,
                    ModelToken {
                        owner: *to,
                        metadata: metadata.clone(),
                        approved: None,
                        reservation: None,
                    },
                );
                true
            }
            Call::MintReserved {
                token_id,
                metadata,
                beneficiary,
                price,
            } => {
                if !is_op || self.ever.contains(token_id) {
                    return false;
                }
                self.ever.insert(*token_id);
                self.tokens.insert(
                    *token_id,
                    ModelToken {
                        owner: self.operator,
                        metadata: metadata.clone(),
                        approved: None,
                        reservation: Some((*beneficiary, *price)),
                    },
                );
                true
            }
            Call::Burn { token_id } => is_op && self.tokens.remove(token_id).is_some(),
            Call::TransferFrom { from, to, token_id } => match self.tokens.get_mut(token_id) {
                Some(t) if is_op && !to.is_zero() && t.owner == *from => {
                    t.owner = *to;
                    t.approved = None;
                    t.reservation = None;
                    true
                }
                _ => false,
            },
            Call::Approve { approved, token_id } => match self.tokens.get_mut(token_id) {
                Some(t) if caller == t.owner || is_op => {
                    t.approved = if approved.is_zero() { None } else { Some(*approved) };
                    true
                }
                _ => false,
            },
            Call::Claim { token_id } => match self.tokens.get_mut(token_id) {
                Some(t) => match t.reservation {
                    Some((b, price)) if b == caller && value >= price => {
                        t.owner = caller;
                        t.approved = None;
                        t.reservation = None;
                        true
                    }
                    _ => false,
                },
                None => false,
            },
            Call::SetOperator { new_operator } => {
                if caller != self.root || new_operator.is_zero() {
                    return false;
                }
                self.operator = *new_operator;
                true
            }
            Call::Deploy { .. } => false,
        }
    }
}

/// Runs `ops` against the real registry and the model, checking every
/// invariant along the way.
pub fn check_history(ops: &[Op]) -> Result<(), String> {
    let root = principal(ROOT);
    let op = principal(OPERATOR);
    let mut reg = Registry::new(root, op, Address::from_hash_of(b"registry"));
    let mut model = Model {
        root,
        operator: op,
        tokens: BTreeMap::new(),
        ever: BTreeSet::new(),
    };
    let mut events: Vec<RegistryEvent> = Vec::new();
    let mut first_metadata: BTreeMap<TokenId, String> = BTreeMap::new();

    for (step, o) in ops.iter().enumerate() {
        let caller = principal(o.caller);
        let before = reg.clone();
        let pre_operator = model.operator;
        let pre_token = o.call_token().and_then(|id| model.tokens.get(&id).cloned());
        let expected = model.apply(caller, o.value, &o.call);
        let actual = reg.execute(caller, o.value, &o.call);
        let ctx = || format!("step {step}: {:?} by #{} value {}", o.call, o.caller, o.value);

        if actual.is_ok() != expected {
            return Err(format!("{}: model says {expected}, registry {actual:?}", ctx()));
        }
        match actual {
            Err(_) => {
                if reg != before {
                    return Err(format!("{}: failed call changed state", ctx()));
                }
            }
            Ok(outcome) => {
                authorized(caller, o, pre_operator, pre_token.as_ref())
                    .map_err(|e| format!("{}: {e}", ctx()))?;
                events.extend(outcome.events);
            }
        }

        for rec in reg.tokens() {
            let first = first_metadata
                .entry(rec.token_id)
                .or_insert_with(|| rec.metadata.clone());
            if *first != rec.metadata {
                return Err(format!("{}: metadata of {} changed", ctx(), rec.token_id));
            }
        }
        compare(&reg, &model).map_err(|e| format!("{}: {e}", ctx()))?;
    }

    check_single_ownership(&reg)?;
    check_unique_mints(&events)?;
    check_event_fold(&reg, &events)
}

impl Op {
    fn call_token(&self) -> Option<TokenId> {
        match &self.call {
            Call::Mint { token_id, .. }
            | Call::MintReserved { token_id, .. }
            | Call::Burn { token_id }
            | Call::TransferFrom { token_id, .. }
            | Call::Approve { token_id, .. }
            | Call::Claim { token_id } => Some(*token_id),
            Call::SetOperator { .. } | Call::Deploy { .. } => None,
        }
    }
}

/// Every successful state change was made by a party entitled to it.
fn authorized(
    caller: Address,
    o: &Op,
    operator: Address,
    token: Option<&ModelToken>,
) -> Result<(), String> {
    let ok = match &o.call {
        Call::Mint { .. } | Call::MintReserved { .. } | Call::Burn { .. } | Call::TransferFrom { .. } => {
            caller == operator
        }
        Call::Approve { .. } => token.is_some_and(|t| t.owner == caller) || caller == operator,
        Call::Claim { .. } => token
            .and_then(|t| t.reservation)
            .is_some_and(|(b, price)| b == caller && o.value >= price),
        Call::SetOperator { .. } => caller == principal(ROOT),
        Call::Deploy { .. } => false,
    };
    if ok {
        Ok(())
    } else {
        Err("unauthorized call succeeded".into())
    }
}

fn compare(reg: &Registry, model: &Model) -> Result<(), String> {
    if reg.operator() != model.operator {
        return Err("operator diverged".into());
    }
    let live: BTreeSet<TokenId> = reg.tokens().map(|r| r.token_id).collect();
    let model_live: BTreeSet<TokenId> = model.tokens.keys().copied().collect();
    if live != model_live {
        return Err(format!("live tokens {live:?} vs model {model_live:?}"));
    }
    for (id, t) in &model.tokens {
        let rec = reg.record(id).map_err(|e| e.to_string())?;
        let res = rec.reservation.as_ref().map(|r| (r.beneficiary, r.price));
        if rec.owner != t.owner
            || rec.metadata != t.metadata
            || rec.approved != t.approved
            || res != t.reservation
        {
            return Err(format!("token {id} diverged: {rec:?} vs {t:?}"));
        }
    }
    for id in &model.ever {
        if !reg.was_used(id) {
            return Err(format!("minted id {id} forgotten"));
        }
    }
    Ok(())
}

fn check_single_ownership(reg: &Registry) -> Result<(), String> {
    let mut holders: BTreeMap<TokenId, Vec<Address>> = BTreeMap::new();
    for i in 0..PRINCIPALS {
        let who = principal(i);
        for rec in reg.tokens().filter(|r| r.owner == who) {
            holders.entry(rec.token_id).or_default().push(who);
        }
    }
    for rec in reg.tokens() {
        if rec.owner.is_zero() {
            return Err(format!("token {} owned by zero address", rec.token_id));
        }
        let n = holders.get(&rec.token_id).map_or(0, Vec::len);
        if n != 1 {
            return Err(format!("token {} has {n} holders", rec.token_id));
        }
    }
    Ok(())
}

fn check_unique_mints(events: &[RegistryEvent]) -> Result<(), String> {
    let mut seen = BTreeSet::new();
    for ev in events {
        if let RegistryEvent::Transfer { from, token_id, .. } = ev {
            if from.is_zero() && !seen.insert(*token_id) {
                return Err(format!("token id {token_id} minted twice"));
            }
        }
    }
    Ok(())
}

/// Folding the event stream from empty reproduces ownership and approvals.
fn check_event_fold(reg: &Registry, events: &[RegistryEvent]) -> Result<(), String> {
    let mut owners: BTreeMap<TokenId, Address> = BTreeMap::new();
    let mut approvals: BTreeMap<TokenId, Address> = BTreeMap::new();
    for ev in events {
        match ev {
            RegistryEvent::Transfer { to, token_id, .. } => {
                approvals.remove(token_id);
                if to.is_zero() {
                    owners.remove(token_id);
                } else {
                    owners.insert(*token_id, *to);
                }
            }
            RegistryEvent::Approval {
                approved, token_id, ..
            } => {
                if approved.is_zero() {
                    approvals.remove(token_id);
                } else {
                    approvals.insert(*token_id, *approved);
                }
            }
        }
    }
    let state_owners: BTreeMap<TokenId, Address> =
        reg.tokens().map(|r| (r.token_id, r.owner)).collect();
    let state_approvals: BTreeMap<TokenId, Address> = reg
        .tokens()
        .filter_map(|r| r.approved.map(|a| (r.token_id, a)))
        .collect();
    if owners != state_owners {
        return Err("event-folded owners differ from state".into());
    }
    if approvals != state_approvals {
        return Err("event-folded approvals differ from state".into());
    }
    Ok(())
}
