//! Blocking HTTP clients for the three node roles.

use std::time::Duration;

use ledger_oauth::access::{LedgerReader, LedgerWriter};
use ledger_oauth::auth_server::{
    AuthError, AuthorizationGrant, ClientRegistration, IssuedToken, NonceChallenge, TokenRequest,
};
use ledger_oauth::client_sdk::{AuthServerApi, ClientError, ResourceServerApi, SessionGrant};
use ledger_oauth::keys::{Address, PublicKey, Signature};
use ledger_oauth::ledger::{
    Block, EventFilter, EventName, LedgerError, LedgerEvent, PendingReceipt, Receipt, Transaction,
    TxHash,
};
use ledger_oauth::registry::{Reservation, TokenId};
use ledger_oauth::resource_server::{AccessDenied, Challenge, ResourceError};
use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::http::Response;
use ureq::{Agent, Body};

use crate::wire::*;

fn agent() -> Agent {
    Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(120)))
        .build()
        .into()
}

/// Decodes a 2xx body as `T` and anything else as an [`ErrorBody<E>`].
fn decode<T: DeserializeOwned, E: DeserializeOwned>(
    mut resp: Response<Body>,
) -> Result<Result<T, E>, String> {
    let status = resp.status();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    if status.is_success() {
        serde_json::from_str(&text)
            .map(Ok)
            .map_err(|e| format!("bad response body: {e}"))
    } else {
        match serde_json::from_str::<ErrorBody<E>>(&text) {
            Ok(body) => Ok(Err(body.error)),
            Err(_) => Err(format!("HTTP {status}: {text}")),
        }
    }
}

fn base(url: &str) -> String {
    url.trim_end_matches('/').to_string()
}

pub struct RemoteLedger {
    base: String,
    agent: Agent,
}

impl RemoteLedger {
    pub fn new(url: &str) -> Self {
        RemoteLedger {
            base: base(url),
            agent: agent(),
        }
    }

    fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, String)]) -> Result<T, LedgerError> {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let resp = req.call().map_err(|e| LedgerError::Transport(e.to_string()))?;
        decode::<T, LedgerError>(resp).map_err(LedgerError::Transport)?
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T, LedgerError> {
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(body)
            .map_err(|e| LedgerError::Transport(e.to_string()))?;
        decode::<T, LedgerError>(resp).map_err(LedgerError::Transport)?
    }

    fn view<T: DeserializeOwned>(
        &self,
        view: &str,
        token_id: Option<&TokenId>,
        address: Option<&Address>,
    ) -> Result<T, LedgerError> {
        let mut q = Vec::new();
        if let Some(t) = token_id {
            q.push(("token_id", t.to_string()));
        }
        if let Some(a) = address {
            q.push(("address", a.to_string()));
        }
        let r: ViewResult<T> = self.get(&format!("/call/{view}"), &q)?;
        Ok(r.result)
    }

    pub fn block(&self, number: u64) -> Result<Block, LedgerError> {
        self.get("/block", &[("number", number.to_string())])
    }

    pub fn receipt(&self, hash: &TxHash) -> Result<Receipt, LedgerError> {
        self.get("/receipt", &[("hash", hash.to_string())])
    }

    /// Seals a block (manual and on-demand nodes only).
    pub fn advance(&self) -> Result<u64, LedgerError> {
        let r: BlockNumber = self.post("/advance", &serde_json::json!({}))?;
        Ok(r.block)
    }

    pub fn healthy(&self) -> bool {
        self.get::<Health>("/healthz", &[]).is_ok()
    }
}

impl LedgerReader for RemoteLedger {
    fn head(&self) -> Result<u64, LedgerError> {
        self.view("head", None, None)
    }

    fn owner_of(&self, token_id: &TokenId) -> Result<Address, LedgerError> {
        self.view("owner_of", Some(token_id), None)
    }

    fn token_uri(&self, token_id: &TokenId) -> Result<String, LedgerError> {
        self.view("token_uri", Some(token_id), None)
    }

    fn get_approved(&self, token_id: &TokenId) -> Result<Option<Address>, LedgerError> {
        self.view("get_approved", Some(token_id), None)
    }

    fn reservation(&self, token_id: &TokenId) -> Result<Option<Reservation>, LedgerError> {
        self.view("reservation", Some(token_id), None)
    }

    fn balance(&self, addr: &Address) -> Result<u64, LedgerError> {
        self.view("balance", None, Some(addr))
    }

    fn contract_address(&self) -> Result<Address, LedgerError> {
        self.view("contract_address", None, None)
    }

    fn operator(&self) -> Result<Address, LedgerError> {
        self.view("operator", None, None)
    }

    fn get_events(
        &self,
        filter: &EventFilter,
        from_block: u64,
        to_block: u64,
    ) -> Result<Vec<LedgerEvent>, LedgerError> {
        let mut q = vec![("from", from_block.to_string()), ("to", to_block.to_string())];
        if let Some(name) = filter.name {
            let name = match name {
                EventName::Transfer => "Transfer",
                EventName::Approval => "Approval",
            };
            q.push(("name", name.to_string()));
        }
        if let Some(t) = filter.token_id {
            q.push(("token_id", t.to_string()));
        }
        self.get("/events", &q)
    }
}

impl LedgerWriter for RemoteLedger {
    fn next_nonce(&self, addr: &Address) -> Result<u64, LedgerError> {
        self.view("next_nonce", None, Some(addr))
    }

    fn submit(&self, tx: Transaction) -> Result<PendingReceipt, LedgerError> {
        self.post("/submit", &tx)
    }

    fn wait_for_receipt(&self, hash: &TxHash, timeout: Duration) -> Result<Receipt, LedgerError> {
        self.get(
            "/receipt",
            &[
                ("hash", hash.to_string()),
                ("wait_ms", timeout.as_millis().to_string()),
            ],
        )
    }
}

fn transport(e: impl ToString) -> ClientError {
    ClientError::Transport(e.to_string())
}

pub struct RemoteAuth {
    base: String,
    agent: Agent,
}

impl RemoteAuth {
    pub fn new(url: &str) -> Self {
        RemoteAuth {
            base: base(url),
            agent: agent(),
        }
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> Result<T, ClientError> {
        let resp = self
            .agent
            .post(format!("{}{path}", self.base))
            .send_json(body)
            .map_err(transport)?;
        decode::<T, AuthError>(resp)
            .map_err(ClientError::Transport)?
            .map_err(ClientError::Auth)
    }

    pub fn grant(
        &self,
        owner_credential: &str,
        client_address: Address,
        resource_uri: &str,
        ttl: u64,
    ) -> Result<AuthorizationGrant, ClientError> {
        self.post(
            "/grant",
            &GrantRequest {
                owner_credential: owner_credential.into(),
                client_address,
                resource_uri: resource_uri.into(),
                ttl,
            },
        )
    }

    pub fn revoke(&self, admin_credential: &str, token_id: TokenId) -> Result<u64, ClientError> {
        let r: BlockNumber = self.post(
            "/revoke",
            &AdminTokenRequest {
                admin_credential: admin_credential.into(),
                token_id,
            },
        )?;
        Ok(r.block)
    }

    pub fn burn(&self, admin_credential: &str, token_id: TokenId) -> Result<u64, ClientError> {
        let r: BlockNumber = self.post(
            "/burn",
            &AdminTokenRequest {
                admin_credential: admin_credential.into(),
                token_id,
            },
        )?;
        Ok(r.block)
    }

    pub fn reserve(
        &self,
        admin_credential: &str,
        client_address: Address,
        resource_uri: &str,
        price: u64,
        lifetime: u64,
    ) -> Result<IssuedToken, ClientError> {
        self.post(
            "/reserve",
            &ReserveRequest {
                admin_credential: admin_credential.into(),
                client_address,
                resource_uri: resource_uri.into(),
                price,
                lifetime,
            },
        )
    }
}

impl AuthServerApi for RemoteAuth {
    fn register(&self, pub_key: &str) -> Result<ClientRegistration, ClientError> {
        self.post(
            "/register",
            &RegisterRequest {
                pub_key: pub_key.into(),
            },
        )
    }

    fn token_nonce(&self) -> Result<NonceChallenge, ClientError> {
        let resp = self
            .agent
            .get(format!("{}/token/nonce", self.base))
            .call()
            .map_err(transport)?;
        decode::<NonceChallenge, AuthError>(resp)
            .map_err(ClientError::Transport)?
            .map_err(ClientError::Auth)
    }

    fn request_token(&self, req: &TokenRequest) -> Result<IssuedToken, ClientError> {
        self.post("/token", req)
    }
}

pub struct RemoteResource {
    base: String,
    agent: Agent,
}

impl RemoteResource {
    pub fn new(url: &str) -> Self {
        RemoteResource {
            base: base(url),
            agent: agent(),
        }
    }
}

impl ResourceServerApi for RemoteResource {
    fn access(&self, jwt: &str) -> Result<Challenge, ClientError> {
        let mut resp = self
            .agent
            .post(format!("{}/access", self.base))
            .send_json(&AccessRequest { jwt: jwt.into() })
            .map_err(transport)?;
        if resp.status() == 401 {
            return resp.body_mut().read_json().map_err(transport);
        }
        match decode::<serde_json::Value, ResourceError>(resp).map_err(ClientError::Transport)? {
            Err(e) => Err(ClientError::Resource(e)),
            Ok(_) => Err(transport("expected a challenge")),
        }
    }

    fn respond(
        &self,
        challenge_id: &str,
        signature: &Signature,
        pub_key: &PublicKey,
    ) -> Result<SessionGrant, ClientError> {
        let resp = self
            .agent
            .post(format!("{}/access/response", self.base))
            .send_json(&ChallengeResponse {
                challenge_id: challenge_id.into(),
                signature: *signature,
                pub_key: *pub_key,
            })
            .map_err(transport)?;
        decode::<SessionGrant, ResourceError>(resp)
            .map_err(ClientError::Transport)?
            .map_err(ClientError::Resource)
    }

    fn resource(&self, session_id: &str, resource_uri: &str) -> Result<String, ClientError> {
        let resp = self
            .agent
            .get(format!("{}/resource", self.base))
            .query("session", session_id)
            .query("uri", resource_uri)
            .call()
            .map_err(transport)?;
        decode::<Payload, AccessDenied>(resp)
            .map_err(ClientError::Transport)?
            .map(|p| p.payload)
            .map_err(ClientError::Denied)
    }
}
