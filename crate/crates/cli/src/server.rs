//! HTTP interfaces of the ledger node, authorization server and resource
//! server. Core calls block (ledger waits, remote ledger reads), so every
//! handler runs them on the blocking pool.

use std::fmt::Display;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Json, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use ledger_oauth::auth_server::{AuthError, AuthorizationServer, TokenRequest};
use ledger_oauth::client_sdk::SessionGrant;
use ledger_oauth::ledger::{BlockMode, EventFilter, Ledger, LedgerError, Transaction, TxHash};
use ledger_oauth::registry::RegistryError;
use ledger_oauth::resource_server::{AccessDenied, ResourceError, ResourceServer};
use serde::Serialize;

use crate::wire::*;

pub struct ApiError(StatusCode, serde_json::Value);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn api_error<E: Serialize + Display>(status: StatusCode, e: &E) -> ApiError {
    let body = ErrorBody {
        error: e,
        message: e.to_string(),
    };
    ApiError(
        status,
        serde_json::to_value(body).unwrap_or(serde_json::Value::Null),
    )
}

impl From<LedgerError> for ApiError {
    fn from(e: LedgerError) -> Self {
        let status = match &e {
            LedgerError::UnknownBlock(_)
            | LedgerError::UnknownTransaction(_)
            | LedgerError::Registry(RegistryError::UnknownToken) => StatusCode::NOT_FOUND,
            LedgerError::Timeout => StatusCode::REQUEST_TIMEOUT,
            LedgerError::Persistence(_) | LedgerError::Transport(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
            _ => StatusCode::BAD_REQUEST,
        };
        api_error(status, &e)
    }
}

impl From<AuthError> for ApiError {
    fn from(e: AuthError) -> Self {
        let status = match &e {
            AuthError::Unauthorized | AuthError::BadPoP => StatusCode::UNAUTHORIZED,
            AuthError::UnknownGrant | AuthError::UnknownToken => StatusCode::NOT_FOUND,
            AuthError::GrantUsed | AuthError::AddressCollision(_) => StatusCode::CONFLICT,
            AuthError::Ledger(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::BAD_REQUEST,
        };
        api_error(status, &e)
    }
}

impl From<ResourceError> for ApiError {
    fn from(e: ResourceError) -> Self {
        let status = match &e {
            ResourceError::Ledger(_) => StatusCode::BAD_GATEWAY,
            _ => StatusCode::FORBIDDEN,
        };
        api_error(status, &e)
    }
}

impl From<AccessDenied> for ApiError {
    fn from(e: AccessDenied) -> Self {
        let status = match e {
            AccessDenied::ResourceMismatch => StatusCode::FORBIDDEN,
            _ => StatusCode::UNAUTHORIZED,
        };
        api_error(status, &e)
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError::from(LedgerError::InvalidCall(msg.into()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f)
        .await
        .expect("request handler panicked")
}

fn health(role: &str) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        role: role.into(),
    })
}

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn ledger_router(ledger: Arc<Ledger>) -> Router {
    Router::new()
        .route("/healthz", get(|| async { health("ledger") }))
        .route("/submit", post(submit))
        .route("/call/{view}", get(call_view))
        .route("/events", get(events))
        .route("/block", get(block))
        .route("/receipt", get(receipt))
        .route("/advance", post(advance))
        .with_state(ledger)
}

async fn submit(
    State(ledger): State<Arc<Ledger>>,
    Json(tx): Json<Transaction>,
) -> ApiResult<ledger_oauth::ledger::PendingReceipt> {
    Ok(Json(ledger.submit_transaction(tx)?))
}

fn view_value<T: Serialize>(v: T) -> serde_json::Value {
    serde_json::to_value(ViewResult { result: v }).unwrap_or(serde_json::Value::Null)
}

async fn call_view(
    State(ledger): State<Arc<Ledger>>,
    Path(view): Path<String>,
    Query(q): Query<ViewQuery>,
) -> ApiResult<serde_json::Value> {
    let token = || q.token_id.ok_or_else(|| bad_request("token_id is required"));
    let address = || q.address.ok_or_else(|| bad_request("address is required"));
    let value = match view.as_str() {
        "head" => view_value(ledger.head()),
        "owner_of" => view_value(ledger.owner_of(&token()?)?),
        "token_uri" => view_value(ledger.token_uri(&token()?)?),
        "get_approved" => view_value(ledger.get_approved(&token()?)?),
        "reservation" => view_value(ledger.reservation(&token()?)?),
        "balance" => view_value(ledger.balance(&address()?)),
        "next_nonce" => view_value(ledger.next_nonce(&address()?)),
        "contract_address" => view_value(ledger.contract_address()?),
        "operator" => view_value(ledger.operator()?),
        other => return Err(bad_request(format!("unknown view {other:?}"))),
    };
    Ok(Json(value))
}

async fn events(
    State(ledger): State<Arc<Ledger>>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Vec<ledger_oauth::ledger::LedgerEvent>> {
    let filter = EventFilter {
        name: q
            .name
            .as_deref()
            .map(str::parse)
            .transpose()
            .map_err(bad_request)?,
        token_id: q.token_id,
    };
    let to = q.to.unwrap_or_else(|| ledger.head());
    Ok(Json(ledger.get_events(&filter, q.from, to)?))
}

async fn block(
    State(ledger): State<Arc<Ledger>>,
    Query(q): Query<BlockQuery>,
) -> ApiResult<ledger_oauth::ledger::Block> {
    Ok(Json(ledger.block(q.number)?))
}

const MAX_WAIT: Duration = Duration::from_secs(60);

async fn receipt(
    State(ledger): State<Arc<Ledger>>,
    Query(q): Query<ReceiptQuery>,
) -> ApiResult<ledger_oauth::ledger::Receipt> {
    let hash: TxHash = q.hash.parse().map_err(bad_request)?;
    let r = match q.wait_ms {
        Some(ms) => {
            let wait = Duration::from_millis(ms).min(MAX_WAIT);
            blocking(move || ledger.wait_for_receipt(&hash, wait)).await?
        }
        None => ledger
            .receipt(&hash)
            .ok_or(LedgerError::UnknownTransaction(hash))?,
    };
    Ok(Json(r))
}

/// Seals a block on request; refused while a timed producer runs.
async fn advance(State(ledger): State<Arc<Ledger>>) -> ApiResult<BlockNumber> {
    if matches!(ledger.config().mode, BlockMode::Timed { .. }) {
        return Err(bad_request("blocks are produced on a timer"));
    }
    let block = blocking(move || ledger.advance_block(ledger.now())).await?;
    Ok(Json(BlockNumber {
        block: block.number,
    }))
}

type As = Arc<AuthorizationServer>;

pub fn auth_router(server: As) -> Router {
    Router::new()
        .route("/healthz", get(|| async { health("as") }))
        .route("/register", post(register))
        .route("/grant", post(grant))
        .route("/token/nonce", get(token_nonce))
        .route("/token", post(token))
        .route("/revoke", post(revoke))
        .route("/reserve", post(reserve))
        .route("/burn", post(burn))
        .with_state(server)
}

async fn register(
    State(s): State<As>,
    Json(req): Json<RegisterRequest>,
) -> ApiResult<ledger_oauth::auth_server::ClientRegistration> {
    Ok(Json(s.register_client(&req.pub_key)?))
}

async fn grant(
    State(s): State<As>,
    Json(req): Json<GrantRequest>,
) -> ApiResult<ledger_oauth::auth_server::AuthorizationGrant> {
    Ok(Json(s.issue_grant(
        &req.owner_credential,
        req.client_address,
        &req.resource_uri,
        req.ttl,
    )?))
}

async fn token_nonce(State(s): State<As>) -> Json<ledger_oauth::auth_server::NonceChallenge> {
    Json(s.issue_nonce())
}

async fn token(
    State(s): State<As>,
    Json(req): Json<TokenRequest>,
) -> ApiResult<ledger_oauth::auth_server::IssuedToken> {
    Ok(Json(blocking(move || s.request_token(&req)).await?))
}

async fn revoke(State(s): State<As>, Json(req): Json<AdminTokenRequest>) -> ApiResult<BlockNumber> {
    let block = blocking(move || s.revoke_token(&req.admin_credential, &req.token_id)).await?;
    Ok(Json(BlockNumber { block }))
}

async fn burn(State(s): State<As>, Json(req): Json<AdminTokenRequest>) -> ApiResult<BlockNumber> {
    let block = blocking(move || s.burn_token(&req.admin_credential, &req.token_id)).await?;
    Ok(Json(BlockNumber { block }))
}

async fn reserve(
    State(s): State<As>,
    Json(req): Json<ReserveRequest>,
) -> ApiResult<ledger_oauth::auth_server::IssuedToken> {
    let issued = blocking(move || {
        s.reserve_token(
            &req.admin_credential,
            req.client_address,
            &req.resource_uri,
            req.price,
            req.lifetime,
        )
    })
    .await?;
    Ok(Json(issued))
}

type Rs = Arc<ResourceServer>;

pub fn resource_router(server: Rs) -> Router {
    Router::new()
        .route("/healthz", get(|| async { health("rs") }))
        .route("/access", post(access))
        .route("/access/response", post(access_response))
        .route("/resource", get(resource))
        .with_state(server)
}

/// A verified token is answered with 401 and a challenge to sign.
async fn access(State(s): State<Rs>, Json(req): Json<AccessRequest>) -> Result<Response, ApiError> {
    let challenge = blocking(move || s.begin_access(&req.jwt)).await?;
    Ok((StatusCode::UNAUTHORIZED, Json(challenge)).into_response())
}

async fn access_response(
    State(s): State<Rs>,
    Json(req): Json<ChallengeResponse>,
) -> ApiResult<SessionGrant> {
    let grant = blocking(move || {
        use ledger_oauth::client_sdk::ResourceServerApi;
        s.respond(&req.challenge_id, &req.signature, &req.pub_key)
    })
    .await;
    match grant {
        Ok(g) => Ok(Json(g)),
        Err(ledger_oauth::client_sdk::ClientError::Resource(e)) => Err(e.into()),
        Err(e) => Err(bad_request(e.to_string())),
    }
}

async fn resource(State(s): State<Rs>, Query(q): Query<ResourceQuery>) -> ApiResult<Payload> {
    let payload = s.access_with_session(&q.session, &q.uri, s.now())?;
    Ok(Json(Payload { payload }))
}
