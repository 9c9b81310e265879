//! JSON-over-HTTP API for a trained model.
//!
//! | method | path            | body / query                                        |
//! |--------|-----------------|-----------------------------------------------------|
//! | GET    | `/v1/avatars`   |                                                     |
//! | POST   | `/v1/predict`   | `{red, blue}`                                       |
//! | POST   | `/v1/recommend` | `{ally, enemy, pool?, familiar?, top_k?, sim_k?}`   |
//! | GET    | `/v1/similar`   | `?avatar=NAME&top_k=K`                              |
//! | GET    | `/v1/pair`      | `?a=NAME&b=NAME`                                    |
//!
//! Avatars are addressed by name. Errors come back as
//! `{"error": {"code", "message", "offenders"?}}` with a 4xx status.

mod error;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::trace::TraceLayer;

use gae_core::model::ModelParams;
use gae_core::query::{self, DraftState, Recommendation};
use gae_core::registry::AvatarId;
use gae_core::Roster;

pub use error::ApiError;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_SIM_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    pub model_path: PathBuf,
    pub request_log: bool,
}

impl ServiceConfig {
    pub fn new(model_path: PathBuf) -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            model_path,
            request_log: false,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("port must be in 1..=65535")]
    InvalidPort,
    #[error("cannot load model: {0}")]
    Model(#[from] gae_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Shared = Arc<ModelParams>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(model: Arc<ModelParams>, request_log: bool) -> Router {
    let app = Router::new()
        .route("/v1/avatars", get(avatars))
        .route("/v1/predict", post(predict))
        .route("/v1/recommend", post(recommend))
        .route("/v1/similar", get(similar))
        .route("/v1/pair", get(pair))
        .fallback(|| async { ApiError::not_found() })
        .with_state(model);
    if request_log {
        app.layer(TraceLayer::new_for_http())
    } else {
        app
    }
}

/// Loads the model, binds and serves until ctrl-c.
pub async fn run(config: &ServiceConfig) -> Result<(), ServiceError> {
    if config.port == 0 {
        return Err(ServiceError::InvalidPort);
    }
    let model = gae_core::persist::load_gae(&config.model_path)?;
    let listener = tokio::net::TcpListener::bind(SocketAddr::new(config.bind, config.port)).await?;
    tracing::info!(
        "serving {} avatars on http://{}",
        model.n_avatars(),
        listener.local_addr()?
    );
    axum::serve(listener, router(Arc::new(model), config.request_log))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

fn core_error(model: &ModelParams, err: gae_core::Error) -> ApiError {
    ApiError::from_core(err, |id| model.registry().name(id).unwrap_or("?").to_owned())
}

fn resolve(model: &ModelParams, names: &[String]) -> Result<Vec<AvatarId>, ApiError> {
    model.registry().resolve(names).map_err(|e| core_error(model, e))
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))
}

fn params<T>(query: Result<Query<T>, QueryRejection>) -> Result<T, ApiError> {
    query
        .map(|Query(v)| v)
        .map_err(|e| ApiError::bad_request("invalid_request", e.body_text()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarEntry {
    pub index: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvatarsResponse {
    pub avatars: Vec<AvatarEntry>,
}

async fn avatars(State(model): State<Shared>) -> Json<AvatarsResponse> {
    let avatars = model
        .registry()
        .names()
        .iter()
        .enumerate()
        .map(|(index, name)| AvatarEntry {
            index,
            name: name.clone(),
        })
        .collect();
    Json(AvatarsResponse { avatars })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub red: Vec<String>,
    pub blue: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub p_red_win: f64,
}

async fn predict(
    State(model): State<Shared>,
    payload: Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<PredictResponse> {
    let req = body(payload)?;
    let red = Roster::new(resolve(&model, &req.red)?).map_err(|e| core_error(&model, e))?;
    let blue = Roster::new(resolve(&model, &req.blue)?).map_err(|e| core_error(&model, e))?;
    let p_red_win = model.win_probability(&red, &blue).map_err(|e| core_error(&model, e))?;
    Ok(Json(PredictResponse { p_red_win }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecommendRequest {
    pub ally: Vec<String>,
    pub enemy: Vec<String>,
    #[serde(default)]
    pub pool: Option<Vec<String>>,
    #[serde(default)]
    pub familiar: Option<Vec<String>>,
    #[serde(default)]
    pub top_k: Option<usize>,
    #[serde(default)]
    pub sim_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarEntry {
    pub avatar: String,
    pub index: usize,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationEntry {
    pub avatar: String,
    pub index: usize,
    pub win_probability: f64,
    pub bias_delta: f64,
    pub synergy_delta: f64,
    pub opposition_delta: f64,
    pub similar_familiar: Vec<SimilarEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendResponse {
    pub recommendations: Vec<RecommendationEntry>,
    /// Present only when a familiar set was sent; `null` if none of the
    /// familiar avatars is still available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub familiar_best: Option<Option<RecommendationEntry>>,
}

fn similar_entries(model: &ModelParams, ranked: &[(AvatarId, f64)]) -> Vec<SimilarEntry> {
    ranked
        .iter()
        .map(|&(index, similarity)| SimilarEntry {
            avatar: model.registry().name(index).unwrap_or_default().to_owned(),
            index,
            similarity,
        })
        .collect()
}

fn recommendation_entry(model: &ModelParams, r: &Recommendation) -> RecommendationEntry {
    RecommendationEntry {
        avatar: model.registry().name(r.avatar).unwrap_or_default().to_owned(),
        index: r.avatar,
        win_probability: r.win_probability,
        bias_delta: r.bias_delta,
        synergy_delta: r.synergy_delta,
        opposition_delta: r.opposition_delta,
        similar_familiar: similar_entries(model, &r.similar_familiar),
    }
}

async fn recommend(
    State(model): State<Shared>,
    payload: Result<Json<RecommendRequest>, JsonRejection>,
) -> ApiResult<RecommendResponse> {
    let req = body(payload)?;
    let mut draft = DraftState::new(resolve(&model, &req.ally)?, resolve(&model, &req.enemy)?);
    if let Some(pool) = &req.pool {
        draft = draft.with_pool(resolve(&model, pool)?);
    }
    let top_k = req.top_k.unwrap_or(DEFAULT_TOP_K);
    let response = match &req.familiar {
        None => {
            let picks = query::recommend_pick(&model, &draft, top_k).map_err(|e| core_error(&model, e))?;
            RecommendResponse {
                recommendations: picks.iter().map(|r| recommendation_entry(&model, r)).collect(),
                familiar_best: None,
            }
        }
        Some(familiar) => {
            draft = draft.with_familiar(resolve(&model, familiar)?);
            let sim_k = req.sim_k.unwrap_or(DEFAULT_SIM_K);
            let out = query::recommend_with_familiarity(&model, &draft, top_k, sim_k)
                .map_err(|e| core_error(&model, e))?;
            RecommendResponse {
                recommendations: out.picks.iter().map(|r| recommendation_entry(&model, r)).collect(),
                familiar_best: Some(out.familiar_best.as_ref().map(|r| recommendation_entry(&model, r))),
            }
        }
    };
    Ok(Json(response))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarQuery {
    pub avatar: String,
    #[serde(default)]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarResponse {
    pub avatar: String,
    pub similar: Vec<SimilarEntry>,
}

async fn similar(
    State(model): State<Shared>,
    query: Result<Query<SimilarQuery>, QueryRejection>,
) -> ApiResult<SimilarResponse> {
    let q = params(query)?;
    let id = resolve(&model, std::slice::from_ref(&q.avatar))?[0];
    let ranked = query::similar_avatars(&model, id, q.top_k.unwrap_or(DEFAULT_TOP_K))
        .map_err(|e| core_error(&model, e))?;
    Ok(Json(SimilarResponse {
        avatar: q.avatar,
        similar: similar_entries(&model, &ranked),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairQuery {
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResponse {
    pub a: String,
    pub b: String,
    pub synergy: f64,
    pub opposition: f64,
    pub similarity: f64,
}

async fn pair(State(model): State<Shared>, query: Result<Query<PairQuery>, QueryRejection>) -> ApiResult<PairResponse> {
    let q = params(query)?;
    let ids = resolve(&model, &[q.a.clone(), q.b.clone()])?;
    let e = query::explain_pair(&model, ids[0], ids[1]).map_err(|e| core_error(&model, e))?;
    Ok(Json(PairResponse {
        a: q.a,
        b: q.b,
        synergy: e.synergy,
        opposition: e.opposition,
        similarity: e.similarity,
    }))
}
