//! HTTP façade over a loaded checkpoint.
//!
//! Endpoints:
//!
//! * `POST /api/upload?domain=real|syn` with PNG or JPEG bytes. Returns
//!   `{token, width, height, domain}`. Images are cropped to multiples of 4
//!   (bottom/right) before encoding, and the reported size is the cropped one.
//!   Undecodable bodies give 415; bodies over the byte limit or images with a
//!   side over [`ServeConfig::max_side`] give 413; images too small for the
//!   networks give 422.
//! * `GET /api/enhance?token=…&alpha=…` returns PNG bytes of the image decoded
//!   with `(1 − α)·z + α·T(z)`. α defaults to 1 and must lie in
//!   [[`ALPHA_MIN`], [`ALPHA_MAX`]] (422 otherwise); unknown tokens give 404.
//! * `GET /api/latents?token=…` returns `{style, clean_style, domain}`. Reals
//!   are written in shortest round-trip form.
//! * `GET /api/health` returns `{checkpoint_id, model_config_hash}`.
//!
//! Uploads live in an LRU cache of [`ServeConfig::cache_capacity`] entries and
//! are lost on restart.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lru::LruCache;
use rand::RngCore;
use serde::Serialize;
use sha2::{Digest, Sha256};
use tower_http::cors::{AllowOrigin, CorsLayer};
use uwstyle_core::latentlab::manipulate_style;
use uwstyle_core::model::{Domain, Model, StyleLatent};
use uwstyle_core::{checkpoint, Image};
use uwstyle_tensor::Tensor;

pub const ALPHA_MIN: f64 = -0.5;
pub const ALPHA_MAX: f64 = 1.5;
pub const DEFAULT_PORT: u16 = 8787;
/// Environment variable read when no port is given explicitly.
pub const PORT_ENV: &str = "UWSTYLE_PORT";

#[derive(Clone, Debug, PartialEq)]
pub struct ServeConfig {
    pub cache_capacity: usize,
    pub max_side: usize,
    pub max_upload_bytes: usize,
    /// `None` allows any origin.
    pub allowed_origin: Option<String>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        Self {
            cache_capacity: 64,
            max_side: 1024,
            max_upload_bytes: 8 << 20,
            allowed_origin: None,
        }
    }
}

struct Upload {
    domain: Domain,
    content: Tensor<f32>,
    style: StyleLatent,
    clean_style: StyleLatent,
}

pub struct AppState {
    model: Model,
    config: ServeConfig,
    checkpoint_id: String,
    model_config_hash: String,
    cache: Mutex<LruCache<String, Arc<Upload>>>,
}

fn short_hash(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

impl AppState {
    pub fn new(model: Model, checkpoint_id: String, config: ServeConfig) -> Self {
        let model_toml = toml::to_string(model.config()).unwrap_or_default();
        let capacity = NonZeroUsize::new(config.cache_capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            model_config_hash: short_hash(model_toml.as_bytes()),
            model,
            config,
            checkpoint_id,
            cache: Mutex::new(LruCache::new(capacity)),
        }
    }

    /// The checkpoint id is a hash of the archive bytes.
    pub fn from_checkpoint(path: &Path, config: ServeConfig) -> uwstyle_core::Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| {
            uwstyle_core::Error::Data(format!("{}: {e}", path.display()))
        })?;
        let state = checkpoint::from_bytes(&bytes)?;
        Ok(Self::new(state.model, short_hash(&bytes), config))
    }

    pub fn checkpoint_id(&self) -> &str {
        &self.checkpoint_id
    }

    fn lookup(&self, token: &str) -> Option<Arc<Upload>> {
        self.cache.lock().unwrap().get(token).cloned()
    }

    fn prepare(&self, img: &Image, domain: Domain) -> uwstyle_core::Result<Upload> {
        let content = self.model.content_of(img)?;
        let style = self.model.style_of(img, domain.into())?;
        let clean_style = self.model.transform_latent(&style)?;
        Ok(Upload {
            domain,
            content,
            style,
            clean_style,
        })
    }
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Body {
            error: String,
        }
        (self.0, Json(Body { error: self.1 })).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

#[derive(Serialize)]
struct UploadReply {
    token: String,
    width: usize,
    height: usize,
    domain: &'static str,
}

fn new_token() -> String {
    let mut raw = [0u8; 16];
    rand::rng().fill_bytes(&mut raw);
    hex::encode(raw)
}

async fn upload(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Json<UploadReply>, ApiError> {
    let domain = match q.get("domain") {
        Some(d) => d
            .parse::<Domain>()
            .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?,
        None => Domain::Real,
    };
    let unsupported = |e: uwstyle_core::Error| ApiError(StatusCode::UNSUPPORTED_MEDIA_TYPE, e.to_string());
    let (h, w) = Image::probe_size(&body).map_err(unsupported)?;
    let max = state.config.max_side;
    if h > max || w > max {
        return Err(ApiError(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("image {h}x{w} exceeds {max}x{max}"),
        ));
    }
    let worker = state.clone();
    let prepared = tokio::task::spawn_blocking(move || {
        let img = Image::decode(&body).map_err(unsupported)?;
        let img = worker
            .model
            .fit_input(&img)
            .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let upload = worker.prepare(&img, domain).map_err(internal)?;
        Ok::<_, ApiError>((img.height(), img.width(), upload))
    })
    .await
    .map_err(internal)??;
    let (height, width, upload) = prepared;
    let token = new_token();
    state.cache.lock().unwrap().put(token.clone(), Arc::new(upload));
    Ok(Json(UploadReply {
        token,
        width,
        height,
        domain: domain.as_str(),
    }))
}

fn token_entry(state: &AppState, q: &HashMap<String, String>) -> Result<Arc<Upload>, ApiError> {
    let token = q
        .get("token")
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "missing token".into()))?;
    state
        .lookup(token)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "unknown token".into()))
}

/// Parse and range-check α; absent means 1.
pub fn parse_alpha(raw: Option<&str>) -> Result<f64, String> {
    let alpha = match raw {
        None => 1.0,
        Some(s) => s.trim().parse::<f64>().map_err(|_| format!("alpha {s:?} is not a number"))?,
    };
    if !(ALPHA_MIN..=ALPHA_MAX).contains(&alpha) {
        return Err(format!("alpha {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]"));
    }
    Ok(alpha)
}

async fn enhance(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let entry = token_entry(&state, &q)?;
    let alpha = parse_alpha(q.get("alpha").map(String::as_str))
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e))?;
    let png = tokio::task::spawn_blocking(move || {
        let z = manipulate_style(&entry.style, &entry.clean_style, alpha)?;
        state.model.decode_latents(&entry.content, &z)?.encode_png()
    })
    .await
    .map_err(internal)?
    .map_err(internal)?;
    Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], png).into_response())
}

#[derive(Serialize)]
struct LatentsReply {
    style: Vec<f64>,
    clean_style: Vec<f64>,
    domain: &'static str,
}

async fn latents(
    State(state): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> Result<Json<LatentsReply>, ApiError> {
    let entry = token_entry(&state, &q)?;
    Ok(Json(LatentsReply {
        style: entry.style.vector.clone(),
        clean_style: entry.clean_style.vector.clone(),
        domain: entry.domain.as_str(),
    }))
}

#[derive(Serialize)]
struct HealthReply {
    checkpoint_id: String,
    model_config_hash: String,
}

async fn health(State(state): State<Arc<AppState>>) -> Json<HealthReply> {
    Json(HealthReply {
        checkpoint_id: state.checkpoint_id.clone(),
        model_config_hash: state.model_config_hash.clone(),
    })
}

pub fn router(state: Arc<AppState>) -> Router {
    let origin = match &state.config.allowed_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([axum::http::Method::GET, axum::http::Method::POST])
        .allow_headers([header::CONTENT_TYPE]);
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/api/upload", post(upload))
        .route("/api/enhance", get(enhance))
        .route("/api/latents", get(latents))
        .route("/api/health", get(health))
        .layer(DefaultBodyLimit::max(limit))
        .layer(cors)
        .with_state(state)
}

/// `explicit`, else [`PORT_ENV`], else [`DEFAULT_PORT`].
pub fn resolve_port(explicit: Option<u16>) -> Result<u16, String> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v.parse().map_err(|_| format!("{PORT_ENV}={v:?} is not a port")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

/// Serve until the process is stopped.
pub fn run_blocking(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(state))).await
    })
}
