//! Read-only HTTP API over a gazeboard store, versioned under `/api/v1`.
//!
//! | method | path                     | query                                                  |
//! |--------|--------------------------|--------------------------------------------------------|
//! | GET    | `/sessions`              | `offset`, `limit`                                      |
//! | GET    | `/learners`              | `session`, `offset`, `limit`                           |
//! | GET    | `/profiles`              | `session`, `learner`, `scope`, `offset`, `limit`       |
//! | GET    | `/boxplot`               | `session`, `param`, `scope`, `by`, `sex`, `group`, `html_level` |
//! | GET    | `/anova`                 | `session`, `param`, `factor`, `scope`                  |
//! | GET    | `/heatmap/{learner}`     | `session`, `activity`                                  |
//! | GET    | `/reports`               | `session`                                              |
//! | GET    | `/models`                | `session`                                              |
//! | POST   | `/models/select`         | body `{"session", "name"}`                             |
//! | POST   | `/predict`               | body `{"features": [16 numbers], "session"?, "model"?}` |
//!
//! `session` may be omitted when the store holds exactly one session.
//! Listings return `{"total", "offset", "limit", "items"}`. Chart payloads
//! carry `{"en", "es"}` labels. Errors return `{"error": message}` with
//! 404 for unknown sessions, learners or records and 400 for bad filters.

pub mod labels;

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gazeboard::features::{ActivityProfile, ProfileParam, ProfileScope, N_FEATURES};
use gazeboard::ingest::{LearnerMeta, QualityReport};
use gazeboard::ml::{render_table, EvalReport, Model, Predictor};
use gazeboard::pipeline::{factor_level, load_meta, StoredModel};
use gazeboard::stats::{box_summary, AnovaResult, BoxSummary, Factor};
use gazeboard::store::{Key, Kind, Store};
use gazeboard::Error;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use serde_json::{json, Value};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

use labels::{label, Label};

pub const DEFAULT_LIMIT: usize = 100;
pub const MAX_LIMIT: usize = 1000;

struct ActiveModel {
    session: String,
    name: String,
    model: Model,
}

pub struct AppState {
    store: Store,
    active: RwLock<Option<Arc<ActiveModel>>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        AppState { store, active: RwLock::new(None) }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Config(_) | Error::Domain(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError { status, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Shared = Arc<AppState>;

#[derive(Debug, Serialize)]
pub struct Page<T> {
    pub total: usize,
    pub offset: usize,
    pub limit: usize,
    pub items: Vec<T>,
}

fn page<T>(items: Vec<T>, offset: Option<usize>, limit: Option<usize>) -> ApiResult<Page<T>> {
    let limit = limit.unwrap_or(DEFAULT_LIMIT);
    if limit == 0 || limit > MAX_LIMIT {
        return Err(ApiError::bad_request(format!("limit must be in 1..={MAX_LIMIT}")));
    }
    let offset = offset.unwrap_or(0);
    let total = items.len();
    let items = items.into_iter().skip(offset).take(limit).collect();
    Ok(Page { total, offset, limit, items })
}

fn parse<T: std::str::FromStr<Err = String>>(what: &str, raw: &str) -> ApiResult<T> {
    raw.parse().map_err(|e: String| ApiError::bad_request(format!("{what}: {e}")))
}

fn resolve_session(state: &AppState, session: Option<&str>) -> ApiResult<String> {
    let sessions = state.store.sessions()?;
    match session {
        Some(s) if sessions.iter().any(|x| x == s) => Ok(s.to_string()),
        Some(s) => Err(ApiError::not_found(format!("unknown session {s:?}"))),
        None if sessions.len() == 1 => Ok(sessions[0].clone()),
        None => Err(ApiError::bad_request("session parameter required")),
    }
}

fn load_all<T: serde::de::DeserializeOwned>(state: &AppState, kind: Kind, session: &str) -> ApiResult<Vec<T>> {
    let keys = state.store.list(kind, session)?;
    Ok(keys.iter().map(|k| state.store.get(kind, k)).collect::<Result<_, _>>()?)
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    session: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn sessions(State(st): State<Shared>, Query(q): Query<PageQuery>) -> ApiResult<Json<Page<String>>> {
    Ok(Json(page(st.store.sessions()?, q.offset, q.limit)?))
}

#[derive(Debug, Serialize)]
struct LearnerView {
    #[serde(flatten)]
    meta: LearnerMeta,
    quality: Option<QualityReport>,
}

async fn learners(State(st): State<Shared>, Query(q): Query<PageQuery>) -> ApiResult<Json<Page<LearnerView>>> {
    let session = resolve_session(&st, q.session.as_deref())?;
    let meta = load_meta(&st.store, &session)?;
    let mut items = Vec::new();
    for l in meta.learners {
        let key = Key::learner(&session, &l.participant_id, "quality");
        let quality = if st.store.contains(Kind::Quality, &key) { Some(st.store.get(Kind::Quality, &key)?) } else { None };
        items.push(LearnerView { meta: l, quality });
    }
    Ok(Json(page(items, q.offset, q.limit)?))
}

#[derive(Debug, Deserialize)]
struct ProfileQuery {
    session: Option<String>,
    learner: Option<String>,
    scope: Option<String>,
    offset: Option<usize>,
    limit: Option<usize>,
}

async fn profiles(State(st): State<Shared>, Query(q): Query<ProfileQuery>) -> ApiResult<Json<Page<ActivityProfile>>> {
    let session = resolve_session(&st, q.session.as_deref())?;
    let scope: Option<ProfileScope> = q.scope.as_deref().map(|s| parse("scope", s)).transpose()?;
    if let Some(l) = &q.learner {
        if load_meta(&st.store, &session)?.learner(l).is_none() {
            return Err(ApiError::not_found(format!("unknown learner {l:?}")));
        }
    }
    let items: Vec<ActivityProfile> = load_all::<ActivityProfile>(&st, Kind::Profile, &session)?
        .into_iter()
        .filter(|p| q.learner.as_ref().is_none_or(|l| &p.participant_id == l))
        .filter(|p| scope.as_ref().is_none_or(|s| &p.scope == s))
        .collect();
    Ok(Json(page(items, q.offset, q.limit)?))
}

#[derive(Debug, Deserialize)]
struct BoxplotQuery {
    session: Option<String>,
    param: String,
    scope: Option<String>,
    by: Option<String>,
    sex: Option<String>,
    group: Option<String>,
    html_level: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct BoxSeries {
    pub level: String,
    pub label: Label,
    pub summary: BoxSummary,
}

async fn boxplot(State(st): State<Shared>, Query(q): Query<BoxplotQuery>) -> ApiResult<Json<Value>> {
    let session = resolve_session(&st, q.session.as_deref())?;
    let param: ProfileParam = parse("param", &q.param)?;
    let scope: ProfileScope = parse("scope", q.scope.as_deref().unwrap_or("session"))?;
    let by: Option<Factor> = q.by.as_deref().map(|s| parse("by", s)).transpose()?;
    let meta = load_meta(&st.store, &session)?;
    let filters = [(Factor::Sex, &q.sex), (Factor::Group, &q.group), (Factor::HtmlLevel, &q.html_level)];
    let mut levels: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for p in load_all::<ActivityProfile>(&st, Kind::Profile, &session)? {
        if p.scope != scope {
            continue;
        }
        let Some(l) = meta.learner(&p.participant_id) else { continue };
        if filters.iter().any(|(f, want)| want.as_ref().is_some_and(|w| &factor_level(l, *f) != w)) {
            continue;
        }
        let level = by.map_or_else(|| "all".to_string(), |f| factor_level(l, f));
        levels.entry(level).or_default().push(param.value(&p));
    }
    let series: Vec<BoxSeries> = levels
        .into_iter()
        .filter_map(|(level, vals)| {
            box_summary(&vals).map(|summary| BoxSeries { label: label(&level), level, summary })
        })
        .collect();
    Ok(Json(json!({
        "session": session,
        "param": param.as_str(),
        "scope": scope.label(),
        "by": by.map(|f| f.as_str()),
        "labels": {
            "title": label("boxplot"),
            "param": label(param.as_str()),
            "scope": label(&scope.label()),
            "by": by.map(|f| label(f.as_str())),
        },
        "whiskers": "1.5 IQR",
        "series": series,
    })))
}

#[derive(Debug, Deserialize)]
struct AnovaQuery {
    session: Option<String>,
    param: Option<String>,
    factor: Option<String>,
    scope: Option<String>,
}

async fn anova(State(st): State<Shared>, Query(q): Query<AnovaQuery>) -> ApiResult<Json<Value>> {
    let session = resolve_session(&st, q.session.as_deref())?;
    let param: Option<ProfileParam> = q.param.as_deref().map(|s| parse("param", s)).transpose()?;
    let factor: Option<Factor> = q.factor.as_deref().map(|s| parse("factor", s)).transpose()?;
    let scope: Option<ProfileScope> = q.scope.as_deref().map(|s| parse("scope", s)).transpose()?;
    let items: Vec<Value> = load_all::<AnovaResult>(&st, Kind::Anova, &session)?
        .into_iter()
        .filter(|a| param.is_none_or(|p| a.parameter == p.as_str()))
        .filter(|a| factor.is_none_or(|f| a.factor == f))
        .filter(|a| scope.as_ref().is_none_or(|s| a.scope == s.label()))
        .map(|a| {
            json!({
                "labels": {
                    "title": label("anova"),
                    "param": label(&a.parameter),
                    "factor": label(a.factor.as_str()),
                    "levels": a.levels.iter().map(|l| label(l)).collect::<Vec<_>>(),
                },
                "result": a,
            })
        })
        .collect();
    Ok(Json(json!({ "session": session, "items": items })))
}

#[derive(Debug, Deserialize)]
struct HeatmapQuery {
    session: Option<String>,
    activity: Option<String>,
}

async fn heatmap(State(st): State<Shared>, Path(learner): Path<String>, Query(q): Query<HeatmapQuery>) -> ApiResult<Response> {
    let session = resolve_session(&st, q.session.as_deref())?;
    if load_meta(&st.store, &session)?.learner(&learner).is_none() {
        return Err(ApiError::not_found(format!("unknown learner {learner:?}")));
    }
    let activity = q.activity.unwrap_or_else(|| "all".into());
    let key = Key::learner(&session, &learner, &activity);
    let raw = RawValue::from_string(st.store.get_payload(Kind::Heatmap, &key)?).map_err(Error::from)?;
    let body = json!({
        "session": session,
        "learner": learner,
        "activity": activity,
        "labels": { "title": label("heatmap"), "activity": label(&activity) },
        "grid": raw,
    });
    Ok(Json(body).into_response())
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn reports(State(st): State<Shared>, Query(q): Query<SessionQuery>) -> ApiResult<Json<Value>> {
    let session = resolve_session(&st, q.session.as_deref())?;
    let keys = st.store.list(Kind::Report, &session)?;
    let mut items = Vec::new();
    for k in keys {
        let r: EvalReport = st.store.get(Kind::Report, &k)?;
        items.push(json!({
            "name": k.name,
            "labels": {
                "title": label("report"),
                "video_watching": label("video_watching"),
                "reading": label("reading"),
            },
            "table": render_table(std::slice::from_ref(&r)),
            "report": r,
        }));
    }
    Ok(Json(json!({ "session": session, "items": items })))
}

async fn models(State(st): State<Shared>, Query(q): Query<SessionQuery>) -> ApiResult<Json<Value>> {
    let session = resolve_session(&st, q.session.as_deref())?;
    let names: Vec<String> = st.store.list(Kind::Model, &session)?.into_iter().map(|k| k.name).collect();
    let active = st.active.read().expect("model lock").as_ref().map(|a| json!({ "session": a.session, "name": a.name }));
    Ok(Json(json!({ "session": session, "models": names, "active": active })))
}

fn load_model(st: &AppState, session: &str, name: &str) -> ApiResult<ActiveModel> {
    let stored: StoredModel = st.store.get(Kind::Model, &Key::session(session, name))?;
    Ok(ActiveModel { session: session.into(), name: name.into(), model: stored.model()? })
}

#[derive(Debug, Deserialize)]
struct SelectBody {
    session: Option<String>,
    name: String,
}

async fn select_model(State(st): State<Shared>, Json(body): Json<SelectBody>) -> ApiResult<Json<Value>> {
    let session = resolve_session(&st, body.session.as_deref())?;
    let active = Arc::new(load_model(&st, &session, &body.name)?);
    *st.active.write().expect("model lock") = Some(active);
    Ok(Json(json!({ "session": session, "active": body.name })))
}

#[derive(Debug, Deserialize)]
struct PredictBody {
    features: Vec<f64>,
    session: Option<String>,
    model: Option<String>,
}

async fn predict(State(st): State<Shared>, Json(body): Json<PredictBody>) -> ApiResult<Json<Value>> {
    let x: [f64; N_FEATURES] = body
        .features
        .as_slice()
        .try_into()
        .map_err(|_| ApiError::bad_request(format!("expected {N_FEATURES} features, got {}", body.features.len())))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ApiError::bad_request("features must be finite"));
    }
    let model = match (&body.model, st.active.read().expect("model lock").clone()) {
        (None, Some(active)) => active,
        (name, _) => {
            let session = resolve_session(&st, body.session.as_deref())?;
            let name = match name {
                Some(n) => n.clone(),
                None => st
                    .store
                    .list(Kind::Model, &session)?
                    .into_iter()
                    .next()
                    .map(|k| k.name)
                    .ok_or_else(|| ApiError::not_found(format!("no models in session {session:?}")))?,
            };
            Arc::new(load_model(&st, &session, &name)?)
        }
    };
    let p = model.model.predict(&x);
    Ok(Json(json!({
        "session": model.session,
        "model": model.name,
        "label": p.label.as_str(),
        "score": p.score,
        "labels": { "title": label("prediction"), "label": label(p.label.as_str()) },
    })))
}

/// The `/api/v1` router. `allowed_origin` is a CORS origin or `*`.
pub fn router(state: Shared, allowed_origin: &str) -> Router {
    let origin = if allowed_origin == "*" {
        AllowOrigin::any()
    } else {
        AllowOrigin::exact(HeaderValue::from_str(allowed_origin).unwrap_or(HeaderValue::from_static("null")))
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    let api = Router::new()
        .route("/sessions", get(sessions))
        .route("/learners", get(learners))
        .route("/profiles", get(profiles))
        .route("/boxplot", get(boxplot))
        .route("/anova", get(anova))
        .route("/heatmap/{learner}", get(heatmap))
        .route("/reports", get(reports))
        .route("/models", get(models))
        .route("/models/select", post(select_model))
        .route("/predict", post(predict))
        .with_state(state);
    Router::new().nest("/api/v1", api).layer(cors)
}

/// Serve until the process is stopped.
pub async fn serve(store: Store, bind: &str, allowed_origin: &str) -> std::io::Result<()> {
    let addr: SocketAddr = bind
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("bind address {bind:?}: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(AppState::new(store)), allowed_origin)).await
}
