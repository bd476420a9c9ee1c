//! HTTP + JSON labeling service. An analyst creates a session over a
//! registered dataset, repeatedly fetches the pending query and answers it;
//! each answer re-learns the weights and persists the session.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ifaad_core::{AadConfig, FeedbackLoop, ForestParams, Label, SparseNodeVector, WeightScheme};
use serde::{Deserialize, Serialize};

use crate::data::{make_synthetic_2d, parse_csv, parse_features_csv, CsvSchema, LabeledDataset};
use crate::harness::build_forest_parallel;
use crate::session::{parse_scheme, ConfigRecord, ForestRecord, SessionFile};
use crate::Error;

/// Id of the dataset registered at startup.
pub const SYNTHETIC_ID: &str = "synthetic";

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} {id:?}"))
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Core(ifaad_core::Error::BudgetExhausted | ifaad_core::Error::AllLabeled) => StatusCode::CONFLICT,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            Error::Core(ifaad_core::Error::NonFiniteObjective { .. }) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self::new(status, e.code(), e.to_string())
    }
}

impl From<ifaad_core::Error> for ApiError {
    fn from(e: ifaad_core::Error) -> Self {
        Error::Core(e).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Where the service keeps its files. `None` keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub data_dir: Option<PathBuf>,
    pub session_dir: Option<PathBuf>,
}

/// `(num_trees, subsample_size, scheme tag, seed)`.
type ForestKey = (usize, usize, u8, u64);

#[derive(Debug)]
struct DatasetEntry {
    id: String,
    dataset: LabeledDataset,
    /// Node vectors per forest configuration, shared by sessions.
    vectors: Mutex<HashMap<ForestKey, Arc<[SparseNodeVector]>>>,
}

impl DatasetEntry {
    fn new(id: String, dataset: LabeledDataset) -> Self {
        Self {
            id,
            dataset,
            vectors: Mutex::new(HashMap::new()),
        }
    }

    fn vectors_for(&self, params: &ForestParams) -> Result<Arc<[SparseNodeVector]>, Error> {
        let key = (params.num_trees, params.subsample_size, params.scheme.tag(), params.seed);
        if let Some(v) = self.vectors.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let forest = build_forest_parallel(&self.dataset, params)?;
        let vectors: Arc<[SparseNodeVector]> = forest.traverse_all(&self.dataset.instances)?.into();
        self.vectors.lock().unwrap().insert(key, vectors.clone());
        Ok(vectors)
    }
}

#[derive(Debug)]
struct SessionInner {
    feedback: FeedbackLoop,
    pending: Option<usize>,
    updated: u64,
}

#[derive(Debug)]
struct Session {
    id: String,
    dataset: Arc<DatasetEntry>,
    forest: ForestParams,
    created: u64,
    /// Held for the whole of a label submission.
    inner: Mutex<SessionInner>,
    /// Last committed view; readers never wait on a running update.
    snapshot: RwLock<Arc<SessionState>>,
}

#[derive(Debug, Default)]
pub struct AppState {
    config: ServiceConfig,
    datasets: RwLock<HashMap<String, Arc<DatasetEntry>>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn new_id(prefix: &str) -> String {
    format!("{prefix}-{}", uuid::Uuid::new_v4().simple())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetMeta {
    name: String,
    schema: Option<CsvSchema>,
}

impl AppState {
    /// Registers the built-in synthetic dataset, then reloads any datasets
    /// and sessions persisted in the configured directories.
    pub fn open(config: ServiceConfig) -> Result<Arc<Self>, Error> {
        let state = Arc::new(Self {
            config,
            ..Self::default()
        });
        state.insert_dataset(SYNTHETIC_ID.into(), make_synthetic_2d(500, 15, 0));
        if let Some(dir) = &state.config.data_dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                let Some(id) = path
                    .file_name()
                    .and_then(|n| n.to_str())
                    .and_then(|n| n.strip_suffix(".meta.json"))
                else {
                    continue;
                };
                let meta: DatasetMeta = serde_json::from_slice(&fs::read(&path)?)?;
                let csv = fs::read_to_string(dir.join(format!("{id}.csv")))?;
                let ds = decode_dataset(&csv, meta.schema.as_ref(), &meta.name)?;
                state.insert_dataset(id.to_owned(), ds);
            }
        }
        if let Some(dir) = &state.config.session_dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("json") {
                    continue;
                }
                let file = SessionFile::load(&path)?;
                state.restore_session(file)?;
            }
        }
        Ok(state)
    }

    fn insert_dataset(&self, id: String, dataset: LabeledDataset) -> Arc<DatasetEntry> {
        let entry = Arc::new(DatasetEntry::new(id.clone(), dataset));
        self.datasets.write().unwrap().insert(id, entry.clone());
        entry
    }

    fn dataset(&self, id: &str) -> Result<Arc<DatasetEntry>, ApiError> {
        self.datasets
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset", id))
    }

    fn session(&self, id: &str) -> Result<Arc<Session>, ApiError> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn restore_session(&self, file: SessionFile) -> Result<(), Error> {
        let dataset = self
            .datasets
            .read()
            .unwrap()
            .get(&file.dataset_id)
            .cloned()
            .ok_or_else(|| Error::Format(format!("session {} references unknown dataset", file.session_id)))?;
        let forest = file.forest.params()?;
        let vectors = dataset.vectors_for(&forest)?;
        let feedback = file.restore(vectors)?;
        let session = Session::new(file.session_id.clone(), dataset, forest, feedback, file.created, file.updated);
        self.sessions.write().unwrap().insert(file.session_id, Arc::new(session));
        Ok(())
    }

    fn persist(&self, session: &Session, inner: &SessionInner) -> Result<(), Error> {
        if let Some(dir) = &self.config.session_dir {
            SessionFile::snapshot(
                &session.id,
                &session.dataset.id,
                &session.forest,
                &inner.feedback,
                session.created,
                inner.updated,
            )
            .save(&dir.join(format!("{}.json", session.id)))?;
        }
        Ok(())
    }
}

fn decode_dataset(csv: &str, schema: Option<&CsvSchema>, name: &str) -> Result<LabeledDataset, Error> {
    match schema {
        Some(schema) => parse_csv(csv, schema, name),
        None => parse_features_csv(csv, name),
    }
}

impl Session {
    fn new(id: String, dataset: Arc<DatasetEntry>, forest: ForestParams, feedback: FeedbackLoop, created: u64, updated: u64) -> Self {
        let pending = feedback.next_query().ok();
        let inner = SessionInner {
            feedback,
            pending,
            updated,
        };
        let view = SessionState::build(&id, &dataset, &forest, &inner, created);
        Self {
            id,
            dataset,
            forest,
            created,
            inner: Mutex::new(inner),
            snapshot: RwLock::new(Arc::new(view)),
        }
    }

    fn commit(&self, inner: &SessionInner) {
        let view = SessionState::build(&self.id, &self.dataset, &self.forest, inner, self.created);
        *self.snapshot.write().unwrap() = Arc::new(view);
    }

    fn view(&self) -> Arc<SessionState> {
        self.snapshot.read().unwrap().clone()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Feature {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct NextQuery {
    pub session_id: String,
    pub instance_id: usize,
    pub features: Vec<Feature>,
    pub score: f64,
    pub iteration: usize,
    pub budget_remaining: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub instance_id: usize,
    pub label: String,
    /// Cumulative anomalies after this label.
    pub anomalies_found: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SessionState {
    pub session_id: String,
    pub dataset_id: String,
    /// `active` or `exhausted`.
    pub status: String,
    pub iteration: usize,
    pub budget: usize,
    pub budget_remaining: usize,
    pub anomalies_found: usize,
    pub weight_norm: f64,
    pub config: ConfigRecord,
    pub forest: ForestRecord,
    pub pending: Option<NextQuery>,
    pub history: Vec<HistoryEntry>,
    /// Discovery curve: anomalies found after each query.
    pub curve: Vec<usize>,
    pub created: u64,
    pub updated: u64,
}

impl SessionState {
    fn build(id: &str, dataset: &DatasetEntry, forest: &ForestParams, inner: &SessionInner, created: u64) -> Self {
        let fb = &inner.feedback;
        let state = fb.state();
        let mut found = 0;
        let history: Vec<HistoryEntry> = state
            .query_history
            .iter()
            .enumerate()
            .map(|(i, &(instance_id, label))| {
                found += usize::from(label.is_anomaly());
                HistoryEntry {
                    iteration: i + 1,
                    instance_id,
                    label: label.as_str().into(),
                    anomalies_found: found,
                }
            })
            .collect();
        Self {
            session_id: id.into(),
            dataset_id: dataset.id.clone(),
            status: if inner.pending.is_some() { "active" } else { "exhausted" }.into(),
            iteration: state.iteration,
            budget: fb.config().budget,
            budget_remaining: fb.remaining_budget(),
            anomalies_found: found,
            weight_norm: state.weights.norm(),
            config: (*fb.config()).into(),
            forest: ForestRecord::new(forest),
            pending: next_payload(id, &dataset.dataset, inner),
            curve: history.iter().map(|h| h.anomalies_found).collect(),
            history,
            created,
            updated: inner.updated,
        }
    }
}

fn next_payload(session_id: &str, ds: &LabeledDataset, inner: &SessionInner) -> Option<NextQuery> {
    let id = inner.pending?;
    let fb = &inner.feedback;
    Some(NextQuery {
        session_id: session_id.into(),
        instance_id: id,
        features: ds
            .feature_names
            .iter()
            .zip(&ds.instances[id].features)
            .map(|(name, &value)| Feature {
                name: name.clone(),
                value,
            })
            .collect(),
        score: fb.score_of(id).unwrap_or(f64::NAN),
        iteration: fb.state().iteration,
        budget_remaining: fb.remaining_budget(),
    })
}

#[derive(Debug, Deserialize)]
pub struct UploadRequest {
    pub name: Option<String>,
    pub csv: String,
    /// Omit for an unlabeled file where every column is a feature.
    pub schema: Option<CsvSchema>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub name: String,
    pub instances: usize,
    pub dims: usize,
    pub feature_names: Vec<String>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
pub struct CreateSession {
    pub dataset_id: String,
    pub seed: Option<u64>,
    pub num_trees: Option<usize>,
    pub subsample_size: Option<usize>,
    /// `isolation` (default) or `leaf-depth`.
    pub scheme: Option<String>,
    pub tau: Option<f64>,
    pub c_a: Option<f64>,
    pub c_xi: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_steps: Option<usize>,
    pub budget: Option<usize>,
}

#[derive(Debug, Deserialize, Serialize)]
pub struct LabelRequest {
    pub instance_id: usize,
    pub label: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct LabelResponse {
    pub accepted: bool,
    pub iteration: usize,
    pub anomalies_found: usize,
    /// `(iteration, anomalies_found)` appended to the discovery curve.
    pub curve_point: (usize, usize),
    pub next: Option<NextQuery>,
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn upload_dataset(State(app): State<Arc<AppState>>, Json(req): Json<UploadRequest>) -> Result<(StatusCode, Json<DatasetInfo>), ApiError> {
    let name = req.name.clone().unwrap_or_else(|| "uploaded".into());
    let ds = decode_dataset(&req.csv, req.schema.as_ref(), &name)?;
    let id = new_id("d");
    if let Some(dir) = &app.config.data_dir {
        fs::write(dir.join(format!("{id}.csv")), &req.csv).map_err(Error::from)?;
        let meta = DatasetMeta {
            name: name.clone(),
            schema: req.schema,
        };
        fs::write(dir.join(format!("{id}.meta.json")), serde_json::to_vec(&meta).map_err(Error::from)?)
            .map_err(Error::from)?;
    }
    let info = DatasetInfo {
        dataset_id: id.clone(),
        name,
        instances: ds.len(),
        dims: ds.dims(),
        feature_names: ds.feature_names.clone(),
    };
    app.insert_dataset(id, ds);
    Ok((StatusCode::CREATED, Json(info)))
}

async fn create_session(State(app): State<Arc<AppState>>, Json(req): Json<CreateSession>) -> Result<(StatusCode, Json<SessionState>), ApiError> {
    let dataset = app.dataset(&req.dataset_id)?;
    let defaults = AadConfig::default();
    let cfg = AadConfig {
        tau: req.tau.unwrap_or(defaults.tau),
        c_a: req.c_a.unwrap_or(defaults.c_a),
        c_xi: req.c_xi.unwrap_or(defaults.c_xi),
        learning_rate: req.learning_rate.unwrap_or(defaults.learning_rate),
        max_steps: req.max_steps.unwrap_or(defaults.max_steps),
        convergence_tol: defaults.convergence_tol,
        budget: req.budget.unwrap_or(defaults.budget.min(dataset.dataset.len())),
    };
    cfg.validate()?;
    let scheme = match &req.scheme {
        Some(s) => parse_scheme(s).ok_or_else(|| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_config", format!("unknown scheme {s:?}"))
        })?,
        None => WeightScheme::Isolation,
    };
    let forest = ForestParams {
        num_trees: req.num_trees.unwrap_or(100),
        subsample_size: req.subsample_size.unwrap_or(256),
        scheme,
        seed: req.seed.unwrap_or(0),
    };
    let app2 = app.clone();
    let session = tokio::task::spawn_blocking(move || -> Result<Arc<Session>, ApiError> {
        let vectors = dataset.vectors_for(&forest)?;
        let feedback = FeedbackLoop::new(vectors, cfg)?;
        let t = now();
        let session = Arc::new(Session::new(new_id("s"), dataset, forest, feedback, t, t));
        app2.persist(&session, &session.inner.lock().unwrap())?;
        Ok(session)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    app.sessions.write().unwrap().insert(session.id.clone(), session.clone());
    Ok((StatusCode::CREATED, Json((*session.view()).clone())))
}

async fn get_next(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<NextQuery> {
    let session = app.session(&id)?;
    session
        .view()
        .pending
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "budget_exhausted", "budget exhausted"))
}

async fn submit_label(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<LabelRequest>,
) -> ApiResult<LabelResponse> {
    let session = app.session(&id)?;
    let label = Label::parse(&req.label).ok_or_else(|| {
        ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_label",
            format!("label must be \"anomaly\" or \"nominal\", got {:?}", req.label),
        )
    })?;
    let app2 = app.clone();
    tokio::task::spawn_blocking(move || {
        let mut inner = session.inner.lock().unwrap();
        match inner.pending {
            None => return Err(ApiError::new(StatusCode::CONFLICT, "budget_exhausted", "budget exhausted")),
            Some(p) if p != req.instance_id => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "stale_query",
                    format!("instance {} is not the pending query (pending: {p})", req.instance_id),
                ))
            }
            Some(_) => {}
        }
        inner.feedback.submit(req.instance_id, label)?;
        inner.pending = inner.feedback.next_query().ok();
        inner.updated = now();
        app2.persist(&session, &inner)?;
        session.commit(&inner);
        let view = session.view();
        Ok(Json(LabelResponse {
            accepted: true,
            iteration: view.iteration,
            anomalies_found: view.anomalies_found,
            curve_point: (view.iteration, view.anomalies_found),
            next: view.pending.clone(),
        }))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<SessionState> {
    let session = app.session(&id)?;
    Ok(Json((*session.view()).clone()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/datasets", post(upload_dataset))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/next", get(get_next))
        .route("/sessions/{id}/label", post(submit_label))
        .route("/sessions/{id}/state", get(get_state))
        .with_state(state)
}

pub async fn serve(bind: &str, config: ServiceConfig) -> anyhow::Result<()> {
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
