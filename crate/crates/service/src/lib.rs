//! HTTP API over the gait knowledge store.
//!
//! One service instance holds one clinician session (the loaded patient and
//! the active demographic filter) and one live store. Store mutations go
//! through [`SharedStore::mutate`], which serializes writers and persists the
//! new state before publishing it. All bodies are JSON.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | `/patients/load` | trial document; returns curves and STPs |
//! | GET | `/patients/current` | the loaded patient |
//! | GET | `/match` | ranked categories for the loaded patient |
//! | GET, PUT | `/filter` | session demographic filter |
//! | GET | `/categories/{id}/parameters` | sixteen twin box plot rows |
//! | POST | `/categories/{id}/apply` | add the loaded patient, optional `{"subset": [ids]}` |
//! | POST | `/categories/{id}/reset` | recompute ranges, clear overrides |
//! | POST | `/categories/{id}/ranges/{stp_id}` | `{"min": .., "max": ..}` manual override |
//! | GET | `/tree` | categories, member counts, override markers |
//!
//! `/match` and `/categories/{id}/parameters` accept filter clauses as query
//! parameters (`gender=female,male`, `age=30..40`, `height=..`, `mass=..`).
//! Without any clause the session filter applies.

use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};

use gaitkb_core::analysis::parameter_explorer;
use gaitkb_core::eks::{DemographicFilter, EksError, FilterError, PatientRecord};
use gaitkb_core::grf::{process_trial, GrfError, ProcessedTrial};
use gaitkb_core::persist::{SharedStore, StoreError};
use gaitkb_core::report::{loaded_patient, match_report, to_wire, tree_report, LoadedPatient};
use gaitkb_core::trial::parse_trial;
use gaitkb_core::{EngineConfig, StpId};

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            message: message.into(),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = to_wire(&ErrorBody {
            error: &self.message,
        });
        (
            self.status,
            [(header::CONTENT_TYPE, "application/json")],
            body,
        )
            .into_response()
    }
}

impl From<EksError> for ApiError {
    fn from(e: EksError) -> Self {
        let status = match e {
            EksError::NotFound(_) => StatusCode::NOT_FOUND,
            EksError::Duplicate(_) => StatusCode::CONFLICT,
            EksError::InvalidRange(_) => StatusCode::BAD_REQUEST,
            EksError::InvalidRecord(_) => StatusCode::UNPROCESSABLE_ENTITY,
            EksError::Inconsistent(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Eks(e) => e.into(),
            StoreError::Persist(e) => {
                tracing::error!("store write failed: {e}");
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
        }
    }
}

impl From<GrfError> for ApiError {
    fn from(e: GrfError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string())
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
    }
}

fn json(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

struct LoadedSession {
    processed: ProcessedTrial,
    view: LoadedPatient,
}

#[derive(Default)]
struct Session {
    loaded: Option<Arc<LoadedSession>>,
    filter: DemographicFilter,
}

pub struct AppState {
    store: SharedStore,
    session: RwLock<Session>,
    config: EngineConfig,
}

impl AppState {
    /// The session starts with no patient and an empty filter.
    pub fn new(store: SharedStore, config: EngineConfig) -> AppState {
        AppState {
            store,
            session: RwLock::new(Session::default()),
            config,
        }
    }

    pub fn store(&self) -> &SharedStore {
        &self.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn loaded(&self) -> Result<Arc<LoadedSession>, ApiError> {
        self.session
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .loaded
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "no patient loaded"))
    }

    fn session_filter(&self) -> DemographicFilter {
        self.session
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .filter
            .clone()
    }

    /// Query clauses override the session filter; no clauses means the
    /// session filter.
    fn resolve_filter(&self, query: &[(String, String)]) -> Result<DemographicFilter, ApiError> {
        if query.is_empty() {
            return Ok(self.session_filter());
        }
        let mut filter = DemographicFilter::default();
        for (k, v) in query {
            filter.set_clause(k, v)?;
        }
        Ok(filter)
    }

    fn match_body(&self, filter: &DemographicFilter) -> Result<String, ApiError> {
        let loaded = self.loaded()?;
        let report = match_report(
            &loaded.processed.trial.patient,
            &loaded.processed.stps,
            &self.store.snapshot(),
            filter,
            self.config.epsilon,
        )
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Ok(to_wire(&report))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/patients/load", post(load_patient))
        .route("/patients/current", get(current_patient))
        .route("/match", get(get_match))
        .route("/filter", get(get_filter).put(put_filter))
        .route("/categories/{id}/parameters", get(get_parameters))
        .route("/categories/{id}/apply", post(apply))
        .route("/categories/{id}/reset", post(reset))
        .route("/categories/{id}/ranges/{stp_id}", post(override_range))
        .route("/tree", get(get_tree))
        .with_state(state)
}

type Shared = State<Arc<AppState>>;
type FilterQuery = Query<Vec<(String, String)>>;

async fn load_patient(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "body is not UTF-8"))?;
    let trial = parse_trial(text)?;
    let processed = process_trial(trial, &state.config.segmentation)?;
    let view = loaded_patient(&processed)?;
    let body = to_wire(&view);
    state
        .session
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .loaded = Some(Arc::new(LoadedSession { processed, view }));
    Ok(json(body))
}

async fn current_patient(State(state): Shared) -> Result<Response, ApiError> {
    Ok(json(to_wire(&state.loaded()?.view)))
}

async fn get_match(State(state): Shared, Query(query): FilterQuery) -> Result<Response, ApiError> {
    let filter = state.resolve_filter(&query)?;
    Ok(json(state.match_body(&filter)?))
}

async fn get_filter(State(state): Shared) -> Response {
    json(to_wire(&state.session_filter()))
}

async fn put_filter(State(state): Shared, body: Bytes) -> Result<Response, ApiError> {
    let filter: DemographicFilter = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    state
        .session
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .filter = filter.clone();
    Ok(json(to_wire(&filter)))
}

async fn get_parameters(
    State(state): Shared,
    Path(id): Path<String>,
    Query(query): FilterQuery,
) -> Result<Response, ApiError> {
    let filter = state.resolve_filter(&query)?;
    let loaded = state.loaded().ok();
    let stps = loaded.as_ref().map(|l| &l.processed.stps);
    let rows = parameter_explorer(&state.store.snapshot(), &id, stps, &filter)?;
    Ok(json(to_wire(&rows)))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplyRequest {
    #[serde(default)]
    subset: Option<Vec<u8>>,
}

async fn apply(
    State(state): Shared,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let request: ApplyRequest = if body.iter().all(u8::is_ascii_whitespace) {
        ApplyRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    };
    let subset = request
        .subset
        .map(|ids| {
            ids.into_iter()
                .map(StpId::new)
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()
        .map_err(EksError::from)?;
    let loaded = state.loaded()?;
    let record = PatientRecord {
        meta: loaded.processed.trial.patient.clone(),
        stps: loaded.processed.stps.clone(),
        added_at: chrono::Utc::now(),
    };
    state
        .store
        .mutate(|s| s.apply_patient(&id, record, subset.as_deref()))?;
    Ok(json(state.match_body(&state.session_filter())?))
}

async fn reset(State(state): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    state.store.mutate(|s| s.reset_category(&id))?;
    Ok(json(to_wire(&tree_report(&state.store.snapshot()))))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RangeRequest {
    min: f64,
    max: f64,
}

async fn override_range(
    State(state): Shared,
    Path((id, stp)): Path<(String, String)>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let stp_id = stp
        .parse::<u8>()
        .ok()
        .and_then(|n| StpId::new(n).ok())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown STP id {stp}")))?;
    let range: RangeRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    state
        .store
        .mutate(|s| s.override_range(&id, stp_id, range.min, range.max))?;
    Ok(json(to_wire(&tree_report(&state.store.snapshot()))))
}

async fn get_tree(State(state): Shared) -> Response {
    json(to_wire(&tree_report(&state.store.snapshot())))
}
