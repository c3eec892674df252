//! HTTP JSON API over built co-action layers.
//!
//! Every layer is registered as an unfiltered snapshot at startup. Filter
//! requests derive new snapshots keyed by content, so repeating a request
//! returns the existing snapshot.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use coaction_core::filtering::{self, PruneParams, TemporalMode};
use coaction_core::ingest::CorpusSummary;
use coaction_core::layers::Network;
use coaction_core::metrics::{self, EvidenceRow, Member, Usernames};
use coaction_core::{FilterError, FilterSpec, FilteredSnapshot64, LayerKind, LayerStats64, PostRecord, UserId};

pub const DEFAULT_EVIDENCE_PAGE: usize = 200;

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    /// Replace usernames by salted hashes.
    pub pseudonymize: bool,
    pub pseudonym_salt: String,
    pub temporal_mode: TemporalMode,
    pub prune: PruneParams,
    /// Upper bound on evidence rows per page.
    pub evidence_page: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        ServiceOptions {
            pseudonymize: false,
            pseudonym_salt: String::new(),
            temporal_mode: TemporalMode::PerPair,
            prune: PruneParams::default(),
            evidence_page: DEFAULT_EVIDENCE_PAGE,
        }
    }
}

struct Entry {
    snapshot: FilteredSnapshot64,
    components: OnceLock<Vec<Vec<UserId>>>,
}

impl Entry {
    fn components(&self) -> &[Vec<UserId>] {
        self.components.get_or_init(|| metrics::connected_components(&self.snapshot.layer))
    }
}

/// Snapshots by id. Entries are complete when inserted and never replaced.
#[derive(Default)]
pub struct Registry {
    map: RwLock<HashMap<String, Arc<Entry>>>,
}

impl Registry {
    fn get(&self, id: &str) -> Option<Arc<Entry>> {
        self.map.read().unwrap().get(id).cloned()
    }

    fn insert_if_absent(&self, snapshot: FilteredSnapshot64) -> Arc<Entry> {
        let mut map = self.map.write().unwrap();
        map.entry(snapshot.snapshot_id.clone())
            .or_insert_with(|| Arc::new(Entry { snapshot, components: OnceLock::new() }))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub struct AppState {
    summary: CorpusSummary,
    network: Network,
    names: Usernames,
    base: BTreeMap<LayerKind, String>,
    registry: Registry,
    opts: ServiceOptions,
}

fn pseudonym(salt: &str, user: &str) -> String {
    let mut h = Sha256::new();
    h.update(salt.as_bytes());
    h.update(b"\0");
    h.update(user.as_bytes());
    format!("user_{}", &hex::encode(h.finalize())[..12])
}

impl AppState {
    pub fn new(posts: &[PostRecord], network: Network, opts: ServiceOptions) -> Result<Self, FilterError> {
        let mut names = Usernames::from_posts(posts);
        if opts.pseudonymize {
            for p in posts {
                names.insert(p.user_id.clone(), pseudonym(&opts.pseudonym_salt, &p.user_id));
            }
        }
        let registry = Registry::default();
        let mut base = BTreeMap::new();
        for (kind, layer) in &network.layers {
            let snap = filtering::apply_filter::<f64>(layer, FilterSpec::None, opts.temporal_mode)?;
            base.insert(*kind, snap.snapshot_id.clone());
            registry.insert_if_absent(snap);
        }
        Ok(AppState { summary: CorpusSummary::of(posts), network, names, base, registry, opts })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    /// Id of the unfiltered snapshot of `kind`.
    pub fn base_snapshot(&self, kind: LayerKind) -> Option<&str> {
        self.base.get(&kind).map(String::as_str)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn not_found(what: impl std::fmt::Display) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message: format!("{what} not found") }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: message.into() }
    }
}

impl From<FilterError> for ApiError {
    fn from(e: FilterError) -> Self {
        ApiError { status: StatusCode::UNPROCESSABLE_ENTITY, message: e.to_string() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<AppState>;
type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/dataset/summary", get(dataset_summary))
        .route("/layers", get(list_layers))
        .route("/layers/{kind}/sweep", get(sweep))
        .route("/layers/{kind}/filter", post(filter))
        .route("/snapshots/{id}/components", get(components))
        .route("/snapshots/{id}/components/{idx}", get(component_detail))
        .route("/overlap", get(overlap))
        .with_state(state)
}

/// Binds and serves until the process ends.
pub async fn serve(state: AppState, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}

async fn dataset_summary(State(s): State<Shared>) -> Json<CorpusSummary> {
    Json(s.summary.clone())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LayerInfo {
    pub kind: LayerKind,
    pub snapshot_id: String,
    pub stats: LayerStats64,
    pub default_filter: FilterSpec,
}

async fn list_layers(State(s): State<Shared>) -> Json<Vec<LayerInfo>> {
    let out = s
        .base
        .iter()
        .map(|(kind, id)| {
            let e = s.registry.get(id).expect("base snapshot registered");
            LayerInfo {
                kind: *kind,
                snapshot_id: id.clone(),
                stats: e.snapshot.stats,
                default_filter: FilterSpec::default_for(*kind),
            }
        })
        .collect();
    Json(out)
}

fn layer_kind(s: &AppState, raw: &str) -> Result<LayerKind, ApiError> {
    let kind: LayerKind = raw.parse().map_err(|_| ApiError::not_found(format!("layer {raw:?}")))?;
    if !s.network.layers.contains_key(&kind) {
        return Err(ApiError::not_found(format!("layer {raw:?}")));
    }
    Ok(kind)
}

async fn sweep(State(s): State<Shared>, Path(kind): Path<String>) -> ApiResult<coaction_core::SweepReport64> {
    let kind = layer_kind(&s, &kind)?;
    let state = s.clone();
    let report = tokio::task::spawn_blocking(move || {
        let layer = &state.network.layers[&kind];
        let mode = state.opts.temporal_mode;
        for snap in filtering::generate_filter_candidates::<f64>(layer, mode)? {
            state.registry.insert_if_absent(snap);
        }
        filtering::sweep_report::<f64>(layer, mode, state.opts.prune)
    })
    .await
    .expect("sweep task")?;
    Ok(Json(report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterRequest {
    pub variant: String,
    #[serde(default)]
    pub value: Option<u64>,
    #[serde(default)]
    pub mode: Option<TemporalMode>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FilterResponse {
    pub snapshot_id: String,
    pub filter: FilterSpec,
    pub stats: LayerStats64,
}

async fn filter(
    State(s): State<Shared>,
    Path(kind): Path<String>,
    Json(req): Json<FilterRequest>,
) -> ApiResult<FilterResponse> {
    let kind = layer_kind(&s, &kind)?;
    let spec = FilterSpec::parse(&req.variant, req.value).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mode = req.mode.unwrap_or(s.opts.temporal_mode);
    let id = filtering::snapshot_id(&s.network.layers[&kind].digest(), &spec, mode);
    let entry = match s.registry.get(&id) {
        Some(e) => e,
        None => {
            let state = s.clone();
            tokio::task::spawn_blocking(move || {
                let snap = filtering::apply_filter::<f64>(&state.network.layers[&kind], spec, mode)?;
                Ok::<_, FilterError>(state.registry.insert_if_absent(snap))
            })
            .await
            .expect("filter task")?
        }
    };
    Ok(Json(FilterResponse {
        snapshot_id: entry.snapshot.snapshot_id.clone(),
        filter: entry.snapshot.filter,
        stats: entry.snapshot.stats,
    }))
}

fn snapshot(s: &AppState, id: &str) -> Result<Arc<Entry>, ApiError> {
    s.registry.get(id).ok_or_else(|| ApiError::not_found(format!("snapshot {id:?}")))
}

#[derive(Debug, Clone, Deserialize)]
pub struct ComponentQuery {
    pub min_size: Option<usize>,
    pub offset: Option<usize>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentItem {
    /// Position in the size-sorted list of all components.
    pub index: usize,
    pub size: usize,
    pub members: Vec<Member>,
    pub internal_edges: usize,
    pub total_weight: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentPage {
    pub snapshot_id: String,
    /// Components with at least `min_size` members.
    pub total: usize,
    pub offset: usize,
    pub components: Vec<ComponentItem>,
}

async fn components(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<ComponentQuery>,
) -> ApiResult<ComponentPage> {
    let e = snapshot(&s, &id)?;
    let min_size = q.min_size.unwrap_or(1);
    let offset = q.offset.unwrap_or(0);
    let limit = q.limit.unwrap_or(50).min(1_000);
    let comps = e.components();
    let eligible = comps.iter().enumerate().filter(|(_, c)| c.len() >= min_size);
    let total = eligible.clone().count();
    let components = eligible
        .skip(offset)
        .take(limit)
        .map(|(index, members)| {
            let c = metrics::summarize(&e.snapshot.layer, index, members, &s.names, 0);
            ComponentItem {
                index,
                size: c.size,
                members: c.members,
                internal_edges: c.internal_edges,
                total_weight: c.total_weight,
            }
        })
        .collect();
    Ok(Json(ComponentPage { snapshot_id: id, total, offset, components }))
}

#[derive(Debug, Clone, Deserialize)]
pub struct EvidenceQuery {
    pub evidence_offset: Option<usize>,
    pub evidence_limit: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ComponentDetail {
    pub snapshot_id: String,
    pub index: usize,
    pub size: usize,
    pub members: Vec<Member>,
    pub internal_edges: Vec<EdgeView>,
    pub total_weight: u64,
    /// False when some edges were built without their evidence.
    pub evidence_complete: bool,
    pub evidence_total: usize,
    pub evidence_offset: usize,
    pub evidence: Vec<EvidenceRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EdgeView {
    pub user_a: UserId,
    pub user_b: UserId,
    pub weight: u64,
    pub min_delta_t: u64,
}

async fn component_detail(
    State(s): State<Shared>,
    Path((id, idx)): Path<(String, usize)>,
    Query(q): Query<EvidenceQuery>,
) -> ApiResult<ComponentDetail> {
    let e = snapshot(&s, &id)?;
    let members = e.components().get(idx).ok_or_else(|| ApiError::not_found(format!("component {idx}")))?;
    let layer = &e.snapshot.layer;
    let summary = metrics::summarize(layer, idx, members, &s.names, 0);
    let set: std::collections::HashSet<&str> = members.iter().map(|m| &**m).collect();
    let edges: Vec<_> = layer.edges().iter().filter(|x| set.contains(&*x.user_a)).collect();
    let evidence_offset = q.evidence_offset.unwrap_or(0);
    let limit = q.evidence_limit.unwrap_or(s.opts.evidence_page).min(s.opts.evidence_page);
    Ok(Json(ComponentDetail {
        snapshot_id: id,
        index: idx,
        size: summary.size,
        members: summary.members,
        evidence_complete: edges.iter().all(|x| x.evidence_complete),
        evidence_total: edges.iter().map(|x| x.evidence.len()).sum(),
        evidence_offset,
        evidence: metrics::component_evidence(layer, members).skip(evidence_offset).take(limit).collect(),
        internal_edges: edges
            .iter()
            .map(|x| EdgeView {
                user_a: x.user_a.clone(),
                user_b: x.user_b.clone(),
                weight: x.weight,
                min_delta_t: x.min_delta_t,
            })
            .collect(),
        total_weight: summary.total_weight,
    }))
}

#[derive(Debug, Clone, Deserialize)]
pub struct OverlapQuery {
    /// Comma-separated snapshot ids; all unfiltered layers when absent.
    pub snapshots: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OverlapResponse {
    pub snapshot_ids: Vec<String>,
    pub matrix: metrics::OverlapMatrix,
    pub chords: Vec<metrics::ChordRow>,
}

async fn overlap(State(s): State<Shared>, Query(q): Query<OverlapQuery>) -> ApiResult<OverlapResponse> {
    let ids: Vec<String> = match q.snapshots.as_deref() {
        Some(list) => list.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect(),
        None => s.base.values().cloned().collect(),
    };
    let entries = ids.iter().map(|id| snapshot(&s, id)).collect::<Result<Vec<_>, _>>()?;
    let labelled: Vec<(String, &coaction_core::Layer)> = entries
        .iter()
        .map(|e| {
            let snap = &e.snapshot;
            let label = match snap.filter {
                FilterSpec::None => snap.base_kind.abbrev().to_string(),
                f => format!("{}:{}", snap.base_kind.abbrev(), f.label()),
            };
            (label, &snap.layer)
        })
        .collect();
    let matrix = metrics::cross_layer_overlap_labelled(&labelled);
    let chords = matrix.chord_rows();
    Ok(Json(OverlapResponse { snapshot_ids: ids, matrix, chords }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pseudonyms_are_stable_and_salted() {
        assert_eq!(pseudonym("s", "u1"), pseudonym("s", "u1"));
        assert_ne!(pseudonym("s", "u1"), pseudonym("t", "u1"));
        assert_eq!(pseudonym("s", "u1").len(), 17);
    }
}
