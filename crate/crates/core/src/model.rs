//! Domain types shared across the pipeline.
//!
//! Posts, co-action pairs, user-user layers and filter specifications. All of
//! these are plain values: once a [`Layer`] is built it is never mutated, and
//! filtering produces a new one.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::ModelError;

/// Opaque account identifier. Shared so that layers and evidence can clone it cheaply.
pub type UserId = Arc<str>;

/// Opaque post identifier.
pub type PostId = Arc<str>;

/// One short-video post with every modality the layers look at.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub post_id: PostId,
    pub user_id: UserId,
    pub username: String,
    /// Epoch seconds, UTC.
    pub created_at: i64,
    pub description: String,
    /// Derived from `description` at ingest.
    pub hashtags: Vec<String>,
    /// Derived from `description` at ingest.
    pub urls: Vec<String>,
    pub music_id: Option<String>,
    pub transcript: Option<String>,
    /// One difference hash per sampled frame (3 s cadence). Never empty when present.
    pub frame_hashes: Option<Vec<u64>>,
}

impl PostRecord {
    /// Builds a record and derives hashtags and URLs from the description.
    pub fn new(
        post_id: impl Into<PostId>,
        user_id: impl Into<UserId>,
        username: impl Into<String>,
        created_at: i64,
        description: impl Into<String>,
    ) -> Self {
        let description = description.into();
        let hashtags = crate::ingest::extract_hashtags(&description);
        let urls = crate::ingest::extract_urls(&description);
        PostRecord {
            post_id: post_id.into(),
            user_id: user_id.into(),
            username: username.into(),
            created_at,
            description,
            hashtags,
            urls,
            music_id: None,
            transcript: None,
            frame_hashes: None,
        }
    }

    pub fn with_music_id(mut self, music_id: impl Into<String>) -> Self {
        self.music_id = Some(music_id.into());
        self
    }

    pub fn with_transcript(mut self, transcript: impl Into<String>) -> Self {
        self.transcript = Some(transcript.into());
        self
    }

    pub fn with_frames(mut self, frames: Vec<u64>) -> Self {
        self.frame_hashes = if frames.is_empty() { None } else { Some(frames) };
        self
    }

    /// Replaces the description and re-derives hashtags and URLs.
    pub fn set_description(&mut self, description: impl Into<String>) {
        self.description = description.into();
        self.hashtags = crate::ingest::extract_hashtags(&self.description);
        self.urls = crate::ingest::extract_urls(&self.description);
    }

    /// Transcript if present and non-empty.
    pub fn transcript_text(&self) -> Option<&str> {
        self.transcript.as_deref().filter(|t| !t.is_empty())
    }
}

/// The seven co-action modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LayerKind {
    #[serde(rename = "HS")]
    HashtagSequence,
    #[serde(rename = "VD")]
    VideoDescription,
    #[serde(rename = "U")]
    Url,
    #[serde(rename = "MI")]
    MusicId,
    #[serde(rename = "SA")]
    SameAudio,
    #[serde(rename = "PA")]
    PartialAudio,
    #[serde(rename = "VS")]
    VideoSimilarity,
}

impl LayerKind {
    pub const ALL: [LayerKind; 7] = [
        LayerKind::HashtagSequence,
        LayerKind::VideoDescription,
        LayerKind::Url,
        LayerKind::MusicId,
        LayerKind::SameAudio,
        LayerKind::PartialAudio,
        LayerKind::VideoSimilarity,
    ];

    pub fn abbrev(self) -> &'static str {
        match self {
            LayerKind::HashtagSequence => "HS",
            LayerKind::VideoDescription => "VD",
            LayerKind::Url => "U",
            LayerKind::MusicId => "MI",
            LayerKind::SameAudio => "SA",
            LayerKind::PartialAudio => "PA",
            LayerKind::VideoSimilarity => "VS",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::HashtagSequence => "hashtag_sequence",
            LayerKind::VideoDescription => "video_description",
            LayerKind::Url => "url",
            LayerKind::MusicId => "music_id",
            LayerKind::SameAudio => "same_audio",
            LayerKind::PartialAudio => "partial_audio",
            LayerKind::VideoSimilarity => "video_similarity",
        }
    }

    /// True for the layers built by exact key grouping.
    pub fn is_exact(self) -> bool {
        matches!(self, LayerKind::HashtagSequence | LayerKind::VideoDescription | LayerKind::Url | LayerKind::MusicId)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.abbrev())
    }
}

impl FromStr for LayerKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LayerKind::ALL
            .into_iter()
            .find(|k| k.abbrev().eq_ignore_ascii_case(s) || k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownLayerKind(s.to_string()))
    }
}

/// Orders two user ids canonically. Equal ids are rejected.
pub fn canonical_edge_key(user_a: &str, user_b: &str) -> Result<(UserId, UserId), ModelError> {
    match user_a.cmp(user_b) {
        std::cmp::Ordering::Less => Ok((user_a.into(), user_b.into())),
        std::cmp::Ordering::Greater => Ok((user_b.into(), user_a.into())),
        std::cmp::Ordering::Equal => Err(ModelError::SelfLoop(user_a.to_string())),
    }
}

/// Two similar posts by different users in one modality.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CoActionPair {
    pub layer_kind: LayerKind,
    /// `post_a < post_b` lexicographically.
    pub post_a: PostId,
    pub post_b: PostId,
    /// Author of `post_a`.
    pub user_a: UserId,
    /// Author of `post_b`.
    pub user_b: UserId,
    pub score: u8,
    pub delta_t: u64,
}

impl CoActionPair {
    /// Builds a pair from two posts, ordering them by post id.
    ///
    /// Same-user pairs and out-of-range scores are rejected.
    pub fn from_posts(layer_kind: LayerKind, a: &PostRecord, b: &PostRecord, score: u8) -> Result<Self, ModelError> {
        if a.user_id == b.user_id {
            return Err(ModelError::SelfLoop(a.user_id.to_string()));
        }
        if score > 100 {
            return Err(ModelError::ScoreOutOfRange(score));
        }
        let (first, second) = if a.post_id <= b.post_id { (a, b) } else { (b, a) };
        Ok(CoActionPair {
            layer_kind,
            post_a: first.post_id.clone(),
            post_b: second.post_id.clone(),
            user_a: first.user_id.clone(),
            user_b: second.user_id.clone(),
            score,
            delta_t: first.created_at.abs_diff(second.created_at),
        })
    }

    /// Evidence record as kept on a [`UserEdge`].
    pub fn evidence(&self) -> Evidence {
        Evidence { post_a: self.post_a.clone(), post_b: self.post_b.clone(), score: self.score, delta_t: self.delta_t }
    }
}

/// The part of a [`CoActionPair`] an edge needs to keep: which posts, how
/// similar, how far apart in time.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Evidence {
    pub post_a: PostId,
    pub post_b: PostId,
    pub score: u8,
    pub delta_t: u64,
}

/// Undirected weighted edge between two accounts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserEdge {
    /// `user_a < user_b`.
    pub user_a: UserId,
    pub user_b: UserId,
    /// Number of distinct co-action pairs.
    pub weight: u64,
    pub min_delta_t: u64,
    /// Sorted evidence pairs. Empty when the edge was built without evidence.
    pub evidence: Vec<Evidence>,
    /// False when `evidence` does not account for the whole weight.
    pub evidence_complete: bool,
}

impl UserEdge {
    /// Builds an edge whose weight and minimum time gap come from its evidence.
    pub fn from_evidence(user_a: UserId, user_b: UserId, mut evidence: Vec<Evidence>) -> Result<Self, ModelError> {
        let (user_a, user_b) = order_users(user_a, user_b)?;
        if evidence.is_empty() {
            return Err(ModelError::EmptyEdge);
        }
        evidence.sort();
        evidence.dedup_by(|x, y| x.post_a == y.post_a && x.post_b == y.post_b);
        let min_delta_t = evidence.iter().map(|e| e.delta_t).min().unwrap_or(0);
        Ok(UserEdge { user_a, user_b, weight: evidence.len() as u64, min_delta_t, evidence, evidence_complete: true })
    }

    /// Builds an edge whose weight is known but whose evidence was not kept.
    pub fn without_evidence(user_a: UserId, user_b: UserId, weight: u64, min_delta_t: u64) -> Result<Self, ModelError> {
        let (user_a, user_b) = order_users(user_a, user_b)?;
        if weight == 0 {
            return Err(ModelError::EmptyEdge);
        }
        Ok(UserEdge { user_a, user_b, weight, min_delta_t, evidence: Vec::new(), evidence_complete: false })
    }

    pub fn key(&self) -> (&str, &str) {
        (&self.user_a, &self.user_b)
    }

    /// Materializes the evidence as full co-action pairs.
    pub fn pairs(&self, kind: LayerKind, author: impl Fn(&str) -> Option<UserId>) -> Vec<CoActionPair> {
        self.evidence
            .iter()
            .map(|e| {
                let (ua, ub) = match (author(&e.post_a), author(&e.post_b)) {
                    (Some(a), Some(b)) => (a, b),
                    _ => (self.user_a.clone(), self.user_b.clone()),
                };
                CoActionPair {
                    layer_kind: kind,
                    post_a: e.post_a.clone(),
                    post_b: e.post_b.clone(),
                    user_a: ua,
                    user_b: ub,
                    score: e.score,
                    delta_t: e.delta_t,
                }
            })
            .collect()
    }
}

fn order_users(a: UserId, b: UserId) -> Result<(UserId, UserId), ModelError> {
    match a.cmp(&b) {
        std::cmp::Ordering::Less => Ok((a, b)),
        std::cmp::Ordering::Greater => Ok((b, a)),
        std::cmp::Ordering::Equal => Err(ModelError::SelfLoop(a.to_string())),
    }
}

/// User-user network for one modality.
///
/// Edges are sorted by `(user_a, user_b)`; `nodes` is exactly the set of edge
/// endpoints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    kind: LayerKind,
    edges: Vec<UserEdge>,
    nodes: Vec<UserId>,
}

impl Layer {
    pub fn empty(kind: LayerKind) -> Self {
        Layer { kind, edges: Vec::new(), nodes: Vec::new() }
    }

    /// Builds a layer from edges. Duplicate endpoint pairs are rejected.
    pub fn from_edges(kind: LayerKind, mut edges: Vec<UserEdge>) -> Result<Self, ModelError> {
        edges.sort_by(|x, y| x.key().cmp(&y.key()));
        for w in edges.windows(2) {
            if w[0].key() == w[1].key() {
                return Err(ModelError::DuplicateEdge(w[0].user_a.to_string(), w[0].user_b.to_string()));
            }
        }
        let nodes: BTreeSet<UserId> = edges.iter().flat_map(|e| [e.user_a.clone(), e.user_b.clone()]).collect();
        Ok(Layer { kind, edges, nodes: nodes.into_iter().collect() })
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn edges(&self) -> &[UserEdge] {
        &self.edges
    }

    pub fn nodes(&self) -> &[UserId] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Looks up the edge between two users, in either order.
    pub fn edge(&self, a: &str, b: &str) -> Option<&UserEdge> {
        let key = if a <= b { (a, b) } else { (b, a) };
        self.edges.binary_search_by(|e| e.key().cmp(&key)).ok().map(|i| &self.edges[i])
    }

    /// True if every edge carries its full evidence.
    pub fn evidence_complete(&self) -> bool {
        self.edges.iter().all(|e| e.evidence_complete)
    }

    /// Arithmetic mean of edge weights, as an exact fraction `(sum, count)`.
    pub fn weight_sum_and_count(&self) -> (u128, usize) {
        (self.edges.iter().map(|e| e.weight as u128).sum(), self.edges.len())
    }

    /// Copy of this layer with evidence stripped from every edge.
    pub fn without_evidence(&self) -> Layer {
        let edges = self
            .edges
            .iter()
            .map(|e| UserEdge { evidence: Vec::new(), evidence_complete: false, ..e.clone() })
            .collect();
        Layer { kind: self.kind, edges, nodes: self.nodes.clone() }
    }

    /// SHA-256 over the canonical edge list. Two layers with equal digests
    /// have identical kinds, edges, weights and evidence.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kind.abbrev().as_bytes());
        h.update([0]);
        for e in &self.edges {
            h.update(e.user_a.as_bytes());
            h.update([0]);
            h.update(e.user_b.as_bytes());
            h.update([0]);
            h.update(e.weight.to_le_bytes());
            h.update(e.min_delta_t.to_le_bytes());
            h.update([e.evidence_complete as u8]);
            for ev in &e.evidence {
                h.update(ev.post_a.as_bytes());
                h.update([0]);
                h.update(ev.post_b.as_bytes());
                h.update([0]);
                h.update([ev.score]);
                h.update(ev.delta_t.to_le_bytes());
            }
            h.update([1]);
        }
        hex::encode(h.finalize())
    }
}

/// How a layer is filtered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant", content = "value", rename_all = "snake_case")]
pub enum FilterSpec {
    /// Keep edges with weight at least `min_weight`.
    Frequency {
        min_weight: u64,
    },
    /// Keep edges with weight at least the mean weight of the layer.
    FrequencyAboveAverage,
    /// Keep co-actions at most `max_delta_t` seconds apart.
    Temporal {
        max_delta_t: u64,
    },
    None,
}

impl FilterSpec {
    /// The six candidates generated for every layer.
    pub const CANONICAL: [FilterSpec; 6] = [
        FilterSpec::Frequency { min_weight: 2 },
        FilterSpec::Frequency { min_weight: 10 },
        FilterSpec::FrequencyAboveAverage,
        FilterSpec::Temporal { max_delta_t: 60 },
        FilterSpec::Temporal { max_delta_t: 120 },
        FilterSpec::Temporal { max_delta_t: 300 },
    ];

    /// Filter selected per layer by default.
    pub fn default_for(kind: LayerKind) -> FilterSpec {
        match kind {
            LayerKind::HashtagSequence | LayerKind::VideoDescription => FilterSpec::Frequency { min_weight: 10 },
            LayerKind::MusicId => FilterSpec::FrequencyAboveAverage,
            LayerKind::Url | LayerKind::SameAudio | LayerKind::PartialAudio | LayerKind::VideoSimilarity => {
                FilterSpec::None
            }
        }
    }

    /// Parses `variant[:value]`, e.g. `frequency:10`, `above_average`,
    /// `temporal:60`, `none`.
    pub fn parse(variant: &str, value: Option<u64>) -> Result<FilterSpec, ModelError> {
        let v = variant.trim().to_ascii_lowercase();
        let need = |name: &str| value.ok_or_else(|| ModelError::InvalidFilter(format!("{name} needs a value")));
        match v.as_str() {
            "frequency" | "freq" => {
                let k = need("frequency")?;
                if k == 0 {
                    return Err(ModelError::InvalidFilter("frequency must be at least 1".into()));
                }
                Ok(FilterSpec::Frequency { min_weight: k })
            }
            "frequency_above_average" | "above_average" | "above_avg" | "avg" => Ok(FilterSpec::FrequencyAboveAverage),
            "temporal" | "time" => Ok(FilterSpec::Temporal { max_delta_t: need("temporal")? }),
            "none" => Ok(FilterSpec::None),
            other => Err(ModelError::InvalidFilter(format!("unknown filter variant {other:?}"))),
        }
    }

    /// Stable short label, also used in file names.
    pub fn label(&self) -> String {
        match self {
            FilterSpec::Frequency { min_weight } => format!("frequency_{min_weight}"),
            FilterSpec::FrequencyAboveAverage => "frequency_above_average".to_string(),
            FilterSpec::Temporal { max_delta_t } => format!("temporal_{max_delta_t}"),
            FilterSpec::None => "none".to_string(),
        }
    }
}

impl fmt::Display for FilterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for FilterSpec {
    type Err = ModelError;

    /// Accepts `frequency:10`, `frequency_10`, `above_average`, `temporal:60`, `none`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some((v, n)) = s.split_once(':') {
            let n = n.trim().parse::<u64>().map_err(|_| ModelError::InvalidFilter(s.to_string()))?;
            return FilterSpec::parse(v, Some(n));
        }
        if let Some((v, n)) = s.rsplit_once('_') {
            if let Ok(n) = n.parse::<u64>() {
                return FilterSpec::parse(v, Some(n));
            }
        }
        FilterSpec::parse(s, None)
    }
}
