//! Builds the seven co-action layers from a corpus.
//!
//! Exact-match layers group posts by a key; the audio layers score every
//! cross-user transcript pair; the video layer draws candidates from a
//! radius-1 Hamming index over frame hashes. Every builder ends in
//! [`project_to_users`]-style aggregation into a [`Layer`].

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{CoActionPair, Evidence, Layer, LayerKind, PostRecord, UserEdge, UserId};
use crate::similarity::{
    classify_prepared, hamming_distance, video_match, AudioClass, AudioThresholds, FrameHash, PreparedTranscript,
    VideoMatchOptions,
};

/// How audio candidate pairs are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioBlocking {
    /// Every cross-user pair is considered; scoring rejects dissimilar pairs early.
    #[default]
    LengthOnly,
    /// Only pairs sharing a word 3-gram. Lossy; meant for very large corpora.
    TokenTrigram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Keep evidence pairs on edges. Temporal filtering needs them.
    pub keep_evidence: bool,
    /// Exact-match groups larger than this are projected from per-user post
    /// counts without materializing pairs.
    pub group_cap: usize,
    pub audio: AudioThresholds,
    pub audio_blocking: AudioBlocking,
    pub video: VideoMatchOptions,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            keep_evidence: true,
            group_cap: 5_000,
            audio: AudioThresholds::default(),
            audio_blocking: AudioBlocking::LengthOnly,
            video: VideoMatchOptions::default(),
        }
    }
}

/// Projects co-action pairs of one kind onto a user-user layer.
///
/// One edge per user pair; its weight is the number of distinct post pairs.
pub fn project_to_users(pairs: &[CoActionPair], kind: LayerKind) -> Result<Layer, ModelError> {
    let mut by_users: BTreeMap<(UserId, UserId), Vec<Evidence>> = BTreeMap::new();
    for p in pairs {
        if p.layer_kind != kind {
            return Err(ModelError::KindMismatch { expected: kind, found: p.layer_kind });
        }
        let key = crate::model::canonical_edge_key(&p.user_a, &p.user_b)?;
        by_users.entry(key).or_default().push(p.evidence());
    }
    let edges =
        by_users.into_iter().map(|((a, b), ev)| UserEdge::from_evidence(a, b, ev)).collect::<Result<Vec<_>, _>>()?;
    Layer::from_edges(kind, edges)
}

/// Post and user interning shared by the builders.
struct Catalog<'a> {
    posts: &'a [PostRecord],
    user_of: Vec<u32>,
    users: Vec<UserId>,
}

impl<'a> Catalog<'a> {
    fn new(posts: &'a [PostRecord]) -> Self {
        let mut ids: HashMap<&str, u32> = HashMap::new();
        let mut users = Vec::new();
        let user_of = posts
            .iter()
            .map(|p| {
                *ids.entry(&p.user_id).or_insert_with(|| {
                    users.push(p.user_id.clone());
                    (users.len() - 1) as u32
                })
            })
            .collect();
        Catalog { posts, user_of, users }
    }

    fn evidence(&self, i: u32, j: u32, score: u8) -> Evidence {
        let (a, b) = (&self.posts[i as usize], &self.posts[j as usize]);
        let (a, b) = if a.post_id <= b.post_id { (a, b) } else { (b, a) };
        Evidence {
            post_a: a.post_id.clone(),
            post_b: b.post_id.clone(),
            score,
            delta_t: a.created_at.abs_diff(b.created_at),
        }
    }

    fn gap(&self, i: u32, j: u32) -> u64 {
        self.posts[i as usize].created_at.abs_diff(self.posts[j as usize].created_at)
    }

    fn user_key(&self, i: u32, j: u32) -> (u32, u32) {
        let (u, v) = (self.user_of[i as usize], self.user_of[j as usize]);
        if u < v {
            (u, v)
        } else {
            (v, u)
        }
    }
}

#[derive(Debug, Default)]
struct EdgeAcc {
    weight: u64,
    min_dt: u64,
    evidence: Vec<Evidence>,
    complete: bool,
}

impl EdgeAcc {
    fn pair(dt: u64, ev: Option<Evidence>) -> Self {
        let complete = ev.is_some();
        EdgeAcc { weight: 1, min_dt: dt, evidence: ev.into_iter().collect(), complete }
    }

    fn merge(&mut self, other: EdgeAcc) {
        if self.weight == 0 {
            *self = other;
            return;
        }
        self.weight += other.weight;
        self.min_dt = self.min_dt.min(other.min_dt);
        self.complete &= other.complete;
        self.evidence.extend(other.evidence);
    }
}

type AccMap = HashMap<(u32, u32), EdgeAcc>;

fn merge_maps(mut a: AccMap, b: AccMap) -> AccMap {
    if a.len() < b.len() {
        return merge_maps(b, a);
    }
    for (k, v) in b {
        a.entry(k).or_default().merge(v);
    }
    a
}

fn finish(kind: LayerKind, cat: &Catalog<'_>, acc: AccMap) -> Layer {
    let edges = acc
        .into_iter()
        .map(|((u, v), mut e)| {
            let (a, b) = (cat.users[u as usize].clone(), cat.users[v as usize].clone());
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            e.evidence.sort();
            UserEdge {
                user_a: a,
                user_b: b,
                weight: e.weight,
                min_delta_t: e.min_dt,
                evidence: e.evidence,
                evidence_complete: e.complete,
            }
        })
        .collect();
    Layer::from_edges(kind, edges).expect("user keys are unique and cross-user")
}

fn exact_keys(post: &PostRecord, kind: LayerKind) -> Vec<String> {
    match kind {
        LayerKind::HashtagSequence if !post.hashtags.is_empty() => vec![post.hashtags.join(" ")],
        LayerKind::VideoDescription if !post.description.is_empty() => vec![post.description.clone()],
        LayerKind::Url => {
            let mut urls = post.urls.clone();
            urls.sort();
            urls.dedup();
            urls
        }
        LayerKind::MusicId => post.music_id.iter().filter(|m| !m.is_empty()).cloned().collect(),
        _ => Vec::new(),
    }
}

/// Builds one of the exact-match layers (HS, VD, U, MI).
///
/// # Panics
///
/// If `kind` is not an exact-match kind.
pub fn build_exact_layer(posts: &[PostRecord], kind: LayerKind, opts: &BuildOptions) -> Layer {
    assert!(kind.is_exact(), "{kind} is not an exact-match layer");
    let cat = Catalog::new(posts);
    let mut groups: HashMap<String, Vec<u32>> = HashMap::new();
    for (i, p) in posts.iter().enumerate() {
        for key in exact_keys(p, kind) {
            groups.entry(key).or_default().push(i as u32);
        }
    }
    let mut groups: Vec<Vec<u32>> = groups.into_values().filter(|g| g.len() > 1).collect();
    groups.sort_unstable();

    // A post pair can share several URLs; it still counts once.
    let seen: Option<std::sync::Mutex<HashSet<(u32, u32)>>> = (kind == LayerKind::Url).then(Default::default);

    let acc = groups
        .par_iter()
        .fold(AccMap::new, |mut acc, group| {
            if group.len() > opts.group_cap {
                project_counts(&cat, group, &mut acc);
            } else {
                for (x, &i) in group.iter().enumerate() {
                    for &j in &group[x + 1..] {
                        if cat.user_of[i as usize] == cat.user_of[j as usize] {
                            continue;
                        }
                        if let Some(seen) = &seen {
                            if !seen.lock().expect("poisoned").insert((i.min(j), i.max(j))) {
                                continue;
                            }
                        }
                        let ev = opts.keep_evidence.then(|| cat.evidence(i, j, 100));
                        acc.entry(cat.user_key(i, j)).or_default().merge(EdgeAcc::pair(cat.gap(i, j), ev));
                    }
                }
            }
            acc
        })
        .reduce(AccMap::new, merge_maps);
    finish(kind, &cat, acc)
}

/// Weights from per-user post counts: `count(u) * count(v)` per user pair, with
/// the minimum time gap found by merging sorted timestamps.
fn project_counts(cat: &Catalog<'_>, group: &[u32], acc: &mut AccMap) {
    let mut per_user: BTreeMap<u32, Vec<i64>> = BTreeMap::new();
    for &i in group {
        per_user.entry(cat.user_of[i as usize]).or_default().push(cat.posts[i as usize].created_at);
    }
    let users: Vec<(u32, Vec<i64>)> = per_user
        .into_iter()
        .map(|(u, mut t)| {
            t.sort_unstable();
            (u, t)
        })
        .collect();
    for (x, (u, tu)) in users.iter().enumerate() {
        for (v, tv) in &users[x + 1..] {
            let key = if u < v { (*u, *v) } else { (*v, *u) };
            let contrib = EdgeAcc {
                weight: (tu.len() * tv.len()) as u64,
                min_dt: min_gap(tu, tv),
                evidence: Vec::new(),
                complete: false,
            };
            acc.entry(key).or_default().merge(contrib);
        }
    }
}

fn min_gap(a: &[i64], b: &[i64]) -> u64 {
    let (mut i, mut j, mut best) = (0, 0, u64::MAX);
    while i < a.len() && j < b.len() {
        best = best.min(a[i].abs_diff(b[j]));
        if a[i] < b[j] {
            i += 1
        } else {
            j += 1
        }
    }
    best
}

/// Builds the same-audio and partial-audio layers.
pub fn build_audio_layers(posts: &[PostRecord], opts: &BuildOptions) -> (Layer, Layer) {
    let cat = Catalog::new(posts);
    let with_text: Vec<u32> =
        posts.iter().enumerate().filter(|(_, p)| p.transcript_text().is_some()).map(|(i, _)| i as u32).collect();
    let prepared: Vec<PreparedTranscript> = with_text
        .par_iter()
        .map(|&i| PreparedTranscript::new(posts[i as usize].transcript_text().unwrap_or_default()))
        .collect();

    let blocks = (opts.audio_blocking == AudioBlocking::TokenTrigram).then(|| trigram_candidates(posts, &with_text));

    let classify = |x: usize, y: usize| -> Option<(u32, u32, AudioClass, u8)> {
        let (i, j) = (with_text[x], with_text[y]);
        if cat.user_of[i as usize] == cat.user_of[j as usize] {
            return None;
        }
        let m = classify_prepared(&prepared[x], &prepared[y], &opts.audio)?;
        let score = match m.class {
            AudioClass::Same => m.exact_score,
            _ => m.partial_score,
        };
        Some((i, j, m.class, score))
    };

    let found: Vec<(u32, u32, AudioClass, u8)> = match &blocks {
        None => (0..with_text.len())
            .into_par_iter()
            .flat_map_iter(|x| (x + 1..with_text.len()).filter_map(move |y| classify(x, y)))
            .collect(),
        Some(cands) => cands.par_iter().filter_map(|&(x, y)| classify(x, y)).collect(),
    };

    let project = |class: AudioClass, kind: LayerKind| {
        let acc = found.iter().filter(|f| f.2 == class).fold(AccMap::new(), |mut acc, &(i, j, _, score)| {
            let ev = opts.keep_evidence.then(|| cat.evidence(i, j, score));
            acc.entry(cat.user_key(i, j)).or_default().merge(EdgeAcc::pair(cat.gap(i, j), ev));
            acc
        });
        finish(kind, &cat, acc)
    };
    (project(AudioClass::Same, LayerKind::SameAudio), project(AudioClass::Partial, LayerKind::PartialAudio))
}

/// Pairs of positions in `with_text` sharing at least one word 3-gram.
/// Transcripts with fewer than three words use their whole word sequence.
fn trigram_candidates(posts: &[PostRecord], with_text: &[u32]) -> Vec<(usize, usize)> {
    let mut index: HashMap<Vec<&str>, Vec<usize>> = HashMap::new();
    for (x, &i) in with_text.iter().enumerate() {
        let words: Vec<&str> = posts[i as usize].transcript_text().unwrap_or_default().split_whitespace().collect();
        let grams: HashSet<Vec<&str>> = if words.len() < 3 {
            std::iter::once(words.clone()).collect()
        } else {
            words.windows(3).map(|w| w.to_vec()).collect()
        };
        for g in grams {
            index.entry(g).or_default().push(x);
        }
    }
    let mut pairs: HashSet<(usize, usize)> = HashSet::new();
    for list in index.values() {
        for (a, &x) in list.iter().enumerate() {
            for &y in &list[a + 1..] {
                pairs.insert((x.min(y), x.max(y)));
            }
        }
    }
    let mut pairs: Vec<_> = pairs.into_iter().collect();
    pairs.sort_unstable();
    pairs
}

/// Where a frame hash occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Posting {
    pub post: u32,
    pub frame: u32,
}

/// Exact radius-1 lookup over 64-bit frame hashes.
#[derive(Debug, Clone, Default)]
pub struct HammingIndex {
    table: HashMap<u64, Vec<Posting>>,
}

impl HammingIndex {
    pub const RADIUS: u32 = 1;

    /// Indexes `(post, frames)` entries; the post number is caller-defined.
    pub fn build<'a, I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (u32, &'a [u64])>,
    {
        let mut table: HashMap<u64, Vec<Posting>> = HashMap::new();
        for (post, frames) in entries {
            for (f, &h) in frames.iter().enumerate() {
                table.entry(h).or_default().push(Posting { post, frame: f as u32 });
            }
        }
        HammingIndex { table }
    }

    pub fn len(&self) -> usize {
        self.table.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Posting lists of every indexed hash within distance 1 of `h`: the hash
    /// itself plus its 64 single-bit variants.
    pub fn query(&self, h: FrameHash) -> impl Iterator<Item = &[Posting]> + '_ {
        std::iter::once(h.0)
            .chain((0..64).map(move |b| h.0 ^ (1u64 << b)))
            .filter_map(|k| self.table.get(&k).map(Vec::as_slice))
    }
}

/// All postings within Hamming distance 1 of `h`, sorted.
pub fn hamming_candidates(index: &HammingIndex, h: FrameHash) -> Vec<Posting> {
    let mut out: Vec<Posting> = index.query(h).flatten().copied().collect();
    out.sort_unstable();
    out
}

/// Builds the video-similarity layer.
pub fn build_video_layer(posts: &[PostRecord], opts: &BuildOptions) -> Layer {
    let cat = Catalog::new(posts);
    let with_frames: Vec<(u32, &[u64])> = posts
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.frame_hashes.as_deref().filter(|f| !f.is_empty()).map(|f| (i as u32, f)))
        .collect();
    let index = HammingIndex::build(with_frames.iter().map(|&(i, f)| (i, f)));
    let vm = opts.video;

    let candidates = |i: u32, frames: &[u64]| -> Vec<u32> {
        let mut c: Vec<u32> = if vm.max_dist <= HammingIndex::RADIUS {
            frames
                .iter()
                .flat_map(|&h| index.query(FrameHash(h)).flatten().map(|p| p.post))
                .filter(|&j| j > i)
                .collect()
        } else {
            with_frames.iter().map(|&(j, _)| j).filter(|&j| j > i).collect()
        };
        c.sort_unstable();
        c.dedup();
        c
    };

    let acc = with_frames
        .par_iter()
        .fold(AccMap::new, |mut acc, &(i, fa)| {
            for j in candidates(i, fa) {
                if cat.user_of[i as usize] == cat.user_of[j as usize] {
                    continue;
                }
                let fb = posts[j as usize].frame_hashes.as_deref().unwrap_or_default();
                if video_match(fa, fb, vm).unwrap_or(false) {
                    let ev = opts.keep_evidence.then(|| cat.evidence(i, j, 100));
                    acc.entry(cat.user_key(i, j)).or_default().merge(EdgeAcc::pair(cat.gap(i, j), ev));
                }
            }
            acc
        })
        .reduce(AccMap::new, merge_maps);
    finish(LayerKind::VideoSimilarity, &cat, acc)
}

/// All seven layers of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub layers: BTreeMap<LayerKind, Layer>,
}

impl Network {
    pub fn get(&self, kind: LayerKind) -> Option<&Layer> {
        self.layers.get(&kind)
    }
}

/// Builds the requested layers. The two audio layers are built together.
pub fn build_network(posts: &[PostRecord], kinds: &[LayerKind], opts: &BuildOptions) -> Network {
    let want = |k: LayerKind| kinds.contains(&k);
    let mut layers = BTreeMap::new();
    for kind in LayerKind::ALL.into_iter().filter(|k| k.is_exact() && want(*k)) {
        layers.insert(kind, build_exact_layer(posts, kind, opts));
    }
    if want(LayerKind::SameAudio) || want(LayerKind::PartialAudio) {
        let (same, partial) = build_audio_layers(posts, opts);
        if want(LayerKind::SameAudio) {
            layers.insert(LayerKind::SameAudio, same);
        }
        if want(LayerKind::PartialAudio) {
            layers.insert(LayerKind::PartialAudio, partial);
        }
    }
    if want(LayerKind::VideoSimilarity) {
        layers.insert(LayerKind::VideoSimilarity, build_video_layer(posts, opts));
    }
    Network { layers }
}

/// An evidence pair that does not satisfy its layer's predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: LayerKind,
    pub evidence: Evidence,
    pub reason: String,
}

/// Re-checks every `stride`-th evidence pair of a layer against the raw posts.
pub fn reverify_layer(layer: &Layer, posts: &[PostRecord], opts: &BuildOptions, stride: usize) -> Vec<Violation> {
    let by_id: HashMap<&str, &PostRecord> = posts.iter().map(|p| (&*p.post_id, p)).collect();
    let kind = layer.kind();
    let stride = stride.max(1);
    let check = |a: &PostRecord, b: &PostRecord| -> Result<(), String> {
        if a.user_id == b.user_id {
            return Err("same user".into());
        }
        let ok = match kind {
            LayerKind::HashtagSequence => !a.hashtags.is_empty() && a.hashtags == b.hashtags,
            LayerKind::VideoDescription => !a.description.is_empty() && a.description == b.description,
            LayerKind::Url => a.urls.iter().any(|u| b.urls.contains(u)),
            LayerKind::MusicId => a.music_id.is_some() && a.music_id == b.music_id,
            LayerKind::SameAudio | LayerKind::PartialAudio => {
                let want = if kind == LayerKind::SameAudio { AudioClass::Same } else { AudioClass::Partial };
                match (a.transcript_text(), b.transcript_text()) {
                    (Some(x), Some(y)) => crate::similarity::classify_audio_pair_with(x, y, &opts.audio)
                        .map(|m| m.class == want)
                        .unwrap_or(false),
                    _ => false,
                }
            }
            LayerKind::VideoSimilarity => match (&a.frame_hashes, &b.frame_hashes) {
                (Some(x), Some(y)) => video_match(x, y, opts.video).unwrap_or(false),
                _ => false,
            },
        };
        if ok {
            Ok(())
        } else {
            Err(format!("{kind} predicate fails"))
        }
    };
    layer
        .edges()
        .iter()
        .flat_map(|e| e.evidence.iter())
        .step_by(stride)
        .filter_map(|ev| {
            let reason = match (by_id.get(&*ev.post_a), by_id.get(&*ev.post_b)) {
                (Some(a), Some(b)) => check(a, b).err()?,
                _ => "post missing from corpus".to_string(),
            };
            Some(Violation { kind, evidence: ev.clone(), reason })
        })
        .collect()
}

/// Brute-force radius check, for callers that want to compare against the index.
pub fn linear_scan(hashes: &[(u32, &[u64])], h: FrameHash) -> Vec<Posting> {
    let mut out: Vec<Posting> = hashes
        .iter()
        .flat_map(|&(post, frames)| {
            frames
                .iter()
                .enumerate()
                .filter(move |(_, &g)| hamming_distance(h, FrameHash(g)) <= HammingIndex::RADIUS)
                .map(move |(f, _)| Posting { post, frame: f as u32 })
        })
        .collect();
    out.sort_unstable();
    out
}
