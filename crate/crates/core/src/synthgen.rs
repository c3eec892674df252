//! Synthetic corpora with known ground truth.
//!
//! Three ingredients: reuse pairs (repost, reupload, duet, stitch) whose
//! per-layer linkage is fixed by how each platform feature treats audio,
//! music id, video and description; injected clusters of accounts posting
//! jittered copies of one template; and unrelated background posts.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SynthError;
use crate::model::{LayerKind, PostRecord, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReuseType {
    Repost,
    Reupload,
    Duet,
    Stitch,
}

impl ReuseType {
    pub const ALL: [ReuseType; 4] = [ReuseType::Repost, ReuseType::Reupload, ReuseType::Duet, ReuseType::Stitch];

    fn tag(self) -> &'static str {
        match self {
            ReuseType::Repost => "repost",
            ReuseType::Reupload => "reupload",
            ReuseType::Duet => "duet",
            ReuseType::Stitch => "stitch",
        }
    }
}

/// Whether a feature survives a kind of reuse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preserved {
    Yes,
    Partial,
    No,
}

/// What a reuse keeps of the original post.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseRow {
    pub new_post: bool,
    pub audio: Preserved,
    pub music_id: Preserved,
    pub video: Preserved,
    pub description: Preserved,
}

/// Reference behaviour of each reuse type.
pub const fn reference_row(reuse: ReuseType) -> ReuseRow {
    use Preserved::*;
    match reuse {
        ReuseType::Repost => ReuseRow { new_post: false, audio: Yes, music_id: Yes, video: Yes, description: Yes },
        ReuseType::Reupload => ReuseRow { new_post: true, audio: Yes, music_id: No, video: Yes, description: No },
        ReuseType::Duet => ReuseRow { new_post: true, audio: Yes, music_id: Yes, video: Partial, description: No },
        ReuseType::Stitch => ReuseRow { new_post: true, audio: Partial, music_id: No, video: Partial, description: No },
    }
}

/// A stitch keeps the original frames and appends new ones, so every frame of
/// the original still has an exact match. A duet puts the original into a
/// split screen, which changes every frame hash.
const fn partial_video_matches(reuse: ReuseType) -> bool {
    matches!(reuse, ReuseType::Stitch)
}

/// Layers checked for each reuse pair.
pub const DETECTION_LAYERS: [LayerKind; 6] = [
    LayerKind::HashtagSequence,
    LayerKind::VideoDescription,
    LayerKind::MusicId,
    LayerKind::SameAudio,
    LayerKind::PartialAudio,
    LayerKind::VideoSimilarity,
];

/// Which layers must link a reuse pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedRow {
    /// The derived post is not a new post and never enters layer building.
    pub excluded: bool,
    pub links: BTreeMap<LayerKind, bool>,
}

impl ExpectedRow {
    pub fn links(&self, kind: LayerKind) -> bool {
        self.links.get(&kind).copied().unwrap_or(false)
    }
}

/// Layer linkage implied by [`reference_row`].
pub fn expected_from_reference(reuse: ReuseType) -> ExpectedRow {
    let row = reference_row(reuse);
    let excluded = !row.new_post;
    let on = |b: bool| b && !excluded;
    let links = BTreeMap::from([
        (LayerKind::HashtagSequence, on(row.description == Preserved::Yes)),
        (LayerKind::VideoDescription, on(row.description == Preserved::Yes)),
        (LayerKind::MusicId, on(row.music_id == Preserved::Yes)),
        (LayerKind::SameAudio, on(row.audio == Preserved::Yes)),
        (LayerKind::PartialAudio, on(row.audio == Preserved::Partial)),
        (
            LayerKind::VideoSimilarity,
            on(row.video == Preserved::Yes || (row.video == Preserved::Partial && partial_video_matches(reuse))),
        ),
    ]);
    ExpectedRow { excluded, links }
}

/// An original post and its reuse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReusePair {
    pub reuse: ReuseType,
    pub base: PostRecord,
    pub derived: PostRecord,
    /// What the generator built the derived post to satisfy.
    pub expected: ExpectedRow,
}

/// Pseudo-word text source.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    tags: Vec<String>,
}

const ONSETS: [&str; 18] =
    ["b", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "w", "z", "sch", "st", "br"];
const VOWELS: [&str; 8] = ["a", "e", "i", "o", "u", "ei", "au", "ie"];
const FEMALE_NAMES: [&str; 24] = [
    "anna", "lena", "mia", "emma", "sophie", "lea", "marie", "laura", "julia", "lisa", "sarah", "hannah", "nina",
    "clara", "jana", "paula", "lara", "emily", "katrin", "svenja", "maja", "ida", "greta", "frieda",
];

impl Vocabulary {
    pub fn new(seed: u64, words: usize, tags: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut make = |n: usize, syll: std::ops::RangeInclusive<usize>| {
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let k = rng.gen_range(syll.clone());
                let w: String = (0..k)
                    .map(|_| format!("{}{}", ONSETS.choose(&mut rng).unwrap(), VOWELS.choose(&mut rng).unwrap()))
                    .collect();
                if seen.insert(w.clone()) {
                    out.push(w);
                }
            }
            out
        };
        let words = make(words, 1..=3);
        let tags = make(tags, 2..=4);
        Vocabulary { words, tags }
    }

    pub fn sentence(&self, rng: &mut impl Rng, words: usize) -> String {
        (0..words).map(|_| self.words.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
    }

    /// Random words until at least `chars` characters.
    pub fn text_of_len(&self, rng: &mut impl Rng, chars: usize) -> String {
        let mut s = String::new();
        while s.chars().count() < chars {
            if !s.is_empty() {
                s.push(' ');
            }
            s.push_str(self.words.choose(rng).unwrap());
        }
        s
    }

    pub fn hashtags(&self, rng: &mut impl Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.tags.choose(rng).unwrap().clone()).collect()
    }

    pub fn description(&self, rng: &mut impl Rng, words: usize, tags: &[String]) -> String {
        let mut d = self.sentence(rng, words);
        for t in tags {
            d.push_str(" #");
            d.push_str(t);
        }
        d
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn fresh_frames(rng: &mut impl Rng, n: usize) -> Vec<u64> {
    (0..n).map(|_| rng.gen::<u64>() | 1).collect()
}

/// Flips between 2 and 6 distinct bits.
fn perturb(rng: &mut impl Rng, h: u64) -> u64 {
    let k = rng.gen_range(2..=6);
    let mut bits: Vec<u32> = (0..64).collect();
    bits.shuffle(rng);
    bits[..k].iter().fold(h, |acc, b| acc ^ (1u64 << b))
}

/// Derives a reuse of `base`. The derived post gets a fresh account.
pub fn generate_reuse_pair(base: &PostRecord, reuse: ReuseType, seed: u64) -> Result<ReusePair, SynthError> {
    let vocab = Vocabulary::new(seed ^ 0x5eed, 400, 400);
    generate_reuse_pair_with(base, reuse, seed, &vocab)
}

pub fn generate_reuse_pair_with(
    base: &PostRecord,
    reuse: ReuseType,
    seed: u64,
    vocab: &Vocabulary,
) -> Result<ReusePair, SynthError> {
    let (Some(transcript), Some(frames)) = (base.transcript_text(), base.frame_hashes.as_ref()) else {
        return Err(SynthError::IncompleteBase(base.post_id.to_string()));
    };
    let mut rng = rng_for(seed, 7);
    let user: UserId = format!("r{:016x}", rng.gen::<u64>()).into();
    let mut d = base.clone();
    d.post_id = format!("{}.{}", base.post_id, reuse.tag()).into();
    d.user_id = user.clone();
    d.username = format!("user{}", rng.gen_range(10_000_000..100_000_000u64));
    d.created_at = base.created_at + rng.gen_range(60..86_400);

    let new_description = |rng: &mut ChaCha8Rng| loop {
        let n = rng.gen_range(2..=4);
        let tags = vocab.hashtags(rng, n);
        let words = rng.gen_range(4..10);
        let desc = vocab.description(rng, words, &tags);
        if desc != base.description && crate::ingest::extract_hashtags(&desc) != base.hashtags {
            return desc;
        }
    };
    let fresh_music = |rng: &mut ChaCha8Rng| loop {
        let m = format!("m{:016x}", rng.gen::<u64>());
        if base.music_id.as_deref() != Some(&m) {
            return m;
        }
    };

    match reuse {
        ReuseType::Repost => {}
        ReuseType::Reupload => {
            let desc = new_description(&mut rng);
            d.set_description(desc);
            d.music_id = Some(fresh_music(&mut rng));
        }
        ReuseType::Duet => {
            let desc = new_description(&mut rng);
            d.set_description(desc);
            let split: Vec<u64> = loop {
                let cand: Vec<u64> = frames.iter().map(|&h| perturb(&mut rng, h)).collect();
                if cand.iter().all(|c| frames.iter().all(|f| (c ^ f).count_ones() >= 2)) {
                    break cand;
                }
            };
            d.frame_hashes = Some(split);
        }
        ReuseType::Stitch => {
            let desc = new_description(&mut rng);
            d.set_description(desc);
            d.music_id = Some(fresh_music(&mut rng));
            // Commentary at least as long as the original keeps the full ratio <= 50.
            let extra = vocab.text_of_len(&mut rng, transcript.chars().count());
            d.transcript = Some(format!("{transcript} {extra}"));
            let mut f = frames.clone();
            let n = rng.gen_range(3..=8);
            f.extend(fresh_frames(&mut rng, n));
            d.frame_hashes = Some(f);
        }
    }
    Ok(ReusePair { reuse, base: base.clone(), derived: d, expected: expected_from_reference(reuse) })
}

/// Reuse type by layer, with the excluded flag.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionMatrix {
    pub rows: BTreeMap<ReuseType, ExpectedRow>,
}

/// Aggregates expected rows and checks each against the reference behaviour.
pub fn expected_detection_matrix(pairs: &[ReusePair]) -> Result<DetectionMatrix, SynthError> {
    let mut rows = BTreeMap::new();
    for p in pairs {
        let reference = expected_from_reference(p.reuse);
        if p.expected.excluded != reference.excluded {
            return Err(SynthError::MatrixMismatch { reuse: p.reuse.tag().into(), layer: "new_post".into() });
        }
        for kind in DETECTION_LAYERS {
            if p.expected.links(kind) != reference.links(kind) {
                return Err(SynthError::MatrixMismatch { reuse: p.reuse.tag().into(), layer: kind.to_string() });
            }
        }
        if let Some(prev) = rows.insert(p.reuse, p.expected.clone()) {
            if prev != p.expected {
                return Err(SynthError::MatrixMismatch { reuse: p.reuse.tag().into(), layer: "row".into() });
            }
        }
    }
    Ok(DetectionMatrix { rows })
}

/// Per-post variation inside an injected cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    /// When set, all posts fall within this many seconds of one anchor (burst).
    pub time_window: Option<u64>,
    /// Probability that a non-hashtag word of the description is replaced.
    pub description_mutation_rate: f64,
    pub permute_hashtags: bool,
}

impl Jitter {
    pub const NONE: Jitter = Jitter { time_window: None, description_mutation_rate: 0.0, permute_hashtags: false };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub n_users: usize,
    /// Copies of the template each account posts.
    pub posts_per_user: usize,
    pub template: PostRecord,
    pub jitter: Jitter,
    pub active_window: (i64, i64),
}

impl ClusterSpec {
    fn validate(&self) -> Result<(), SynthError> {
        if self.n_users < 2 {
            return Err(SynthError::InvalidCluster("n_users must be at least 2".into()));
        }
        if self.posts_per_user == 0 {
            return Err(SynthError::InvalidCluster("posts_per_user must be positive".into()));
        }
        let (a, b) = self.active_window;
        if a <= 0 || b < a {
            return Err(SynthError::InvalidCluster(format!("bad active window {a}..{b}")));
        }
        if !(0.0..=1.0).contains(&self.jitter.description_mutation_rate) {
            return Err(SynthError::InvalidCluster("mutation rate outside [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedCluster {
    pub users: Vec<UserId>,
    pub post_ids: Vec<String>,
}

fn jitter_description(template: &PostRecord, jitter: &Jitter, vocab: &Vocabulary, rng: &mut impl Rng) -> String {
    if jitter.description_mutation_rate == 0.0 && !jitter.permute_hashtags {
        return template.description.clone();
    }
    let (mut words, mut tags): (Vec<String>, Vec<String>) = (Vec::new(), Vec::new());
    for tok in template.description.split_whitespace() {
        if tok.starts_with('#') {
            tags.push(tok.to_string());
        } else if rng.gen_bool(jitter.description_mutation_rate) {
            words.push(vocab.words.choose(rng).unwrap().clone());
        } else {
            words.push(tok.to_string());
        }
    }
    if jitter.permute_hashtags {
        tags.shuffle(rng);
    }
    words.extend(tags);
    words.join(" ")
}

/// Adds `spec.n_users` accounts posting copies of the template to `corpus`.
pub fn inject_coordinated_cluster(
    corpus: &mut Vec<PostRecord>,
    spec: &ClusterSpec,
    seed: u64,
) -> Result<InjectedCluster, SynthError> {
    spec.validate()?;
    let vocab = Vocabulary::new(seed ^ 0xc1a5, 400, 400);
    let mut rng = rng_for(seed, 11);
    let taken_users: HashSet<UserId> = corpus.iter().map(|p| p.user_id.clone()).collect();
    let taken_posts: HashSet<std::sync::Arc<str>> = corpus.iter().map(|p| p.post_id.clone()).collect();
    let (start, end) = spec.active_window;
    let anchor = rng.gen_range(start..=end);
    let mut users = Vec::new();
    let mut post_ids = Vec::new();
    while users.len() < spec.n_users {
        let uid: UserId = format!("c{:016x}", rng.gen::<u64>()).into();
        if taken_users.contains(&uid) || users.contains(&uid) {
            continue;
        }
        let name = FEMALE_NAMES.choose(&mut rng).unwrap();
        let username = format!("{name}{}", rng.gen_range(100..100_000));
        for k in 0..spec.posts_per_user {
            let pid = format!("{uid}.{k}");
            if taken_posts.contains(pid.as_str()) {
                return Err(SynthError::InvalidCluster(format!("post id {pid} already used")));
            }
            let t = match spec.jitter.time_window {
                Some(w) => (anchor + rng.gen_range(0..=w as i64)).min(end.max(anchor)),
                None => rng.gen_range(start..=end),
            };
            let mut p = spec.template.clone();
            p.post_id = pid.clone().into();
            p.user_id = uid.clone();
            p.username = username.clone();
            p.created_at = t;
            p.set_description(jitter_description(&spec.template, &spec.jitter, &vocab, &mut rng));
            corpus.push(p);
            post_ids.push(pid);
        }
        users.push(uid);
    }
    users.sort();
    Ok(InjectedCluster { users, post_ids })
}

/// Parameters of a whole synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub background_posts: usize,
    pub background_users: usize,
    /// Fraction of background posts carrying a transcript.
    pub transcript_rate: f64,
    /// Fraction of background posts carrying frame hashes.
    pub frames_rate: f64,
    pub reuse_pairs_per_type: usize,
    pub clusters: usize,
    pub cluster_size: (usize, usize),
    pub posts_per_user: usize,
    pub jitter: Jitter,
    pub window: (i64, i64),
    /// Mean transcript length in characters.
    pub transcript_chars: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            background_posts: 1_000,
            background_users: 500,
            transcript_rate: 0.3,
            frames_rate: 0.3,
            reuse_pairs_per_type: 10,
            clusters: 3,
            cluster_size: (5, 20),
            posts_per_user: 2,
            jitter: Jitter::NONE,
            // 2024-05-01 .. 2024-06-09
            window: (1_714_521_600, 1_717_891_200),
            transcript_chars: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub clusters: Vec<InjectedCluster>,
    pub reuse_pairs: Vec<ReuseTruth>,
    /// User pairs every injected cluster must connect, canonical order.
    pub expected_edges: Vec<(UserId, UserId)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReuseTruth {
    pub reuse: ReuseType,
    pub base_post: String,
    pub derived_post: String,
    pub expected: ExpectedRow,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub posts: Vec<PostRecord>,
    pub truth: GroundTruth,
}

/// Generates a corpus. Reposts are recorded in the ground truth but not added
/// as posts.
pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    let vocab = Vocabulary::new(cfg.seed, 3_000, 5_000);
    let mut rng = rng_for(cfg.seed, 1);
    let (start, end) = cfg.window;
    let mut posts = Vec::with_capacity(cfg.background_posts + 8 * cfg.reuse_pairs_per_type);
    let bg_users = cfg.background_users.max(1);
    let transcript = |rng: &mut ChaCha8Rng| {
        let n = rng.gen_range(cfg.transcript_chars / 2..=cfg.transcript_chars * 3 / 2).max(1);
        vocab.text_of_len(rng, n)
    };

    for i in 0..cfg.background_posts {
        let u = rng.gen_range(0..bg_users);
        let n_tags = if rng.gen_bool(0.2) { 0 } else { rng.gen_range(2..=4) };
        let tags = vocab.hashtags(&mut rng, n_tags);
        let words = rng.gen_range(6..14);
        let mut desc = vocab.description(&mut rng, words, &tags);
        if rng.gen_bool(0.02) {
            desc.push_str(&format!(" https://example.org/{}", vocab.sentence(&mut rng, 1)));
        }
        let mut p = PostRecord::new(
            format!("b{i:07}"),
            format!("bu{u:06}"),
            format!("{}_{}", vocab.sentence(&mut rng, 1), rng.gen_range(1..999)),
            rng.gen_range(start..=end),
            desc,
        );
        p.music_id = Some(format!("m{:04}", rng.gen_range(0..(cfg.background_posts / 4).max(1))));
        if rng.gen_bool(cfg.transcript_rate) {
            p.transcript = Some(transcript(&mut rng));
        }
        if rng.gen_bool(cfg.frames_rate) {
            let n = rng.gen_range(3..=20);
            p.frame_hashes = Some(fresh_frames(&mut rng, n));
        }
        posts.push(p);
    }

    let mut truth = GroundTruth::default();
    for reuse in ReuseType::ALL {
        for k in 0..cfg.reuse_pairs_per_type {
            let tags = vocab.hashtags(&mut rng, 3);
            let mut base = PostRecord::new(
                format!("o{}{k:05}", reuse.tag()),
                format!("ou{}{k:05}", reuse.tag()),
                format!("orig_{}{k}", reuse.tag()),
                rng.gen_range(start..=end),
                vocab.description(&mut rng, 8, &tags),
            )
            .with_music_id(format!("om{:016x}", rng.gen::<u64>()))
            .with_transcript(transcript(&mut rng));
            let n = rng.gen_range(4..=20);
            base.frame_hashes = Some(fresh_frames(&mut rng, n));
            let pair = generate_reuse_pair_with(&base, reuse, rng.gen(), &vocab)?;
            truth.reuse_pairs.push(ReuseTruth {
                reuse,
                base_post: base.post_id.to_string(),
                derived_post: pair.derived.post_id.to_string(),
                expected: pair.expected.clone(),
            });
            posts.push(pair.base);
            if !pair.expected.excluded {
                posts.push(pair.derived);
            }
        }
    }

    for c in 0..cfg.clusters {
        let n_users = rng.gen_range(cfg.cluster_size.0..=cfg.cluster_size.1.max(cfg.cluster_size.0));
        let tags = vocab.hashtags(&mut rng, 4);
        let mut template =
            PostRecord::new(format!("t{c}"), "template", "template", start, vocab.description(&mut rng, 12, &tags))
                .with_music_id(format!("cm{c:04}"))
                .with_transcript(transcript(&mut rng));
        template.frame_hashes = Some(fresh_frames(&mut rng, 10));
        let spec = ClusterSpec {
            n_users,
            posts_per_user: cfg.posts_per_user,
            template,
            jitter: cfg.jitter,
            active_window: cfg.window,
        };
        let cluster = inject_coordinated_cluster(&mut posts, &spec, rng.gen())?;
        for (i, a) in cluster.users.iter().enumerate() {
            for b in &cluster.users[i + 1..] {
                truth.expected_edges.push((a.clone(), b.clone()));
            }
        }
        truth.clusters.push(cluster);
    }
    Ok(SynthCorpus { posts, truth })
}

/// Labelled transcript pairs for threshold calibration: near-identical copies
/// (`same`), stitched extensions (`partial`) and unrelated texts (`none`).
pub fn synthetic_audio_labels(seed: u64, per_class: usize) -> (Vec<PostRecord>, Vec<crate::tuning::LabeledPair>) {
    use crate::tuning::{AudioLabel, LabeledPair};
    let vocab = Vocabulary::new(seed, 3_000, 100);
    let mut rng = rng_for(seed, 3);
    let mut posts = Vec::new();
    let mut labels = Vec::new();
    let add = |posts: &mut Vec<PostRecord>, id: String, text: String| {
        let n = posts.len();
        posts.push(
            PostRecord::new(id.clone(), format!("lu{n}"), format!("lu{n}"), 1_700_000_000 + n as i64, "")
                .with_transcript(text),
        );
        id
    };
    let typo = |rng: &mut ChaCha8Rng, s: &str| -> String {
        let mut c: Vec<char> = s.chars().collect();
        let edits = (c.len() / 50).max(1);
        for _ in 0..edits {
            let i = rng.gen_range(0..c.len());
            c[i] = 'x';
        }
        c.into_iter().collect()
    };
    for (class, label) in [(0, AudioLabel::Same), (1, AudioLabel::Partial), (2, AudioLabel::None)] {
        for k in 0..per_class {
            let n = rng.gen_range(120..=280);
            let a = vocab.text_of_len(&mut rng, n);
            let b = match class {
                0 => typo(&mut rng, &a),
                1 => format!("{} {}", a, vocab.text_of_len(&mut rng, n)),
                _ => {
                    let m = rng.gen_range(120..=280);
                    vocab.text_of_len(&mut rng, m)
                }
            };
            let pa = add(&mut posts, format!("l{class}{k:04}a"), a);
            let pb = add(&mut posts, format!("l{class}{k:04}b"), b);
            labels.push(LabeledPair { post_a: pa, post_b: pb, visual: false, audio: label, message: class != 2 });
        }
    }
    (posts, labels)
}

/// Ground-truth clusters as sorted user sets.
pub fn cluster_sets(truth: &GroundTruth) -> BTreeSet<Vec<UserId>> {
    truth.clusters.iter().map(|c| c.users.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> PostRecord {
        PostRecord::new("p1", "u1", "orig", 1_700_000_000, "wahl heute #eins #zwei")
            .with_music_id("m1")
            .with_transcript("am sonntag gehen wir alle waehlen und zwar fuer eine bessere zukunft in europa")
            .with_frames(vec![0x0123_4567_89ab_cdef, 0xfedc_ba98_7654_3210, 0x0f0f_0f0f_0f0f_0f0f])
    }

    #[test]
    fn reference_rows() {
        let up = expected_from_reference(ReuseType::Reupload);
        assert!(
            up.links(LayerKind::SameAudio) && up.links(LayerKind::VideoSimilarity) && !up.links(LayerKind::MusicId)
        );
        let duet = expected_from_reference(ReuseType::Duet);
        assert!(
            duet.links(LayerKind::MusicId)
                && duet.links(LayerKind::SameAudio)
                && !duet.links(LayerKind::VideoSimilarity)
        );
        let st = expected_from_reference(ReuseType::Stitch);
        assert!(st.links(LayerKind::PartialAudio) && !st.links(LayerKind::SameAudio) && !st.links(LayerKind::MusicId));
        let rp = expected_from_reference(ReuseType::Repost);
        assert!(rp.excluded && DETECTION_LAYERS.iter().all(|k| !rp.links(*k)));
    }

    #[test]
    fn reupload_keeps_audio_and_video() {
        let p = generate_reuse_pair(&base(), ReuseType::Reupload, 3).unwrap();
        assert_eq!(p.derived.transcript, p.base.transcript);
        assert_eq!(p.derived.frame_hashes, p.base.frame_hashes);
        assert_ne!(p.derived.music_id, p.base.music_id);
        assert_ne!(p.derived.hashtags, p.base.hashtags);
        assert_ne!(p.derived.user_id, p.base.user_id);
    }

    #[test]
    fn duet_moves_every_frame() {
        let p = generate_reuse_pair(&base(), ReuseType::Duet, 4).unwrap();
        let (b, d) = (p.base.frame_hashes.unwrap(), p.derived.frame_hashes.unwrap());
        assert!(d.iter().all(|x| b.iter().all(|y| (x ^ y).count_ones() >= 2)));
        assert_eq!(p.derived.music_id, p.base.music_id);
    }

    #[test]
    fn stitch_extends_audio() {
        let p = generate_reuse_pair(&base(), ReuseType::Stitch, 5).unwrap();
        let m = crate::similarity::classify_audio_pair(
            p.base.transcript_text().unwrap(),
            p.derived.transcript_text().unwrap(),
        )
        .unwrap();
        assert_eq!(m.class, crate::similarity::AudioClass::Partial);
        assert!(m.exact_score < 78);
    }

    #[test]
    fn incomplete_base_rejected() {
        let b = PostRecord::new("p", "u", "x", 5, "");
        assert_eq!(generate_reuse_pair(&b, ReuseType::Duet, 1), Err(SynthError::IncompleteBase("p".into())));
    }

    #[test]
    fn matrix_self_check() {
        assert!(expected_detection_matrix(&[]).unwrap().rows.is_empty());
        let pairs: Vec<ReusePair> =
            ReuseType::ALL.iter().map(|&t| generate_reuse_pair(&base(), t, 9).unwrap()).collect();
        let m = expected_detection_matrix(&pairs).unwrap();
        assert_eq!(m.rows.len(), 4);
        assert!(m.rows[&ReuseType::Repost].excluded);
        let mut bad = pairs[1].clone();
        bad.expected.links.insert(LayerKind::MusicId, true);
        assert!(matches!(expected_detection_matrix(&[bad]), Err(SynthError::MatrixMismatch { .. })));
    }

    #[test]
    fn zero_jitter_cluster() {
        let spec = ClusterSpec {
            n_users: 2,
            posts_per_user: 1,
            template: base(),
            jitter: Jitter::NONE,
            active_window: (1_700_000_000, 1_700_100_000),
        };
        let mut corpus = Vec::new();
        let c = inject_coordinated_cluster(&mut corpus, &spec, 42).unwrap();
        assert_eq!(c.users.len(), 2);
        assert!(corpus.iter().all(|p| p.description == base().description && p.transcript == base().transcript));
        let vd = crate::layers::build_exact_layer(&corpus, LayerKind::VideoDescription, &Default::default());
        assert_eq!(vd.edge_count(), 1);
        let mut again = Vec::new();
        inject_coordinated_cluster(&mut again, &spec, 42).unwrap();
        assert_eq!(corpus, again);
        assert!(corpus.iter().all(|p| FEMALE_NAMES.iter().any(|n| p.username.starts_with(n))));
    }

    #[test]
    fn burst_and_mutation() {
        let spec = ClusterSpec {
            n_users: 6,
            posts_per_user: 2,
            template: base(),
            jitter: Jitter { time_window: Some(60), description_mutation_rate: 1.0, permute_hashtags: true },
            active_window: (1_700_000_000, 1_700_100_000),
        };
        let mut corpus = Vec::new();
        inject_coordinated_cluster(&mut corpus, &spec, 1).unwrap();
        let (lo, hi) =
            (corpus.iter().map(|p| p.created_at).min().unwrap(), corpus.iter().map(|p| p.created_at).max().unwrap());
        assert!(hi - lo <= 60);
        assert!(corpus.iter().all(|p| p.description != base().description));
        let mut tags = corpus[0].hashtags.clone();
        tags.sort();
        assert_eq!(tags, ["eins", "zwei"]);
    }

    #[test]
    fn invalid_cluster() {
        let spec = ClusterSpec {
            n_users: 1,
            posts_per_user: 1,
            template: base(),
            jitter: Jitter::NONE,
            active_window: (1, 2),
        };
        assert!(inject_coordinated_cluster(&mut Vec::new(), &spec, 1).is_err());
    }

    #[test]
    fn corpus_is_deterministic() {
        let cfg = SynthConfig {
            background_posts: 200,
            background_users: 80,
            reuse_pairs_per_type: 3,
            clusters: 2,
            ..Default::default()
        };
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a.posts, b.posts);
        assert_eq!(a.truth, b.truth);
        let ids: HashSet<&str> = a.posts.iter().map(|p| &*p.post_id).collect();
        assert_eq!(ids.len(), a.posts.len());
        // reposts are not posts
        assert_eq!(a.truth.reuse_pairs.len(), 12);
        assert!(a.posts.iter().all(|p| !p.post_id.ends_with(".repost")));
    }
}
