//! JSON Lines corpus reader.
//!
//! One post per line:
//!
//! ```text
//! {"post_id": "...", "user_id": "...", "username": "...", "created_at": 1717000000,
//!  "description": "...", "music_id": null, "voice_to_text": null,
//!  "frame_hashes": ["123", "456"], "frames_dir": null}
//! ```
//!
//! Hashtags and URLs are always re-derived from `description`. Frame hashes are
//! decimal strings; alternatively `frames_dir` names a directory of grayscale
//! frame images that are hashed on load.

use std::collections::{HashMap, HashSet};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::CorpusError;
use crate::model::PostRecord;
use crate::similarity;

/// In-order hashtags of a description, case-folded, duplicates kept.
pub fn extract_hashtags(description: &str) -> Vec<String> {
    let mut tags = Vec::new();
    let mut chars = description.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if c != '#' {
            continue;
        }
        let mut token = String::new();
        while let Some(&(_, n)) = chars.peek() {
            if n.is_alphanumeric() || n == '_' {
                token.push(n);
                chars.next();
            } else {
                break;
            }
        }
        if !token.is_empty() {
            tags.push(caseless::default_case_fold_str(&token));
        }
    }
    tags
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bhttps?://\S+").expect("static regex"))
}

/// Full URLs in a description with trailing `.,;:!?)` stripped.
pub fn extract_urls(description: &str) -> Vec<String> {
    url_regex()
        .find_iter(description)
        .filter_map(|m| {
            let url = m.as_str().trim_end_matches(['.', ',', ';', ':', '!', '?', ')']);
            let rest = &url[url.find("://").map_or(url.len(), |i| i + 3)..];
            (!rest.is_empty()).then(|| url.to_string())
        })
        .collect()
}

/// Per-field availability over a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub post_count: usize,
    pub user_count: usize,
    pub posts_with_transcript: usize,
    pub posts_with_frames: usize,
    pub posts_with_music_id: usize,
    /// `(min, max)` of `created_at`; `(0, 0)` for an empty corpus.
    pub time_range: (i64, i64),
}

impl CorpusSummary {
    pub fn of(posts: &[PostRecord]) -> Self {
        let users: HashSet<&str> = posts.iter().map(|p| &*p.user_id).collect();
        let min = posts.iter().map(|p| p.created_at).min().unwrap_or(0);
        let max = posts.iter().map(|p| p.created_at).max().unwrap_or(0);
        CorpusSummary {
            post_count: posts.len(),
            user_count: users.len(),
            posts_with_transcript: posts.iter().filter(|p| p.transcript_text().is_some()).count(),
            posts_with_frames: posts.iter().filter(|p| p.frame_hashes.is_some()).count(),
            posts_with_music_id: posts.iter().filter(|p| p.music_id.is_some()).count(),
            time_range: (min, max),
        }
    }
}

/// A line that could not be turned into a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub posts: Vec<PostRecord>,
    pub summary: CorpusSummary,
    pub errors: Vec<LineError>,
    /// Number of records replaced by a later record with the same `post_id`.
    pub duplicates: usize,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Base directory for relative `frames_dir` entries.
    pub frames_root: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum HashRepr {
    Text(String),
    Number(u64),
}

#[derive(Deserialize)]
struct RawPost {
    post_id: String,
    user_id: String,
    #[serde(default)]
    username: Option<String>,
    created_at: i64,
    #[serde(default)]
    description: Option<String>,
    #[serde(default)]
    music_id: Option<String>,
    #[serde(default)]
    voice_to_text: Option<String>,
    #[serde(default)]
    frame_hashes: Option<Vec<HashRepr>>,
    #[serde(default)]
    frames_dir: Option<String>,
}

#[derive(Serialize)]
struct WirePost<'a> {
    post_id: &'a str,
    user_id: &'a str,
    username: &'a str,
    created_at: i64,
    description: &'a str,
    music_id: Option<&'a str>,
    voice_to_text: Option<&'a str>,
    frame_hashes: Option<Vec<String>>,
    frames_dir: Option<&'a str>,
}

fn parse_line(line: &str, opts: &IngestOptions) -> Result<PostRecord, String> {
    let raw: RawPost = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if raw.post_id.is_empty() {
        return Err("empty post_id".into());
    }
    if raw.user_id.is_empty() {
        return Err("empty user_id".into());
    }
    if raw.created_at <= 0 {
        return Err(format!("created_at must be positive, got {}", raw.created_at));
    }
    let frames = match (raw.frame_hashes, raw.frames_dir) {
        (Some(hashes), _) => hashes
            .into_iter()
            .map(|h| match h {
                HashRepr::Number(n) => Ok(n),
                HashRepr::Text(s) => {
                    s.trim().parse::<u64>().map_err(|_| format!("frame hash {s:?} is not a decimal u64"))
                }
            })
            .collect::<Result<Vec<_>, _>>()?,
        (None, Some(dir)) => hash_frames_dir(&resolve(&dir, opts))?,
        (None, None) => Vec::new(),
    };
    let username = raw.username.unwrap_or_else(|| raw.user_id.clone());
    let mut post =
        PostRecord::new(raw.post_id, raw.user_id, username, raw.created_at, raw.description.unwrap_or_default())
            .with_frames(frames);
    post.music_id = raw.music_id;
    post.transcript = raw.voice_to_text;
    Ok(post)
}

fn resolve(dir: &str, opts: &IngestOptions) -> PathBuf {
    let p = Path::new(dir);
    match &opts.frames_root {
        Some(root) if p.is_relative() => root.join(p),
        _ => p.to_path_buf(),
    }
}

/// Hashes every image in `dir` in file-name order.
pub fn hash_frames_dir(dir: &Path) -> Result<Vec<u64>, String> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| format!("frames_dir {}: {e}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .map(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg" | "bmp" | "pgm" | "pnm"))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(format!("frames_dir {} holds no images", dir.display()));
    }
    files
        .iter()
        .map(|f| {
            let img = image::open(f).map_err(|e| format!("{}: {e}", f.display()))?.to_luma8();
            let (w, h) = img.dimensions();
            similarity::dhash_frame(img.as_raw(), w as usize, h as usize)
                .map(|h| h.0)
                .map_err(|e| format!("{}: {e}", f.display()))
        })
        .collect()
}

/// Reads a JSON Lines corpus.
///
/// Malformed lines are collected and skipped; more than half malformed is
/// fatal. A repeated `post_id` replaces the earlier record in place.
pub fn parse_dataset<R: Read>(mut source: R) -> Result<ParsedCorpus, CorpusError> {
    parse_dataset_with(&mut source, &IngestOptions::default())
}

pub fn parse_dataset_with<R: Read>(mut source: R, opts: &IngestOptions) -> Result<ParsedCorpus, CorpusError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let lines: Vec<(usize, &str)> =
        text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty()).collect();
    let parsed: Vec<(usize, Result<PostRecord, String>)> =
        lines.par_iter().map(|&(n, l)| (n, parse_line(l, opts))).collect();

    let total = parsed.len();
    let mut posts: Vec<PostRecord> = Vec::with_capacity(total);
    let mut slot: HashMap<String, usize> = HashMap::with_capacity(total);
    let mut errors = Vec::new();
    let mut duplicates = 0;
    for (line, result) in parsed {
        match result {
            Ok(post) => match slot.get(&*post.post_id) {
                Some(&i) => {
                    log::warn!("line {line}: duplicate post_id {:?} replaces earlier record", post.post_id);
                    duplicates += 1;
                    posts[i] = post;
                }
                None => {
                    slot.insert(post.post_id.to_string(), posts.len());
                    posts.push(post);
                }
            },
            Err(message) => errors.push(LineError { line, message }),
        }
    }
    if total > 0 && errors.len() * 2 > total {
        let first = &errors[0];
        return Err(CorpusError::TooManyMalformed {
            malformed: errors.len(),
            total,
            first_line: first.line,
            first_error: first.message.clone(),
        });
    }
    let summary = CorpusSummary::of(&posts);
    Ok(ParsedCorpus { posts, summary, errors, duplicates })
}

/// One corpus line for `post`, without trailing newline.
pub fn to_json_line(post: &PostRecord) -> String {
    let wire = WirePost {
        post_id: &post.post_id,
        user_id: &post.user_id,
        username: &post.username,
        created_at: post.created_at,
        description: &post.description,
        music_id: post.music_id.as_deref(),
        voice_to_text: post.transcript.as_deref(),
        frame_hashes: post.frame_hashes.as_ref().map(|f| f.iter().map(u64::to_string).collect()),
        frames_dir: None,
    };
    serde_json::to_string(&wire).expect("post serializes")
}

/// Writes posts in corpus format, one per line.
pub fn write_dataset<W: std::io::Write>(posts: &[PostRecord], mut out: W) -> std::io::Result<()> {
    for p in posts {
        out.write_all(to_json_line(p).as_bytes())?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
