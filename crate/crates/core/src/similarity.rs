//! Similarity kernels for transcripts and video frames.
//!
//! Edit distances are computed with the block-based bit-parallel algorithm of
//! Myers/Hyyrö over unicode scalar values. Scores are integer percentages
//! rounded half-up.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::SimilarityError;

/// Precomputed match masks of a pattern, reusable against many texts.
#[derive(Debug, Clone)]
pub struct PatternMask {
    len: usize,
    blocks: usize,
    /// `blocks` masks per byte-range char.
    narrow: Vec<u64>,
    wide: HashMap<char, Vec<u64>>,
}

impl PatternMask {
    pub fn new(pattern: &[char]) -> Self {
        let blocks = pattern.len().div_ceil(64).max(1);
        let mut narrow = vec![0u64; 256 * blocks];
        let mut wide: HashMap<char, Vec<u64>> = HashMap::new();
        for (i, &c) in pattern.iter().enumerate() {
            let (b, bit) = (i / 64, 1u64 << (i % 64));
            if (c as u32) < 256 {
                narrow[c as usize * blocks + b] |= bit;
            } else {
                wide.entry(c).or_insert_with(|| vec![0; blocks])[b] |= bit;
            }
        }
        PatternMask { len: pattern.len(), blocks, narrow, wide }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    fn masks(&self, c: char) -> Option<&[u64]> {
        if (c as u32) < 256 {
            let i = c as usize * self.blocks;
            Some(&self.narrow[i..i + self.blocks])
        } else {
            self.wide.get(&c).map(Vec::as_slice)
        }
    }

    /// Levenshtein distance between the pattern and `text`.
    pub fn distance(&self, text: &[char]) -> usize {
        self.run(text, true)
    }

    /// Minimum Levenshtein distance between the pattern and any substring of `text`.
    pub fn substring_distance(&self, text: &[char]) -> usize {
        self.run(text, false)
    }

    fn run(&self, text: &[char], global: bool) -> usize {
        let m = self.len;
        if m == 0 {
            return if global { text.len() } else { 0 };
        }
        let nb = self.blocks;
        let last = nb - 1;
        let last_bit = (m - 1) % 64;
        let mut pv = vec![!0u64; nb];
        let mut mv = vec![0u64; nb];
        let zeros = vec![0u64; nb];
        let mut score = m as isize;
        let mut best = score;
        for &c in text {
            let eqs = self.masks(c).unwrap_or(&zeros);
            // Top row is D[0][j] = j for global alignment, 0 when the match may start anywhere.
            let mut hin: i32 = if global { 1 } else { 0 };
            for b in 0..nb {
                let hb = if b == last { last_bit } else { 63 };
                let (p, q) = (pv[b], mv[b]);
                let hin_neg = (hin < 0) as u64;
                let hin_pos = (hin > 0) as u64;
                let eq = eqs[b];
                let xv = eq | q;
                let eq = eq | hin_neg;
                let xh = ((eq & p).wrapping_add(p) ^ p) | eq;
                let mut ph = q | !(xh | p);
                let mut mh = p & xh;
                hin = ((ph >> hb) & 1) as i32 - ((mh >> hb) & 1) as i32;
                ph = (ph << 1) | hin_pos;
                mh = (mh << 1) | hin_neg;
                pv[b] = mh | !(xv | ph);
                mv[b] = ph & xv;
            }
            score += hin as isize;
            best = best.min(score);
        }
        if global {
            score as usize
        } else {
            best as usize
        }
    }
}

/// Levenshtein distance over unicode scalar values with unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (short, long) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    PatternMask::new(short).distance(long)
}

/// `round_half_up(100 * (1 - distance / max_len))`; 100 when `max_len` is 0.
#[inline]
pub fn ratio_from_distance(distance: usize, max_len: usize) -> u8 {
    if max_len == 0 {
        return 100;
    }
    let same = max_len.saturating_sub(distance);
    ((200 * same + max_len) / (2 * max_len)) as u8
}

/// Normalized edit similarity, 0 to 100.
pub fn similarity_ratio(a: &str, b: &str) -> u8 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    ratio_chars(&a, &b)
}

fn ratio_chars(a: &[char], b: &[char]) -> u8 {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let d = PatternMask::new(short).distance(long);
    ratio_from_distance(d, long.len())
}

/// Best [`similarity_ratio`] between the shorter string and any equally long
/// window of the longer one. On a length tie `a` is the shorter.
pub fn partial_similarity_ratio(a: &str, b: &str) -> u8 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (s, l) = if a.len() <= b.len() { (&a, &b) } else { (&b, &a) };
    if s.is_empty() {
        return 100;
    }
    let mask = PatternMask::new(s);
    ratio_from_distance(best_window_distance(&mask, l, 0), s.len())
}

/// Minimum distance between the pattern and every `|pattern|`-long window of
/// `long`. Stops early once `floor` is reached.
fn best_window_distance(mask: &PatternMask, long: &[char], floor: usize) -> usize {
    let n = mask.len();
    let mut best = usize::MAX;
    for start in 0..=(long.len() - n) {
        let d = mask.distance(&long[start..start + n]);
        if d < best {
            best = d;
            if best <= floor {
                break;
            }
        }
    }
    best
}

/// Score thresholds for the audio layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioThresholds {
    /// Minimum exact ratio for a same-audio pair.
    pub exact: u8,
    /// Minimum partial ratio for a partial-audio pair.
    pub partial: u8,
}

impl Default for AudioThresholds {
    fn default() -> Self {
        AudioThresholds { exact: 88, partial: 68 }
    }
}

impl AudioThresholds {
    /// Midpoint of the two thresholds, rounded half-up. Pairs whose exact score
    /// reaches it and whose partial score passes are treated as same audio.
    pub fn midpoint(&self) -> u8 {
        ((self.exact as u16 + self.partial as u16 + 1) / 2) as u8
    }

    pub fn classify(&self, exact_score: u8, partial_score: u8) -> AudioClass {
        if exact_score >= self.exact {
            AudioClass::Same
        } else if partial_score >= self.partial && exact_score >= self.midpoint() {
            AudioClass::Same
        } else if partial_score >= self.partial {
            AudioClass::Partial
        } else {
            AudioClass::Unrelated
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioClass {
    Same,
    Partial,
    Unrelated,
}

/// Class of a transcript pair together with both scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioMatch {
    pub class: AudioClass,
    pub exact_score: u8,
    pub partial_score: u8,
}

/// Classifies two transcripts with the default thresholds.
pub fn classify_audio_pair(a: &str, b: &str) -> Result<AudioMatch, SimilarityError> {
    classify_audio_pair_with(a, b, &AudioThresholds::default())
}

pub fn classify_audio_pair_with(a: &str, b: &str, thresholds: &AudioThresholds) -> Result<AudioMatch, SimilarityError> {
    if a.is_empty() || b.is_empty() {
        return Err(SimilarityError::EmptyTranscript);
    }
    let exact_score = similarity_ratio(a, b);
    let partial_score = partial_similarity_ratio(a, b);
    Ok(AudioMatch { class: thresholds.classify(exact_score, partial_score), exact_score, partial_score })
}

/// A transcript prepared for many comparisons.
#[derive(Debug, Clone)]
pub struct PreparedTranscript {
    chars: Vec<char>,
    mask: PatternMask,
}

impl PreparedTranscript {
    pub fn new(text: &str) -> Self {
        let chars: Vec<char> = text.chars().collect();
        let mask = PatternMask::new(&chars);
        PreparedTranscript { chars, mask }
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }
}

/// Classifies a prepared pair, returning `None` for unrelated pairs.
///
/// The minimum substring distance `d*` of the shorter transcript inside the
/// longer bounds both scores from above (every window and the full string are
/// substrings), so most unrelated pairs are rejected after one linear
/// bit-parallel scan. Linked pairs get the same scores as
/// [`classify_audio_pair_with`].
pub fn classify_prepared(
    a: &PreparedTranscript,
    b: &PreparedTranscript,
    thresholds: &AudioThresholds,
) -> Option<AudioMatch> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let (s, l) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let (n, m) = (s.len(), l.len());
    let d_star = s.mask.substring_distance(&l.chars);
    let partial_ub = ratio_from_distance(d_star, n);
    let exact_ub = ratio_from_distance(d_star.max(m - n), m);
    if partial_ub < thresholds.partial && exact_ub < thresholds.exact {
        return None;
    }
    let exact_score = ratio_from_distance(s.mask.distance(&l.chars), m);
    let partial_score = if n == m {
        exact_score
    } else if partial_ub >= thresholds.partial || exact_score >= thresholds.exact {
        ratio_from_distance(best_window_distance(&s.mask, &l.chars, d_star), n)
    } else {
        // Below the partial threshold; class cannot depend on the precise value.
        partial_ub
    };
    let class = thresholds.classify(exact_score, partial_score);
    (class != AudioClass::Unrelated).then_some(AudioMatch { class, exact_score, partial_score })
}

/// 64-bit difference hash of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrameHash(pub u64);

/// Mean intensities of the 9 columns × 8 rows grid, rounded half-up.
pub fn dhash_grid(pixels: &[u8], width: usize, height: usize) -> Result<[[u8; 9]; 8], SimilarityError> {
    if width < 9 || height < 8 {
        return Err(SimilarityError::ImageTooSmall { width, height });
    }
    if pixels.len() != width * height {
        return Err(SimilarityError::PixelBufferSize { expected: width * height, actual: pixels.len() });
    }
    let mut grid = [[0u8; 9]; 8];
    for (r, row) in grid.iter_mut().enumerate() {
        let (y0, y1) = (r * height / 8, (r + 1) * height / 8);
        for (c, cell) in row.iter_mut().enumerate() {
            let (x0, x1) = (c * width / 9, (c + 1) * width / 9);
            let mut sum = 0u64;
            for y in y0..y1 {
                sum += pixels[y * width + x0..y * width + x1].iter().map(|&p| p as u64).sum::<u64>();
            }
            let count = ((y1 - y0) * (x1 - x0)) as u64;
            *cell = ((2 * sum + count) / (2 * count)) as u8;
        }
    }
    Ok(grid)
}

/// Hash bits from a grid: bit `r*8 + c` is set iff `cell[r][c] < cell[r][c+1]`.
pub fn hash_from_grid(grid: &[[u8; 9]; 8]) -> FrameHash {
    let mut h = 0u64;
    for (r, row) in grid.iter().enumerate() {
        for c in 0..8 {
            if row[c] < row[c + 1] {
                h |= 1 << (r * 8 + c);
            }
        }
    }
    FrameHash(h)
}

/// True when every cell of the grid has the same value (blank frame).
pub fn is_low_information(grid: &[[u8; 9]; 8]) -> bool {
    let first = grid[0][0];
    grid.iter().all(|row| row.iter().all(|&v| v == first))
}

/// Horizontal-gradient difference hash of a grayscale frame.
pub fn dhash_frame(pixels: &[u8], width: usize, height: usize) -> Result<FrameHash, SimilarityError> {
    dhash_grid(pixels, width, height).map(|g| hash_from_grid(&g))
}

#[inline]
pub fn hamming_distance(a: FrameHash, b: FrameHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Options for [`video_match`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoMatchOptions {
    pub max_dist: u32,
    /// Ignore blank frames of the shorter video. Only the hash is available at
    /// this point, so a frame counts as blank when its hash is zero.
    pub drop_low_info: bool,
}

impl Default for VideoMatchOptions {
    fn default() -> Self {
        VideoMatchOptions { max_dist: 1, drop_low_info: false }
    }
}

/// True iff every frame of the shorter video (tie: `frames_a`) has a frame in
/// the other within `max_dist` bits.
pub fn video_match(frames_a: &[u64], frames_b: &[u64], opts: VideoMatchOptions) -> Result<bool, SimilarityError> {
    if frames_a.is_empty() || frames_b.is_empty() {
        return Err(SimilarityError::NoFrames);
    }
    let (short, long) = if frames_a.len() <= frames_b.len() { (frames_a, frames_b) } else { (frames_b, frames_a) };
    let mut any = false;
    for &h in short {
        if opts.drop_low_info && h == 0 {
            continue;
        }
        any = true;
        if !long.iter().any(|&g| (h ^ g).count_ones() <= opts.max_dist) {
            return Ok(false);
        }
    }
    Ok(any)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dp(a: &[char], b: &[char]) -> usize {
        let mut prev: Vec<usize> = (0..=b.len()).collect();
        for (i, ca) in a.iter().enumerate() {
            let mut cur = vec![i + 1; b.len() + 1];
            for (j, cb) in b.iter().enumerate() {
                cur[j + 1] = (prev[j] + (ca != cb) as usize).min(prev[j + 1] + 1).min(cur[j] + 1);
            }
            prev = cur;
        }
        prev[b.len()]
    }

    fn dp_substring(p: &[char], t: &[char]) -> usize {
        let mut prev = vec![0usize; t.len() + 1];
        for (i, cp) in p.iter().enumerate() {
            let mut cur = vec![i + 1; t.len() + 1];
            for (j, ct) in t.iter().enumerate() {
                cur[j + 1] = (prev[j] + (cp != ct) as usize).min(prev[j + 1] + 1).min(cur[j] + 1);
            }
            prev = cur;
        }
        *prev.iter().min().unwrap()
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(similarity_ratio("abc", "abc"), 100);
        assert_eq!(similarity_ratio("abc", "abd"), 67);
        assert_eq!(similarity_ratio("", "x"), 0);
        assert_eq!(similarity_ratio("", ""), 100);
    }

    #[test]
    fn partial_examples() {
        assert_eq!(partial_similarity_ratio("hello", "xxhelloyy"), 100);
        assert_eq!(partial_similarity_ratio("abc", "abc"), 100);
        assert_eq!(partial_similarity_ratio("abc", "xyz"), 0);
        assert_eq!(partial_similarity_ratio("", "xyz"), 100);
    }

    #[test]
    fn long_patterns_cross_blocks() {
        let a: String = (0..300).map(|i| char::from(b'a' + (i * 7 % 26) as u8)).collect();
        let mut b = a.clone();
        b.replace_range(70..75, "QQQQQ");
        b.insert_str(200, "zz");
        let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        assert_eq!(levenshtein(&a, &b), dp(&ac, &bc));
        assert_eq!(PatternMask::new(&ac[10..140]).substring_distance(&bc), dp_substring(&ac[10..140], &bc));
    }

    #[test]
    fn midpoint_of_default_thresholds() {
        assert_eq!(AudioThresholds::default().midpoint(), 78);
    }

    #[test]
    fn classify_examples() {
        let t = "wir gehen am sonntag alle zur wahl und stimmen fuer die zukunft";
        assert_eq!(classify_audio_pair(t, t).unwrap().class, AudioClass::Same);
        let stitched = format!("{t} und hier ist mein eigener kommentar dazu, der deutlich laenger ausfaellt als das original video selbst");
        let m = classify_audio_pair(t, &stitched).unwrap();
        assert!(m.exact_score < 78);
        assert_eq!(m.partial_score, 100);
        assert_eq!(m.class, AudioClass::Partial);
        let other = "heute koche ich nudeln mit tomatensauce fuer meine familie zuhause";
        assert_eq!(classify_audio_pair(t, other).unwrap().class, AudioClass::Unrelated);
        assert_eq!(classify_audio_pair("", t), Err(SimilarityError::EmptyTranscript));
    }

    #[test]
    fn threshold_rules() {
        let th = AudioThresholds::default();
        assert_eq!(th.classify(88, 0), AudioClass::Same);
        assert_eq!(th.classify(78, 68), AudioClass::Same);
        assert_eq!(th.classify(77, 68), AudioClass::Partial);
        assert_eq!(th.classify(87, 67), AudioClass::Unrelated);
    }

    #[test]
    fn dhash_examples() {
        let gray = vec![128u8; 27 * 16];
        assert_eq!(dhash_frame(&gray, 27, 16).unwrap(), FrameHash(0));
        let grad: Vec<u8> = (0..8).flat_map(|_| (0..90).map(|x| (x * 2) as u8)).collect();
        assert_eq!(dhash_frame(&grad, 90, 8).unwrap(), FrameHash(u64::MAX));
        assert_eq!(dhash_frame(&[0; 64], 8, 8), Err(SimilarityError::ImageTooSmall { width: 8, height: 8 }));
    }

    #[test]
    fn dhash_checkerboard() {
        // 9x8 image: one pixel per cell, value 255 where (r + c) is odd.
        let px: Vec<u8> = (0..8).flat_map(|r| (0..9).map(move |c| if (r + c) % 2 == 1 { 255 } else { 0 })).collect();
        // Even rows start dark, so bits c = 0,2,4,6 rise; odd rows rise at c = 1,3,5,7.
        let even = 0b0101_0101u64;
        let odd = 0b1010_1010u64;
        let expected = (0..8).fold(0u64, |h, r| h | (if r % 2 == 0 { even } else { odd }) << (8 * r));
        assert_eq!(dhash_frame(&px, 9, 8).unwrap(), FrameHash(expected));
    }

    #[test]
    fn dhash_uneven_partition() {
        // 10 columns: cell widths are 1 except the last, which spans x = 8..10.
        let px: Vec<u8> = (0..8).flat_map(|_| [0u8, 0, 0, 0, 0, 0, 0, 0, 9, 10]).collect();
        let grid = dhash_grid(&px, 10, 8).unwrap();
        assert_eq!(grid[0][8], 10); // (9 + 10) / 2 = 9.5 rounds up
        assert_eq!(hash_from_grid(&grid).0, (0..8).fold(0u64, |h, r| h | 1 << (r * 8 + 7)));
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming_distance(FrameHash(7), FrameHash(7)), 0);
        assert_eq!(hamming_distance(FrameHash(0), FrameHash(1)), 1);
        assert_eq!(hamming_distance(FrameHash(0), FrameHash(u64::MAX)), 64);
    }

    #[test]
    fn video_match_examples() {
        let o = VideoMatchOptions::default();
        let a = [1u64, 1 << 20, 1 << 40, 99];
        assert!(video_match(&a, &a, o).unwrap());
        assert!(video_match(&a[1..3], &a, o).unwrap());
        // first frame of the shorter list is two bits away from everything
        let s = [a[0] ^ 0b110, a[1]];
        assert!(!video_match(&s, &a, o).unwrap());
        assert_eq!(video_match(&[], &a, o), Err(SimilarityError::NoFrames));
    }

    #[test]
    fn low_info_frames_dropped() {
        let on = VideoMatchOptions { max_dist: 1, drop_low_info: true };
        let off = VideoMatchOptions::default();
        let long = [5u64, 6, 0xff00];
        assert!(!video_match(&[0, 0xf0f0], &long, off).unwrap());
        assert!(!video_match(&[0, 0xf0f0], &long, on).unwrap());
        assert!(video_match(&[0, 5], &[5, 6, 7], on).unwrap());
        assert!(!video_match(&[0, 0], &[0, 0, 0], on).unwrap());
        assert!(video_match(&[0, 0], &[0, 0, 0], off).unwrap());
    }

    fn small_unicode() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![Just('a'), Just('b'), Just('c'), Just('ü'), Just('ß'), Just('語'), Just(' ')],
            0..40,
        )
        .prop_map(|v| v.into_iter().collect())
    }

    proptest! {
        #[test]
        fn distance_matches_dp(a in small_unicode(), b in small_unicode()) {
            let (ac, bc): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
            prop_assert_eq!(levenshtein(&a, &b), dp(&ac, &bc));
            prop_assert_eq!(PatternMask::new(&ac).substring_distance(&bc), dp_substring(&ac, &bc));
        }

        #[test]
        fn ratio_symmetric_and_identity(a in small_unicode(), b in small_unicode()) {
            prop_assert_eq!(similarity_ratio(&a, &b), similarity_ratio(&b, &a));
            prop_assert_eq!(similarity_ratio(&a, &b) == 100, a == b);
        }

        #[test]
        fn substring_scores_full(s in small_unicode(), pre in small_unicode(), post in small_unicode()) {
            let l = format!("{pre}{s}{post}");
            prop_assert_eq!(partial_similarity_ratio(&s, &l), 100);
        }

        #[test]
        fn prepared_agrees_with_direct(a in "[ab ]{1,60}", b in "[ab ]{1,60}") {
            let th = AudioThresholds::default();
            let direct = classify_audio_pair_with(&a, &b, &th).unwrap();
            let fast = classify_prepared(&PreparedTranscript::new(&a), &PreparedTranscript::new(&b), &th);
            match fast {
                None => prop_assert_eq!(direct.class, AudioClass::Unrelated),
                Some(m) => prop_assert_eq!(m, direct),
            }
            prop_assert_eq!(direct.class, classify_audio_pair_with(&b, &a, &th).unwrap().class);
        }

        #[test]
        fn video_identity(frames in proptest::collection::vec(any::<u64>(), 1..12)) {
            prop_assert!(video_match(&frames, &frames, VideoMatchOptions::default()).unwrap());
        }
    }
}
