//! Precision-recall threshold calibration from labelled post pairs.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::TuningError;
use crate::model::PostRecord;
use crate::scalar::Scalar;
use crate::similarity::{partial_similarity_ratio, similarity_ratio, AudioThresholds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioLabel {
    Same,
    Partial,
    None,
}

/// A human-labelled post pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub post_a: String,
    pub post_b: String,
    pub visual: bool,
    pub audio: AudioLabel,
    pub message: bool,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "y" => Some(true),
        "0" | "false" | "no" | "n" => Some(false),
        _ => None,
    }
}

fn parse_audio(s: &str) -> Option<AudioLabel> {
    match s.trim().to_ascii_lowercase().as_str() {
        "same" | "exact" => Some(AudioLabel::Same),
        "partial" => Some(AudioLabel::Partial),
        "none" | "" | "no" => Some(AudioLabel::None),
        _ => None,
    }
}

/// Reads the labels CSV (`post_a,post_b,visual,audio,message`, header required).
pub fn read_labels<R: Read>(source: R) -> Result<Vec<LabeledPair>, TuningError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| TuningError::BadLabel { line: 1, message: format!("missing column {name:?}") })
    };
    let (ia, ib, iv, iaud, im) = (col("post_a")?, col("post_b")?, col("visual")?, col("audio")?, col("message")?);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = n + 2;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let bad = |message: String| TuningError::BadLabel { line, message };
        let pair = LabeledPair {
            post_a: field(ia).to_string(),
            post_b: field(ib).to_string(),
            visual: parse_bool(field(iv)).ok_or_else(|| bad(format!("visual {:?}", field(iv))))?,
            audio: parse_audio(field(iaud)).ok_or_else(|| bad(format!("audio {:?}", field(iaud))))?,
            message: parse_bool(field(im)).ok_or_else(|| bad(format!("message {:?}", field(im))))?,
        };
        if pair.post_a == pair.post_b {
            return Err(bad("pair of a post with itself".into()));
        }
        let key = if pair.post_a < pair.post_b {
            (pair.post_a.clone(), pair.post_b.clone())
        } else {
            (pair.post_b.clone(), pair.post_a.clone())
        };
        if !seen.insert(key) {
            return Err(bad(format!("duplicate pair {}/{}", pair.post_a, pair.post_b)));
        }
        out.push(pair);
    }
    Ok(out)
}

/// One point of a curve: predictions are `score >= threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint<T> {
    pub threshold: u32,
    pub precision: T,
    pub recall: T,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

impl<T: Scalar> PrPoint<T> {
    pub fn f1(&self) -> T {
        let (p, r) = (self.precision, self.recall);
        if p + r == T::zero() {
            T::zero()
        } else {
            (T::one() + T::one()) * p * r / (p + r)
        }
    }

    pub fn is_perfect(&self) -> bool {
        self.false_positives == 0 && self.false_negatives == 0
    }
}

/// Precision and recall at every distinct score, sorted by threshold.
pub fn precision_recall_curve<T, S, P>(
    pairs: &[LabeledPair],
    scorer: S,
    positive: P,
) -> Result<Vec<PrPoint<T>>, TuningError>
where
    T: Scalar,
    S: Fn(&LabeledPair) -> u32,
    P: Fn(&LabeledPair) -> bool,
{
    let scored: Vec<(u32, bool)> = pairs.iter().map(|p| (scorer(p), positive(p))).collect();
    let positives = scored.iter().filter(|s| s.1).count();
    if positives == 0 || positives == scored.len() {
        return Err(TuningError::DegenerateLabels);
    }
    let thresholds: BTreeSet<u32> = scored.iter().map(|s| s.0).collect();
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let tp = scored.iter().filter(|&&(s, y)| s >= t && y).count();
            let fp = scored.iter().filter(|&&(s, y)| s >= t && !y).count();
            PrPoint {
                threshold: t,
                precision: if tp + fp == 0 { T::one() } else { T::ratio(tp, tp + fp) },
                recall: T::ratio(tp, positives),
                true_positives: tp,
                false_positives: fp,
                false_negatives: positives - tp,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Smallest threshold with precision = recall = 1.
    #[default]
    FirstPerfect,
    /// Largest F1, ties to the smallest threshold.
    MaxF1,
}

pub fn select_threshold<T: Scalar>(curve: &[PrPoint<T>], policy: ThresholdPolicy) -> Result<u32, TuningError> {
    if curve.is_empty() {
        return Err(TuningError::EmptyCurve);
    }
    match policy {
        ThresholdPolicy::FirstPerfect => {
            curve.iter().filter(|p| p.is_perfect()).map(|p| p.threshold).min().ok_or(TuningError::NoPerfectPoint)
        }
        ThresholdPolicy::MaxF1 => {
            let mut best = &curve[0];
            for p in curve {
                let (f, bf) = (p.f1(), best.f1());
                if f > bf || (f == bf && p.threshold < best.threshold) {
                    best = p;
                }
            }
            Ok(best.threshold)
        }
    }
}

/// Midpoint constant derived from selected thresholds.
pub fn derived_midpoint(exact: u8, partial: u8) -> u8 {
    AudioThresholds { exact, partial }.midpoint()
}

/// Result of calibrating both audio scorers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioCalibration<T> {
    pub exact_curve: Vec<PrPoint<T>>,
    pub partial_curve: Vec<PrPoint<T>>,
    pub exact_threshold: u32,
    pub partial_threshold: u32,
    pub midpoint: u8,
}

/// Calibrates the exact scorer (positives: `audio = same`) and the partial
/// scorer (positives: `audio != none`) against transcripts from `posts`.
/// Pairs whose posts lack transcripts score 0.
pub fn calibrate_audio<T: Scalar>(
    pairs: &[LabeledPair],
    posts: &[PostRecord],
    policy: ThresholdPolicy,
) -> Result<AudioCalibration<T>, TuningError> {
    let text: HashMap<&str, &str> =
        posts.iter().filter_map(|p| p.transcript_text().map(|t| (&*p.post_id, t))).collect();
    let text = &text;
    let score = |f: fn(&str, &str) -> u8| {
        move |p: &LabeledPair| match (text.get(p.post_a.as_str()), text.get(p.post_b.as_str())) {
            (Some(a), Some(b)) => f(a, b) as u32,
            _ => 0,
        }
    };
    let exact_curve = precision_recall_curve(pairs, score(similarity_ratio), |p| p.audio == AudioLabel::Same)?;
    let partial_curve =
        precision_recall_curve(pairs, score(partial_similarity_ratio), |p| p.audio != AudioLabel::None)?;
    let exact_threshold = select_threshold(&exact_curve, policy)?;
    let partial_threshold = select_threshold(&partial_curve, policy)?;
    Ok(AudioCalibration {
        midpoint: derived_midpoint(exact_threshold.min(100) as u8, partial_threshold.min(100) as u8),
        exact_curve,
        partial_curve,
        exact_threshold,
        partial_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(scores_labels: &[(u32, bool)]) -> (Vec<LabeledPair>, HashMap<String, u32>) {
        let mut scores = HashMap::new();
        let ps = scores_labels
            .iter()
            .enumerate()
            .map(|(i, &(s, y))| {
                scores.insert(format!("a{i}"), s);
                LabeledPair {
                    post_a: format!("a{i}"),
                    post_b: format!("b{i}"),
                    visual: false,
                    audio: if y { AudioLabel::Same } else { AudioLabel::None },
                    message: false,
                }
            })
            .collect();
        (ps, scores)
    }

    fn curve(sl: &[(u32, bool)]) -> Result<Vec<PrPoint<f64>>, TuningError> {
        let (ps, scores) = pairs(sl);
        precision_recall_curve(&ps, |p| scores[&p.post_a], |p| p.audio == AudioLabel::Same)
    }

    #[test]
    fn four_pair_fixture() {
        // Confusion counts by hand: t=60 -> tp2 fp2, t=70 -> tp2 fp1, t=80 -> tp2 fp0, t=90 -> tp1 fp0.
        let c = curve(&[(90, true), (80, true), (70, false), (60, false)]).unwrap();
        let got: Vec<(u32, f64, f64)> = c.iter().map(|p| (p.threshold, p.precision, p.recall)).collect();
        assert_eq!(got, [(60, 0.5, 1.0), (70, 2.0 / 3.0, 1.0), (80, 1.0, 1.0), (90, 1.0, 0.5)]);
        assert_eq!(select_threshold(&c, ThresholdPolicy::FirstPerfect).unwrap(), 80);
        // F1: 2/3, 4/5, 1, 2/3.
        assert_eq!(select_threshold(&c, ThresholdPolicy::MaxF1).unwrap(), 80);
    }

    #[test]
    fn constant_scorer() {
        let c = curve(&[(5, true), (5, false), (5, false), (5, false)]).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!((c[0].recall, c[0].precision), (1.0, 0.25));
    }

    #[test]
    fn degenerate_labels() {
        assert!(matches!(curve(&[(5, true), (6, true)]), Err(TuningError::DegenerateLabels)));
        assert!(matches!(curve(&[(5, false)]), Err(TuningError::DegenerateLabels)));
    }

    #[test]
    fn non_separable() {
        let c = curve(&[(90, false), (80, true), (70, true), (60, false)]).unwrap();
        assert!(matches!(select_threshold(&c, ThresholdPolicy::FirstPerfect), Err(TuningError::NoPerfectPoint)));
        // F1 at 60: 2/3 (p .5 r 1), 70: 4/5, 80: 1/2, 90: 0.
        assert_eq!(select_threshold(&c, ThresholdPolicy::MaxF1).unwrap(), 70);
        let empty: Vec<PrPoint<f64>> = Vec::new();
        assert!(matches!(select_threshold(&empty, ThresholdPolicy::MaxF1), Err(TuningError::EmptyCurve)));
    }

    #[test]
    fn midpoint_is_derived() {
        assert_eq!(derived_midpoint(88, 68), 78);
        assert_eq!(derived_midpoint(90, 70), 80);
    }

    #[test]
    fn labels_csv() {
        let csv = "post_a,post_b,visual,audio,message\np1,p2,true,same,1\np3,p4,0,partial,no\n";
        let ls = read_labels(csv.as_bytes()).unwrap();
        assert_eq!(ls.len(), 2);
        assert_eq!(ls[1].audio, AudioLabel::Partial);
        assert!(ls[0].visual && !ls[1].message);
        assert!(read_labels("post_a,post_b,visual,audio\n".as_bytes()).is_err());
        assert!(read_labels("post_a,post_b,visual,audio,message\np1,p2,maybe,same,1\n".as_bytes()).is_err());
        assert!(read_labels("post_a,post_b,visual,audio,message\np1,p2,1,same,1\np2,p1,1,same,1\n".as_bytes()).is_err());
    }
}
