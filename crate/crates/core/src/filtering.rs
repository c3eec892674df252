//! Frequency and temporal edge filters, candidate pruning and sweep reports.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FilterError;
use crate::metrics::{layer_stats, Graph, LayerStats};
use crate::model::{FilterSpec, Layer, LayerKind, UserEdge};
use crate::scalar::Scalar;

/// How the temporal filter treats an edge with several co-actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalMode {
    /// Drop pairs outside the window and recount the weight.
    #[default]
    PerPair,
    /// Keep the whole edge if any pair falls inside the window.
    AnyPair,
}

/// Immutable filtered view of a layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSnapshot<T> {
    pub snapshot_id: String,
    pub base_kind: LayerKind,
    pub base_digest: String,
    pub filter: FilterSpec,
    pub layer: Layer,
    pub stats: LayerStats<T>,
}

/// Content address of a filtered layer.
pub fn snapshot_id(base_digest: &str, filter: &FilterSpec, mode: TemporalMode) -> String {
    let mut h = Sha256::new();
    h.update(base_digest.as_bytes());
    h.update(b"\n");
    h.update(filter.label().as_bytes());
    if mode == TemporalMode::AnyPair && matches!(filter, FilterSpec::Temporal { .. }) {
        h.update(b"\nany_pair");
    }
    hex::encode(&h.finalize()[..8])
}

fn snapshot<T: Scalar>(base: &Layer, filter: FilterSpec, mode: TemporalMode, layer: Layer) -> FilteredSnapshot<T> {
    let base_digest = base.digest();
    FilteredSnapshot {
        snapshot_id: snapshot_id(&base_digest, &filter, mode),
        base_kind: base.kind(),
        base_digest,
        filter,
        stats: layer_stats(&layer),
        layer,
    }
}

fn keep_edges(layer: &Layer, keep: impl Fn(&UserEdge) -> bool) -> Layer {
    let edges = layer.edges().iter().filter(|e| keep(e)).cloned().collect();
    Layer::from_edges(layer.kind(), edges).expect("subset of a valid layer")
}

/// Keeps edges whose weight reaches the threshold. Isolated nodes disappear.
///
/// `FrequencyAboveAverage` compares against the mean weight of `layer`
/// exactly (`weight * count >= sum`). Other specs are passed to [`apply_filter`].
pub fn apply_frequency_filter<T: Scalar>(layer: &Layer, spec: FilterSpec) -> Result<FilteredSnapshot<T>, FilterError> {
    match spec {
        FilterSpec::Frequency { min_weight } => {
            Ok(snapshot(layer, spec, TemporalMode::PerPair, keep_edges(layer, |e| e.weight >= min_weight)))
        }
        FilterSpec::FrequencyAboveAverage => {
            let (sum, count) = layer.weight_sum_and_count();
            let filtered = keep_edges(layer, |e| e.weight as u128 * count as u128 >= sum);
            Ok(snapshot(layer, spec, TemporalMode::PerPair, filtered))
        }
        other => apply_filter(layer, other, TemporalMode::PerPair),
    }
}

/// Keeps co-actions at most `max_delta_t` seconds apart (inclusive).
pub fn apply_temporal_filter<T: Scalar>(
    layer: &Layer,
    spec: FilterSpec,
    mode: TemporalMode,
) -> Result<FilteredSnapshot<T>, FilterError> {
    let FilterSpec::Temporal { max_delta_t } = spec else {
        return apply_filter(layer, spec, mode);
    };
    let filtered = match mode {
        TemporalMode::AnyPair => keep_edges(layer, |e| e.min_delta_t <= max_delta_t),
        TemporalMode::PerPair => {
            if !layer.evidence_complete() {
                return Err(FilterError::EvidenceUnavailable(layer.kind().to_string()));
            }
            let edges = layer
                .edges()
                .iter()
                .filter_map(|e| {
                    let kept: Vec<_> = e.evidence.iter().filter(|p| p.delta_t <= max_delta_t).cloned().collect();
                    (!kept.is_empty()).then(|| {
                        UserEdge::from_evidence(e.user_a.clone(), e.user_b.clone(), kept).expect("non-empty evidence")
                    })
                })
                .collect();
            Layer::from_edges(layer.kind(), edges).expect("subset of a valid layer")
        }
    };
    Ok(snapshot(layer, spec, mode, filtered))
}

/// Applies any filter spec.
pub fn apply_filter<T: Scalar>(
    layer: &Layer,
    spec: FilterSpec,
    mode: TemporalMode,
) -> Result<FilteredSnapshot<T>, FilterError> {
    match spec {
        FilterSpec::Frequency { .. } | FilterSpec::FrequencyAboveAverage => apply_frequency_filter(layer, spec),
        FilterSpec::Temporal { .. } => apply_temporal_filter(layer, spec, mode),
        FilterSpec::None => Ok(snapshot(layer, spec, mode, layer.clone())),
    }
}

/// The six canonical filtered versions of a layer.
///
/// Fails only when the layer lacks evidence and `mode` is [`TemporalMode::PerPair`].
pub fn generate_filter_candidates<T: Scalar>(
    layer: &Layer,
    mode: TemporalMode,
) -> Result<Vec<FilteredSnapshot<T>>, FilterError> {
    use rayon::prelude::*;
    FilterSpec::CANONICAL.par_iter().map(|&spec| apply_filter(layer, spec, mode)).collect()
}

/// Keeps candidates with at least `min_edges` edges whose largest component
/// has more than `min_component_size` nodes.
pub fn prune_candidates<T: Clone>(
    snapshots: &[FilteredSnapshot<T>],
    min_edges: usize,
    min_component_size: usize,
) -> Vec<FilteredSnapshot<T>> {
    snapshots.iter().filter(|s| is_viable(&s.stats, min_edges, min_component_size)).cloned().collect()
}

pub fn is_viable<T>(stats: &LayerStats<T>, min_edges: usize, min_component_size: usize) -> bool {
    stats.edge_count >= min_edges && stats.giant_component_size > min_component_size
}

/// Pruning thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneParams {
    pub min_edges: usize,
    pub min_component_size: usize,
}

impl Default for PruneParams {
    fn default() -> Self {
        PruneParams { min_edges: 1, min_component_size: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow<T> {
    pub filter: FilterSpec,
    pub snapshot_id: String,
    pub stats: LayerStats<T>,
    /// Sizes of the three largest components.
    pub top_component_sizes: Vec<usize>,
    pub viable: bool,
}

/// Jaccard similarity of the user sets of two candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeOverlap<T> {
    pub a: FilterSpec,
    pub b: FilterSpec,
    pub jaccard: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport<T> {
    pub kind: LayerKind,
    pub rows: Vec<SweepRow<T>>,
    pub node_overlap: Vec<NodeOverlap<T>>,
}

/// One row per canonical candidate plus pairwise user-set Jaccard.
pub fn sweep_report<T: Scalar>(
    layer: &Layer,
    mode: TemporalMode,
    prune: PruneParams,
) -> Result<SweepReport<T>, FilterError> {
    let snaps = generate_filter_candidates::<T>(layer, mode)?;
    let rows = snaps
        .iter()
        .map(|s| {
            let g = Graph::of(&s.layer);
            SweepRow {
                filter: s.filter,
                snapshot_id: s.snapshot_id.clone(),
                stats: s.stats,
                top_component_sizes: g.components().iter().take(3).map(Vec::len).collect(),
                viable: is_viable(&s.stats, prune.min_edges, prune.min_component_size),
            }
        })
        .collect();
    let sets: Vec<HashSet<&str>> = snaps.iter().map(|s| s.layer.nodes().iter().map(|n| &**n).collect()).collect();
    let mut node_overlap = Vec::new();
    for i in 0..snaps.len() {
        for j in i + 1..snaps.len() {
            let inter = sets[i].intersection(&sets[j]).count();
            let union = sets[i].len() + sets[j].len() - inter;
            node_overlap.push(NodeOverlap {
                a: snaps[i].filter,
                b: snaps[j].filter,
                // Two empty sets are identical.
                jaccard: if union == 0 { T::one() } else { T::ratio(inter, union) },
            });
        }
    }
    Ok(SweepReport { kind: layer.kind(), rows, node_overlap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Evidence;

    fn ev(n: usize, dt: u64) -> Evidence {
        Evidence { post_a: format!("p{n}").into(), post_b: format!("q{n}").into(), score: 100, delta_t: dt }
    }

    fn edge(a: &str, b: &str, dts: &[u64]) -> UserEdge {
        let evs = dts.iter().enumerate().map(|(i, &d)| ev(i, d)).collect();
        UserEdge::from_evidence(a.into(), b.into(), evs).unwrap()
    }

    fn weighted(ws: &[(&str, &str, usize)]) -> Layer {
        Layer::from_edges(LayerKind::MusicId, ws.iter().map(|&(a, b, w)| edge(a, b, &vec![0; w])).collect()).unwrap()
    }

    fn kept(s: &FilteredSnapshot<f64>) -> Vec<u64> {
        s.layer.edges().iter().map(|e| e.weight).collect()
    }

    #[test]
    fn frequency_examples() {
        let l = weighted(&[("a", "b", 1), ("b", "c", 2), ("c", "d", 10)]);
        let s = apply_frequency_filter::<f64>(&l, FilterSpec::Frequency { min_weight: 2 }).unwrap();
        assert_eq!(kept(&s), [2, 10]);
        assert_eq!(s.layer.node_count(), 3);
        let avg = apply_frequency_filter::<f64>(&l, FilterSpec::FrequencyAboveAverage).unwrap();
        assert_eq!(kept(&avg), [10]);
        let id = apply_frequency_filter::<f64>(&l, FilterSpec::Frequency { min_weight: 1 }).unwrap();
        assert_eq!(id.layer, l);
    }

    #[test]
    fn above_average_keeps_equal_weights() {
        let l = weighted(&[("a", "b", 3), ("b", "c", 3)]);
        assert_eq!(kept(&apply_frequency_filter::<f64>(&l, FilterSpec::FrequencyAboveAverage).unwrap()), [3, 3]);
    }

    #[test]
    fn temporal_examples() {
        let t = |l: &Layer, secs| {
            apply_temporal_filter::<f64>(l, FilterSpec::Temporal { max_delta_t: secs }, TemporalMode::PerPair).unwrap()
        };
        let one = Layer::from_edges(LayerKind::VideoDescription, vec![edge("a", "b", &[30])]).unwrap();
        assert_eq!(kept(&t(&one, 60)), [1]);
        let two = Layer::from_edges(LayerKind::VideoDescription, vec![edge("a", "b", &[30, 400])]).unwrap();
        let s = t(&two, 120);
        assert_eq!(kept(&s), [1]);
        assert_eq!(s.layer.edges()[0].min_delta_t, 30);
        let late = Layer::from_edges(LayerKind::VideoDescription, vec![edge("a", "b", &[301])]).unwrap();
        assert!(t(&late, 300).layer.is_empty());
        let edge300 = Layer::from_edges(LayerKind::VideoDescription, vec![edge("a", "b", &[300])]).unwrap();
        assert_eq!(kept(&t(&edge300, 300)), [1]);
    }

    #[test]
    fn any_pair_mode_keeps_full_weight() {
        let two = Layer::from_edges(LayerKind::VideoDescription, vec![edge("a", "b", &[30, 400])]).unwrap();
        let s = apply_temporal_filter::<f64>(&two, FilterSpec::Temporal { max_delta_t: 120 }, TemporalMode::AnyPair)
            .unwrap();
        assert_eq!(kept(&s), [2]);
        let stripped = two.without_evidence();
        assert!(apply_temporal_filter::<f64>(
            &stripped,
            FilterSpec::Temporal { max_delta_t: 120 },
            TemporalMode::AnyPair
        )
        .is_ok());
    }

    #[test]
    fn temporal_needs_evidence() {
        let l = weighted(&[("a", "b", 2)]).without_evidence();
        assert_eq!(
            apply_temporal_filter::<f64>(&l, FilterSpec::Temporal { max_delta_t: 60 }, TemporalMode::PerPair),
            Err(FilterError::EvidenceUnavailable("MI".into()))
        );
    }

    #[test]
    fn candidates() {
        let empty = Layer::empty(LayerKind::Url);
        let c = generate_filter_candidates::<f64>(&empty, TemporalMode::PerPair).unwrap();
        assert_eq!(c.len(), 6);
        assert!(c.iter().all(|s| s.layer.is_empty()));
        let heavy = weighted(&[("a", "b", 10), ("b", "c", 12)]);
        let c = generate_filter_candidates::<f64>(&heavy, TemporalMode::PerPair).unwrap();
        assert_eq!(c[0].layer, c[1].layer);
        assert_ne!(c[0].snapshot_id, c[1].snapshot_id);
        let again = generate_filter_candidates::<f64>(&heavy, TemporalMode::PerPair).unwrap();
        assert_eq!(c, again);
    }

    fn clique(n: usize, w: usize) -> Layer {
        let names: Vec<String> = (0..n).map(|i| format!("u{i:02}")).collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                edges.push(edge(&names[i], &names[j], &vec![0; w]));
            }
        }
        Layer::from_edges(LayerKind::HashtagSequence, edges).unwrap()
    }

    #[test]
    fn pruning_boundary() {
        let eight = apply_filter::<f64>(&clique(8, 1), FilterSpec::None, TemporalMode::PerPair).unwrap();
        let nine = apply_filter::<f64>(&clique(9, 1), FilterSpec::None, TemporalMode::PerPair).unwrap();
        let none = apply_filter::<f64>(&Layer::empty(LayerKind::Url), FilterSpec::None, TemporalMode::PerPair).unwrap();
        let kept = prune_candidates(&[eight, nine.clone(), none], 1, 8);
        assert_eq!(kept, [nine]);
    }

    #[test]
    fn sweep_examples() {
        let empty =
            sweep_report::<f64>(&Layer::empty(LayerKind::Url), TemporalMode::PerPair, PruneParams::default()).unwrap();
        assert_eq!(empty.rows.len(), 6);
        assert!(empty.rows.iter().all(|r| !r.viable));
        assert_eq!(empty.node_overlap.len(), 15);

        let l = clique(10, 10);
        let rep = sweep_report::<f64>(&l, TemporalMode::PerPair, PruneParams::default()).unwrap();
        for r in &rep.rows[..3] {
            assert!(r.viable, "{}", r.filter);
            assert_eq!(r.top_component_sizes, [10]);
        }
        assert_eq!(rep, sweep_report::<f64>(&l, TemporalMode::PerPair, PruneParams::default()).unwrap());
        assert!(rep.node_overlap.iter().all(|o| o.jaccard == 1.0));
    }
}
