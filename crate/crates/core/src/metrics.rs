//! Structural statistics, connected components and cross-layer overlap.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::model::{Layer, PostRecord, UserId};
use crate::scalar::Scalar;

/// Adjacency view of a layer. Nodes are numbered in sorted id order.
pub struct Graph<'a> {
    pub ids: &'a [UserId],
    pub adj: Vec<Vec<u32>>,
}

impl<'a> Graph<'a> {
    pub fn of(layer: &'a Layer) -> Self {
        let ids = layer.nodes();
        let pos: HashMap<&str, u32> = ids.iter().enumerate().map(|(i, n)| (&**n, i as u32)).collect();
        let mut adj = vec![Vec::new(); ids.len()];
        for e in layer.edges() {
            let (a, b) = (pos[&*e.user_a], pos[&*e.user_b]);
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj.par_iter_mut().for_each(|l| l.sort_unstable());
        Graph { ids, adj }
    }

    /// Components as node-number lists, largest first, ties by smallest id.
    pub fn components(&self) -> Vec<Vec<u32>> {
        let n = self.adj.len();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![s as u32];
            let mut i = 0;
            while i < comp.len() {
                let v = comp[i] as usize;
                for &w in &self.adj[v] {
                    if !seen[w as usize] {
                        seen[w as usize] = true;
                        comp.push(w);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        // Node numbers follow id order, so comp[0] is the smallest member id.
        out.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
        out
    }

    fn eccentricity(&self, s: u32, dist: &mut [u32], queue: &mut VecDeque<u32>, touched: &mut Vec<u32>) -> u32 {
        dist[s as usize] = 0;
        touched.push(s);
        queue.push_back(s);
        let mut far = 0;
        while let Some(v) = queue.pop_front() {
            let d = dist[v as usize];
            far = far.max(d);
            for &w in &self.adj[v as usize] {
                if dist[w as usize] == u32::MAX {
                    dist[w as usize] = d + 1;
                    touched.push(w);
                    queue.push_back(w);
                }
            }
        }
        far
    }

    /// Largest eccentricity over `nodes`, which must form one component.
    pub fn diameter_of(&self, nodes: &[u32]) -> u32 {
        let n = self.adj.len();
        nodes
            .par_iter()
            .map_init(
                || (vec![u32::MAX; n], VecDeque::new(), Vec::new()),
                |(dist, queue, touched), &s| {
                    let e = self.eccentricity(s, dist, queue, touched);
                    for t in touched.drain(..) {
                        dist[t as usize] = u32::MAX;
                    }
                    e
                },
            )
            .max()
            .unwrap_or(0)
    }

    /// Number of edges among the neighbours of each node.
    pub fn local_triangles(&self) -> Vec<u64> {
        (0..self.adj.len())
            .into_par_iter()
            .map(|v| {
                let nv = &self.adj[v];
                let twice: u64 = nv.iter().map(|&u| sorted_intersection(nv, &self.adj[u as usize])).sum();
                twice / 2
            })
            .collect()
    }
}

fn sorted_intersection(a: &[u32], b: &[u32]) -> u64 {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Connected components as sorted user-id lists, largest first.
pub fn connected_components(layer: &Layer) -> Vec<Vec<UserId>> {
    let g = Graph::of(layer);
    g.components().into_iter().map(|c| c.into_iter().map(|i| g.ids[i as usize].clone()).collect()).collect()
}

/// Structure of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerStats<T> {
    pub node_count: usize,
    pub edge_count: usize,
    pub component_count: usize,
    pub giant_component_size: usize,
    /// Share of nodes in the largest component, in percent.
    pub giant_component_pct: T,
    /// Diameter of the largest component.
    pub diameter: u32,
    /// Mean local clustering coefficient; nodes of degree < 2 count as 0.
    pub avg_clustering: T,
    /// Global transitivity: closed triples over connected triples.
    pub transitivity: T,
    pub density: T,
}

impl<T: Scalar> LayerStats<T> {
    pub fn empty() -> Self {
        LayerStats {
            node_count: 0,
            edge_count: 0,
            component_count: 0,
            giant_component_size: 0,
            giant_component_pct: T::zero(),
            diameter: 0,
            avg_clustering: T::zero(),
            transitivity: T::zero(),
            density: T::zero(),
        }
    }
}

pub fn layer_stats<T: Scalar>(layer: &Layer) -> LayerStats<T> {
    let g = Graph::of(layer);
    let n = layer.node_count();
    let m = layer.edge_count();
    if n == 0 {
        return LayerStats::empty();
    }
    let comps = g.components();
    let giant = &comps[0];
    let tri = g.local_triangles();
    let mut local_sum = T::zero();
    let (mut closed, mut triples) = (0u64, 0u64);
    for (v, &t) in tri.iter().enumerate() {
        let d = g.adj[v].len() as u64;
        if d >= 2 {
            let pairs = d * (d - 1) / 2;
            local_sum = local_sum + <T as Scalar>::from_u64(t) / <T as Scalar>::from_u64(pairs);
            closed += t;
            triples += pairs;
        }
    }
    let density = if n >= 2 { T::ratio(2 * m, n * (n - 1)) } else { T::zero() };
    LayerStats {
        node_count: n,
        edge_count: m,
        component_count: comps.len(),
        giant_component_size: giant.len(),
        giant_component_pct: T::hundred() * T::ratio(giant.len(), n),
        diameter: g.diameter_of(giant),
        avg_clustering: local_sum / <T as Scalar>::from_usize(n),
        transitivity: T::ratio(closed as usize, triples as usize),
        density,
    }
}

/// Shared and unique node/edge counts across layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub labels: Vec<String>,
    /// `shared_nodes[i][j] = |V_i ∩ V_j|`; the diagonal holds `|V_i|`.
    pub shared_nodes: Vec<Vec<usize>>,
    pub shared_edges: Vec<Vec<usize>>,
    /// Nodes of layer `i` present in no other layer.
    pub unique_nodes: Vec<usize>,
    pub unique_edges: Vec<usize>,
}

/// One chord of the overlap diagram. Self rows carry the unique counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChordRow {
    pub source_layer: String,
    pub target_layer: String,
    pub node_overlap: usize,
    pub edge_overlap: usize,
}

impl OverlapMatrix {
    pub fn chord_rows(&self) -> Vec<ChordRow> {
        let k = self.labels.len();
        let mut rows = Vec::new();
        for i in 0..k {
            for j in i..k {
                let (nodes, edges) = if i == j {
                    (self.unique_nodes[i], self.unique_edges[i])
                } else {
                    (self.shared_nodes[i][j], self.shared_edges[i][j])
                };
                rows.push(ChordRow {
                    source_layer: self.labels[i].clone(),
                    target_layer: self.labels[j].clone(),
                    node_overlap: nodes,
                    edge_overlap: edges,
                });
            }
        }
        rows
    }
}

/// Overlap of layers labelled by their kind.
pub fn cross_layer_overlap(layers: &[&Layer]) -> OverlapMatrix {
    let labelled: Vec<(String, &Layer)> = layers.iter().map(|l| (l.kind().abbrev().to_string(), *l)).collect();
    cross_layer_overlap_labelled(&labelled)
}

/// Overlap of arbitrary labelled layers (e.g. filtered snapshots).
pub fn cross_layer_overlap_labelled(layers: &[(String, &Layer)]) -> OverlapMatrix {
    let k = layers.len();
    let mut node_sets: Vec<std::collections::HashSet<&str>> = Vec::with_capacity(k);
    let mut edge_sets: Vec<std::collections::HashSet<(&str, &str)>> = Vec::with_capacity(k);
    for (_, l) in layers {
        node_sets.push(l.nodes().iter().map(|n| &**n).collect());
        edge_sets.push(l.edges().iter().map(|e| e.key()).collect());
    }
    let mut shared_nodes = vec![vec![0; k]; k];
    let mut shared_edges = vec![vec![0; k]; k];
    for i in 0..k {
        for j in i..k {
            let sn = if i == j { node_sets[i].len() } else { node_sets[i].intersection(&node_sets[j]).count() };
            let se = if i == j { edge_sets[i].len() } else { edge_sets[i].intersection(&edge_sets[j]).count() };
            shared_nodes[i][j] = sn;
            shared_nodes[j][i] = sn;
            shared_edges[i][j] = se;
            shared_edges[j][i] = se;
        }
    }
    let unique_nodes = (0..k)
        .map(|i| node_sets[i].iter().filter(|n| (0..k).all(|j| j == i || !node_sets[j].contains(*n))).count())
        .collect();
    let unique_edges = (0..k)
        .map(|i| edge_sets[i].iter().filter(|e| (0..k).all(|j| j == i || !edge_sets[j].contains(*e))).count())
        .collect();
    OverlapMatrix {
        labels: layers.iter().map(|(l, _)| l.clone()).collect(),
        shared_nodes,
        shared_edges,
        unique_nodes,
        unique_edges,
    }
}

/// Maps user ids to the username of their latest post.
#[derive(Debug, Clone, Default)]
pub struct Usernames(HashMap<UserId, String>);

impl Usernames {
    pub fn from_posts(posts: &[PostRecord]) -> Self {
        let mut latest: HashMap<UserId, (i64, String)> = HashMap::new();
        for p in posts {
            let e = latest.entry(p.user_id.clone()).or_insert((i64::MIN, String::new()));
            if p.created_at >= e.0 {
                *e = (p.created_at, p.username.clone());
            }
        }
        Usernames(latest.into_iter().map(|(k, (_, v))| (k, v)).collect())
    }

    pub fn get<'a>(&'a self, user: &'a str) -> &'a str {
        self.0.get(user).map(String::as_str).unwrap_or(user)
    }

    pub fn insert(&mut self, user: UserId, name: String) {
        self.0.insert(user, name);
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub user_id: UserId,
    pub username: String,
}

/// One evidence pair shown with the edge it supports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub user_a: UserId,
    pub user_b: UserId,
    pub post_a: UserId,
    pub post_b: UserId,
    pub score: u8,
    pub delta_t: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentSummary {
    /// Position in the size-sorted component list.
    pub index: usize,
    pub size: usize,
    pub members: Vec<Member>,
    pub internal_edges: usize,
    pub total_weight: u64,
    pub evidence: Vec<EvidenceRow>,
}

/// Evidence rows of the edges inside a node set, in edge order.
pub fn component_evidence<'a>(layer: &'a Layer, members: &'a [UserId]) -> impl Iterator<Item = EvidenceRow> + 'a {
    let set: std::collections::HashSet<&str> = members.iter().map(|m| &**m).collect();
    layer.edges().iter().filter(move |e| set.contains(&*e.user_a)).flat_map(|e| {
        e.evidence.iter().map(move |ev| EvidenceRow {
            user_a: e.user_a.clone(),
            user_b: e.user_b.clone(),
            post_a: ev.post_a.clone(),
            post_b: ev.post_b.clone(),
            score: ev.score,
            delta_t: ev.delta_t,
        })
    })
}

/// Summaries of the `k` largest components with up to `evidence_cap` evidence rows each.
pub fn top_components(
    layer: &Layer,
    k: usize,
    names: &Usernames,
    evidence_cap: usize,
) -> Result<Vec<ComponentSummary>, MetricsError> {
    if k == 0 {
        return Err(MetricsError::NonPositiveK);
    }
    Ok(connected_components(layer)
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(index, members)| summarize(layer, index, &members, names, evidence_cap))
        .collect())
}

pub fn summarize(
    layer: &Layer,
    index: usize,
    members: &[UserId],
    names: &Usernames,
    evidence_cap: usize,
) -> ComponentSummary {
    let set: std::collections::HashSet<&str> = members.iter().map(|m| &**m).collect();
    let internal: Vec<_> = layer.edges().iter().filter(|e| set.contains(&*e.user_a)).collect();
    ComponentSummary {
        index,
        size: members.len(),
        members: members.iter().map(|m| Member { user_id: m.clone(), username: names.get(m).to_string() }).collect(),
        internal_edges: internal.len(),
        total_weight: internal.iter().map(|e| e.weight).sum(),
        evidence: component_evidence(layer, members).take(evidence_cap).collect(),
    }
}
