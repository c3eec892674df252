use coaction_core::export::{read_edge_csv, read_graphml, write_edge_csv, write_graphml};
use coaction_core::filtering::{apply_filter, generate_filter_candidates, TemporalMode};
use coaction_core::ingest::{parse_dataset, write_dataset};
use coaction_core::layers::{build_network, reverify_layer, BuildOptions};
use coaction_core::metrics::{top_components, Usernames};
use coaction_core::synthgen::{generate_corpus, SynthConfig};
use coaction_core::{FilterSpec, FilteredSnapshot32, LayerKind};

fn corpus() -> Vec<coaction_core::PostRecord> {
    let cfg = SynthConfig {
        seed: 4,
        background_posts: 400,
        background_users: 150,
        reuse_pairs_per_type: 4,
        clusters: 2,
        ..Default::default()
    };
    generate_corpus(&cfg).unwrap().posts
}

#[test]
fn jsonl_round_trip_preserves_posts() {
    let posts = corpus();
    let mut buf = Vec::new();
    write_dataset(&posts, &mut buf).unwrap();
    let parsed = parse_dataset(&buf[..]).unwrap();
    assert!(parsed.errors.is_empty());
    assert_eq!(parsed.posts, posts);
}

#[test]
fn built_layers_reverify() {
    let posts = corpus();
    let opts = BuildOptions::default();
    let net = build_network(&posts, &LayerKind::ALL, &opts);
    assert_eq!(net.layers.len(), 7);
    for layer in net.layers.values() {
        assert!(reverify_layer(layer, &posts, &opts, 1).is_empty(), "{}", layer.kind());
        assert!(layer.edges().iter().all(|e| e.user_a < e.user_b));
    }
}

#[test]
fn filtered_layers_export_and_reimport() {
    let posts = corpus();
    let net = build_network(&posts, &[LayerKind::VideoDescription, LayerKind::MusicId], &BuildOptions::default());
    let names = Usernames::from_posts(&posts);
    for layer in net.layers.values() {
        let snap = apply_filter::<f64>(layer, FilterSpec::Frequency { min_weight: 2 }, TemporalMode::PerPair).unwrap();
        let mut g = Vec::new();
        write_graphml(&snap.layer, &names, &mut g).unwrap();
        let back = read_graphml(&g[..]).unwrap();
        assert_eq!(back.layer.edges(), snap.layer.without_evidence().edges());
        let mut c = Vec::new();
        write_edge_csv(&snap.layer, &mut c).unwrap();
        assert_eq!(read_edge_csv(layer.kind(), &c[..]).unwrap(), back.layer);
    }
}

#[test]
fn candidates_in_both_precisions() {
    let posts = corpus();
    let net = build_network(&posts, &[LayerKind::HashtagSequence], &BuildOptions::default());
    let layer = net.get(LayerKind::HashtagSequence).unwrap();
    let wide = generate_filter_candidates::<f64>(layer, TemporalMode::PerPair).unwrap();
    let narrow: Vec<FilteredSnapshot32> = generate_filter_candidates::<f32>(layer, TemporalMode::PerPair).unwrap();
    assert_eq!(wide.len(), 6);
    for (a, b) in wide.iter().zip(&narrow) {
        assert_eq!(a.snapshot_id, b.snapshot_id);
        assert_eq!(a.stats.edge_count, b.stats.edge_count);
        assert!((a.stats.density - b.stats.density as f64).abs() < 1e-6);
    }
    let comps = top_components(layer, 5, &Usernames::from_posts(&posts), 10).unwrap();
    assert!(comps.windows(2).all(|w| w[0].size >= w[1].size));
    assert!(comps.iter().all(|c| c.evidence.len() <= 10));
}
