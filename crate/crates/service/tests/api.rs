use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use serde_json::Value;
use tower::ServiceExt;

use coaction_core::layers::{build_network, BuildOptions};
use coaction_core::{LayerKind, PostRecord};
use coaction_service::{router, AppState, ServiceOptions};

fn corpus() -> Vec<PostRecord> {
    let mut posts = Vec::new();
    // u1..u4 share one description three times each; u5 and u6 share one hashtag sequence once.
    for k in 0..3 {
        for u in 1..=4 {
            posts.push(
                PostRecord::new(
                    format!("p{u}_{k}"),
                    format!("u{u}"),
                    format!("name{u}"),
                    1_000 + 10 * u + 100 * k,
                    "vote now #eu #wahl",
                )
                .with_music_id("m1")
                .with_transcript("am sonntag gehen wir alle waehlen")
                .with_frames(vec![0xdead_beef + k as u64]),
            );
        }
    }
    posts.push(PostRecord::new("q5", "u5", "anna123", 5_000, "hello #x #y"));
    posts.push(PostRecord::new("q6", "u6", "lena456", 9_000, "bye #x #y"));
    posts
}

fn state(opts: ServiceOptions) -> Arc<AppState> {
    let posts = corpus();
    let net = build_network(&posts, &LayerKind::ALL, &BuildOptions::default());
    Arc::new(AppState::new(&posts, net, opts).unwrap())
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let res = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = res.status();
    let bytes = axum::body::to_bytes(res.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn layers_lists_all_seven() {
    let app = router(state(ServiceOptions::default()));
    let (status, body) = call(&app, "GET", "/layers", None).await;
    assert_eq!(status, StatusCode::OK);
    let layers = body.as_array().unwrap();
    assert_eq!(layers.len(), 7);
    let vd = layers.iter().find(|l| l["kind"] == "VD").unwrap();
    assert_eq!(vd["stats"]["node_count"], 4);
    assert_eq!(vd["stats"]["edge_count"], 6);
    assert_eq!(vd["default_filter"]["variant"], "frequency");
    assert_eq!(vd["default_filter"]["value"]["min_weight"], 10);
}

#[tokio::test]
async fn dataset_summary() {
    let app = router(state(ServiceOptions::default()));
    let (status, body) = call(&app, "GET", "/dataset/summary", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["post_count"], 14);
    assert_eq!(body["user_count"], 6);
}

#[tokio::test]
async fn filter_is_content_addressed() {
    let st = state(ServiceOptions::default());
    let app = router(st.clone());
    let before = st.registry().len();
    let req = serde_json::json!({"variant": "frequency", "value": 10});
    let (s1, a) = call(&app, "POST", "/layers/VD/filter", Some(req.clone())).await;
    let (s2, b) = call(&app, "POST", "/layers/video_description/filter", Some(req)).await;
    assert_eq!((s1, s2), (StatusCode::OK, StatusCode::OK));
    assert_eq!(a, b);
    assert_eq!(st.registry().len(), before + 1);
    // weight 9 per pair is below 10
    assert_eq!(a["stats"]["edge_count"], 0);

    let (_, c) =
        call(&app, "POST", "/layers/VD/filter", Some(serde_json::json!({"variant": "frequency", "value": 9}))).await;
    assert_eq!(c["stats"]["edge_count"], 6);
    assert_ne!(a["snapshot_id"], c["snapshot_id"]);
}

#[tokio::test]
async fn bad_filter_and_unknown_layer() {
    let app = router(state(ServiceOptions::default()));
    let (s, _) = call(&app, "POST", "/layers/VD/filter", Some(serde_json::json!({"variant": "median"}))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/layers/XX/sweep", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn unknown_snapshot_is_404() {
    let app = router(state(ServiceOptions::default()));
    let (s, body) = call(&app, "GET", "/snapshots/deadbeef/components", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(body["error"].as_str().unwrap().contains("deadbeef"));
    let (s, _) = call(&app, "GET", "/overlap?snapshots=deadbeef", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn components_and_detail() {
    let st = state(ServiceOptions::default());
    let app = router(st.clone());
    let hs = st.base_snapshot(LayerKind::HashtagSequence).unwrap().to_string();
    let (s, page) = call(&app, "GET", &format!("/snapshots/{hs}/components"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(page["total"], 2);
    assert_eq!(page["components"][0]["size"], 4);
    assert_eq!(page["components"][1]["members"][0]["username"], "anna123");

    let (_, page) = call(&app, "GET", &format!("/snapshots/{hs}/components?min_size=3"), None).await;
    assert_eq!(page["total"], 1);
    let (_, page) = call(&app, "GET", &format!("/snapshots/{hs}/components?offset=1&limit=1"), None).await;
    assert_eq!(page["components"][0]["index"], 1);

    let (s, d) = call(&app, "GET", &format!("/snapshots/{hs}/components/0?evidence_limit=5"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(d["internal_edges"].as_array().unwrap().len(), 6);
    assert_eq!(d["evidence_total"], 54);
    assert_eq!(d["evidence"].as_array().unwrap().len(), 5);
    assert_eq!(d["evidence_complete"], true);

    let (s, _) = call(&app, "GET", &format!("/snapshots/{hs}/components/9"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn evidence_page_is_capped() {
    let st = state(ServiceOptions { evidence_page: 10, ..Default::default() });
    let app = router(st.clone());
    let vd = st.base_snapshot(LayerKind::VideoDescription).unwrap().to_string();
    let (_, d) = call(&app, "GET", &format!("/snapshots/{vd}/components/0?evidence_limit=1000"), None).await;
    assert_eq!(d["evidence"].as_array().unwrap().len(), 10);
    let (_, d) = call(&app, "GET", &format!("/snapshots/{vd}/components/0?evidence_offset=50"), None).await;
    assert_eq!(d["evidence"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn sweep_registers_candidates() {
    let app = router(state(ServiceOptions::default()));
    let (s, report) = call(&app, "GET", "/layers/HS/sweep", None).await;
    assert_eq!(s, StatusCode::OK);
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 6);
    for r in rows {
        let id = r["snapshot_id"].as_str().unwrap();
        let (s, _) = call(&app, "GET", &format!("/snapshots/{id}/components"), None).await;
        assert_eq!(s, StatusCode::OK);
    }
}

#[tokio::test]
async fn overlap_is_symmetric() {
    let st = state(ServiceOptions::default());
    let app = router(st.clone());
    let vd = st.base_snapshot(LayerKind::VideoDescription).unwrap();
    let hs = st.base_snapshot(LayerKind::HashtagSequence).unwrap();
    let (s, body) = call(&app, "GET", &format!("/overlap?snapshots={vd},{hs}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let m = &body["matrix"]["shared_nodes"];
    assert_eq!(m[0][1], m[1][0]);
    assert_eq!(m[0][1], 4);
    assert_eq!(body["matrix"]["shared_edges"][0][1], 6);
    let (_, all) = call(&app, "GET", "/overlap", None).await;
    assert_eq!(all["snapshot_ids"].as_array().unwrap().len(), 7);
}

#[tokio::test]
async fn pseudonymized_usernames() {
    let st = state(ServiceOptions { pseudonymize: true, pseudonym_salt: "salt".into(), ..Default::default() });
    let app = router(st.clone());
    let hs = st.base_snapshot(LayerKind::HashtagSequence).unwrap().to_string();
    let (_, page) = call(&app, "GET", &format!("/snapshots/{hs}/components"), None).await;
    let text = page.to_string();
    assert!(!text.contains("anna123") && !text.contains("name1"));
    assert!(page["components"][1]["members"][0]["username"].as_str().unwrap().starts_with("user_"));
}

#[tokio::test]
async fn concurrent_filter_requests_agree() {
    let st = state(ServiceOptions::default());
    let app = router(st.clone());
    let before = st.registry().len();
    let tasks: Vec<_> = (0..16)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move {
                call(&app, "POST", "/layers/MI/filter", Some(serde_json::json!({"variant": "temporal", "value": 60})))
                    .await
            })
        })
        .collect();
    let mut ids = std::collections::BTreeSet::new();
    for t in tasks {
        let (s, body) = t.await.unwrap();
        assert_eq!(s, StatusCode::OK);
        ids.insert(body["snapshot_id"].as_str().unwrap().to_string());
    }
    assert_eq!(ids.len(), 1);
    assert_eq!(st.registry().len(), before + 1);
}
