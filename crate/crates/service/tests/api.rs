use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use robotseg_core::dataset::{label_map_to_gray, rgb_to_image, DatasetRecord};
use robotseg_core::grid::{Grid, Label, LabelMap, Mark, Trimap};
use robotseg_core::synthetic::{synthetic_record, SynthOptions};
use robotseg_service::rle::{decode, RleMask};
use robotseg_service::{router, Store};
use serde_json::{json, Value};
use tower::ServiceExt;

fn record(name: &str, seed: u64) -> DatasetRecord {
    let opts = SynthOptions {
        width: 32,
        height: 24,
        brush_radius: 2,
        distractors: 1,
        ..SynthOptions::default()
    };
    synthetic_record(name, seed, &opts).unwrap()
}

/// Ground truth all fg, with a (wrong) bg seed in one corner.
fn all_fg() -> DatasetRecord {
    let r = record("plain", 1);
    let gt: LabelMap = Grid::filled(32, 24, Label::Fg);
    let mut brush = Trimap::unlabeled(32, 24);
    brush.as_mut_slice()[0] = Mark::BgSeed;
    brush.as_mut_slice()[400] = Mark::FgSeed;
    DatasetRecord::new("all-fg", (*r.image).clone(), gt, brush.clone(), brush).unwrap()
}

fn store(dir: Option<&std::path::Path>) -> Arc<Store> {
    let records = vec![record("a", 1), record("b", 2), all_fg()];
    Arc::new(Store::from_records(records, dir.map(|d| d.to_path_buf())).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn create(app: &Router, body: Value) -> String {
    let (st, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    v["id"].as_str().unwrap().to_string()
}

fn mask(v: &Value) -> LabelMap {
    let m: RleMask = serde_json::from_value(v.clone()).unwrap();
    decode(&m).unwrap()
}

fn disk(label: &str, x: i64, y: i64, r: u32) -> Value {
    json!({ "label": label, "center": { "x": x, "y": y }, "radius": r })
}

#[tokio::test]
async fn create_echoes_config_and_rejects_unknown_images() {
    let app = router(store(None), None);
    let config = json!({ "system": "GCA", "params": { "w_c": 0.5, "w_i": 3.0, "w_beta": 1.0 } });
    let id = create(&app, json!({ "image": "a", "config": config })).await;
    let (st, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["config"]["system"], "GCA");
    assert_eq!(v["config"]["params"]["w_i"], 3.0);
    assert_eq!(mask(&v["segmentation"]).width(), 32);
    let (st, _) = call(&app, "POST", "/sessions", Some(json!({ "image": "nope" }))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let (st, _) = call(&app, "GET", "/sessions/missing", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    let bad = json!({ "image": "a", "config": { "system": "GC", "params": { "w_c": -1.0, "w_i": 1.0, "w_beta": 1.0 } } });
    let (st, _) = call(&app, "POST", "/sessions", Some(bad)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn strokes_update_the_segmentation() {
    let app = router(store(None), None);
    let id = create(&app, json!({ "image": "all-fg" })).await;
    let (st, v) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/strokes"),
        Some(disk("fg", 16, 12, 40)),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{v}");
    assert_eq!(v["er_b"], 0.0);
    assert_eq!(v["strokes"], 1);

    let id = create(&app, json!({ "image": "a" })).await;
    let uri = format!("/sessions/{id}/strokes");
    let (_, first) = call(&app, "POST", &uri, Some(disk("bg", 3, 20, 2))).await;
    let (_, second) = call(&app, "POST", &uri, Some(disk("bg", 3, 20, 2))).await;
    assert_eq!(mask(&first["segmentation"]), mask(&second["segmentation"]));
    let line = json!({ "label": "fg", "points": [{ "x": 10, "y": 10 }, { "x": 14, "y": 12 }], "radius": 1 });
    let (st, _) = call(&app, "POST", &uri, Some(line)).await;
    assert_eq!(st, StatusCode::OK);
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["trace"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn out_of_bounds_strokes_are_rejected() {
    let app = router(store(None), None);
    let id = create(&app, json!({ "image": "a" })).await;
    let uri = format!("/sessions/{id}/strokes");
    let (st, v) = call(&app, "POST", &uri, Some(disk("fg", -1, 0, 2))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(v["bounds"]["width"], 32);
    let (st, _) = call(&app, "POST", &uri, Some(disk("fg", 0, 24, 2))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert!(v["trace"].as_array().unwrap().is_empty());
    let (st, _) = call(
        &app,
        "POST",
        "/sessions/missing/strokes",
        Some(disk("fg", 1, 1, 1)),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn robot_replay_leaves_the_session_alone() {
    let app = router(store(None), None);
    let id = create(&app, json!({ "image": "b" })).await;
    call(
        &app,
        "POST",
        &format!("/sessions/{id}/strokes"),
        Some(disk("fg", 16, 12, 1)),
    )
    .await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let uri = format!("/sessions/{id}/robot-replay");
    let (st, zero) = call(
        &app,
        "POST",
        &uri,
        Some(json!({ "policy": { "kind": "center" }, "budget": 0 })),
    )
    .await;
    assert_eq!(st, StatusCode::OK, "{zero}");
    assert_eq!(zero["errors"].as_array().unwrap().len(), 1);
    let body = json!({ "policy": { "kind": "random", "seed": 4 }, "budget": 6 });
    let (_, r1) = call(&app, "POST", &uri, Some(body.clone())).await;
    let (_, r2) = call(&app, "POST", &uri, Some(body)).await;
    assert_eq!(r1["errors"], r2["errors"]);
    assert_eq!(r1["errors"].as_array().unwrap().len(), 7);
    let centers = |v: &Value| {
        v["strokes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["center"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(centers(&r1), centers(&r2));
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(before, after);
    let (_, hamming) = call(
        &app,
        "POST",
        &uri,
        Some(json!({ "policy": { "kind": "hamming", "stride": 2 }, "budget": 2 })),
    )
    .await;
    assert_eq!(hamming["errors"].as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn uploads_start_pending_until_both_labels_exist() {
    let app = router(store(None), None);
    let r = record("up", 9);
    let png = |img: image::DynamicImage| {
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png).unwrap();
        STANDARD.encode(buf.into_inner())
    };
    let body = json!({ "name": "upload-1", "png": png(rgb_to_image(&r.image).into()) });
    let (st, v) = call(&app, "POST", "/images", Some(body)).await;
    assert_eq!(st, StatusCode::CREATED, "{v}");
    assert_eq!(v["has_gt"], false);
    let (_, list) = call(&app, "GET", "/images", None).await;
    assert!(list
        .as_array()
        .unwrap()
        .iter()
        .any(|i| i["name"] == "upload-1" && i["uploaded"] == true));

    let id = create(
        &app,
        json!({ "image": "upload-1", "config": { "system": "GEO" } }),
    )
    .await;
    let uri = format!("/sessions/{id}/strokes");
    let (_, v) = call(&app, "POST", &uri, Some(disk("fg", 16, 12, 2))).await;
    assert!(v["segmentation"].is_null());
    assert!(v["er_b"].is_null());
    let (_, v) = call(&app, "POST", &uri, Some(disk("bg", 1, 1, 2))).await;
    assert_eq!(mask(&v["segmentation"]).len(), 32 * 24);
    assert!(v["er_b"].is_null());
    let (st, _) = call(
        &app,
        "POST",
        &format!("/sessions/{id}/robot-replay"),
        Some(json!({ "policy": { "kind": "center" }, "budget": 1 })),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);

    let gt = png(image::DynamicImage::ImageLuma8(label_map_to_gray(&r.gt)));
    let body =
        json!({ "name": "upload-2", "png": png(rgb_to_image(&r.image).into()), "gt_png": gt });
    let (st, v) = call(&app, "POST", "/images", Some(body.clone())).await;
    assert_eq!(st, StatusCode::CREATED);
    assert_eq!(v["has_gt"], true);
    let (st, _) = call(&app, "POST", "/images", Some(body)).await;
    assert_eq!(st, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn restart_restores_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(store(Some(dir.path())), None);
    let id = create(&app, json!({ "image": "a", "config": { "system": "GC" } })).await;
    let uri = format!("/sessions/{id}/strokes");
    for (l, x, y) in [("fg", 20, 12), ("bg", 2, 22), ("fg", 12, 10)] {
        call(&app, "POST", &uri, Some(disk(l, x, y, 2))).await;
    }
    call(&app, "POST", &uri, Some(disk("fg", 99, 0, 2))).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;

    let restarted = router(store(Some(dir.path())), None);
    let (st, after) = call(&restarted, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(mask(&before["segmentation"]), mask(&after["segmentation"]));
    let errs = |v: &Value| {
        v["trace"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["er_b"].clone())
            .collect::<Vec<_>>()
    };
    assert_eq!(errs(&before), errs(&after));
    assert_eq!(errs(&after).len(), 3);
    assert_eq!(before["created_at"], after["created_at"]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interfere() {
    let app = router(store(None), None);
    let strokes: Vec<Value> = (0..6)
        .map(|i| {
            disk(
                if i % 2 == 0 { "fg" } else { "bg" },
                4 + 4 * i,
                6 + 2 * i,
                1,
            )
        })
        .collect();
    let mut ids = Vec::new();
    for k in 0..6 {
        ids.push(create(&app, json!({ "image": if k % 2 == 0 { "a" } else { "b" } })).await);
    }
    let mut tasks = Vec::new();
    for id in &ids {
        for s in &strokes {
            let (app, id, s) = (app.clone(), id.clone(), s.clone());
            tasks.push(tokio::spawn(async move {
                call(&app, "POST", &format!("/sessions/{id}/strokes"), Some(s))
                    .await
                    .0
            }));
        }
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    for (k, id) in ids.iter().enumerate() {
        let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        let trace = v["trace"].as_array().unwrap();
        assert_eq!(trace.len(), strokes.len());
        // replaying the arrival order sequentially gives the same result
        let fresh = create(&app, json!({ "image": if k % 2 == 0 { "a" } else { "b" } })).await;
        for t in trace {
            call(
                &app,
                "POST",
                &format!("/sessions/{fresh}/strokes"),
                Some(t["stroke"].clone()),
            )
            .await;
        }
        let (_, w) = call(&app, "GET", &format!("/sessions/{fresh}"), None).await;
        assert_eq!(mask(&v["segmentation"]), mask(&w["segmentation"]));
    }
}
