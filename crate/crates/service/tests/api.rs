mod common;

use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use common::*;
use mattelab_bridge::mock::{Defect, MockConfig, MockSidecar};
use mattelab_core::codec::{decode_alpha, decode_image, decode_mask, decode_trimap};
use mattelab_core::perception::SegmenterRef;
use mattelab_core::{Alpha, Label};
use mattelab_service::config::{CompositeBackground, SessionSettings};
use mattelab_service::{ServiceConfig, SessionStore};
use serde_json::json;

fn params(k: u32, iters: u32) -> String {
    json!({"kernel_size": k, "iterations": iters}).to_string()
}

#[test]
fn health_and_session_creation() {
    let srv = TestServer::start(store());
    let (s, v) = srv.get_json("/api/health");
    assert_eq!((s, v["status"].as_str()), (200, Some("ok")));

    let a = srv.create();
    let b = srv.create();
    assert_ne!(a, b);
    let (s, v) = srv.get_json(&format!("/api/sessions/{a}/state"));
    assert_eq!(s, 200);
    assert_eq!(
        (v["width"].as_u64(), v["height"].as_u64()),
        (Some(W as u64), Some(H as u64))
    );
    assert_eq!(v["artifacts"].as_array().unwrap().len(), 0);
    assert_eq!(srv.store.len(), 2);
}

#[test]
fn corrupt_image_is_rejected_without_creating_a_session() {
    let srv = TestServer::start(store());
    let body = json!({"image_b64": STANDARD.encode(b"definitely not a png")}).to_string();
    let (s, v) = srv.post("/api/sessions", &body);
    assert_eq!(s, 400, "{v}");
    let (s, _) = srv.post("/api/sessions", r#"{"image_b64": "%%%"}"#);
    assert_eq!(s, 400);
    let (s, _) = srv.post("/api/sessions", "{not json");
    assert_eq!(s, 400);
    assert!(srv.store.is_empty());
}

#[test]
fn unknown_session_and_missing_artifacts_are_not_found() {
    let srv = TestServer::start(store());
    let (s, v) = srv.get_json("/api/sessions/nope/state");
    assert_eq!(s, 404, "{v}");
    let id = srv.create();
    let (s, _) = srv.get(&format!("/api/sessions/{id}/artifacts/alpha.png"));
    assert_eq!(s, 404);
    let (s, _) = srv.get(&format!("/api/sessions/{id}/artifacts/bogus.png"));
    assert_eq!(s, 404);
    let (s, v) = srv.post(
        &format!("/api/sessions/{id}/transparency"),
        r#"{"mode":"user_transparent"}"#,
    );
    assert_eq!(s, 409, "{v}");
    let (s, _) = srv.post(&format!("/api/sessions/{id}/undo"), "");
    assert_eq!(s, 409);
}

#[test]
fn box_guidance_produces_all_artifacts_with_opaque_foreground() {
    let srv = TestServer::start(store());
    let id = srv.create();
    let (s, v) = srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    assert_eq!(s, 200, "{v}");
    assert_eq!(v["artifacts"].as_array().unwrap().len(), 5);

    let mask = decode_mask(&srv.artifact(&id, "mask")).unwrap();
    for y in 0..H {
        for x in 0..W {
            assert_eq!(mask.get(x, y), in_left(x, y), "mask at ({x}, {y})");
        }
    }
    let trimap = decode_trimap(&srv.artifact(&id, "trimap")).unwrap();
    let alpha: Alpha = decode_alpha(&srv.artifact(&id, "alpha")).unwrap();
    for y in 0..H {
        for x in 0..W {
            match trimap.get(x, y) {
                Label::Foreground => assert_eq!(alpha.get(x, y), 1.0),
                Label::Background => assert_eq!(alpha.get(x, y), 0.0),
                Label::Unknown => {}
            }
        }
    }
    assert!(trimap.count(Label::Foreground) > 0 && trimap.count(Label::Unknown) > 0);
}

#[test]
fn point_guidance_accumulates_into_a_union() {
    let srv = TestServer::start(store());
    let id = srv.create();
    let (s, v) = srv.post(
        &format!("/api/sessions/{id}/guidance"),
        r#"{"kind":"points","points":[{"x":40,"y":60,"label":1}]}"#,
    );
    assert_eq!(s, 200, "{v}");
    let one = decode_mask(&srv.artifact(&id, "mask")).unwrap();
    assert_eq!(one.count(), 40 * 60);

    let (s, v) = srv.post(
        &format!("/api/sessions/{id}/guidance"),
        r#"{"kind":"points","points":[{"x":120,"y":60,"polarity":"positive"}]}"#,
    );
    assert_eq!(s, 200, "{v}");
    let both = decode_mask(&srv.artifact(&id, "mask")).unwrap();
    for y in 0..H {
        for x in 0..W {
            assert_eq!(both.get(x, y), in_left(x, y) || in_right(x, y));
        }
    }
    // A box starts a new prompt.
    srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    let boxed = decode_mask(&srv.artifact(&id, "mask")).unwrap();
    assert_eq!(boxed.count(), 40 * 60);
}

#[test]
fn invalid_guidance_is_a_validation_error() {
    let srv = TestServer::start(store());
    let id = srv.create();
    let (s, v) = srv.post(
        &format!("/api/sessions/{id}/guidance"),
        r#"{"kind":"box","box":[0,0,500,10]}"#,
    );
    assert_eq!(s, 422, "{v}");
    let (s, _) = srv.post(
        &format!("/api/sessions/{id}/guidance"),
        r#"{"kind":"points","points":[{"x":1,"y":1,"label":7}]}"#,
    );
    assert_eq!(s, 422);
    let (s, _) = srv.post(&format!("/api/sessions/{id}/guidance"), r#"{"kind":"lasso"}"#);
    assert_eq!(s, 400);
}

#[test]
fn failing_remote_segmenter_leaves_the_session_untouched() {
    let mock = MockSidecar::start(MockConfig {
        defect: Some(Defect::WrongDimensions),
        ..MockConfig::default()
    })
    .unwrap();
    let mut cfg = test_config();
    cfg.pipeline.segmenter = SegmenterRef::Remote { endpoint: mock.url() };
    let srv = TestServer::start(std::sync::Arc::new(SessionStore::new(engine(&cfg))));
    let id = srv.create();
    let (_, before) = srv.get_json(&format!("/api/sessions/{id}/state"));
    let (s, v) = srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    assert_eq!(s, 502, "{v}");
    assert_eq!(v["stage"].as_str(), Some("segment"));
    let (_, after) = srv.get_json(&format!("/api/sessions/{id}/state"));
    assert_eq!(before, after);
}

#[test]
fn transparency_toggle_marks_object_unknown_and_reverts() {
    let srv = TestServer::start(store());
    let id = srv.create();
    srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    let opaque_trimap = srv.artifact(&id, "trimap");

    let (s, v) = srv.post(
        &format!("/api/sessions/{id}/transparency"),
        r#"{"mode":"user_transparent"}"#,
    );
    assert_eq!(s, 200, "{v}");
    let t = decode_trimap(&srv.artifact(&id, "trimap")).unwrap();
    assert_eq!(t.count(Label::Foreground), 0);
    let png = decode_image::<f64>(&srv.artifact(&id, "trimap")).unwrap();
    assert!(png
        .pixels()
        .iter()
        .all(|p| p[0] == 0.0 || (p[0] * 255.0).round() == 128.0));
    let transparent_alpha = srv.artifact(&id, "alpha");

    // Setting the same mode again changes nothing.
    srv.post(
        &format!("/api/sessions/{id}/transparency"),
        r#"{"mode":"user_transparent"}"#,
    );
    assert!(srv.artifact(&id, "alpha") == transparent_alpha);

    srv.post(&format!("/api/sessions/{id}/transparency"), r#"{"mode":"user_opaque"}"#);
    assert!(srv.artifact(&id, "trimap") == opaque_trimap);
    let (s, _) = srv.post(&format!("/api/sessions/{id}/transparency"), r#"{"mode":"sometimes"}"#);
    assert_eq!(s, 400);
}

#[test]
fn morphology_parameters_validate_and_nest() {
    let srv = TestServer::start(store());
    let id = srv.create();
    let (s, v) = srv.post(&format!("/api/sessions/{id}/params"), &params(101, 1));
    assert_eq!(s, 422, "{v}");
    let (s, _) = srv.post(&format!("/api/sessions/{id}/params"), &params(3, 0));
    assert_eq!(s, 422);

    // Parameters may be set before any mask exists.
    let (s, v) = srv.post(&format!("/api/sessions/{id}/params"), &params(1, 1));
    assert_eq!(s, 200, "{v}");
    srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    let mask = decode_mask(&srv.artifact(&id, "mask")).unwrap();
    let t1 = decode_trimap(&srv.artifact(&id, "trimap")).unwrap();
    assert_eq!(t1.count(Label::Unknown), 0);
    assert_eq!(t1.region(Label::Foreground), mask);

    srv.post(&format!("/api/sessions/{id}/params"), &params(3, 1));
    let u3 = decode_trimap(&srv.artifact(&id, "trimap"))
        .unwrap()
        .region(Label::Unknown);
    srv.post(&format!("/api/sessions/{id}/params"), &params(9, 1));
    let u9 = decode_trimap(&srv.artifact(&id, "trimap"))
        .unwrap()
        .region(Label::Unknown);
    assert!(u3.count() > 0 && u3.count() < u9.count());
    assert!(u3.is_subset_of(&u9));
}

#[test]
fn undo_is_bounded_and_restores_artifacts() {
    let srv = TestServer::start(store());
    let id = srv.create();
    srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    let first = srv.artifact(&id, "trimap");
    srv.post(&format!("/api/sessions/{id}/params"), &params(9, 2));
    assert!(srv.artifact(&id, "trimap") != first);
    let (s, v) = srv.post(&format!("/api/sessions/{id}/undo"), "");
    assert_eq!(s, 200, "{v}");
    assert!(srv.artifact(&id, "trimap") == first);
    // Undoing the first guidance returns to the empty session.
    srv.post(&format!("/api/sessions/{id}/undo"), "");
    let (s, _) = srv.get(&format!("/api/sessions/{id}/artifacts/alpha.png"));
    assert_eq!(s, 404);

    // 33 mutations keep exactly 32 undo steps.
    for i in 0..33u32 {
        let (s, v) = srv.post(&format!("/api/sessions/{id}/params"), &params(1 + 2 * (i % 4), 1));
        assert_eq!(s, 200, "{v}");
    }
    let (_, v) = srv.get_json(&format!("/api/sessions/{id}/state"));
    assert_eq!(v["undo_depth"].as_u64(), Some(32));
    for _ in 0..32 {
        let (s, _) = srv.post(&format!("/api/sessions/{id}/undo"), "");
        assert_eq!(s, 200);
    }
    let (s, _) = srv.post(&format!("/api/sessions/{id}/undo"), "");
    assert_eq!(s, 409);
}

#[test]
fn exports_match_the_session_state() {
    let srv = TestServer::start(store());
    let id = srv.create();
    srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    let alpha_png = srv.artifact(&id, "alpha");
    let exported: Alpha = decode_alpha(&alpha_png).unwrap();
    let live = srv.store.with(&id, |s, _| Ok(s.alpha().unwrap().clone())).unwrap();
    for (a, b) in exported.values().iter().zip(live.values()) {
        assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
    }

    let image = two_objects();
    let composite =
        decode_image::<f64>(&srv.artifact_query(&id, "composite", "?background=flat&color=000000")).unwrap();
    let cutout = srv.artifact(&id, "foreground_cutout");
    assert!(!cutout.is_empty());
    for y in 0..H {
        for x in 0..W {
            let a = live.get(x, y);
            let got = composite.get(x, y);
            let src = image.get(x, y);
            for c in 0..3 {
                assert!((got[c] - a * src[c]).abs() <= 1.0 / 255.0, "composite at ({x}, {y})");
            }
        }
    }
    let (s, _) = srv.get(&format!("/api/sessions/{id}/artifacts/composite.png?background=plaid"));
    assert_eq!(s, 422);
}

#[test]
fn idle_sessions_expire_and_snapshots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServiceConfig {
        sessions: SessionSettings {
            ttl_secs: 60,
            snapshot_dir: Some(dir.path().to_path_buf()),
            composite_background: CompositeBackground::default(),
            ..SessionSettings::default()
        },
        ..test_config()
    };
    let store = SessionStore::new(engine(&cfg));
    let id = store.create(&two_objects_png()).unwrap().id;
    store
        .mutate(&id, |s, e| {
            s.apply_guidance(
                e,
                mattelab_core::perception::Guidance::Box(mattelab_core::BoundingBox::new(14, 24, 66, 96).unwrap()),
            )
        })
        .unwrap();
    for f in ["mask.png", "trimap.png", "alpha.png", "state.json"] {
        assert!(dir.path().join(&id).join(f).is_file(), "{f}");
    }
    assert_eq!(store.sweep(Instant::now()), 0);
    assert_eq!(store.sweep(Instant::now() + Duration::from_secs(61)), 1);
    assert!(store.is_empty());
}

#[test]
fn opaque_mode_reverts_a_detection_corrected_trimap_to_the_basic_one() {
    let mut cfg = test_config();
    let glass = mattelab_core::Detection {
        bbox: mattelab_core::BoundingBox::new(30, 40, 50, 80).unwrap(),
        label: "glass".into(),
        score: 0.9,
    };
    cfg.pipeline.detector = mattelab_core::perception::DetectorRef::Stub {
        detections: mattelab_core::DetectionSet::new(vec![glass]).unwrap(),
    };
    let srv = TestServer::start(std::sync::Arc::new(SessionStore::new(engine(&cfg))));
    let id = srv.create();
    let (s, v) = srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    assert_eq!(s, 200, "{v}");
    assert_eq!(
        v["decision"]["detections"]["items"].as_array().map(Vec::len),
        Some(1),
        "{v}"
    );
    let mask = decode_mask(&srv.artifact(&id, "mask")).unwrap();
    let auto = decode_trimap(&srv.artifact(&id, "trimap")).unwrap();
    let basic = mattelab_core::trimap::basic_trimap(&mask, &cfg.pipeline.morph);
    assert_ne!(auto, basic);
    assert_eq!(auto.get(40, 60), Label::Unknown);

    srv.post(&format!("/api/sessions/{id}/transparency"), r#"{"mode":"user_opaque"}"#);
    assert_eq!(decode_trimap(&srv.artifact(&id, "trimap")).unwrap(), basic);
}

#[test]
fn composite_of_a_fully_opaque_matte_is_the_original_image() {
    let srv = TestServer::start(store());
    let png = mattelab_core::codec::encode_image(
        &mattelab_core::raster::RasterImage::<f64>::filled(24, 16, [0.2, 0.6, 0.4]).unwrap(),
    );
    let (s, v) = srv.post(
        "/api/sessions",
        &json!({"image_b64": STANDARD.encode(&png)}).to_string(),
    );
    assert_eq!(s, 201, "{v}");
    let id = v["id"].as_str().unwrap().to_string();
    srv.post(&format!("/api/sessions/{id}/params"), &params(1, 1));
    let (s, v) = srv.post(
        &format!("/api/sessions/{id}/guidance"),
        r#"{"kind":"points","points":[{"x":3,"y":3,"label":1}]}"#,
    );
    assert_eq!(s, 200, "{v}");
    let alpha: Alpha = decode_alpha(&srv.artifact(&id, "alpha")).unwrap();
    assert!(alpha.values().iter().all(|&a| a == 1.0));
    for query in ["", "?background=flat&color=ff00ff", "?background=checkerboard&cell=3"] {
        assert!(srv.artifact_query(&id, "composite", query) == png, "composite{query}");
    }
}

#[test]
fn concurrent_mutations_of_one_session_are_serialized() {
    let srv = TestServer::start(store());
    let id = srv.create();
    srv.post(&format!("/api/sessions/{id}/guidance"), LEFT_BOX);
    std::thread::scope(|scope| {
        for t in 0..8u32 {
            let (srv, id) = (&srv, &id);
            scope.spawn(move || {
                for i in 0..3u32 {
                    let (s, v) = srv.post(&format!("/api/sessions/{id}/params"), &params(1 + 2 * ((t + i) % 5), 1));
                    assert_eq!(s, 200, "{v}");
                }
            });
        }
    });
    let (_, v) = srv.get_json(&format!("/api/sessions/{id}/state"));
    assert_eq!(v["version"].as_u64(), Some(25));
    assert_eq!(v["undo_depth"].as_u64(), Some(25));
}
