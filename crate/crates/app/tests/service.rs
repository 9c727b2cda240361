use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use avaface::avatar::{parse_obj, MORPH_NAMES};
use avaface::dataset::{render_synth_face, synth_eye_positions, synth_subject};
use avaface::imaging::encode_png;
use avaface::pipeline::Engine;
use avaface_app::service::{build_router, etag, ServiceOptions};

const BOUNDARY: &str = "avafaceboundary7MA4YWxk";

enum Part<'a> {
    Text(&'a str, &'a str),
    File(&'a str, &'a str, &'a [u8]),
}

fn multipart(parts: &[Part]) -> Vec<u8> {
    let mut body = Vec::new();
    for p in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\n").as_bytes());
        match p {
            Part::Text(name, value) => {
                body.extend_from_slice(format!("Content-Disposition: form-data; name=\"{name}\"\r\n\r\n").as_bytes());
                body.extend_from_slice(value.as_bytes());
            }
            Part::File(name, file, bytes) => {
                body.extend_from_slice(
                    format!(
                        "Content-Disposition: form-data; name=\"{name}\"; filename=\"{file}\"\r\nContent-Type: image/png\r\n\r\n"
                    )
                    .as_bytes(),
                );
                body.extend_from_slice(bytes);
            }
        }
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, axum::http::HeaderMap, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, headers, bytes)
}

async fn post_form(app: &Router, path: &str, parts: &[Part<'_>]) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(Method::POST)
        .uri(path)
        .header(
            header::CONTENT_TYPE,
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(multipart(parts)))
        .unwrap();
    let (status, _, body) = send(app, req).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

async fn patch(app: &Router, id: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(Method::PATCH)
        .uri(format!("/avatar/{id}/params"))
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, _, body) = send(app, req).await;
    (status, serde_json::from_slice(&body).unwrap())
}

async fn get(app: &Router, path: &str, if_none_match: Option<&str>) -> (StatusCode, String, Vec<u8>) {
    let mut req = Request::builder().uri(path);
    if let Some(tag) = if_none_match {
        req = req.header(header::IF_NONE_MATCH, tag);
    }
    let (status, headers, body) = send(app, req.body(Body::empty()).unwrap()).await;
    let tag = headers
        .get(header::ETAG)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    (status, tag, body)
}

fn face_png(seed: u64) -> (Vec<u8>, String) {
    let spec = synth_subject(seed);
    let img = render_synth_face(&spec, 160, 160).unwrap();
    let e = synth_eye_positions(&spec, 160, 160);
    (
        encode_png(&img),
        format!("{},{},{},{}", e.left.x, e.left.y, e.right.x, e.right.y),
    )
}

fn app() -> Router {
    build_router(&ServiceOptions {
        engine: Engine::default(),
        gallery: None,
        state_dir: None,
        viewer_dir: None,
    })
    .unwrap()
}

/// Line grammar of the emitted OBJ, written independently of the exporter:
/// known keywords only, numeric fields, `f a/b/c` triples within range.
fn check_obj_grammar(text: &str) {
    let (mut v, mut vt, mut vn, mut faces) = (0usize, 0usize, 0usize, Vec::new());
    for line in text.lines() {
        let mut it = line.split_whitespace();
        let Some(key) = it.next() else { continue };
        let rest: Vec<&str> = it.collect();
        let floats = |n: usize| {
            assert_eq!(rest.len(), n, "`{line}`");
            rest.iter()
                .map(|x| x.parse::<f64>().unwrap_or_else(|_| panic!("`{line}`")))
                .collect::<Vec<_>>()
        };
        match key {
            "#" | "o" | "g" | "s" | "mtllib" | "usemtl" => {}
            _ if key.starts_with('#') => {}
            "v" => {
                floats(3);
                v += 1;
            }
            "vt" => {
                assert!(floats(2).iter().all(|x| (0.0..=1.0).contains(x)), "`{line}`");
                vt += 1;
            }
            "vn" => {
                let n = floats(3);
                assert!(
                    (n.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-5,
                    "`{line}`"
                );
                vn += 1;
            }
            "f" => {
                assert_eq!(rest.len(), 3, "`{line}`");
                for corner in &rest {
                    let idx: Vec<usize> = corner
                        .split('/')
                        .map(|x| x.parse().unwrap_or_else(|_| panic!("`{line}`")))
                        .collect();
                    assert_eq!(idx.len(), 3, "`{line}`");
                    faces.push((idx[0], idx[1], idx[2]));
                }
            }
            other => panic!("unexpected OBJ keyword `{other}`"),
        }
    }
    assert!(v > 0 && !faces.is_empty());
    for (a, b, c) in faces {
        assert!((1..=v).contains(&a) && (1..=vt).contains(&b) && (1..=vn).contains(&c));
    }
}

fn assert_error_shape(v: &Value) {
    assert!(v["error"].is_string(), "{v}");
    assert!(v["message"].is_string(), "{v}");
}

#[tokio::test]
async fn enroll_conflicts_and_errors() {
    let app = app();
    let (png, eyes) = face_png(1);
    let (s, v) = post_form(
        &app,
        "/enroll",
        &[
            Part::Text("subject_id", "s1"),
            Part::File("image", "a.png", &png),
            Part::Text("eyes", &eyes),
        ],
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["gallery_size"], 1);
    let (s, v) = post_form(
        &app,
        "/enroll",
        &[Part::Text("subject_id", "s1"), Part::File("image", "a.png", &png)],
    )
    .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "duplicate_subject");
    let (s, v) = post_form(
        &app,
        "/enroll",
        &[
            Part::Text("subject_id", "s2"),
            Part::File("image", "x.png", b"not an image"),
        ],
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "format_error");
    assert_error_shape(&v);
    let (s, v) = post_form(&app, "/enroll", &[Part::File("image", "a.png", &png)]).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error_shape(&v);
}

#[tokio::test]
async fn identify_ranks_enrolled_subject_first() {
    let app = app();
    let (png0, _) = face_png(0);
    let (s, v) = post_form(&app, "/identify", &[Part::File("image", "p.png", &png0)]).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "empty_gallery");

    for (id, seed) in [("s0", 0), ("s1", 1)] {
        let (png, eyes) = face_png(seed);
        let (s, _) = post_form(
            &app,
            "/enroll",
            &[
                Part::Text("subject_id", id),
                Part::File("image", "a.png", &png),
                Part::Text("eyes", &eyes),
            ],
        )
        .await;
        assert_eq!(s, StatusCode::OK);
    }
    let (_, eyes0) = face_png(0);
    let (s, v) = post_form(
        &app,
        "/identify",
        &[
            Part::File("image", "p.png", &png0),
            Part::Text("k", "3"),
            Part::Text("eyes", &eyes0),
        ],
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let c = v["candidates"].as_array().unwrap();
    assert_eq!(c.len(), 2);
    assert_eq!(c[0]["subject"], "s0");
    // gallery templates are stored as f32
    assert!((c[0]["fused"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(c[0]["fused"].as_f64() >= c[1]["fused"].as_f64());
    let (s, v) = post_form(
        &app,
        "/identify",
        &[Part::File("image", "p.png", &png0), Part::Text("k", "0")],
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error_shape(&v);
}

#[tokio::test]
async fn concurrent_identify_matches_serial() {
    let app = app();
    for seed in 0..4u64 {
        let (png, eyes) = face_png(seed);
        let id = format!("s{seed}");
        post_form(
            &app,
            "/enroll",
            &[
                Part::Text("subject_id", &id),
                Part::File("image", "a.png", &png),
                Part::Text("eyes", &eyes),
            ],
        )
        .await;
    }
    let probes: Vec<_> = (0..4u64).map(face_png).collect();
    let mut serial = Vec::new();
    for (png, _) in &probes {
        serial.push(
            post_form(&app, "/identify", &[Part::File("image", "p.png", png)])
                .await
                .1,
        );
    }
    let probes = Arc::new(probes);
    let tasks: Vec<_> = (0..16)
        .map(|i| {
            let app = app.clone();
            let probes = probes.clone();
            tokio::spawn(async move {
                let (png, _) = &probes[i % 4];
                (
                    i % 4,
                    post_form(&app, "/identify", &[Part::File("image", "p.png", png)])
                        .await
                        .1,
                )
            })
        })
        .collect();
    for t in tasks {
        let (i, v) = t.await.unwrap();
        assert_eq!(v, serial[i]);
    }
}

#[tokio::test]
async fn avatar_session_lifecycle() {
    let app = app();
    let (png, eyes) = face_png(4);
    let (s, a) = post_form(
        &app,
        "/avatar",
        &[Part::File("image", "f.png", &png), Part::Text("eyes", &eyes)],
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{a}");
    let (_, b) = post_form(
        &app,
        "/avatar",
        &[Part::File("image", "f.png", &png), Part::Text("eyes", &eyes)],
    )
    .await;
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(a["attributes"], b["attributes"]);
    assert_eq!(a["params"], b["params"]);
    assert_eq!(a["suggested_body"], a["attributes"]["suggested_body"]);
    for name in MORPH_NAMES {
        let w = a["params"]["morph_weights"][name].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&w));
    }
    let id = a["session_id"].as_str().unwrap();

    let obj_path = format!("/avatar/{id}/model.obj");
    let (s, tag1, obj1) = get(&app, &obj_path, None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(tag1, etag(&obj1));
    let (_, tag1b, obj1b) = get(&app, &obj_path, None).await;
    assert_eq!((tag1.clone(), obj1.clone()), (tag1b, obj1b));
    let (s, _, _) = get(&app, &obj_path, Some(&tag1)).await;
    assert_eq!(s, StatusCode::NOT_MODIFIED);
    check_obj_grammar(std::str::from_utf8(&obj1).unwrap());
    let mesh = parse_obj(std::str::from_utf8(&obj1).unwrap()).unwrap();
    assert!(!mesh.triangles.is_empty());

    let (s, v) = patch(&app, id, "{}").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["params"], a["params"]);
    assert_eq!(get(&app, &obj_path, None).await.2, obj1);

    let (s, v) = patch(&app, id, r#"{"nose_length": 0.9}"#).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["params"]["morph_weights"]["nose_length"], 0.9);
    let (_, tag2, obj2) = get(&app, &obj_path, None).await;
    assert_ne!(tag2, tag1);
    assert_ne!(obj2, obj1);

    let (_, v) = patch(&app, id, r#"{"morph_weights": {"eye_size": 1.7}}"#).await;
    assert_eq!(v["params"]["morph_weights"]["eye_size"], 1.0);
    let (s, v) = patch(&app, id, r#"{"eye_size": "wide"}"#).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_error_shape(&v);

    let (s, ttag, tex) = get(&app, &format!("/avatar/{id}/texture.png"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ttag, etag(&tex));
    assert_eq!(&tex[1..4], b"PNG");
    let (_, v) = patch(&app, id, r#"{"texture_mode": "flat"}"#).await;
    assert_eq!(v["params"]["texture_mode"], "flat");
    let (_, ttag2, _) = get(&app, &format!("/avatar/{id}/texture.png"), None).await;
    assert_ne!(ttag, ttag2);

    let (s, v) = patch(&app, "nope", "{}").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");
    assert_eq!(get(&app, "/avatar/nope/model.obj", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn avatar_from_enrolled_subject() {
    let app = app();
    let (png, eyes) = face_png(6);
    post_form(
        &app,
        "/enroll",
        &[
            Part::Text("subject_id", "s6"),
            Part::File("image", "a.png", &png),
            Part::Text("eyes", &eyes),
        ],
    )
    .await;
    let (s, v) = post_form(&app, "/avatar", &[Part::Text("subject_id", "s6")]).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let (_, direct) = post_form(
        &app,
        "/avatar",
        &[Part::File("image", "a.png", &png), Part::Text("eyes", &eyes)],
    )
    .await;
    assert_eq!(v["attributes"], direct["attributes"]);
    let (s, v) = post_form(&app, "/avatar", &[Part::Text("subject_id", "ghost")]).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_error_shape(&v);
}

#[tokio::test]
async fn state_dir_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let opts = || ServiceOptions {
        engine: Engine::default(),
        gallery: None,
        state_dir: Some(dir.path().to_path_buf()),
        viewer_dir: None,
    };
    let app = build_router(&opts()).unwrap();
    let (png, eyes) = face_png(2);
    post_form(
        &app,
        "/enroll",
        &[
            Part::Text("subject_id", "s2"),
            Part::File("image", "a.png", &png),
            Part::Text("eyes", &eyes),
        ],
    )
    .await;
    let (_, a) = post_form(&app, "/avatar", &[Part::Text("subject_id", "s2")]).await;
    let id = a["session_id"].as_str().unwrap().to_string();
    patch(&app, &id, r#"{"jaw_length": 0.25}"#).await;
    let (_, tag, obj) = get(&app, &format!("/avatar/{id}/model.obj"), None).await;
    drop(app);

    let app = build_router(&opts()).unwrap();
    let (s, tag2, obj2) = get(&app, &format!("/avatar/{id}/model.obj"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!((tag, obj), (tag2, obj2));
    let (s, v) = post_form(
        &app,
        "/identify",
        &[Part::File("image", "p.png", &png), Part::Text("eyes", &eyes)],
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["candidates"][0]["subject"], "s2");
}

#[tokio::test]
async fn viewer_bundle_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<!doctype html><title>viewer</title>").unwrap();
    let app = build_router(&ServiceOptions {
        engine: Engine::default(),
        gallery: None,
        state_dir: None,
        viewer_dir: Some(dir.path().to_path_buf()),
    })
    .unwrap();
    let (s, _, body) = get(&app, "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(String::from_utf8(body).unwrap().contains("viewer"));
}
