//! Drive the HTTP API in-process: enroll, identify, open an avatar session
//! and patch one slider.
//!
//!     cargo run -p avaface-app --example serve_session
//!
//! `avaface serve --port 8080` exposes the same router over TCP.

use axum::body::Body;
use axum::http::{header, Method, Request};
use http_body_util::BodyExt;
use tower::ServiceExt;

use avaface::dataset::{render_synth_face, synth_eye_positions, synth_subject};
use avaface::imaging::encode_png;
use avaface::pipeline::Engine;
use avaface_app::service::{build_router, ServiceOptions};

const BOUNDARY: &str = "example-boundary";

fn form(fields: &[(&str, &[u8])]) -> Vec<u8> {
    let mut body = Vec::new();
    for (name, value) in fields {
        let file = if *name == "image" {
            "; filename=\"face.png\""
        } else {
            ""
        };
        body.extend_from_slice(
            format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"{file}\r\n\r\n").as_bytes(),
        );
        body.extend_from_slice(value);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    body
}

async fn call(app: &axum::Router, method: Method, uri: &str, content_type: &str, body: Vec<u8>) -> (u16, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, content_type)
        .body(Body::from(body))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8_lossy(&bytes).into_owned())
}

#[tokio::main]
async fn main() {
    let app = build_router(&ServiceOptions {
        engine: Engine::default(),
        gallery: None,
        state_dir: None,
        viewer_dir: None,
    })
    .expect("router");
    let multipart = format!("multipart/form-data; boundary={BOUNDARY}");

    for seed in 0..3u64 {
        let spec = synth_subject(seed);
        let png = encode_png(&render_synth_face(&spec, 160, 160).unwrap());
        let e = synth_eye_positions(&spec, 160, 160);
        let eyes = format!("{},{},{},{}", e.left.x, e.left.y, e.right.x, e.right.y);
        let id = format!("person-{seed}");
        let (status, body) = call(
            &app,
            Method::POST,
            "/enroll",
            &multipart,
            form(&[
                ("subject_id", id.as_bytes()),
                ("image", &png),
                ("eyes", eyes.as_bytes()),
            ]),
        )
        .await;
        println!("POST /enroll {status} {body}");
    }

    let spec = synth_subject(1).with_capture(-3.0, 1.04);
    let png = encode_png(&render_synth_face(&spec, 160, 160).unwrap());
    let (status, body) = call(
        &app,
        Method::POST,
        "/identify",
        &multipart,
        form(&[("image", &png), ("k", b"2")]),
    )
    .await;
    println!("POST /identify {status} {body}");

    let (status, body) = call(
        &app,
        Method::POST,
        "/avatar",
        &multipart,
        form(&[("subject_id", b"person-1")]),
    )
    .await;
    println!("POST /avatar {status} {body}");
    let session: serde_json::Value = serde_json::from_str(&body).unwrap();
    let id = session["session_id"].as_str().unwrap();

    let (status, body) = call(
        &app,
        Method::PATCH,
        &format!("/avatar/{id}/params"),
        "application/json",
        br#"{"eye_size": 1.4}"#.to_vec(),
    )
    .await;
    println!("PATCH /avatar/{id}/params {status} {body}");
}
