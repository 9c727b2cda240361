//! HTTP service.
//!
//! | method | path                         | body                                      |
//! |--------|------------------------------|-------------------------------------------|
//! | POST   | `/enroll`                    | multipart `image`, `subject_id`, `eyes?`  |
//! | POST   | `/identify`                  | multipart `image`, `k?`, `eyes?`          |
//! | POST   | `/avatar`                    | multipart `image` or `subject_id`, `eyes?`, `texture_mode?` |
//! | GET    | `/avatar/{id}/params`        |                                           |
//! | PATCH  | `/avatar/{id}/params`        | JSON partial params                       |
//! | GET    | `/avatar/{id}/model.obj`     | (also `model.mtl`, `texture.png`)         |
//!
//! Errors are `{"error": code, "message": text}`. File bodies carry strong
//! entity tags (SHA-256 of the body) and honor `If-None-Match`.
//!
//! PATCH body: any subset of `{"morph_weights": {name: number}, "skin_tone":
//! [r, g, b], "texture_mode": "projected"|"flat"}`; weight names may also be
//! given at the top level (`{"nose_length": 0.9}`). Weights are clamped to
//! `[0, 1]` and echoed back clamped.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path as UrlPath, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use avaface::avatar::{
    attributes_to_params, classify_attributes, mtl_string, obj_string, render_texture, AvatarParams, FacialAttributes,
    HeadRig, TextureMode, MORPH_NAMES,
};
use avaface::gallery_file::{load_gallery, save_gallery};
use avaface::imaging::{decode_image, encode_png, load_image, save_image, to_grayscale};
use avaface::matcher::{identify, Gallery};
use avaface::normalize::{EyeLandmarks, NormalizedFace};
use avaface::pipeline::Engine;
use avaface::Error;

use crate::settings::parse_eyes;

const UPLOAD_LIMIT: usize = 32 << 20;

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    fn not_found(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, code, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::DuplicateSubject(_) | Error::EmptyGallery => StatusCode::CONFLICT,
            Error::UnknownSubject(_) => StatusCode::NOT_FOUND,
            Error::Io { .. } | Error::Invariant(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.code, "message": self.message}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// A published, immutable view of one avatar session. Readers clone the
/// `Arc` and never wait on regeneration.
#[derive(Debug)]
pub struct SessionSnapshot {
    pub params: AvatarParams,
    pub attributes: FacialAttributes,
    pub obj: Bytes,
    pub obj_etag: String,
    pub texture: Bytes,
    pub texture_etag: String,
}

#[derive(Debug)]
struct Session {
    face: Arc<NormalizedFace>,
    /// Serializes mutations of this session.
    writer: tokio::sync::Mutex<()>,
    current: RwLock<Arc<SessionSnapshot>>,
}

impl Session {
    fn snapshot(&self) -> Arc<SessionSnapshot> {
        self.current.read().expect("snapshot lock").clone()
    }
}

pub struct ServiceOptions {
    pub engine: Engine,
    /// Gallery file loaded at startup (takes precedence over the state dir's).
    pub gallery: Option<PathBuf>,
    /// Directory for gallery, enrolled faces and sessions; in-memory when `None`.
    pub state_dir: Option<PathBuf>,
    /// Static viewer bundle served at `/`.
    pub viewer_dir: Option<PathBuf>,
}

pub struct AppState {
    engine: Engine,
    rig: HeadRig,
    gallery: RwLock<Arc<Gallery>>,
    /// Aligned faces of subjects enrolled through this service (for `/avatar`).
    faces: RwLock<HashMap<String, Arc<NormalizedFace>>>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    /// Held across gallery mutation and its persistence.
    enroll_lock: Mutex<()>,
    state_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(opts: &ServiceOptions) -> avaface::Result<Self> {
        let state = AppState {
            engine: opts.engine.clone(),
            rig: HeadRig::new(),
            gallery: RwLock::new(Arc::new(Gallery::new())),
            faces: RwLock::new(HashMap::new()),
            sessions: RwLock::new(HashMap::new()),
            enroll_lock: Mutex::new(()),
            state_dir: opts.state_dir.clone(),
        };
        if let Some(dir) = &state.state_dir {
            for sub in ["faces", "sessions"] {
                let p = dir.join(sub);
                std::fs::create_dir_all(&p).map_err(|e| Error::Io { path: p, source: e })?;
            }
        }
        let gallery_path = opts
            .gallery
            .clone()
            .or_else(|| state.state_gallery_path().filter(|p| p.exists()));
        if let Some(p) = gallery_path {
            *state.gallery.write().expect("gallery lock") = Arc::new(load_gallery(p)?);
        }
        state.restore()?;
        Ok(state)
    }

    pub fn gallery(&self) -> Arc<Gallery> {
        self.gallery.read().expect("gallery lock").clone()
    }

    fn state_gallery_path(&self) -> Option<PathBuf> {
        self.state_dir.as_ref().map(|d| d.join("gallery.avgl"))
    }

    fn face_path(dir: &Path, subject: &str) -> PathBuf {
        dir.join("faces").join(format!("{}.png", hex(subject.as_bytes())))
    }

    /// Reloads enrolled faces and sessions from the state dir.
    fn restore(&self) -> avaface::Result<()> {
        let Some(dir) = &self.state_dir else { return Ok(()) };
        let gallery = self.gallery();
        for (id, _) in gallery.iter() {
            let p = Self::face_path(dir, id);
            if p.exists() {
                let face = face_from_color(load_image(&p)?)?;
                self.faces
                    .write()
                    .expect("faces lock")
                    .insert(id.to_string(), Arc::new(face));
            }
        }
        let sessions_dir = dir.join("sessions");
        let entries = std::fs::read_dir(&sessions_dir).map_err(|e| Error::Io {
            path: sessions_dir.clone(),
            source: e,
        })?;
        for entry in entries.flatten() {
            let sdir = entry.path();
            let (Some(id), true) = (sdir.file_name().and_then(|n| n.to_str()), sdir.is_dir()) else {
                continue;
            };
            let meta = sdir.join("session.json");
            let text = std::fs::read_to_string(&meta).map_err(|e| Error::Io {
                path: meta.clone(),
                source: e,
            })?;
            let v: Value =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", meta.display())))?;
            let params: AvatarParams = serde_json::from_value(v["params"].clone())
                .map_err(|e| Error::Format(format!("{}: {e}", meta.display())))?;
            let attributes: FacialAttributes = serde_json::from_value(v["attributes"].clone())
                .map_err(|e| Error::Format(format!("{}: {e}", meta.display())))?;
            let face = Arc::new(face_from_color(load_image(sdir.join("face.png"))?)?);
            let snap = self.render(&face, params, attributes);
            self.sessions.write().expect("sessions lock").insert(
                id.to_string(),
                Arc::new(Session {
                    face,
                    writer: tokio::sync::Mutex::new(()),
                    current: RwLock::new(Arc::new(snap)),
                }),
            );
        }
        Ok(())
    }

    fn render(&self, face: &NormalizedFace, params: AvatarParams, attributes: FacialAttributes) -> SessionSnapshot {
        let mesh = self.rig.pose(&params.morph_weights.to_array());
        let obj = Bytes::from(obj_string(&mesh));
        let texture = Bytes::from(encode_png(&render_texture(face, &params)));
        SessionSnapshot {
            obj_etag: etag(&obj),
            texture_etag: etag(&texture),
            params,
            attributes,
            obj,
            texture,
        }
    }

    fn persist_session(&self, id: &str, face: Option<&NormalizedFace>, snap: &SessionSnapshot) -> avaface::Result<()> {
        let Some(dir) = &self.state_dir else { return Ok(()) };
        let sdir = dir.join("sessions").join(id);
        std::fs::create_dir_all(&sdir).map_err(|e| Error::Io {
            path: sdir.clone(),
            source: e,
        })?;
        if let Some(face) = face {
            save_image(face.color_ref(), sdir.join("face.png"))?;
        }
        let meta = json!({"params": snap.params, "attributes": snap.attributes});
        write_atomic(
            &sdir.join("session.json"),
            serde_json::to_string_pretty(&meta).unwrap_or_default().as_bytes(),
        )?;
        write_atomic(&sdir.join("model.obj"), &snap.obj)?;
        write_atomic(&sdir.join("texture.png"), &snap.texture)
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        self.sessions
            .read()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("unknown_session", format!("no avatar session `{id}`")))
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> avaface::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::Io {
        path: tmp.clone(),
        source: e,
    })?;
    std::fs::rename(&tmp, path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Strong entity tag: quoted SHA-256 of the body.
pub fn etag(body: &[u8]) -> String {
    format!("\"{}\"", hex(&Sha256::digest(body)))
}

/// Rebuilds an aligned face from a stored color reference.
fn face_from_color(color: avaface::imaging::RawImage) -> avaface::Result<NormalizedFace> {
    let gray = to_grayscale(&color);
    Ok(avaface::normalize::photometric_normalize(&NormalizedFace::from_parts(
        gray, color,
    )?))
}

pub fn router(state: Arc<AppState>, viewer_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/enroll", post(enroll))
        .route("/identify", post(identify_handler))
        .route("/avatar", post(create_avatar))
        .route("/avatar/{id}/params", get(get_params).patch(patch_params))
        .route("/avatar/{id}/model.obj", get(get_obj))
        .route("/avatar/{id}/model.mtl", get(get_mtl))
        .route("/avatar/{id}/texture.png", get(get_texture))
        .layer(DefaultBodyLimit::max(UPLOAD_LIMIT))
        .with_state(state);
    match viewer_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

pub fn build_router(opts: &ServiceOptions) -> avaface::Result<Router> {
    let state = Arc::new(AppState::new(opts)?);
    Ok(router(state, opts.viewer_dir.as_deref()))
}

/// Text fields and at most one file from a multipart form.
#[derive(Default)]
struct Form {
    image: Option<(String, Bytes)>,
    fields: HashMap<String, String>,
}

impl Form {
    async fn read(mut mp: Multipart) -> ApiResult<Form> {
        let mut form = Form::default();
        while let Some(field) = mp
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request("bad_multipart", e.to_string()))?
        {
            let name = field.name().unwrap_or_default().to_string();
            if name == "image" {
                let file = field.file_name().unwrap_or("upload").to_string();
                let bytes = field
                    .bytes()
                    .await
                    .map_err(|e| ApiError::bad_request("bad_multipart", e.to_string()))?;
                form.image = Some((file, bytes));
            } else {
                let text = field
                    .text()
                    .await
                    .map_err(|e| ApiError::bad_request("bad_multipart", e.to_string()))?;
                form.fields.insert(name, text);
            }
        }
        Ok(form)
    }

    fn text(&self, name: &str) -> Option<&str> {
        self.fields.get(name).map(|s| s.trim()).filter(|s| !s.is_empty())
    }

    fn eyes(&self) -> ApiResult<Option<EyeLandmarks>> {
        self.text("eyes").map(parse_eyes).transpose().map_err(ApiError::from)
    }

    fn image(&self) -> ApiResult<&(String, Bytes)> {
        self.image
            .as_ref()
            .ok_or_else(|| ApiError::bad_request("missing_field", "multipart field `image` is required"))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn valid_subject_id(id: &str) -> ApiResult<()> {
    if id.is_empty() || id.len() > 128 || id.chars().any(char::is_control) {
        return Err(ApiError::bad_request(
            "bad_subject_id",
            "subject_id must be 1-128 printable characters",
        ));
    }
    Ok(())
}

async fn enroll(State(st): State<Arc<AppState>>, mp: Multipart) -> ApiResult<Json<Value>> {
    let form = Form::read(mp).await?;
    let subject = form
        .text("subject_id")
        .ok_or_else(|| ApiError::bad_request("missing_field", "multipart field `subject_id` is required"))?
        .to_string();
    valid_subject_id(&subject)?;
    let (_, bytes) = form.image()?.clone();
    let eyes = form.eyes()?;
    blocking(move || {
        let img = decode_image(&bytes)?;
        let (face, template) = st.engine.process(&img, eyes)?;
        // stored templates are f32, exactly as in a gallery file
        let template = template.quantized();
        let _guard = st.enroll_lock.lock().expect("enroll lock");
        let mut next = (*st.gallery()).clone();
        next.enroll(subject.clone(), template)?;
        if let Some(dir) = &st.state_dir {
            save_image(face.color_ref(), AppState::face_path(dir, &subject))?;
            save_gallery(&next, st.state_gallery_path().expect("state dir set"))?;
        }
        let size = next.len();
        *st.gallery.write().expect("gallery lock") = Arc::new(next);
        st.faces
            .write()
            .expect("faces lock")
            .insert(subject.clone(), Arc::new(face));
        Ok(Json(json!({"subject_id": subject, "gallery_size": size})))
    })
    .await
}

async fn identify_handler(State(st): State<Arc<AppState>>, mp: Multipart) -> ApiResult<Response> {
    let form = Form::read(mp).await?;
    let k = match form.text("k") {
        None => st.engine.config().k,
        Some(s) => s
            .parse::<usize>()
            .ok()
            .filter(|k| *k > 0)
            .ok_or_else(|| ApiError::bad_request("bad_k", format!("k must be a positive integer, got `{s}`")))?,
    };
    let (name, bytes) = form.image()?.clone();
    let eyes = form.eyes()?;
    let gallery = st.gallery();
    if gallery.is_empty() {
        return Err(Error::EmptyGallery.into());
    }
    blocking(move || {
        let img = decode_image(&bytes)?;
        let (_, template) = st.engine.process(&img, eyes)?;
        let list = identify(&template, &gallery, k, &st.engine.match_config())?;
        Ok(([(header::CONTENT_TYPE, "application/json")], list.to_json(&name)).into_response())
    })
    .await
}

#[derive(Serialize)]
struct AvatarResponse<'a> {
    session_id: &'a str,
    attributes: &'a FacialAttributes,
    suggested_body: &'a str,
    params: &'a AvatarParams,
}

async fn create_avatar(State(st): State<Arc<AppState>>, mp: Multipart) -> ApiResult<Json<Value>> {
    let form = Form::read(mp).await?;
    let texture_mode = form
        .text("texture_mode")
        .map(str::parse::<TextureMode>)
        .transpose()?
        .unwrap_or_default();
    let eyes = form.eyes()?;
    let source = match (&form.image, form.text("subject_id")) {
        (Some((_, bytes)), _) => Err(bytes.clone()),
        (None, Some(subject)) => {
            let face = st.faces.read().expect("faces lock").get(subject).cloned();
            match face {
                Some(f) => Ok(f),
                None if st.gallery().contains(subject) => {
                    return Err(ApiError::not_found(
                        "face_unavailable",
                        format!("subject `{subject}` was not enrolled through this service; no face image is stored"),
                    ))
                }
                None => return Err(Error::UnknownSubject(subject.to_string()).into()),
            }
        }
        (None, None) => {
            return Err(ApiError::bad_request(
                "missing_field",
                "either `image` or `subject_id` is required",
            ))
        }
    };
    let st2 = st.clone();
    let (id, snap) = blocking(move || {
        let face = match source {
            Ok(face) => face,
            Err(bytes) => Arc::new(st2.engine.normalize(&decode_image(&bytes)?, eyes)?),
        };
        let attributes = classify_attributes(&face, &face.canonical_eyes());
        let mut params = attributes_to_params(&attributes);
        params.texture_mode = texture_mode;
        let snap = Arc::new(st2.render(&face, params, attributes));
        let id = uuid::Uuid::new_v4().simple().to_string();
        st2.persist_session(&id, Some(&face), &snap)?;
        st2.sessions.write().expect("sessions lock").insert(
            id.clone(),
            Arc::new(Session {
                face,
                writer: tokio::sync::Mutex::new(()),
                current: RwLock::new(snap.clone()),
            }),
        );
        Ok((id, snap))
    })
    .await?;
    let body = AvatarResponse {
        session_id: &id,
        attributes: &snap.attributes,
        suggested_body: &snap.attributes.suggested_body,
        params: &snap.params,
    };
    Ok(Json(serde_json::to_value(&body).expect("response serializes")))
}

async fn get_params(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let snap = st.session(&id)?.snapshot();
    Ok(Json(json!({"params": snap.params})))
}

/// Merges a partial params object into `base`, clamping weights.
pub fn merge_params(base: &AvatarParams, patch: &Value) -> ApiResult<AvatarParams> {
    let obj = patch
        .as_object()
        .ok_or_else(|| ApiError::bad_request("invalid_params", "body must be a JSON object"))?;
    let mut out = *base;
    let set_weight = |out: &mut AvatarParams, name: &str, v: &Value| -> ApiResult<()> {
        let x = v
            .as_f64()
            .ok_or_else(|| ApiError::bad_request("invalid_params", format!("weight `{name}` must be a number")))?;
        out.morph_weights
            .set(name, x)
            .map_err(|e| ApiError::bad_request("invalid_params", e.to_string()))
    };
    for (key, v) in obj {
        match key.as_str() {
            "morph_weights" => {
                let weights = v
                    .as_object()
                    .ok_or_else(|| ApiError::bad_request("invalid_params", "`morph_weights` must be an object"))?;
                for (name, w) in weights {
                    set_weight(&mut out, name, w)?;
                }
            }
            "skin_tone" => {
                out.skin_tone = serde_json::from_value(v.clone()).map_err(|_| {
                    ApiError::bad_request("invalid_params", "`skin_tone` must be three integers in 0..=255")
                })?;
            }
            "texture_mode" => {
                let s = v
                    .as_str()
                    .ok_or_else(|| ApiError::bad_request("invalid_params", "`texture_mode` must be a string"))?;
                out.texture_mode = s.parse().map_err(ApiError::from)?;
            }
            name if MORPH_NAMES.contains(&name) => set_weight(&mut out, name, v)?,
            other => {
                return Err(ApiError::bad_request(
                    "invalid_params",
                    format!("unknown field `{other}`"),
                ))
            }
        }
    }
    Ok(out)
}

async fn patch_params(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let session = st.session(&id)?;
    let patch: Value =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))?;
    let _writer = session.writer.lock().await;
    let current = session.snapshot();
    let params = merge_params(&current.params, &patch)?;
    if params == current.params {
        return Ok(Json(json!({"params": params})));
    }
    let st2 = st.clone();
    let s2 = session.clone();
    let id2 = id.clone();
    let snap = blocking(move || {
        let snap = Arc::new(st2.render(&s2.face, params, current.attributes.clone()));
        st2.persist_session(&id2, None, &snap)?;
        Ok(snap)
    })
    .await?;
    *session.current.write().expect("snapshot lock") = snap.clone();
    Ok(Json(json!({"params": snap.params})))
}

fn file_response(headers: &HeaderMap, body: Bytes, tag: &str, content_type: &'static str) -> Response {
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == tag || t.trim() == "*"));
    let tag_value = HeaderValue::from_str(tag).expect("hex etag is a valid header");
    if matches {
        return (StatusCode::NOT_MODIFIED, [(header::ETAG, tag_value)]).into_response();
    }
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(content_type)),
            (header::ETAG, tag_value),
            (header::CACHE_CONTROL, HeaderValue::from_static("no-cache")),
        ],
        body,
    )
        .into_response()
}

async fn get_obj(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let snap = st.session(&id)?.snapshot();
    Ok(file_response(&headers, snap.obj.clone(), &snap.obj_etag, "model/obj"))
}

async fn get_mtl(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    st.session(&id)?;
    let body = Bytes::from(mtl_string());
    let tag = etag(&body);
    Ok(file_response(&headers, body, &tag, "model/mtl"))
}

async fn get_texture(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let snap = st.session(&id)?.snapshot();
    Ok(file_response(
        &headers,
        snap.texture.clone(),
        &snap.texture_etag,
        "image/png",
    ))
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(opts: ServiceOptions, addr: std::net::SocketAddr) -> avaface::Result<()> {
    let app = build_router(&opts)?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Io {
        path: PathBuf::from(addr.to_string()),
        source: e,
    })?;
    let local = listener.local_addr().map_err(|e| Error::Io {
        path: PathBuf::from(addr.to_string()),
        source: e,
    })?;
    eprintln!("avaface: listening on http://{local}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Io {
            path: PathBuf::from(local.to_string()),
            source: e,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_clamps_and_rejects() {
        let base = AvatarParams::default();
        let p = merge_params(&base, &json!({"nose_length": 1.7, "morph_weights": {"eye_size": 0.2}})).unwrap();
        assert_eq!(p.morph_weights.nose_length, 1.0);
        assert_eq!(p.morph_weights.eye_size, 0.2);
        assert_eq!(merge_params(&base, &json!({})).unwrap(), base);
        let e = merge_params(&base, &json!({"nose_length": "big"})).unwrap_err();
        assert_eq!(e.status, StatusCode::BAD_REQUEST);
        assert!(merge_params(&base, &json!({"ears": 1})).is_err());
        assert!(merge_params(&base, &json!({"skin_tone": [1, 2, 300]})).is_err());
        let flat = merge_params(&base, &json!({"texture_mode": "flat"})).unwrap();
        assert_eq!(flat.texture_mode, TextureMode::Flat);
    }

    #[test]
    fn etags_are_quoted_digests() {
        let t = etag(b"abc");
        assert_eq!(
            t,
            "\"ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad\""
        );
    }
}
