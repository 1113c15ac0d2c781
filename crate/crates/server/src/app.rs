use std::collections::HashMap;
use std::fs;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use soundscape_core::agent::{AgentError, DescriberPort, DialogueState, MusicGenPort};
use soundscape_core::audio::RenderOptions;
use soundscape_core::catalog::{bind_sound, CatalogError, CatalogStore, Role, SoundAsset};
use soundscape_core::gain::Gain;
use soundscape_core::project::{render_id, render_project, Project};
use soundscape_core::scene::{
    detect_objects, import_image, normalize_label, BoundingBox, DetectorPort, ImageFormat, Scene,
};
use soundscape_core::store::{ProjectStore, StoreError};
use soundscape_core::timeline::{start_recording, TimelineError};

use crate::error::ApiError;

/// Upload ceiling for images and WAV payloads.
pub const MAX_UPLOAD_BYTES: usize = 64 * 1024 * 1024;

pub struct AppState {
    store: ProjectStore,
    catalog: Mutex<CatalogStore>,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
    describer: Box<dyn DescriberPort>,
    generator: Box<dyn MusicGenPort>,
    detector: Box<dyn DetectorPort>,
}

pub type Shared = Arc<AppState>;

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic in one request must not wedge the project for everyone else.
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl AppState {
    /// The catalog lives in `<store>/catalog`; pass `None` as detector to
    /// read sidecar annotations from `<store>/annotations`.
    pub fn new(
        store: ProjectStore,
        describer: Box<dyn DescriberPort>,
        generator: Box<dyn MusicGenPort>,
        detector: Option<Box<dyn DetectorPort>>,
    ) -> Result<Self, ApiError> {
        let catalog = CatalogStore::open(store.catalog_dir())?;
        let detector = detector.unwrap_or_else(|| {
            Box::new(soundscape_core::scene::AnnotationFileDetector::new(store.annotations_dir()))
        });
        Ok(AppState {
            store,
            catalog: Mutex::new(catalog),
            locks: Mutex::new(HashMap::new()),
            describer,
            generator,
            detector,
        })
    }

    pub fn store(&self) -> &ProjectStore {
        &self.store
    }

    fn project_lock(&self, id: &str) -> Arc<Mutex<()>> {
        lock(&self.locks).entry(id.to_string()).or_default().clone()
    }

    /// Load, mutate and save one project under its lock. Nothing is written
    /// when `f` fails or leaves the project unchanged.
    fn with_project<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Project, &AppState) -> Result<T, ApiError>,
    ) -> Result<T, ApiError> {
        let guard = self.project_lock(id);
        let _held = lock(&guard);
        let original = self.store.load(id)?;
        let mut project = original.clone();
        let out = f(&mut project, self)?;
        if project != original {
            self.store.save(&project)?;
        }
        Ok(out)
    }
}

async fn blocking<T: Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    let state = state.clone();
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

/// JSON bodies are parsed by hand so that malformed input always yields the
/// same 422 shape. An empty body reads as `{}`.
fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let body = if body.iter().all(u8::is_ascii_whitespace) { b"{}" as &[u8] } else { body };
    serde_json::from_slice(body).map_err(|e| ApiError::bad_body(e.to_string()))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/", get(health))
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/image", post(upload_image))
        .route("/projects/{id}/objects", post(add_object))
        .route("/projects/{id}/chat", post(chat))
        .route("/projects/{id}/music/select", post(select_music))
        .route("/projects/{id}/bindings", post(bind))
        .route("/projects/{id}/session/start", post(session_start))
        .route("/projects/{id}/session/events", post(session_events))
        .route("/projects/{id}/session/stop", post(session_stop))
        .route("/projects/{id}/session/events/{index}/gain", post(event_gain))
        .route("/projects/{id}/render", post(render))
        .route("/projects/{id}/renders/{rid}", get(get_render))
        .route("/catalog", get(catalog))
        .route("/catalog/assets", post(add_asset))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok", "service": "soundscape" }))
}

async fn create_project(State(s): State<Shared>) -> Result<impl IntoResponse, ApiError> {
    let project = blocking(&s, |st| Ok(st.store.create(now_ms())?)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "project_id": project.id }))))
}

async fn get_project(State(s): State<Shared>, Path(id): Path<String>) -> Result<Json<Project>, ApiError> {
    Ok(Json(blocking(&s, move |st| Ok(st.store.load(&id)?)).await?))
}

async fn upload_image(
    State(s): State<Shared>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let hint = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .and_then(ImageFormat::from_mime);
    blocking(&s, move |st| {
        st.with_project(&id, |project, st| {
            let image = import_image(&body, hint)?;
            let objects = detect_objects(&image, st.detector.as_ref())?;
            let scene = Scene::new(image, objects)?;
            st.store.write_asset(&project.id, &scene.image.file_name(), &body)?;
            let reply = json!({ "image": scene.image, "detected_objects": scene.objects });
            project.set_scene(scene);
            Ok(Json(reply))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ManualBox {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    label: Option<String>,
}

async fn add_object(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: ManualBox = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, _| {
            let scene = project.scene.as_mut().ok_or(AgentError::NoImage)?;
            let object = scene.add_manual_box(BoundingBox::new(req.x, req.y, req.w, req.h), req.label.as_deref())?;
            Ok(Json(json!(object)))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    #[serde(default)]
    text: String,
    now_ms: Option<u64>,
}

async fn chat(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: ChatRequest = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, st| {
            let now = req.now_ms.unwrap_or_else(now_ms);
            let before = project.dialogue.turns.len();
            let options = match project.dialogue.state {
                DialogueState::AwaitImage => {
                    let bytes = project
                        .scene
                        .as_ref()
                        .and_then(|sc| fs::read(st.store.assets_dir(&project.id).join(sc.image.file_name())).ok());
                    project
                        .dialogue
                        .describe_scene(project.scene.as_ref(), bytes.as_deref(), st.describer.as_ref(), now)?;
                    None
                }
                DialogueState::Described => {
                    let mut catalog = lock(&st.catalog);
                    Some(project.dialogue.request_music(&req.text, st.generator.as_ref(), &mut catalog, now)?)
                }
                DialogueState::OptionsOffered => {
                    let mut catalog = lock(&st.catalog);
                    Some(project.dialogue.refine_music(&req.text, st.generator.as_ref(), &mut catalog, now)?)
                }
                state @ DialogueState::MusicSelected => {
                    return Err(AgentError::StateViolation { state, operation: "chat" }.into())
                }
            };
            let mut reply = json!({
                "turns": project.dialogue.turns[before..],
                "state": project.dialogue.state,
            });
            if let Some(options) = options {
                reply["options"] = json!(options);
            }
            Ok(Json(reply))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SelectRequest {
    option_id: String,
}

async fn select_music(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: SelectRequest = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, _| {
            let option = project.dialogue.select_music(&req.option_id, &mut project.timeline)?;
            Ok(Json(json!({ "option": option, "timeline": project.timeline })))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogQuery {
    label: Option<String>,
    role: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Serialize)]
struct CatalogPage<'a> {
    items: Vec<&'a SoundAsset>,
    total: usize,
    page: usize,
    page_size: usize,
}

fn parse_role(raw: Option<&str>) -> Result<Option<Role>, ApiError> {
    raw.filter(|r| !r.is_empty())
        .map(|r| r.parse::<Role>().map_err(|_| ApiError::bad_body(format!("unknown role {r:?}"))))
        .transpose()
}

async fn catalog(State(s): State<Shared>, Query(q): Query<CatalogQuery>) -> Result<Json<Value>, ApiError> {
    blocking(&s, move |st| {
        let role = parse_role(q.role.as_deref())?;
        let page = q.page.unwrap_or(0);
        let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
        let store = lock(&st.catalog);
        let cat = store.catalog();
        let body = match q.label.as_deref().filter(|l| !l.is_empty()) {
            Some(raw) => {
                let label = normalize_label(raw)?;
                // validates page_size the same way as browsing
                cat.browse(role, 0, page_size)?;
                let ranked = cat.lookup_by_label(&label, role);
                let total = ranked.len();
                let items = ranked.into_iter().skip(page.saturating_mul(page_size)).take(page_size).collect();
                json!(CatalogPage { items, total, page, page_size })
            }
            None => json!(cat.browse(role, page, page_size)?),
        };
        Ok(Json(body))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetQuery {
    role: Option<String>,
    labels: Option<String>,
    loopable: Option<bool>,
}

async fn add_asset(
    State(s): State<Shared>,
    Query(q): Query<AssetQuery>,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    let asset = blocking(&s, move |st| {
        let role = parse_role(q.role.as_deref())?.unwrap_or(Role::Effect);
        let labels: Vec<String> = q
            .labels
            .as_deref()
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        Ok(lock(&st.catalog).ingest(&body, role, &labels, q.loopable.unwrap_or(false))?)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(asset)))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BindRequest {
    object_id: String,
    asset_id: String,
    gain: Option<f64>,
}

async fn bind(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: BindRequest = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, st| {
            let catalog = lock(&st.catalog);
            let binding = bind_sound(
                &mut project.bindings,
                project.scene.as_ref(),
                catalog.catalog(),
                &req.object_id,
                &req.asset_id,
                req.gain.unwrap_or(1.0),
            )?;
            Ok(Json(json!(binding)))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StartRequest {
    now_wall_ms: u64,
    ambient_asset_id: Option<String>,
    ambient_gain: Option<f64>,
    music_gain: Option<f64>,
    #[serde(default)]
    discard: bool,
}

fn gain(value: f64) -> Result<Gain, ApiError> {
    Gain::new(value).map_err(|e| CatalogError::from(e).into())
}

async fn session_start(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: StartRequest = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, st| {
            let mut draft = project.timeline.clone().unwrap_or_default();
            if let Some(asset_id) = &req.ambient_asset_id {
                let catalog = lock(&st.catalog);
                let asset = catalog
                    .catalog()
                    .get(asset_id)
                    .ok_or_else(|| CatalogError::UnknownAsset(asset_id.clone()))?;
                if asset.role != Role::Ambient {
                    return Err(ApiError::new(
                        StatusCode::UNPROCESSABLE_ENTITY,
                        "role_mismatch",
                        format!("asset {asset_id} is not an ambient bed"),
                    ));
                }
                draft.ambient_asset = Some(asset_id.clone());
            }
            if let Some(g) = req.ambient_gain {
                draft.ambient_gain = gain(g)?;
            }
            if let Some(g) = req.music_gain {
                draft.music_gain = gain(g)?;
            }
            let session_id = format!("ses-{}", req.now_wall_ms);
            let project_id = project.id.clone();
            let session = start_recording(
                &mut project.session,
                session_id,
                &project_id,
                &draft,
                req.now_wall_ms,
                req.discard,
            )?
            .clone();
            draft.events.clear();
            draft.duration_ms = 0;
            project.timeline = Some(draft);
            Ok(Json(json!(session)))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WallEvent {
    object_id: String,
    wall_ms: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EventBatch {
    session_id: String,
    events: Vec<WallEvent>,
}

async fn session_events(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let mut req: EventBatch = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, _| {
            let session = project.session.as_mut().ok_or(TimelineError::NotRecording)?;
            if session.id != req.session_id {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "session_mismatch",
                    format!("current session is {}, not {}", session.id, req.session_id),
                ));
            }
            req.events.sort_by_key(|e| e.wall_ms);
            for event in &req.events {
                session.record_trigger(&event.object_id, event.wall_ms, &project.bindings)?;
            }
            Ok(Json(json!({ "accepted": req.events.len(), "session": session })))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StopRequest {
    now_wall_ms: u64,
}

async fn session_stop(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let req: StopRequest = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, st| {
            let session = project.session.as_mut().ok_or(TimelineError::NotRecording)?;
            let catalog = lock(&st.catalog);
            let timeline = session.stop(req.now_wall_ms, |a| catalog.catalog().duration_ms(a))?.clone();
            project.timeline = Some(timeline.clone());
            Ok(Json(json!(timeline)))
        })
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GainRequest {
    gain: f64,
}

async fn event_gain(
    State(s): State<Shared>,
    Path((id, index)): Path<(String, usize)>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: GainRequest = parse_body(&body)?;
    blocking(&s, move |st| {
        st.with_project(&id, |project, _| {
            let session = project.session.as_mut().ok_or(TimelineError::NotStopped)?;
            let timeline = session.set_event_gain(index, req.gain)?.clone();
            project.timeline = Some(timeline.clone());
            Ok(Json(json!(timeline)))
        })
    })
    .await
}

async fn render(State(s): State<Shared>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, ApiError> {
    let options: RenderOptions = parse_body(&body)?;
    let reply = blocking(&s, move |st| {
        st.with_project(&id, |project, st| {
            let rid = render_id(project.renderable_timeline()?, &options);
            if let Some(existing) = project.renders.get(&rid) {
                if st.store.read_render(&project.id, &rid)?.is_some() {
                    return Ok(json!({ "render_id": rid, "frames": existing.frames }));
                }
            }
            let mix = {
                let catalog = lock(&st.catalog);
                render_project(project, &*catalog, &options)?
            };
            st.store.write_render(&project.id, &mix.render_id, &mix.wav)?;
            project.renders.insert(mix.render_id.clone(), mix.reference(options));
            Ok(json!({ "render_id": mix.render_id, "frames": mix.frames }))
        })
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(reply)))
}

async fn get_render(State(s): State<Shared>, Path((id, rid)): Path<(String, String)>) -> Result<Response, ApiError> {
    let bytes = blocking(&s, move |st| {
        if !st.store.exists(&id) {
            return Err(StoreError::NotFound(id).into());
        }
        st.store
            .read_render(&id, &rid)?
            .ok_or_else(|| ApiError::not_found(format!("render {rid} not found")))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], bytes).into_response())
}
