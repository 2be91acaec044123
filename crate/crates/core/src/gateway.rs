//! HTTP and WebSocket front end. Holds no cell state of its own: every
//! request becomes one call on the [`CellHandle`], so the server can be
//! stopped and started again without losing anything.

use std::collections::BTreeMap;
use std::future::Future;
use std::net::SocketAddr;
use std::path::{Component, Path as FsPath, PathBuf};

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};
use tokio::task::JoinHandle;

use crate::assembler::render;
use crate::cell::{Cell, CellError, CellResult, ModuleSpec};
use crate::model::{CellEvent, EventKind, Pose};
use crate::service::{CellHandle, ServiceError};
use crate::skills::{ListFilter, SkillKind, SkillMeta, SkillPayload};
use crate::teach::{StickVector, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct GatewayConfig {
    pub listen: SocketAddr,
    /// Served under `/` when set, e.g. a built pendant UI.
    pub static_dir: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            static_dir: None,
        }
    }
}

/// Error body: `{"error": code, "detail": text}`, plus a validation report
/// where one exists.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({"error": code, "detail": detail.into()}),
        }
    }

    fn bad_request(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "InvalidRequest", detail)
    }
}

pub fn status_for(code: &str) -> StatusCode {
    match code {
        "UnknownModule" | "UnknownSkill" | "UnknownVersion" | "UnknownSequence" | "UnknownRun" | "UnknownCommand"
        | "UnknownSession" | "NotFound" => StatusCode::NOT_FOUND,
        "NameConflict" | "SkillInUse" | "ValidationFailed" | "RunConflict" | "ModuleOffline" | "AlreadyRecording"
        | "NotRecording" | "BusyMode" => StatusCode::CONFLICT,
        "StorageError" | "CorruptStore" => StatusCode::INTERNAL_SERVER_ERROR,
        "Unavailable" => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<CellError> for ApiError {
    fn from(e: CellError) -> Self {
        let code = e.code();
        let mut err = ApiError::new(status_for(code), code, e.to_string());
        if let CellError::ValidationFailed { report, .. } = &e {
            err.body["report"] = serde_json::to_value(report).expect("reports serialize");
        }
        err
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "Unavailable", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn with_cell<T: Send + 'static>(
    cell: &CellHandle,
    f: impl FnOnce(&mut Cell) -> CellResult<T> + Send + 'static,
) -> ApiResult<T> {
    Ok(cell.call(f).await??)
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("request body: {e}")))
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("domain documents serialize")
}

pub fn router(cell: CellHandle, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/cell", get(get_cell))
        .route("/modules", post(attach_module))
        .route("/modules/{id}", get(get_module).delete(detach_module))
        .route("/modules/{id}/cmd", post(module_cmd))
        .route("/commands/{id}", get(get_command))
        .route("/skills", get(list_skills))
        .route("/skills/{name}", get(get_skill).put(put_skill).delete(delete_skill))
        .route("/skills/{name}/history", get(skill_history))
        .route("/teach/record/start", post(record_start))
        .route("/teach/record/stop", post(record_stop))
        .route("/teach/save", post(teach_save))
        .route("/teach/tape", post(teach_tape))
        .route("/teach/sessions/{id}", get(get_session))
        .route("/teach/jog-config", put(put_jog_config).get(get_jog_config))
        .route("/sequences", post(compile_sequence).get(list_sequences))
        .route("/sequences/{name}", get(get_sequence).delete(delete_sequence))
        .route("/sequences/{name}/listing", get(listing))
        .route("/sequences/{name}/dot", get(dot))
        .route("/sequences/{name}/validate", post(validate_sequence))
        .route("/sequences/{name}/run", post(run_sequence))
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/events", get(get_events))
        .route("/sim", get(get_sim))
        .route("/sim/advance", post(sim_advance))
        .route("/stream", get(stream))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such endpoint") });
    let app = Router::new().nest("/v1", api).with_state(cell);
    match static_dir {
        Some(dir) => app.fallback(move |uri: Uri| serve_static(dir.clone(), uri)),
        None => app,
    }
}

async fn serve_static(dir: PathBuf, uri: Uri) -> Response {
    let rel = uri.path().trim_start_matches('/');
    let rel = if rel.is_empty() { "index.html" } else { rel };
    let rel = FsPath::new(rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such file").into_response();
    }
    let path = dir.join(rel);
    match tokio::fs::read(&path).await {
        Ok(bytes) => {
            let mime = match path.extension().and_then(|e| e.to_str()) {
                Some("html") => "text/html; charset=utf-8",
                Some("js") => "text/javascript",
                Some("css") => "text/css",
                Some("json") => "application/json",
                Some("svg") => "image/svg+xml",
                Some("png") => "image/png",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, mime)], bytes).into_response()
        }
        Err(_) => ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such file").into_response(),
    }
}

// ---- modules -------------------------------------------------------------

async fn get_cell(State(cell): State<CellHandle>) -> ApiResult<Json<Value>> {
    let modules = with_cell(&cell, |c| Ok(to_json(&c.snapshot()))).await?;
    Ok(Json(json!({"modules": modules})))
}

async fn attach_module(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let spec: ModuleSpec = parse(&body)?;
    let view = with_cell(&cell, move |c| {
        let id = c.attach_module(&spec, None)?;
        c.module_view(&id.0)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_module(State(cell): State<CellHandle>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, move |c| c.module_view(&id)).await?))
}

async fn detach_module(State(cell): State<CellHandle>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let aborted = with_cell(&cell, move |c| c.detach(&id)).await?;
    Ok(Json(json!({"aborted": aborted})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CmdBody {
    verb: String,
    #[serde(default)]
    params: Value,
}

async fn module_cmd(State(cell): State<CellHandle>, Path(id): Path<String>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let CmdBody { verb, params } = parse(&body)?;
    let params = if params.is_null() { json!({}) } else { params };
    let out = with_cell(&cell, move |c| {
        let cmd = c.command(&id, &verb, params)?;
        Ok(json!({"cmd_id": cmd, "result": c.command_result(cmd)}))
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(out)))
}

async fn get_command(State(cell): State<CellHandle>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    let found = with_cell(&cell, move |c| Ok(c.command_result(id).map(to_json))).await?;
    found
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownCommand", format!("command {id} has no result yet")))
}

// ---- skills --------------------------------------------------------------

#[derive(Deserialize)]
struct SkillListQuery {
    kind: Option<SkillKind>,
    tag: Option<String>,
}

async fn list_skills(State(cell): State<CellHandle>, Query(q): Query<SkillListQuery>) -> ApiResult<Json<Value>> {
    let filter = ListFilter { kind: q.kind, tag: q.tag };
    let list = with_cell(&cell, move |c| {
        Ok(c.skills(&filter)
            .into_iter()
            .map(|e| json!({"name": e.name, "version": e.version, "kind": e.kind(), "meta": e.meta}))
            .collect::<Vec<_>>())
    })
    .await?;
    Ok(Json(json!({"skills": list})))
}

#[derive(Deserialize)]
struct VersionQuery {
    version: Option<u32>,
}

async fn get_skill(State(cell): State<CellHandle>, Path(name): Path<String>, Query(q): Query<VersionQuery>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, move |c| Ok(to_json(c.skill(&name, q.version)?))).await?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PutSkill {
    kind: SkillKind,
    payload: Value,
    #[serde(default)]
    meta: SkillMeta,
}

async fn put_skill(State(cell): State<CellHandle>, Path(name): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let doc: PutSkill = parse(&body)?;
    let payload = SkillPayload::from_value(doc.kind, doc.payload).map_err(CellError::from)?;
    let out = with_cell(&cell, move |c| {
        let version = c.put_skill(&name, payload, doc.meta)?;
        Ok(json!({"name": name, "version": version}))
    })
    .await?;
    Ok(Json(out))
}

async fn delete_skill(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let out = with_cell(&cell, move |c| {
        c.delete_skill(&name)?;
        Ok(json!({"deleted": name}))
    })
    .await?;
    Ok(Json(out))
}

async fn skill_history(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, move |c| Ok(to_json(&c.skill_history(&name)?))).await?))
}

// ---- teaching ------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordStart {
    robot: String,
    rate: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRef {
    session_id: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SaveBody {
    session_id: u64,
    name: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TapeBody {
    robot: String,
    tape: Tape,
    /// Recording rate; omit to play without recording.
    #[serde(default)]
    record: Option<f64>,
}

fn session_json(c: &Cell, id: u64) -> CellResult<Value> {
    let s = c.session(id)?;
    let mut v = to_json(s);
    v["samples"] = json!(s.sample_count());
    v["tape_active"] = json!(c.tape_active(&s.robot.0));
    Ok(v)
}

async fn record_start(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: RecordStart = parse(&body)?;
    let out = with_cell(&cell, move |c| {
        let id = c.record_start(&b.robot, b.rate)?;
        session_json(c, id)
    })
    .await?;
    Ok(Json(out))
}

async fn record_stop(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: SessionRef = parse(&body)?;
    let out = with_cell(&cell, move |c| {
        let traj = c.record_stop(b.session_id)?;
        let mut v = session_json(c, b.session_id)?;
        v["duration"] = json!(traj.duration());
        Ok(v)
    })
    .await?;
    Ok(Json(out))
}

async fn teach_save(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: SaveBody = parse(&body)?;
    let out = with_cell(&cell, move |c| {
        let version = c.teach_save(b.session_id, &b.name)?;
        Ok(json!({"name": b.name, "version": version}))
    })
    .await?;
    Ok(Json(out))
}

async fn teach_tape(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: TapeBody = parse(&body)?;
    let out = with_cell(&cell, move |c| {
        let duration = b.tape.duration();
        let session = c.play_tape(&b.robot, b.tape, b.record)?;
        Ok(json!({"robot": b.robot, "session_id": session, "duration": duration}))
    })
    .await?;
    Ok(Json(out))
}

async fn get_session(State(cell): State<CellHandle>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, move |c| session_json(c, id)).await?))
}

async fn put_jog_config(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<Json<Value>> {
    let cfg = parse(&body)?;
    let out = with_cell(&cell, move |c| {
        c.set_jog_config(cfg)?;
        Ok(to_json(&c.config().jog))
    })
    .await?;
    Ok(Json(out))
}

async fn get_jog_config(State(cell): State<CellHandle>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, |c| Ok(to_json(&c.config().jog))).await?))
}

// ---- sequences and runs ---------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CompileBody {
    source: String,
    #[serde(default)]
    args: BTreeMap<String, String>,
}

/// Accepts DSL text (arguments from the query string) or a JSON
/// `{"source", "args"}` document.
async fn compile_sequence(
    State(cell): State<CellHandle>,
    Query(query): Query<BTreeMap<String, String>>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let CompileBody { source, args } = if is_json {
        parse(&body)?
    } else {
        let source = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("sequence text must be UTF-8"))?;
        CompileBody { source, args: query }
    };
    let ir = with_cell(&cell, move |c| Ok(to_json(c.compile_sequence(&source, &args)?))).await?;
    Ok((StatusCode::CREATED, Json(ir)))
}

async fn list_sequences(State(cell): State<CellHandle>) -> ApiResult<Json<Value>> {
    let names = with_cell(&cell, |c| Ok(c.sequence_names().map(str::to_string).collect::<Vec<_>>())).await?;
    Ok(Json(json!({"sequences": names})))
}

async fn get_sequence(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, move |c| Ok(to_json(c.sequence(&name)?))).await?))
}

async fn delete_sequence(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let out = with_cell(&cell, move |c| {
        c.remove_sequence(&name)?;
        Ok(json!({"deleted": name}))
    })
    .await?;
    Ok(Json(out))
}

async fn rendered(cell: &CellHandle, name: String, template: &'static str, mime: &'static str) -> ApiResult<Response> {
    let text = with_cell(cell, move |c| Ok(render(c.sequence(&name)?, template)?)).await?;
    Ok(([(header::CONTENT_TYPE, mime)], text).into_response())
}

async fn listing(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Response> {
    rendered(&cell, name, "listing", "text/plain; charset=utf-8").await
}

async fn dot(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Response> {
    rendered(&cell, name, "dot", "text/vnd.graphviz; charset=utf-8").await
}

async fn validate_sequence(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let report = with_cell(&cell, move |c| c.validate_sequence(&name)).await?;
    let mut v = to_json(&report);
    v["runnable"] = json!(report.is_runnable());
    Ok(Json(v))
}

async fn run_sequence(State(cell): State<CellHandle>, Path(name): Path<String>) -> ApiResult<(StatusCode, Json<Value>)> {
    let report = with_cell(&cell, move |c| {
        let id = c.start_run(&name)?;
        Ok(to_json(c.run_report(id)?))
    })
    .await?;
    Ok((StatusCode::ACCEPTED, Json(report)))
}

async fn list_runs(State(cell): State<CellHandle>) -> ApiResult<Json<Value>> {
    let runs = with_cell(&cell, |c| Ok(c.runs().map(to_json).collect::<Vec<_>>())).await?;
    Ok(Json(json!({"runs": runs})))
}

async fn get_run(State(cell): State<CellHandle>, Path(id): Path<u64>) -> ApiResult<Json<Value>> {
    Ok(Json(with_cell(&cell, move |c| Ok(to_json(c.run_report(id)?))).await?))
}

// ---- events and clock -----------------------------------------------------

#[derive(Deserialize, Default)]
struct EventQuery {
    from_seq: Option<u64>,
    limit: Option<usize>,
    /// Comma-separated event kinds.
    kinds: Option<String>,
}

fn kind_filter(kinds: Option<&str>) -> ApiResult<Option<Vec<EventKind>>> {
    let Some(kinds) = kinds else { return Ok(None) };
    kinds
        .split(',')
        .filter(|k| !k.trim().is_empty())
        .map(|k| EventKind::parse(k.trim()).ok_or_else(|| ApiError::bad_request(format!("unknown event kind '{k}'"))))
        .collect::<ApiResult<Vec<_>>>()
        .map(Some)
}

fn wanted(kinds: &Option<Vec<EventKind>>, e: &CellEvent) -> bool {
    kinds.as_ref().is_none_or(|k| k.contains(&e.kind))
}

async fn get_events(State(cell): State<CellHandle>, Query(q): Query<EventQuery>) -> ApiResult<Json<Value>> {
    let kinds = kind_filter(q.kinds.as_deref())?;
    let from = q.from_seq.unwrap_or(0);
    let limit = q.limit.unwrap_or(1000).min(10_000);
    let out = with_cell(&cell, move |c| {
        let all = c.registry().events_since(from);
        let scanned = all.len().min(limit);
        let events: Vec<&CellEvent> = all[..scanned].iter().filter(|e| wanted(&kinds, e)).collect();
        Ok(json!({"events": events, "next_seq": from + scanned as u64, "sim_time": c.now()}))
    })
    .await?;
    Ok(Json(out))
}

async fn get_sim(State(cell): State<CellHandle>) -> ApiResult<Json<Value>> {
    let out = with_cell(&cell, |c| Ok(json!({"sim_time": c.now(), "ticks": c.ticks(), "dt": c.config().dt}))).await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AdvanceBody {
    seconds: f64,
}

async fn sim_advance(State(cell): State<CellHandle>, body: Bytes) -> ApiResult<Json<Value>> {
    let b: AdvanceBody = parse(&body)?;
    if !(b.seconds >= 0.0 && b.seconds <= 3600.0) {
        return Err(ApiError::bad_request("seconds must be within [0, 3600]"));
    }
    let out = with_cell(&cell, move |c| {
        c.advance(b.seconds);
        Ok(json!({"sim_time": c.now(), "ticks": c.ticks()}))
    })
    .await?;
    Ok(Json(out))
}

// ---- live stream ------------------------------------------------------------

/// Client-to-server stream messages.
#[derive(Debug, Deserialize)]
#[serde(tag = "t", rename_all = "snake_case", deny_unknown_fields)]
enum ClientFrame {
    Jog {
        robot: String,
        #[serde(default)]
        lin: [f64; 3],
        #[serde(default)]
        ang: [f64; 3],
    },
    Drag {
        robot: String,
        delta: Pose,
    },
}

fn evt_frame(e: &CellEvent) -> Value {
    let mut v = to_json(e);
    v["t"] = json!("evt");
    v
}

fn error_frame(code: &str, detail: impl Into<String>) -> Value {
    json!({"t": "error", "error": code, "detail": detail.into()})
}

async fn stream(ws: WebSocketUpgrade, State(cell): State<CellHandle>, Query(q): Query<EventQuery>) -> ApiResult<Response> {
    let kinds = kind_filter(q.kinds.as_deref())?;
    Ok(ws.on_upgrade(move |socket| stream_session(socket, cell, q.from_seq, kinds)))
}

async fn handle_client(cell: &CellHandle, text: &str) -> Option<Value> {
    let frame: ClientFrame = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(e) => return Some(error_frame("InvalidRequest", e.to_string())),
    };
    let res = match frame {
        ClientFrame::Jog { robot, lin, ang } => {
            with_cell(cell, move |c| c.jog(&robot, &StickVector { lin, ang }).map(|_| ())).await
        }
        ClientFrame::Drag { robot, delta } => with_cell(cell, move |c| c.drag(&robot, &delta)).await,
    };
    res.err().map(|e| {
        let mut body = e.body;
        body["t"] = json!("error");
        body
    })
}

async fn stream_session(socket: WebSocket, cell: CellHandle, from_seq: Option<u64>, kinds: Option<Vec<EventKind>>) {
    let (mut tx, mut rx) = socket.split();
    let Ok((backlog, mut events)) = cell.subscribe(from_seq).await else { return };
    let mut live = cell.live();
    let mut next = backlog.first().map_or(0, |e| e.seq);
    macro_rules! send {
        ($v:expr) => {
            if tx.send(Message::Text($v.to_string().into())).await.is_err() {
                return;
            }
        };
    }
    for e in &backlog {
        next = e.seq + 1;
        if wanted(&kinds, e) {
            send!(evt_frame(e));
        }
    }
    loop {
        tokio::select! {
            ev = events.recv() => match ev {
                Ok(e) => {
                    if e.seq < next {
                        continue;
                    }
                    next = e.seq + 1;
                    if wanted(&kinds, &e) {
                        send!(evt_frame(&e));
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => {
                    // fell behind the buffer: catch up from the log
                    let from = next;
                    let Ok(missed) = cell.call(move |c| c.registry().events_since(from).to_vec()).await else { return };
                    for e in missed {
                        next = e.seq + 1;
                        if wanted(&kinds, &e) {
                            send!(evt_frame(&e));
                        }
                    }
                }
                Err(broadcast::error::RecvError::Closed) => return,
            },
            changed = live.changed() => {
                if changed.is_err() {
                    return;
                }
                let mut state = live.borrow_and_update().clone();
                state["t"] = json!("robot_state");
                send!(state);
            },
            msg = rx.next() => match msg {
                Some(Ok(Message::Text(text))) => {
                    if let Some(reply) = handle_client(&cell, text.as_str()).await {
                        send!(reply);
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

// ---- server -----------------------------------------------------------------

/// A running gateway. Dropping it does not stop the server; call
/// [`Gateway::stop`].
pub struct Gateway {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl Gateway {
    /// Binds and serves on the current tokio runtime.
    pub async fn start(config: GatewayConfig, cell: CellHandle) -> std::io::Result<Gateway> {
        let listener = tokio::net::TcpListener::bind(config.listen).await?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let app = router(cell, config.static_dir);
        let task = tokio::spawn(async move {
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = stopped.await;
                })
                .await
        });
        Ok(Gateway {
            addr,
            stop: Some(stop),
            task,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stops accepting requests and waits for open ones to finish.
    pub async fn stop(mut self) -> std::io::Result<()> {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        self.task.await.unwrap_or(Ok(()))
    }

    /// Serves until `shutdown` resolves.
    pub async fn run_until(self, shutdown: impl Future<Output = ()>) -> std::io::Result<()> {
        shutdown.await;
        self.stop().await
    }
}
