//! Job server: one worker thread, FIFO queue of bounded depth.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use curvemrf::inference::{InferenceOptions, Passes, TrwsOptions};
use curvemrf::io::{decode_ppm, labeling_to_pgm, min_marginal_map, ColorImage};
use curvemrf::pipeline::{segment, SegmentationSettings, DEFAULT_GMM_COMPONENTS};
use curvemrf::tasks::{SeedMask, SeedTag};
use curvemrf::PatternBank;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::args::ServeArgs;
use crate::commands::{check_size, load_bank};
use crate::error::{CliError, Result};

/// Jobs waiting behind the running one; submissions beyond are rejected.
pub const QUEUE_DEPTH: usize = 8;
/// Upper limit on the passes a single job may request.
pub const MAX_JOB_PASSES: usize = 100_000;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub default_passes: usize,
    pub allow_large: bool,
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            default_passes: crate::args::DEFAULT_PASSES,
            allow_large: false,
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Queued,
    Running,
    Done,
    Failed,
    Cancelled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobResult {
    /// Base64 PGM, 255 foreground.
    pub labeling: String,
    pub energy: f64,
    pub lower_bound: f64,
    /// Base64 PGM of the min-marginal differences.
    pub min_marginal_map: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobRequest {
    /// Base64 binary PPM.
    pub image: String,
    /// Base64 PGM seed mask.
    pub strokes: String,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    pub passes: Option<usize>,
    pub components: Option<usize>,
    pub seed: Option<u64>,
}

fn default_lambda() -> f64 {
    1.0
}

struct Input {
    image: ColorImage,
    seeds: SeedMask,
    settings: SegmentationSettings,
    passes: usize,
}

struct Progress {
    status: Status,
    pass: usize,
    lower_bound: Option<f64>,
    result: Option<JobResult>,
    error: Option<String>,
}

struct Job {
    id: u64,
    input: Mutex<Option<Input>>,
    progress: Mutex<Progress>,
    cancel: AtomicBool,
}

pub struct AppState {
    bank: Arc<PatternBank>,
    bank_json: String,
    jobs: Mutex<HashMap<u64, Arc<Job>>>,
    next_id: AtomicU64,
    queue: SyncSender<Arc<Job>>,
    opts: ServerOptions,
}

type Shared = Arc<AppState>;

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(json!({ "error": msg.into() }))).into_response()
}

/// Router plus a worker thread that lives as long as the router.
pub fn app(bank: PatternBank, opts: ServerOptions) -> Result<Router> {
    let bank_json = bank.to_json()?;
    let (tx, rx) = sync_channel(QUEUE_DEPTH);
    let state = Arc::new(AppState {
        bank: Arc::new(bank),
        bank_json,
        jobs: Mutex::new(HashMap::new()),
        next_id: AtomicU64::new(1),
        queue: tx,
        opts: opts.clone(),
    });
    let bank = state.bank.clone();
    std::thread::Builder::new()
        .name("curvemrf-worker".into())
        .spawn(move || worker(rx, bank))
        .map_err(|e| CliError::io("worker thread", e))?;
    let router = Router::new()
        .route("/jobs", axum::routing::post(submit))
        .route("/jobs/{id}", get(status).delete(cancel))
        .route("/jobs/{id}/result", get(result))
        .route("/bank", get(bank_handler))
        .with_state(state);
    Ok(match opts.ui_dir {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    })
}

fn worker(rx: Receiver<Arc<Job>>, bank: Arc<PatternBank>) {
    while let Ok(job) = rx.recv() {
        let Some(input) = job.input.lock().unwrap().take() else {
            continue;
        };
        if job.cancel.load(Ordering::SeqCst) {
            continue;
        }
        job.progress.lock().unwrap().status = Status::Running;
        log::info!("job {} started", job.id);
        let opts = InferenceOptions {
            trws: TrwsOptions {
                passes: Passes::Fixed(input.passes),
                ..Default::default()
            },
            ..Default::default()
        };
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let mut report = |pass: usize, lb: f64| {
                let mut p = job.progress.lock().unwrap();
                p.pass = pass;
                p.lower_bound = Some(lb);
                !job.cancel.load(Ordering::SeqCst)
            };
            segment(&input.image, &input.seeds, &bank, &input.settings, &opts, &mut report)
        }));
        let mut p = job.progress.lock().unwrap();
        match outcome {
            _ if job.cancel.load(Ordering::SeqCst) => p.status = Status::Cancelled,
            Ok(Ok(seg)) => {
                let r = &seg.result;
                p.result = Some(JobResult {
                    labeling: B64.encode(labeling_to_pgm(&r.labeling)),
                    energy: r.energy,
                    lower_bound: r.lower_bound,
                    min_marginal_map: B64.encode(min_marginal_map(&r.min_marginals, input.image.dims)),
                });
                p.status = Status::Done;
            }
            Ok(Err(e)) => {
                p.error = Some(e.to_string());
                p.status = Status::Failed;
            }
            Err(_) => {
                p.error = Some("inference panicked".into());
                p.status = Status::Failed;
            }
        }
        log::info!("job {} {:?}", job.id, p.status);
    }
}

fn parse_request(req: JobRequest, opts: &ServerOptions) -> std::result::Result<Input, String> {
    let image = B64.decode(req.image.trim()).map_err(|e| format!("image is not base64: {e}"))?;
    let strokes = B64.decode(req.strokes.trim()).map_err(|e| format!("strokes are not base64: {e}"))?;
    let image = decode_ppm(&image).map_err(|e| format!("image: {e}"))?;
    let seeds = SeedMask::from_pgm(&strokes).map_err(|e| format!("strokes: {e}"))?;
    check_size(image.dims, opts.allow_large).map_err(|e| e.to_string())?;
    if seeds.dims() != image.dims {
        return Err("strokes and image differ in size".into());
    }
    if seeds.count(SeedTag::Foreground) == 0 || seeds.count(SeedTag::Background) == 0 {
        return Err("strokes must mark at least one foreground and one background pixel".into());
    }
    if !(req.lambda >= 0.0) || !req.lambda.is_finite() {
        return Err("lambda must be finite and non-negative".into());
    }
    let passes = req.passes.unwrap_or(opts.default_passes);
    if passes == 0 || passes > MAX_JOB_PASSES {
        return Err(format!("passes must lie in 1..={MAX_JOB_PASSES}"));
    }
    let components = req.components.unwrap_or(DEFAULT_GMM_COMPONENTS);
    if components == 0 {
        return Err("components must be positive".into());
    }
    Ok(Input {
        image,
        seeds,
        settings: SegmentationSettings {
            lambda: req.lambda,
            components,
            seed: req.seed.unwrap_or(0),
        },
        passes,
    })
}

async fn submit(State(s): State<Shared>, body: axum::body::Bytes) -> Response {
    let req: JobRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed request: {e}")),
    };
    let input = match parse_request(req, &s.opts) {
        Ok(i) => i,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    let id = s.next_id.fetch_add(1, Ordering::SeqCst);
    let job = Arc::new(Job {
        id,
        input: Mutex::new(Some(input)),
        progress: Mutex::new(Progress {
            status: Status::Queued,
            pass: 0,
            lower_bound: None,
            result: None,
            error: None,
        }),
        cancel: AtomicBool::new(false),
    });
    let mut jobs = s.jobs.lock().unwrap();
    match s.queue.try_send(job.clone()) {
        Ok(()) => {
            jobs.insert(id, job);
            (StatusCode::ACCEPTED, Json(json!({ "id": id }))).into_response()
        }
        Err(TrySendError::Full(_)) => error(StatusCode::SERVICE_UNAVAILABLE, "queue full"),
        Err(TrySendError::Disconnected(_)) => error(StatusCode::INTERNAL_SERVER_ERROR, "worker stopped"),
    }
}

fn find(s: &AppState, id: u64) -> Option<Arc<Job>> {
    s.jobs.lock().unwrap().get(&id).cloned()
}

async fn status(State(s): State<Shared>, Path(id): Path<u64>) -> Response {
    let Some(job) = find(&s, id) else {
        return error(StatusCode::NOT_FOUND, format!("no job {id}"));
    };
    let p = job.progress.lock().unwrap();
    Json(json!({
        "id": id,
        "status": p.status,
        "pass": p.pass,
        "lower_bound": p.lower_bound,
        "error": p.error,
    }))
    .into_response()
}

async fn result(State(s): State<Shared>, Path(id): Path<u64>) -> Response {
    let Some(job) = find(&s, id) else {
        return error(StatusCode::NOT_FOUND, format!("no job {id}"));
    };
    let p = job.progress.lock().unwrap();
    match &p.result {
        Some(r) => Json(r).into_response(),
        None => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "job has no result", "status": p.status })),
        )
            .into_response(),
    }
}

async fn cancel(State(s): State<Shared>, Path(id): Path<u64>) -> Response {
    let Some(job) = find(&s, id) else {
        return error(StatusCode::NOT_FOUND, format!("no job {id}"));
    };
    let mut p = job.progress.lock().unwrap();
    match p.status {
        Status::Queued => {
            job.cancel.store(true, Ordering::SeqCst);
            job.input.lock().unwrap().take();
            p.status = Status::Cancelled;
            Json(json!({ "id": id, "status": p.status })).into_response()
        }
        Status::Running => {
            job.cancel.store(true, Ordering::SeqCst);
            (StatusCode::ACCEPTED, Json(json!({ "id": id, "status": p.status }))).into_response()
        }
        done => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "job already finished", "status": done })),
        )
            .into_response(),
    }
}

async fn bank_handler(State(s): State<Shared>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], s.bank_json.clone()).into_response()
}

pub fn serve(a: &ServeArgs) -> Result<()> {
    let bank = load_bank(&a.bank)?;
    let opts = ServerOptions {
        default_passes: a.passes,
        allow_large: a.allow_large,
        ui_dir: a.ui_dir.clone(),
    };
    let mut rt = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = crate::thread_limit() {
        rt.worker_threads(n);
    }
    let rt = rt.enable_all().build().map_err(|e| CliError::io("runtime", e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&a.bind).await.map_err(|e| {
            if e.kind() == std::io::ErrorKind::AddrInUse {
                CliError::PortBusy(a.bind.clone())
            } else {
                CliError::io(&a.bind, e)
            }
        })?;
        let addr = listener.local_addr().map_err(|e| CliError::io(&a.bind, e))?;
        println!("listening on {addr}");
        let router = app(bank, opts)?;
        axum::serve(listener, router)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::io(addr.to_string(), e))
    })
}
