use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{rejection::JsonRejection, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::protocol::{CreateRunRequest, DecisionSubmission, ErrorBody, ErrorKind, PROTOCOL_VERSION};
use crate::registry::Registry;
use crate::state::ServerError;

impl IntoResponse for ServerError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.kind().status()).expect("valid status");
        (status, Json(self.body())).into_response()
    }
}

fn bad_json(rejection: JsonRejection) -> Response {
    let body = ErrorBody {
        protocol_version: PROTOCOL_VERSION,
        kind: ErrorKind::Validation,
        message: rejection.body_text(),
        offenders: vec![],
        remaining: None,
    };
    (StatusCode::UNPROCESSABLE_ENTITY, Json(body)).into_response()
}

type Shared = Arc<Registry>;

async fn create_run(State(reg): State<Shared>, body: Result<Json<CreateRunRequest>, JsonRejection>) -> Response {
    match body {
        Ok(Json(req)) => match reg.create_run(&req) {
            Ok(created) => (StatusCode::CREATED, Json(created)).into_response(),
            Err(e) => e.into_response(),
        },
        Err(r) => bad_json(r),
    }
}

async fn next_round(State(reg): State<Shared>, Path(id): Path<String>) -> Response {
    match reg.next_round(&id) {
        Ok(p) => Json(p).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn submit(
    State(reg): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<DecisionSubmission>, JsonRejection>,
) -> Response {
    match body {
        Ok(Json(sub)) => match reg.submit_decisions(&id, &sub) {
            Ok(ack) => Json(ack).into_response(),
            Err(e) => e.into_response(),
        },
        Err(r) => bad_json(r),
    }
}

async fn results(State(reg): State<Shared>, Path(id): Path<String>) -> Response {
    match reg.results(&id) {
        Ok(r) => Json(r).into_response(),
        Err(e) => e.into_response(),
    }
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/runs", post(create_run))
        .route("/runs/{id}/round", get(next_round))
        .route("/runs/{id}/decisions", post(submit))
        .route("/runs/{id}/results", get(results))
        .with_state(registry)
}

/// A server running on its own thread; dropped or [`shutdown`](Self::shutdown) stops it.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<std::io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) -> std::io::Result<()> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> std::io::Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked"))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

fn runtime() -> std::io::Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub fn spawn_server(registry: Arc<Registry>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let rt = runtime()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        rt.block_on(async move {
            axum::serve(listener, router(registry))
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
        })
    });
    log::info!("mock-server listening on {addr}");
    Ok(ServerHandle { addr, stop: Some(tx), thread: Some(thread) })
}

/// Serves on the calling thread until interrupted.
pub fn serve_blocking(registry: Arc<Registry>, addr: SocketAddr) -> std::io::Result<()> {
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        log::info!("mock-server listening on {}", listener.local_addr()?);
        axum::serve(listener, router(registry))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
}
