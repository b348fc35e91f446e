//! HTTP front end for [`StreamServer`].

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;
use tokio::sync::oneshot;

use super::{DecisionMsg, StreamServer};
use crate::error::{Error, Result};

fn error_response(e: Error) -> Response {
    let status = match e {
        Error::Protocol(_) => StatusCode::CONFLICT,
        Error::Auth(_) => StatusCode::UNAUTHORIZED,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    let message = match e {
        Error::Protocol(m) | Error::Auth(m) => m,
        other => other.to_string(),
    };
    (status, Json(json!({ "error": message }))).into_response()
}

async fn writings(State(s): State<Arc<StreamServer>>, Path(token): Path<String>) -> Response {
    match s.next_round(&token) {
        Ok(w) => Json(w).into_response(),
        Err(e) => error_response(e),
    }
}

async fn decisions(
    State(s): State<Arc<StreamServer>>,
    Path(token): Path<String>,
    Json(body): Json<Vec<DecisionMsg>>,
) -> Response {
    match s.submit(&token, &body) {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => error_response(e),
    }
}

pub fn router(server: Arc<StreamServer>) -> Router {
    Router::new()
        .route("/teams/:token/writings", get(writings))
        .route("/teams/:token/decisions", post(decisions))
        .with_state(server)
}

/// Serve until the listener fails. For a stoppable server use [`spawn_http`].
pub async fn serve(listener: tokio::net::TcpListener, server: Arc<StreamServer>) -> Result<()> {
    let addr = listener.local_addr().ok();
    tracing::info!(?addr, "stream server listening");
    axum::serve(listener, router(server))
        .await
        .map_err(|e| Error::Transport {
            status: None,
            message: e.to_string(),
        })
}

/// A server running on its own thread and runtime.
#[derive(Debug)]
pub struct ServerHandle {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<()>>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop immediately, dropping open connections.
    pub fn shutdown(mut self) -> Result<()> {
        self.stop_and_join()
    }

    /// Block until the server exits on its own.
    pub fn wait(mut self) -> Result<()> {
        self.stop.take();
        self.join()
    }

    fn stop_and_join(&mut self) -> Result<()> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        self.join()
    }

    fn join(&mut self) -> Result<()> {
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| {
                Err(Error::Transport {
                    status: None,
                    message: "server thread panicked".into(),
                })
            }),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.stop.is_some() {
            let _ = self.stop_and_join();
        }
    }
}

/// Bind `addr` (use port 0 for an ephemeral port) and serve in the background.
pub fn spawn_http(server: Arc<StreamServer>, addr: &str) -> Result<ServerHandle> {
    let owned = addr.to_string();
    let bind_err = move |e: std::io::Error| Error::Transport {
        status: None,
        message: format!("cannot bind {owned}: {e}"),
    };
    let std_listener = std::net::TcpListener::bind(addr).map_err(bind_err.clone())?;
    std_listener.set_nonblocking(true).map_err(bind_err.clone())?;
    let local = std_listener.local_addr().map_err(bind_err.clone())?;
    let (tx, rx) = oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name("stream-server".into())
        .spawn(move || -> Result<()> {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .map_err(|e| Error::Transport {
                    status: None,
                    message: e.to_string(),
                })?;
            let out = rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).map_err(bind_err)?;
                tokio::select! {
                    r = serve(listener, server) => r,
                    _ = rx => Ok(()),
                }
            });
            rt.shutdown_background();
            out
        })
        .map_err(|e| Error::Transport {
            status: None,
            message: e.to_string(),
        })?;
    Ok(ServerHandle {
        addr: local,
        stop: Some(tx),
        thread: Some(thread),
    })
}
