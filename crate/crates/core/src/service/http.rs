//! HTTP transport: `POST /rpc` with CORS, plus the confirmation watcher.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use tokio::sync::oneshot;
use tower_http::cors::{AllowOrigin, CorsLayer};

use super::{rpc, Service};

pub const CONFIRMATION_POLL_MS: u64 = 200;

pub fn router(svc: Arc<Service>, cors_origin: Option<&str>) -> Router {
    let origin = match cors_origin {
        None | Some("*") => AllowOrigin::any(),
        Some(o) => AllowOrigin::exact(HeaderValue::from_str(o).unwrap_or(HeaderValue::from_static("null"))),
    };
    let cors = CorsLayer::new()
        .allow_origin(origin)
        .allow_methods([Method::POST, Method::OPTIONS])
        .allow_headers([header::CONTENT_TYPE]);
    Router::new().route("/rpc", post(rpc_handler)).layer(cors).with_state(svc)
}

async fn rpc_handler(State(svc): State<Arc<Service>>, body: Bytes) -> Response {
    let out = tokio::task::spawn_blocking(move || rpc::handle_bytes(&svc, &body)).await;
    match out {
        Ok(Some(v)) => (
            [(header::CONTENT_TYPE, "application/json")],
            serde_json::to_vec(&v).unwrap_or_default(),
        )
            .into_response(),
        Ok(None) => StatusCode::NO_CONTENT.into_response(),
        Err(_) => StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    }
}

pub struct RpcServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    stop_watch: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl RpcServer {
    /// Binds `addr` and serves on a dedicated runtime thread.
    pub fn start(svc: Arc<Service>, addr: SocketAddr, cors_origin: Option<&str>, workers: usize) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let app = router(svc.clone(), cors_origin);
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(workers.max(1))
            .enable_all()
            .build()?;
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let server = std::thread::Builder::new().name("rpc".into()).spawn(move || {
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(std_listener).expect("listener");
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = stop_rx.await;
                    })
                    .await;
            });
        })?;
        let stop_watch = Arc::new(AtomicBool::new(false));
        let flag = stop_watch.clone();
        let watcher = std::thread::Builder::new().name("confirmations".into()).spawn(move || {
            while !flag.load(Ordering::SeqCst) {
                svc.poll_confirmations();
                std::thread::sleep(Duration::from_millis(CONFIRMATION_POLL_MS));
            }
        })?;
        Ok(RpcServer {
            addr,
            stop: Some(stop_tx),
            stop_watch,
            threads: vec![server, watcher],
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/rpc", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop_all();
    }

    fn stop_all(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        self.stop_watch.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for RpcServer {
    fn drop(&mut self) {
        self.stop_all();
    }
}
