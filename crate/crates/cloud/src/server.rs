use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;
use std::thread;

use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::http::{router, AppState, FaultInjector};
use crate::store::{Store, StoreError};

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub bind: IpAddr,
    /// 0 picks a free port.
    pub port: u16,
    pub data_dir: PathBuf,
    pub token: Option<String>,
    pub fault_rate: f64,
    pub fault_seed: u64,
}

impl ServerConfig {
    pub fn new(data_dir: impl Into<PathBuf>, port: u16) -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port,
            data_dir: data_dir.into(),
            token: None,
            fault_rate: 0.0,
            fault_seed: 0,
        }
    }

    fn state(&self) -> Result<AppState, ServeError> {
        if !(0.0..1.0).contains(&self.fault_rate) {
            return Err(ServeError::Config(format!("fault rate {} outside [0, 1)", self.fault_rate)));
        }
        let store = Store::open(&self.data_dir)?;
        let faults = (self.fault_rate > 0.0).then(|| Arc::new(FaultInjector::new(self.fault_rate, self.fault_seed)));
        Ok(AppState { store: Arc::new(store), token: self.token.clone(), faults })
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid server configuration: {0}")]
    Config(String),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

async fn bind(cfg: &ServerConfig) -> Result<TcpListener, ServeError> {
    let addr = SocketAddr::new(cfg.bind, cfg.port);
    TcpListener::bind(addr).await.map_err(|source| ServeError::Bind { addr, source })
}

async fn serve_until(
    listener: TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

async fn termination() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}

/// Serves until SIGINT or SIGTERM. `on_ready` gets the bound address.
pub fn run(cfg: &ServerConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<(), ServeError> {
    let state = cfg.state()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = bind(cfg).await?;
        on_ready(listener.local_addr()?);
        serve_until(listener, state, termination()).await
    })
}

/// A server on a background thread, stopped on [`ServerHandle::stop`] or drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<Result<(), ServeError>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> Result<(), ServeError> {
        self.shutdown()
    }

    fn shutdown(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(ServeError::Config("server thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown();
    }
}

pub fn spawn(cfg: &ServerConfig) -> Result<ServerHandle, ServeError> {
    let state = cfg.state()?;
    let cfg = cfg.clone();
    let (ready_tx, ready_rx) = std::sync::mpsc::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let thread = thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        rt.block_on(async {
            let listener = match bind(&cfg).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = ready_tx.send(Err(e.to_string()));
                    return Err(e);
                }
            };
            let _ = ready_tx.send(Ok(listener.local_addr()?));
            serve_until(listener, state, async {
                let _ = stop_rx.await;
            })
            .await
        })
    });
    match ready_rx.recv() {
        Ok(Ok(addr)) => Ok(ServerHandle { addr, stop: Some(stop_tx), thread: Some(thread) }),
        _ => match thread.join() {
            Ok(Err(e)) => Err(e),
            Ok(Ok(())) => Err(ServeError::Config("server exited before it was ready".into())),
            Err(_) => Err(ServeError::Config("server thread panicked".into())),
        },
    }
}
