//! Local HTTP service over the sensolab analyses.
//!
//! The service keeps a session (datasets, fitted models, consumer
//! segments) in a directory and reloads it on start. Model requests that
//! involve leave-one-out validation or mixed models run as background
//! jobs; everything else answers synchronously.

pub mod api;
pub mod request;
pub mod session;

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use request::{FitRequest, Plot, ResultBundle, RunError, SubResult};
pub use session::{JobState, JobStatus, Session, SessionError};

pub const DEFAULT_PORT: u16 = 8765;
pub const PORT_VAR: &str = "SENSOLAB_PORT";
pub const SESSION_DIR_VAR: &str = "SENSOLAB_SESSION_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub host: IpAddr,
    pub port: u16,
    pub session_dir: PathBuf,
    pub workers: usize,
}

impl Default for Config {
    fn default() -> Self {
        let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            session_dir: home.join(".sensolab").join("session"),
            workers: std::thread::available_parallelism().map_or(2, usize::from),
        }
    }
}

impl Config {
    /// Defaults overridden by `SENSOLAB_PORT` and `SENSOLAB_SESSION_DIR`.
    pub fn from_env() -> Result<Self, String> {
        let mut c = Self::default();
        if let Ok(p) = std::env::var(PORT_VAR) {
            c.port = p.parse().map_err(|_| format!("{PORT_VAR} must be a port number, got '{p}'"))?;
        }
        if let Some(d) = std::env::var_os(SESSION_DIR_VAR) {
            c.session_dir = PathBuf::from(d);
        }
        Ok(c)
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }
}

/// Serve until ctrl-c on an already bound listener.
pub async fn serve(listener: tokio::net::TcpListener, session: Arc<Session>, workers: usize) -> std::io::Result<()> {
    axum::serve(listener, router(session, workers))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
