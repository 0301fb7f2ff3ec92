//! Loopback HTTP serving for in-process services.

use std::io;
use std::net::SocketAddr;

use axum::Router;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

/// A bound but not yet serving listener and its base URL.
pub struct Bound {
    pub listener: TcpListener,
    pub addr: SocketAddr,
    pub url: String,
}

/// Binds an ephemeral port on 127.0.0.1.
pub async fn bind_local() -> io::Result<Bound> {
    bind_port(0).await
}

/// Binds `port` on 127.0.0.1; 0 picks a free one.
pub async fn bind_port(port: u16) -> io::Result<Bound> {
    let listener = TcpListener::bind(("127.0.0.1", port)).await?;
    let addr = listener.local_addr()?;
    Ok(Bound { listener, addr, url: format!("http://{addr}") })
}

pub fn serve(listener: TcpListener, router: Router) -> JoinHandle<()> {
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!("server stopped: {e}");
        }
    })
}
