//! Small threaded HTTP server used by the fixture, tracker and WebDriver stubs.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use tiny_http::{Header, Response, Server};

use super::browser::CorpusHost;
use super::{CorpusTree, FixtureError};

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: String,
    /// Path without the query string.
    pub path: String,
    pub query: String,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl HttpResponse {
    pub fn new(status: u16, content_type: &str, body: impl Into<Vec<u8>>) -> Self {
        HttpResponse {
            status,
            content_type: content_type.to_string(),
            body: body.into(),
        }
    }

    pub fn json(status: u16, value: &serde_json::Value) -> Self {
        Self::new(status, "application/json; charset=utf-8", value.to_string())
    }

    pub fn text(status: u16, text: &str) -> Self {
        Self::new(status, "text/plain; charset=utf-8", text)
    }
}

pub type Handler = dyn Fn(HttpRequest) -> HttpResponse + Send + Sync;

/// Running server; stops and joins its threads on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Block the current thread until the process is killed.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

pub fn spawn_server(bind: &str, workers: usize, handler: Arc<Handler>) -> Result<ServerHandle, FixtureError> {
    let server = Server::http(bind).map_err(|e| FixtureError::Bind {
        addr: bind.to_string(),
        message: e.to_string(),
    })?;
    let addr = server.server_addr().to_ip().ok_or_else(|| FixtureError::Bind {
        addr: bind.to_string(),
        message: "not an IP listener".into(),
    })?;
    let server = Arc::new(server);
    let stop = Arc::new(AtomicBool::new(false));
    let threads = (0..workers.max(1))
        .map(|_| {
            let (server, stop, handler) = (server.clone(), stop.clone(), handler.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    let mut rq = match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(rq)) => rq,
                        Ok(None) => continue,
                        Err(e) => {
                            log::debug!("fixture server: {e}");
                            continue;
                        }
                    };
                    let mut body = Vec::new();
                    let _ = rq.as_reader().read_to_end(&mut body);
                    let (path, query) = match rq.url().split_once('?') {
                        Some((p, q)) => (p.to_string(), q.to_string()),
                        None => (rq.url().to_string(), String::new()),
                    };
                    let resp = handler(HttpRequest {
                        method: rq.method().as_str().to_ascii_uppercase(),
                        path,
                        query,
                        body,
                    });
                    let header = Header::from_bytes(&b"Content-Type"[..], resp.content_type.as_bytes())
                        .expect("valid content type header");
                    let out = Response::from_data(resp.body)
                        .with_status_code(resp.status)
                        .with_header(header);
                    let _ = rq.respond(out);
                }
            })
        })
        .collect();
    Ok(ServerHandle { addr, stop, threads })
}

/// Serve `/{site_id}/{a|b}` pages and `/{site_id}/{asset}.png` from a
/// generated tree. Per-reload sites count requests atomically per site.
pub fn serve_corpus(tree: &Path, bind: &str) -> Result<ServerHandle, FixtureError> {
    let host = Arc::new(CorpusHost::new(CorpusTree::open(tree)?));
    let handler: Arc<Handler> = Arc::new(move |rq: HttpRequest| {
        if rq.method != "GET" {
            return HttpResponse::text(405, "method not allowed");
        }
        let mut parts = rq.path.trim_start_matches('/').splitn(2, '/');
        let (Some(site), Some(rest)) = (parts.next(), parts.next()) else {
            return HttpResponse::text(404, "404 Not Found");
        };
        let tree = host.tree();
        let reload = if tree.is_per_reload(site) && super::Variant::parse(rest).is_some() {
            host.next_reload(site)
        } else {
            0
        };
        let r = tree.respond(site, rest, reload);
        HttpResponse::new(r.status, r.content_type, r.body)
    });
    spawn_server(bind, 8, handler)
}
