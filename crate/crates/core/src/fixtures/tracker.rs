//! Local stand-in for a bug tracker's JSON search API: pages of records at
//! `GET /?...&page=N`, an empty array past the end.

use std::sync::Arc;

use serde_json::{json, Value};

use super::server::{spawn_server, Handler, HttpRequest, HttpResponse, ServerHandle};
use super::FixtureError;

/// Records served by the stub, in order.
#[derive(Debug, Clone, Default)]
pub struct TrackerData {
    pub records: Vec<Value>,
    pub page_size: usize,
    /// Respond to every request with this status instead.
    pub fail_status: Option<u16>,
}

impl TrackerData {
    pub fn new(records: Vec<Value>, page_size: usize) -> Self {
        TrackerData {
            records,
            page_size: page_size.max(1),
            fail_status: None,
        }
    }

    /// A small mixed sample: desktop and mobile reports, old versions,
    /// reports without URLs and fixture URLs with a `{variant}` slot.
    pub fn sample(fixture_base: &str) -> Self {
        let base = fixture_base.trim_end_matches('/');
        let records = vec![
            json!({"id": 1001, "url": format!("{base}/ls01/{{variant}}"), "browser": "Firefox", "version": 121, "summary": "Sidebar misplaced", "impact": "significant_visual"}),
            json!({"id": 1002, "url": format!("{base}/fc01/{{variant}}"), "browser": "Firefox", "version": "118.0.2", "summary": "Text looks different", "impact": "minor_visual"}),
            json!({"id": 1003, "url": "https://example.org/shop", "browser": "Firefox", "version": 99, "summary": "Old release"}),
            json!({"id": 1004, "url": null, "browser": "Firefox", "version": 120, "summary": "No link given"}),
            json!({"id": 1005, "url": "https://m.example.org/", "browser": "Firefox Mobile", "version": 122, "summary": "Mobile only"}),
            json!({"id": 1006, "url": format!("{base}/ub01/{{variant}}"), "browser": "Firefox", "version": 123, "summary": "Unsupported browser message", "impact": "blocked_unsupported"}),
            json!({"id": 1007, "url": "https://example.net/", "browser": "Chrome", "version": 120, "summary": "Chrome report"}),
        ];
        TrackerData::new(records, 3)
    }

    fn page(&self, n: usize) -> Vec<Value> {
        if n == 0 {
            return Vec::new();
        }
        self.records
            .iter()
            .skip((n - 1) * self.page_size)
            .take(self.page_size)
            .cloned()
            .collect()
    }
}

fn page_param(query: &str) -> usize {
    query
        .split('&')
        .filter_map(|kv| kv.split_once('='))
        .find(|(k, _)| *k == "page")
        .and_then(|(_, v)| v.parse().ok())
        .unwrap_or(1)
}

pub fn spawn_tracker_stub(bind: &str, data: TrackerData) -> Result<ServerHandle, FixtureError> {
    let data = Arc::new(data);
    let handler: Arc<Handler> = Arc::new(move |rq: HttpRequest| {
        if let Some(status) = data.fail_status {
            return HttpResponse::text(status, "tracker unavailable");
        }
        let page = data.page(page_param(&rq.query));
        HttpResponse::json(200, &Value::Array(page))
    });
    spawn_server(bind, 2, handler)
}
