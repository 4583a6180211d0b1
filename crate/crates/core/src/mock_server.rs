//! Local HTTP server answering every catalog schema with a canned body.
//!
//! Each schema is served at the path of its `endpoint` URL. Requests must be
//! `POST` with a `{"arguments": {...}}` body that passes catalog validation;
//! the reply is the schema's fixture (strings are sent as plain text, any
//! other JSON value as JSON).

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::router::{self, ApiCall, InvocationBody};
use crate::schema_index::ApiSchema;

/// Schema name → canned response body.
pub type Fixtures = BTreeMap<String, Value>;

const WORKERS: usize = 4;

#[derive(Debug, Error)]
pub enum MockServerError {
    #[error("fixture {0:?} names a schema that is not in the catalog")]
    UnknownFixture(String),
    #[error("schema {0:?} has no fixture")]
    MissingFixture(String),
    #[error("schema {schema:?} has an invalid endpoint {endpoint:?}")]
    BadEndpoint { schema: String, endpoint: String },
    #[error("schemas {0:?} and {1:?} share an endpoint path")]
    DuplicatePath(String, String),
    #[error("cannot bind {addr}: {message}")]
    Bind { addr: String, message: String },
    #[error("failed to read fixtures {path}: {message}")]
    Fixtures { path: String, message: String },
}

pub fn load_fixtures(path: impl AsRef<Path>) -> Result<Fixtures, MockServerError> {
    let path = path.as_ref();
    let err = |message: String| MockServerError::Fixtures { path: path.display().to_string(), message };
    let contents = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&contents).map_err(|e| err(e.to_string()))
}

/// The path component of an endpoint URL.
pub fn endpoint_path(endpoint: &str) -> Option<String> {
    let uri: ureq::http::Uri = endpoint.parse().ok()?;
    uri.authority()?;
    Some(uri.path().to_string())
}

struct Route {
    schema: ApiSchema,
    body: Value,
}

/// A running mock server; stops when dropped.
pub struct MockApiServer {
    server: Arc<Server>,
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl MockApiServer {
    /// Binds `addr` (e.g. `127.0.0.1:0`) and starts serving. Fails if a
    /// fixture names an unknown schema or a schema lacks a fixture.
    pub fn start(catalog: &[ApiSchema], fixtures: &Fixtures, addr: &str) -> Result<Self, MockServerError> {
        if let Some(unknown) = fixtures.keys().find(|name| !catalog.iter().any(|s| &s.name == *name)) {
            return Err(MockServerError::UnknownFixture(unknown.clone()));
        }
        let mut routes: HashMap<String, Route> = HashMap::new();
        for schema in catalog {
            let body = fixtures.get(&schema.name).ok_or_else(|| MockServerError::MissingFixture(schema.name.clone()))?;
            let path = endpoint_path(&schema.endpoint).ok_or_else(|| MockServerError::BadEndpoint {
                schema: schema.name.clone(),
                endpoint: schema.endpoint.clone(),
            })?;
            if let Some(existing) = routes.get(&path) {
                return Err(MockServerError::DuplicatePath(existing.schema.name.clone(), schema.name.clone()));
            }
            routes.insert(path, Route { schema: schema.clone(), body: body.clone() });
        }

        let server = Server::http(addr).map_err(|e| MockServerError::Bind { addr: addr.to_string(), message: e.to_string() })?;
        let local = server.server_addr().to_ip().ok_or_else(|| MockServerError::Bind {
            addr: addr.to_string(),
            message: "not an IP listener".into(),
        })?;
        let server = Arc::new(server);
        let routes = Arc::new(routes);
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..WORKERS)
            .map(|_| {
                let (server, routes, stop) = (server.clone(), routes.clone(), stop.clone());
                std::thread::spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        match server.recv_timeout(Duration::from_millis(50)) {
                            Ok(Some(request)) => handle(request, &routes),
                            Ok(None) => {}
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        Ok(Self { server, addr: local, stop, workers })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks the calling thread until the server is stopped elsewhere.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for _ in &self.workers {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for MockApiServer {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn reply(request: Request, status: u16, body: &Value) {
    let _ = request.respond(Response::from_string(body.to_string()).with_status_code(status).with_header(json_header()));
}

fn handle(mut request: Request, routes: &HashMap<String, Route>) {
    let path = request.url().split('?').next().unwrap_or("").to_string();
    let Some(route) = routes.get(&path) else {
        return reply(request, 404, &json!({"error": format!("no api at {path}")}));
    };
    if *request.method() != Method::Post {
        return reply(request, 405, &json!({"error": "use POST"}));
    }
    let mut raw = String::new();
    if request.as_reader().read_to_string(&mut raw).is_err() {
        return reply(request, 400, &json!({"error": "unreadable body"}));
    }
    let invocation: InvocationBody = match serde_json::from_str(&raw) {
        Ok(b) => b,
        Err(e) => return reply(request, 400, &json!({"error": format!("expected {{\"arguments\": {{...}}}}: {e}")})),
    };
    let call = ApiCall { schema_name: route.schema.name.clone(), arguments: invocation.arguments };
    if let Err(e) = router::validate(&call, std::slice::from_ref(&route.schema)) {
        return reply(request, 400, &json!({"error": e.to_string()}));
    }
    match &route.body {
        Value::String(text) => {
            let _ = request.respond(Response::from_string(text.clone()));
        }
        other => reply(request, 200, other),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_paths() {
        assert_eq!(endpoint_path("http://127.0.0.1:8080/api/stock").as_deref(), Some("/api/stock"));
        assert_eq!(endpoint_path("http://host").as_deref(), Some("/"));
        assert_eq!(endpoint_path("/no/host"), None);
        assert_eq!(endpoint_path("not a url"), None);
    }

    fn schema(name: &str) -> ApiSchema {
        ApiSchema { name: name.into(), description: String::new(), parameters: vec![], endpoint: format!("http://localhost/{name}") }
    }

    #[test]
    fn fixture_for_absent_schema_fails_startup() {
        let fixtures = Fixtures::from([("a".into(), json!(1)), ("ghost".into(), json!(2))]);
        assert!(matches!(
            MockApiServer::start(&[schema("a")], &fixtures, "127.0.0.1:0"),
            Err(MockServerError::UnknownFixture(n)) if n == "ghost"
        ));
    }

    #[test]
    fn schema_without_fixture_fails_startup() {
        let fixtures = Fixtures::from([("a".into(), json!(1))]);
        assert!(matches!(
            MockApiServer::start(&[schema("a"), schema("b")], &fixtures, "127.0.0.1:0"),
            Err(MockServerError::MissingFixture(n)) if n == "b"
        ));
    }
}
