//! Deterministic SOAP host for tests and demos.
//!
//! A [`MockServer`] maps URL paths to [`MockService`]s. Requests are
//! dispatched by the local name of the Body's wrapper element, which must be
//! in the service namespace. The same [`MockServer::handle`] entry point
//! backs both the in-process loopback transport and the HTTP listener.

use std::collections::BTreeMap;
use std::fmt;
use std::net::SocketAddr;
use std::sync::{Arc, OnceLock, RwLock};
use std::thread::JoinHandle;

use thiserror::Error;

use crate::codec::{
    build_fault_envelope, build_response_envelope, decode_request, ResponsePayload,
};
use crate::model::{FaultInfo, Parameter, Value};
use crate::wsdl::Mep;

pub const DEFAULT_PORT: u16 = 8190;
pub const ECHO_NS: &str = "urn:soapforge:echo";
pub const FAULT_NS: &str = "urn:soapforge:fault";
pub const MARKET_NS: &str = "urn:market";

pub const MARKET_CSV: &str = include_str!("../fixtures/market.csv");
pub const MARKET_WSDL: &str = include_str!("../fixtures/market.wsdl");
pub const ECHO_WSDL: &str = include_str!("../fixtures/echo.wsdl");

const CLIENT_FAULT: &str = "soapenv:Client";

pub type Behavior = Arc<dyn Fn(&[Parameter]) -> ResponsePayload + Send + Sync>;

#[derive(Clone)]
pub struct MockOperation {
    pub mep: Mep,
    pub behavior: Behavior,
}

impl fmt::Debug for MockOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MockOperation")
            .field("mep", &self.mep)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct MockService {
    pub path: String,
    pub namespace: String,
    pub operations: BTreeMap<String, MockOperation>,
    /// Handles operations with no entry in `operations`.
    pub fallback: Option<MockOperation>,
    pub wsdl: Option<String>,
}

impl MockService {
    pub fn new(path: impl Into<String>, namespace: impl Into<String>) -> Self {
        MockService {
            path: path.into(),
            namespace: namespace.into(),
            operations: BTreeMap::new(),
            fallback: None,
            wsdl: None,
        }
    }

    pub fn with_operation<F>(mut self, name: &str, mep: Mep, behavior: F) -> Self
    where
        F: Fn(&[Parameter]) -> ResponsePayload + Send + Sync + 'static,
    {
        self.operations.insert(
            name.to_string(),
            MockOperation {
                mep,
                behavior: Arc::new(behavior),
            },
        );
        self
    }

    pub fn with_fallback<F>(mut self, mep: Mep, behavior: F) -> Self
    where
        F: Fn(&[Parameter]) -> ResponsePayload + Send + Sync + 'static,
    {
        self.fallback = Some(MockOperation {
            mep,
            behavior: Arc::new(behavior),
        });
        self
    }

    pub fn with_wsdl(mut self, wsdl: impl Into<String>) -> Self {
        self.wsdl = Some(wsdl.into());
        self
    }
}

/// Echoes its inputs (`Echo`), answers empty (`Ping`), accepts one-way
/// `Notify`.
pub fn echo_service() -> MockService {
    MockService::new("/echo", ECHO_NS)
        .with_operation("Echo", Mep::InOut, |params| {
            ResponsePayload::Params(params.to_vec())
        })
        .with_operation("Ping", Mep::InOut, |_| ResponsePayload::Params(Vec::new()))
        .with_operation("Notify", Mep::InOnly, |_| {
            ResponsePayload::Params(Vec::new())
        })
        .with_wsdl(ECHO_WSDL)
}

/// Faults on every operation with `soapenv:Client` / "bad input".
pub fn fault_service() -> MockService {
    MockService::new("/fault", FAULT_NS).with_fallback(Mep::InOut, |_| {
        ResponsePayload::Fault(FaultInfo::new(CLIENT_FAULT, "bad input"))
    })
}

pub fn market_service() -> MockService {
    MockService::new("/market", MARKET_NS)
        .with_operation("GetQuote", Mep::InOut, |params| {
            match params
                .iter()
                .find(|p| p.name == "symbol")
                .and_then(|p| p.value.as_text())
            {
                Some(symbol) => market_quote(symbol),
                None => ResponsePayload::Fault(FaultInfo::new(CLIENT_FAULT, "missing symbol")),
            }
        })
        .with_wsdl(MARKET_WSDL)
}

/// One row of the bundled market-data table.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketRow {
    pub symbol: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

/// The bundled market table, in fixture order.
pub fn market_rows() -> &'static [MarketRow] {
    static ROWS: OnceLock<Vec<MarketRow>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let mut reader = csv::Reader::from_reader(MARKET_CSV.as_bytes());
        reader
            .records()
            .map(|rec| {
                let rec = rec.expect("bundled market.csv is valid");
                let num = |i: usize| {
                    rec[i]
                        .parse::<f64>()
                        .expect("bundled market.csv numbers parse")
                };
                MarketRow {
                    symbol: rec[0].to_string(),
                    open: num(1),
                    high: num(2),
                    low: num(3),
                    close: num(4),
                }
            })
            .collect()
    })
}

/// Looks up `symbol` (exact match) in the market table.
pub fn market_quote(symbol: &str) -> ResponsePayload {
    match market_rows().iter().find(|r| r.symbol == symbol) {
        Some(row) => ResponsePayload::Params(
            [
                ("Open", row.open),
                ("High", row.high),
                ("Low", row.low),
                ("Close", row.close),
            ]
            .into_iter()
            .map(|(name, v)| Parameter::new(name, Value::Decimal(v)))
            .collect(),
        ),
        None => ResponsePayload::Fault(FaultInfo::new(CLIENT_FAULT, "unknown symbol")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MockError {
    #[error("path {0:?} already has a service")]
    PathTaken(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("cannot start listener: {0}")]
    Io(String),
}

/// An HTTP request as seen by the mock host.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MockHttpRequest {
    pub method: String,
    pub path: String,
    pub query: Option<String>,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl MockHttpRequest {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockHttpResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl MockHttpResponse {
    fn xml(status: u16, body: String) -> Self {
        MockHttpResponse {
            status,
            content_type: "text/xml; charset=utf-8",
            body: body.into_bytes(),
        }
    }

    fn plain(status: u16, body: &str) -> Self {
        MockHttpResponse {
            status,
            content_type: "text/plain; charset=utf-8",
            body: body.as_bytes().to_vec(),
        }
    }

    fn fault(code: &str, string: impl Into<String>) -> Self {
        Self::xml(500, build_fault_envelope(&FaultInfo::new(code, string)))
    }
}

#[derive(Debug, Default)]
pub struct MockServer {
    services: RwLock<Vec<MockService>>,
}

impl MockServer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Server with the echo, fault and market services registered.
    pub fn with_builtin_services() -> Self {
        let server = Self::new();
        for svc in [echo_service(), fault_service(), market_service()] {
            server
                .register_mock(svc)
                .expect("built-in paths are distinct");
        }
        server
    }

    pub fn register_mock(&self, svc: MockService) -> Result<(), MockError> {
        let mut services = self.services.write().unwrap_or_else(|e| e.into_inner());
        if services.iter().any(|s| s.path == svc.path) {
            return Err(MockError::PathTaken(svc.path));
        }
        services.push(svc);
        Ok(())
    }

    pub fn paths(&self) -> Vec<String> {
        let services = self.services.read().unwrap_or_else(|e| e.into_inner());
        services.iter().map(|s| s.path.clone()).collect()
    }

    /// Dispatches one HTTP exchange.
    pub fn handle(&self, req: &MockHttpRequest) -> MockHttpResponse {
        let services = self.services.read().unwrap_or_else(|e| e.into_inner());
        let Some(svc) = services.iter().find(|s| s.path == req.path) else {
            return MockHttpResponse::plain(404, "no service at this path");
        };
        match req.method.as_str() {
            "GET" if req.query.as_deref() == Some("wsdl") => match &svc.wsdl {
                Some(wsdl) => MockHttpResponse::xml(200, wsdl.clone()),
                None => MockHttpResponse::plain(404, "service publishes no WSDL"),
            },
            "POST" => dispatch(svc, &req.body),
            _ => MockHttpResponse::plain(405, "method not allowed"),
        }
    }

    /// Starts an HTTP/1.1 listener on 127.0.0.1:`port` (0 picks a free port).
    pub fn serve_http(self: &Arc<Self>, port: u16) -> Result<RunningServer, MockError> {
        let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(|e| {
            match e.downcast_ref::<std::io::Error>().map(std::io::Error::kind) {
                Some(std::io::ErrorKind::AddrInUse) => MockError::PortInUse(port),
                _ => MockError::Io(e.to_string()),
            }
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| MockError::Io("listener has no IP address".into()))?;
        let server = Arc::new(server);
        let listener = Arc::clone(&server);
        let host = Arc::clone(self);
        let thread = std::thread::spawn(move || {
            for request in listener.incoming_requests() {
                let host = Arc::clone(&host);
                std::thread::spawn(move || respond(&host, request));
            }
        });
        Ok(RunningServer {
            addr,
            server,
            thread: Some(thread),
        })
    }
}

fn dispatch(svc: &MockService, body: &[u8]) -> MockHttpResponse {
    let Ok(text) = std::str::from_utf8(body) else {
        return MockHttpResponse::fault(CLIENT_FAULT, "request body is not UTF-8");
    };
    let decoded = match decode_request(text) {
        Ok(d) => d,
        Err(e) => return MockHttpResponse::fault(CLIENT_FAULT, e.to_string()),
    };
    if decoded.namespace != svc.namespace {
        return MockHttpResponse::fault(
            CLIENT_FAULT,
            format!(
                "namespace mismatch: expected {:?}, got {:?}",
                svc.namespace, decoded.namespace
            ),
        );
    }
    let Some(op) = svc
        .operations
        .get(&decoded.operation)
        .or(svc.fallback.as_ref())
    else {
        return MockHttpResponse::fault(
            CLIENT_FAULT,
            format!("unknown operation {:?}", decoded.operation),
        );
    };
    match ((op.behavior)(&decoded.params), op.mep) {
        (ResponsePayload::Fault(f), _) => MockHttpResponse::xml(500, build_fault_envelope(&f)),
        (ResponsePayload::Params(_), Mep::InOnly) => MockHttpResponse {
            status: 202,
            content_type: "text/plain; charset=utf-8",
            body: Vec::new(),
        },
        (ResponsePayload::Params(params), Mep::InOut) => MockHttpResponse::xml(
            200,
            build_response_envelope(
                &svc.namespace,
                "m",
                &format!("{}Response", decoded.operation),
                &params,
            ),
        ),
    }
}

fn respond(host: &MockServer, mut request: tiny_http::Request) {
    let (path, query) = match request.url().split_once('?') {
        Some((p, q)) => (p.to_string(), Some(q.to_string())),
        None => (request.url().to_string(), None),
    };
    let mut body = Vec::new();
    if request.as_reader().read_to_end(&mut body).is_err() {
        let _ = request.respond(tiny_http::Response::empty(400));
        return;
    }
    let req = MockHttpRequest {
        method: request.method().as_str().to_ascii_uppercase(),
        path,
        query,
        headers: request
            .headers()
            .iter()
            .map(|h| {
                (
                    h.field.as_str().as_str().to_string(),
                    h.value.as_str().to_string(),
                )
            })
            .collect(),
        body,
    };
    let resp = host.handle(&req);
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], resp.content_type.as_bytes())
        .expect("static header is valid");
    let _ = request.respond(
        tiny_http::Response::from_data(resp.body)
            .with_status_code(resp.status)
            .with_header(header),
    );
}

/// Handle to a listening mock server; shuts down on drop.
pub struct RunningServer {
    addr: SocketAddr,
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
}

impl RunningServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// `http://127.0.0.1:<port><path>`
    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        self.stop();
    }
}
