//! Send/receive abstraction under the engine.
//!
//! Transports never return errors: every failure is encoded as
//! [`TransportStatus::TransportError`] with human-readable diagnostics.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use url::Url;

use crate::mockserver::{MockHttpRequest, MockServer};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(10_000);
pub const CONTENT_TYPE: &str = "text/xml; charset=utf-8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransportStatus {
    Ok,
    Accepted,
    ServerFault,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportRequest {
    pub endpoint: String,
    pub soap_action: String,
    pub body: Vec<u8>,
    /// Extra HTTP headers; Content-Type and SOAPAction are always set by the
    /// transport itself.
    pub headers: BTreeMap<String, String>,
    pub timeout: Duration,
}

impl TransportRequest {
    pub fn new(
        endpoint: impl Into<String>,
        soap_action: impl Into<String>,
        body: impl Into<Vec<u8>>,
    ) -> Self {
        TransportRequest {
            endpoint: endpoint.into(),
            soap_action: soap_action.into(),
            body: body.into(),
            headers: BTreeMap::new(),
            timeout: DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Checks the request invariants and returns the parsed endpoint.
    fn checked_url(&self) -> Result<Url, String> {
        if self.body.is_empty() {
            return Err("request body is empty".into());
        }
        if self.timeout.is_zero() {
            return Err("timeout must be positive".into());
        }
        let url = Url::parse(&self.endpoint)
            .map_err(|e| format!("invalid endpoint {:?}: {e}", self.endpoint))?;
        if url.scheme() != "http" {
            return Err(format!(
                "unsupported scheme {:?}; only http is available",
                url.scheme()
            ));
        }
        Ok(url)
    }

    fn soap_action_header(&self) -> String {
        format!("\"{}\"", self.soap_action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportResponse {
    pub status: TransportStatus,
    pub body: Option<Vec<u8>>,
    pub diagnostics: String,
}

impl TransportResponse {
    pub fn error(diagnostics: impl Into<String>) -> Self {
        TransportResponse {
            status: TransportStatus::TransportError,
            body: None,
            diagnostics: diagnostics.into(),
        }
    }

    pub fn body_text(&self) -> Option<&str> {
        self.body
            .as_deref()
            .and_then(|b| std::str::from_utf8(b).ok())
    }
}

/// Maps an HTTP status and body onto the SOAP 1.1 outcome classes.
pub fn classify(code: u16, body: Vec<u8>) -> TransportResponse {
    let looks_like_xml = body.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'<');
    match code {
        200 => TransportResponse {
            status: TransportStatus::Ok,
            body: Some(body),
            diagnostics: "HTTP 200".into(),
        },
        202 => TransportResponse {
            status: TransportStatus::Accepted,
            body: (!body.is_empty()).then_some(body),
            diagnostics: "HTTP 202".into(),
        },
        500 if looks_like_xml => TransportResponse {
            status: TransportStatus::ServerFault,
            body: Some(body),
            diagnostics: "HTTP 500 with SOAP fault".into(),
        },
        other => TransportResponse {
            status: TransportStatus::TransportError,
            body: (!body.is_empty()).then_some(body),
            diagnostics: format!("unexpected HTTP status {other}"),
        },
    }
}

pub trait Transport: Send + Sync {
    fn send(&self, request: &TransportRequest) -> TransportResponse;
}

/// Blocking HTTP/1.1 client. No TLS, no redirects.
#[derive(Debug, Clone, Copy, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn send(&self, request: &TransportRequest) -> TransportResponse {
        http_send(request)
    }
}

pub fn http_send(t: &TransportRequest) -> TransportResponse {
    let url = match t.checked_url() {
        Ok(u) => u,
        Err(d) => return TransportResponse::error(d),
    };
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(t.timeout))
        .http_status_as_error(false)
        .max_redirects(0)
        .build()
        .into();
    let mut call = agent
        .post(url.as_str())
        .header("Content-Type", CONTENT_TYPE)
        .header("SOAPAction", t.soap_action_header());
    for (k, v) in &t.headers {
        call = call.header(k.as_str(), v.as_str());
    }
    let mut resp = match call.send(&t.body[..]) {
        Ok(r) => r,
        Err(e) => return TransportResponse::error(describe_ureq_error(&e)),
    };
    let code = resp.status().as_u16();
    match resp.body_mut().read_to_vec() {
        Ok(body) => classify(code, body),
        Err(e) => TransportResponse::error(format!(
            "reading HTTP {code} response failed: {}",
            describe_ureq_error(&e)
        )),
    }
}

fn describe_ureq_error(e: &ureq::Error) -> String {
    match e {
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::ConnectionRefused => {
            format!("connection refused: {io}")
        }
        ureq::Error::Timeout(which) => format!("timed out ({which:?})"),
        other => other.to_string(),
    }
}

/// In-process dispatch into a [`MockServer`]; same status mapping as HTTP.
#[derive(Debug, Clone)]
pub struct LoopbackTransport {
    host: Arc<MockServer>,
}

impl LoopbackTransport {
    pub fn new(host: Arc<MockServer>) -> Self {
        LoopbackTransport { host }
    }

    pub fn host(&self) -> &Arc<MockServer> {
        &self.host
    }
}

impl Transport for LoopbackTransport {
    fn send(&self, request: &TransportRequest) -> TransportResponse {
        loopback_send(request, &self.host)
    }
}

pub fn loopback_send(t: &TransportRequest, host: &MockServer) -> TransportResponse {
    let url = match t.checked_url() {
        Ok(u) => u,
        Err(d) => return TransportResponse::error(d),
    };
    let mut headers = vec![
        ("Content-Type".to_string(), CONTENT_TYPE.to_string()),
        ("SOAPAction".to_string(), t.soap_action_header()),
    ];
    headers.extend(t.headers.iter().map(|(k, v)| (k.clone(), v.clone())));
    let req = MockHttpRequest {
        method: "POST".into(),
        path: url.path().to_string(),
        query: url.query().map(str::to_string),
        headers,
        body: t.body.clone(),
    };
    let resp = host.handle(&req);
    classify(resp.status, resp.body)
}
