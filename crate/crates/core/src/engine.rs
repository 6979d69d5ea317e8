//! The client engine: one [`Request`], an OUT and an IN handler flow, and a
//! transport, combined into the two message exchange patterns.

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::codec::{build_envelope, parse_response, CodecError, Envelope, ResponsePayload};
use crate::mockserver::MockServer;
use crate::model::{FaultInfo, Parameter, Request, Value, Violation};
use crate::pipeline::{
    addressing_handler, arrange, execute_flow, Direction, FlowConfig, FlowOutcome, HandlerSpec,
    MessageContext, PipelineError,
};
use crate::transport::{
    HttpTransport, LoopbackTransport, Transport, TransportRequest, TransportStatus, DEFAULT_TIMEOUT,
};
use crate::wsdl::{validate_request, ServiceDescription, WsdlError};

/// Name of the parameter that carries a fault when faults are not raised.
pub const FAULT_PARAMETER: &str = "fault";

#[derive(Clone)]
pub enum TransportSelection {
    Http,
    Loopback(Arc<MockServer>),
    Custom(Arc<dyn Transport>),
}

impl TransportSelection {
    fn instantiate(&self) -> Arc<dyn Transport> {
        match self {
            TransportSelection::Http => Arc::new(HttpTransport),
            TransportSelection::Loopback(host) => {
                Arc::new(LoopbackTransport::new(Arc::clone(host)))
            }
            TransportSelection::Custom(t) => Arc::clone(t),
        }
    }
}

impl fmt::Debug for TransportSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransportSelection::Http => f.write_str("Http"),
            TransportSelection::Loopback(_) => f.write_str("Loopback"),
            TransportSelection::Custom(_) => f.write_str("Custom"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub transport: TransportSelection,
    pub timeout: Duration,
    pub out_flow: FlowConfig,
    pub in_flow: FlowConfig,
    pub out_handlers: Vec<HandlerSpec>,
    pub in_handlers: Vec<HandlerSpec>,
    /// Installs the built-in WS-Addressing handler in the OUT flow.
    pub addressing: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            transport: TransportSelection::Http,
            timeout: DEFAULT_TIMEOUT,
            out_flow: FlowConfig::default_out(),
            in_flow: FlowConfig::default_in(),
            out_handlers: Vec::new(),
            in_handlers: Vec::new(),
            addressing: true,
        }
    }
}

impl EngineConfig {
    pub fn loopback(host: Arc<MockServer>) -> Self {
        EngineConfig {
            transport: TransportSelection::Loopback(host),
            ..Self::default()
        }
    }

    pub fn with_out_handler(mut self, h: HandlerSpec) -> Self {
        self.out_handlers.push(h);
        self
    }

    pub fn with_in_handler(mut self, h: HandlerSpec) -> Self {
        self.in_handlers.push(h);
        self
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("transport failed: {0}")]
    TransportFailed(String),
    #[error("SOAP fault: {0}")]
    Fault(FaultInfo),
    #[error("validation failed: {}", crate::model::join_violations(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("cannot decode response: {0}")]
    Decode(CodecError),
    #[error(transparent)]
    Wsdl(#[from] WsdlError),
}

impl From<CodecError> for EngineError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::ValidationFailed(v) => EngineError::ValidationFailed(v),
            CodecError::InvalidRequest(m) => EngineError::InvalidRequest(m),
            other => EngineError::Decode(other),
        }
    }
}

/// Executes one request. Not shared between threads while a call runs, but
/// `Send` so it can be built on one thread and used on another.
#[derive(Clone)]
pub struct Engine {
    request: Request,
    transport: Arc<dyn Transport>,
    timeout: Duration,
    out_handlers: Vec<HandlerSpec>,
    in_handlers: Vec<HandlerSpec>,
    service_description: Option<ServiceDescription>,
    last_out_trace: Vec<String>,
    last_in_trace: Vec<String>,
    diagnostics: String,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("request", &self.request)
            .field("out_order", &self.out_order())
            .field("in_order", &self.in_order())
            .finish_non_exhaustive()
    }
}

/// Validates `request` and resolves both handler orders; sends nothing.
pub fn create_engine(request: Request, config: EngineConfig) -> Result<Engine, EngineError> {
    for (what, value) in [
        ("operation", request.operation()),
        ("namespace", request.namespace()),
        ("endpoint", request.endpoint()),
    ] {
        if value.is_empty() {
            return Err(EngineError::InvalidRequest(format!("{what} not set")));
        }
    }
    if config.timeout.is_zero() {
        return Err(EngineError::InvalidRequest(
            "timeout must be positive".into(),
        ));
    }
    let mut out_handlers = config.out_handlers;
    if config.addressing {
        out_handlers.push(addressing_handler());
    }
    Ok(Engine {
        out_handlers: arrange(&config.out_flow, &out_handlers)?,
        in_handlers: arrange(&config.in_flow, &config.in_handlers)?,
        transport: config.transport.instantiate(),
        timeout: config.timeout,
        request,
        service_description: None,
        last_out_trace: Vec::new(),
        last_in_trace: Vec::new(),
        diagnostics: String::new(),
    })
}

enum Sent {
    Response(TransportStatus, Option<Vec<u8>>),
    OutAborted(FaultInfo),
}

impl Engine {
    /// Validates every call against `sd` before anything is sent.
    pub fn with_service_description(mut self, sd: ServiceDescription) -> Self {
        self.service_description = Some(sd);
        self
    }

    pub fn request(&self) -> &Request {
        &self.request
    }

    pub fn request_mut(&mut self) -> &mut Request {
        &mut self.request
    }

    pub fn service_description(&self) -> Option<&ServiceDescription> {
        self.service_description.as_ref()
    }

    pub fn out_order(&self) -> Vec<&str> {
        self.out_handlers.iter().map(|h| h.name.as_str()).collect()
    }

    pub fn in_order(&self) -> Vec<&str> {
        self.in_handlers.iter().map(|h| h.name.as_str()).collect()
    }

    /// Handler names run by the OUT flow during the last call.
    pub fn last_out_trace(&self) -> &[String] {
        &self.last_out_trace
    }

    /// Handler names run by the IN flow during the last call.
    pub fn last_in_trace(&self) -> &[String] {
        &self.last_in_trace
    }

    /// Transport notes from the last call.
    pub fn diagnostics(&self) -> &str {
        &self.diagnostics
    }

    /// Request/response call returning the decoded return parameters.
    pub fn out_in_execute(&mut self) -> Result<Vec<Parameter>, EngineError> {
        let (status, body) = match self.send_out()? {
            Sent::OutAborted(fault) => return self.surface_fault(fault),
            Sent::Response(status, body) => (status, body),
        };
        let body = match (status, body) {
            (TransportStatus::Ok | TransportStatus::ServerFault, Some(body)) => body,
            (TransportStatus::Accepted, _) => {
                return Err(EngineError::TransportFailed(
                    "server accepted the message but sent no response".into(),
                ))
            }
            _ => return Err(EngineError::TransportFailed(self.diagnostics.clone())),
        };
        let text = String::from_utf8(body).map_err(|_| {
            EngineError::Decode(CodecError::MalformedXml("response is not UTF-8".into()))
        })?;
        let mut ctx = MessageContext::new(self.request.clone(), Direction::In);
        ctx.envelope = Some(Envelope::parse(&text).map_err(EngineError::Decode)?);
        let outcome = execute_flow(&self.in_handlers, ctx)?;
        self.last_in_trace = outcome.context().trace();
        let ctx = match outcome {
            FlowOutcome::Aborted { fault, .. } => return self.surface_fault(fault),
            FlowOutcome::Completed(ctx) => ctx,
        };
        let envelope = ctx.envelope.expect("IN flow keeps the envelope");
        match parse_response(envelope.raw(), self.request.outputs()).map_err(EngineError::Decode)? {
            ResponsePayload::Params(params) => Ok(params),
            ResponsePayload::Fault(fault) => self.surface_fault(fault),
        }
    }

    /// One-way send. `true` when the server answered 200 or 202; `false`
    /// on a SOAP fault or an OUT-flow abort. The IN flow never runs.
    pub fn out_execute(&mut self) -> Result<bool, EngineError> {
        match self.send_out()? {
            Sent::OutAborted(fault) => {
                self.diagnostics = format!("OUT flow aborted: {fault}");
                Ok(false)
            }
            Sent::Response(TransportStatus::Ok | TransportStatus::Accepted, _) => Ok(true),
            Sent::Response(TransportStatus::ServerFault, _) => Ok(false),
            Sent::Response(TransportStatus::TransportError, _) => {
                Err(EngineError::TransportFailed(self.diagnostics.clone()))
            }
        }
    }

    fn send_out(&mut self) -> Result<Sent, EngineError> {
        self.last_out_trace.clear();
        self.last_in_trace.clear();
        self.diagnostics.clear();
        if let Some(sd) = &self.service_description {
            let violations = validate_request(sd, &self.request)?;
            if !violations.is_empty() {
                return Err(EngineError::ValidationFailed(violations));
            }
        }
        let envelope = build_envelope(&self.request, Vec::new())?;
        let mut ctx = MessageContext::new(self.request.clone(), Direction::Out);
        ctx.envelope = Some(envelope);
        let outcome = execute_flow(&self.out_handlers, ctx)?;
        self.last_out_trace = outcome.context().trace();
        let ctx = match outcome {
            FlowOutcome::Aborted { fault, .. } => return Ok(Sent::OutAborted(fault)),
            FlowOutcome::Completed(ctx) => ctx,
        };
        let body = match &ctx.envelope {
            Some(env) => env.raw().as_bytes().to_vec(),
            None => {
                return Err(EngineError::InvalidRequest(
                    "OUT flow removed the envelope".into(),
                ))
            }
        };
        let mut t = TransportRequest::new(ctx.request.endpoint(), ctx.request.action(), body)
            .with_timeout(self.timeout);
        t.headers = ctx.transport_headers;
        let resp = self.transport.send(&t);
        self.diagnostics = resp.diagnostics;
        Ok(Sent::Response(resp.status, resp.body))
    }

    fn surface_fault(&mut self, fault: FaultInfo) -> Result<Vec<Parameter>, EngineError> {
        if self.request.raise_on_fault() {
            return Err(EngineError::Fault(fault));
        }
        Ok(vec![fault_parameter(&fault)])
    }
}

/// The `fault` record returned in place of outputs when faults are not
/// raised.
pub fn fault_parameter(fault: &FaultInfo) -> Parameter {
    Parameter::new(
        FAULT_PARAMETER,
        Value::Record(vec![
            Parameter::new("fault_code", Value::text(&fault.fault_code)),
            Parameter::new("fault_string", Value::text(&fault.fault_string)),
        ]),
    )
}
