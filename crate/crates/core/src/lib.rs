//! Embeddable SOAP 1.1 client engine.
//!
//! The engine binds a [`Request`] (target descriptor plus typed parameters),
//! serializes it into an envelope, runs it through phase-ordered handler
//! pipelines, sends it over a pluggable transport, and decodes the response
//! into return [`Parameter`]s or a [`FaultInfo`]. WSDL documents can be used
//! to bind and validate requests; a service manager instantiates the engine,
//! request and parameter services by name; and a mock SOAP host serves
//! deterministic test services over HTTP or in-process loopback.

pub mod codec;
pub mod engine;
pub mod mockserver;
pub mod model;
pub mod pipeline;
pub mod registry;
pub mod transport;
pub mod wsdl;

pub use codec::{
    build_envelope, canonical_form, parse_response, CodecError, Envelope, HeaderBlock, QName,
    ResponsePayload,
};
pub use engine::{
    create_engine, fault_parameter, Engine, EngineConfig, EngineError, TransportSelection,
};
pub use mockserver::{
    MockError, MockHttpRequest, MockHttpResponse, MockServer, MockService, RunningServer,
};
pub use model::{
    validate_occurrence, Collection, FaultInfo, MaxOccurs, ModelError, Parameter, Request, Value,
    ValueKind, Violation,
};
pub use pipeline::{
    arrange, execute_flow, resolve_order, Direction, FlowConfig, FlowOutcome, HandlerOutcome,
    HandlerSpec, MessageContext, PipelineError, Placement,
};
pub use registry::{
    parse_idl, IdlError, InterfaceDef, MethodSig, RegistryError, ServiceManager, TypeRef,
    UnoService, UnoValue,
};
pub use transport::{
    http_send, loopback_send, HttpTransport, LoopbackTransport, Transport, TransportRequest,
    TransportResponse, TransportStatus,
};
pub use wsdl::{
    bind_request, parse_wsdl, validate_request, Mep, OperationSig, PartSig, ServiceDescription,
    WsdlError,
};
