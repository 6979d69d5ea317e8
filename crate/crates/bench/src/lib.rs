//! Workloads shared by the benchmarks in `benches/`.

use soapforge_core::mockserver::ECHO_NS;
use soapforge_core::pipeline::HandlerSpec;
use soapforge_core::{Collection, FlowConfig, MaxOccurs, Parameter, Request, Value};

/// An echo request carrying `width` text parameters plus one record and
/// one sequence, so every value shape is on the wire.
pub fn echo_request(width: usize) -> Request {
    let mut r = Request::new();
    r.set_target(
        "Echo",
        ECHO_NS,
        "m",
        "urn:soapforge:echo:Echo",
        "http://127.0.0.1:8190/echo",
    )
    .expect("static target");
    for i in 0..width {
        r.add_parameter(
            Collection::Input,
            Parameter::new(format!("p{i}"), Value::text(format!("value {i} & more"))),
        )
        .expect("distinct names");
    }
    let record = Value::Record(vec![
        Parameter::new("open", Value::Decimal(78.65)),
        Parameter::new("volume", Value::Integer(120_000)),
        Parameter::new("active", Value::Boolean(true)),
    ]);
    r.add_parameter(Collection::Input, Parameter::new("quote", record))
        .expect("distinct names");
    let tags = Value::Sequence((0..8).map(|i| Value::text(format!("t{i}"))).collect());
    r.add_parameter(
        Collection::Input,
        Parameter::new("tags", tags).with_occurs(0, MaxOccurs::Unbounded),
    )
    .expect("distinct names");
    r
}

/// Echo request whose output templates mirror its inputs.
pub fn echo_call(width: usize) -> Request {
    let mut r = echo_request(width);
    for p in r.inputs().to_vec() {
        r.add_parameter(Collection::Output, p)
            .expect("distinct names");
    }
    r
}

/// `n` handlers spread over three phases, each ordered after its
/// predecessor in the same phase.
pub fn handler_chain(n: usize) -> (FlowConfig, Vec<HandlerSpec>) {
    let phases = ["P0", "P1", "P2"];
    let flow = FlowConfig::new(soapforge_core::Direction::Out, phases).expect("distinct phases");
    let handlers = (0..n)
        .map(|i| {
            let h = HandlerSpec::noop(format!("h{i}"), phases[i % 3]);
            if i >= 3 {
                h.after(format!("h{}", i - 3))
            } else {
                h
            }
        })
        .collect();
    (flow, handlers)
}
