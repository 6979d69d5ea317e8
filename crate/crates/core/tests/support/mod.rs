//! Generators and independent oracles shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use proptest::collection::vec;
use proptest::prelude::*;
use soapforge_core::model::{MaxOccurs, Parameter, Request, Value};
use soapforge_core::pipeline::{FlowConfig, HandlerSpec, Placement};
use soapforge_core::Direction;

pub const NAMESPACES: [&str; 4] = [
    "urn:a",
    "urn:b",
    "http://example.com/ns?x=1&y=2",
    "urn:\u{fc}ber",
];
pub const PREFIXES: [&str; 4] = ["p", "ns0", "m", "tns"];

pub fn ncname() -> impl Strategy<Value = String> {
    "[a-zA-Z_\u{e9}][a-zA-Z0-9_.\u{e9}-]{0,7}"
}

pub fn text() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => "\\PC{0,12}",
        1 => Just(" a\tb\r\nc ".to_string()),
        1 => Just("<&>\"']]>".to_string()),
        1 => Just(String::new()),
        1 => Just("   ".to_string()),
    ]
}

fn decimal() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |d| d.is_finite()),
        Just(78.65),
        Just(-21.59),
        Just(0.1 + 0.2),
    ]
}

fn scalar() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<bool>().prop_map(Value::Boolean),
        any::<i64>().prop_map(Value::Integer),
        decimal().prop_map(Value::Decimal),
        text().prop_map(Value::Text),
    ]
}

fn namespace() -> impl Strategy<Value = String> {
    prop_oneof![3 => Just(String::new()), 2 => prop::sample::select(NAMESPACES.to_vec()).prop_map(str::to_string)]
}

fn unique_by_name(mut params: Vec<Parameter>) -> Vec<Parameter> {
    let mut seen = std::collections::BTreeSet::new();
    params.retain(|p| seen.insert(p.name.clone()));
    params
}

/// A single (non-sequence) item; records nest up to `depth` more levels.
fn item(depth: u32) -> BoxedStrategy<Value> {
    if depth == 0 {
        prop_oneof![5 => scalar(), 1 => Just(Value::Null)].boxed()
    } else {
        prop_oneof![
            5 => scalar(),
            1 => Just(Value::Null),
            2 => vec(parameter(depth - 1), 0..=3).prop_map(|fs| Value::Record(unique_by_name(fs))),
        ]
        .boxed()
    }
}

/// A parameter whose metadata admits its value.
pub fn parameter(depth: u32) -> BoxedStrategy<Parameter> {
    let single = (item(depth), any::<bool>(), 0u32..=1, any::<bool>()).prop_map(
        |(value, nullable, min, unbounded)| {
            let nullable = nullable || value == Value::Null && min > 0;
            let max = if unbounded {
                MaxOccurs::Unbounded
            } else {
                MaxOccurs::Bounded(1)
            };
            (value, nullable, min, max)
        },
    );
    let sequence = (
        vec(item(depth), 0..=3),
        any::<bool>(),
        any::<prop::sample::Index>(),
        0u32..3,
    )
        .prop_map(|(items, nullable, min_pick, slack)| {
            let len = items.len() as u32;
            let min = min_pick.index(len as usize + 1) as u32;
            let max = if slack == 0 {
                MaxOccurs::Unbounded
            } else {
                MaxOccurs::Bounded(len.max(2) + slack - 1)
            };
            (Value::Sequence(items), nullable, min, max)
        });
    (
        ncname(),
        namespace(),
        prop_oneof![3 => single, 1 => sequence],
    )
        .prop_map(|(name, ns, (value, nullable, min, max))| {
            Parameter::new(name, value)
                .with_namespace(ns)
                .with_nullable(nullable)
                .with_occurs(min, max)
        })
        .boxed()
}

/// Blanks namespaces that merely restate the enclosing one, which is how
/// the decoder reports them.
pub fn normalize_namespaces(params: &mut [Parameter], enclosing: &str) {
    for p in params {
        if p.namespace == enclosing {
            p.namespace.clear();
        }
        let resolved = p.resolved_namespace(enclosing).to_string();
        let mut visit = |v: &mut Value| {
            if let Value::Record(fields) = v {
                normalize_namespaces(fields, &resolved);
            }
        };
        match &mut p.value {
            Value::Sequence(items) => items.iter_mut().for_each(&mut visit),
            v => visit(v),
        }
    }
}

/// A target plus up to five inputs, nesting depth at most three.
pub fn request() -> impl Strategy<Value = Request> {
    (
        ncname(),
        prop::sample::select(NAMESPACES.to_vec()),
        prop::sample::select(PREFIXES.to_vec()),
        vec(parameter(3), 0..=5),
    )
        .prop_map(|(op, ns, prefix, params)| {
            let mut params = unique_by_name(params);
            normalize_namespaces(&mut params, ns);
            let mut r = Request::new();
            r.set_target(&op, ns, prefix, "urn:action", "http://127.0.0.1:8190/echo")
                .expect("generated target is valid");
            for p in params {
                r.add_parameter(soapforge_core::Collection::Input, p)
                    .expect("generated parameter is valid");
            }
            r
        })
}

/// Deepest nesting of records/sequences below a parameter list.
pub fn depth(params: &[Parameter]) -> usize {
    fn value_depth(v: &Value) -> usize {
        match v {
            Value::Record(fs) => 1 + depth(fs),
            Value::Sequence(items) => items.iter().map(value_depth).max().unwrap_or(0),
            _ => 0,
        }
    }
    params
        .iter()
        .map(|p| value_depth(&p.value))
        .max()
        .unwrap_or(0)
}

pub const PHASES: [&str; 3] = ["P0", "P1", "P2"];

#[derive(Debug, Clone)]
pub struct RawHandler {
    pub phase: usize,
    pub end: u8,
    pub refs: Vec<(bool, usize)>,
}

/// Up to six handlers over three phases with random placement rules. Rules
/// only reference other handlers in the same phase.
pub fn handler_set() -> impl Strategy<Value = (FlowConfig, Vec<HandlerSpec>)> {
    let raw = (
        0usize..3,
        prop_oneof![4 => Just(0u8), 1 => Just(1u8), 1 => Just(2u8)],
        vec((any::<bool>(), 0usize..6), 0..=3),
    )
        .prop_map(|(phase, end, refs)| RawHandler { phase, end, refs });
    vec(raw, 1..=6).prop_map(|raws| {
        let flow = FlowConfig::new(Direction::Out, PHASES).expect("distinct phases");
        let name = |i: usize| format!("h{i}");
        let handlers = raws
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut h = HandlerSpec::noop(name(i), PHASES[r.phase]);
                h = match r.end {
                    1 => h.phase_first(),
                    2 => h.phase_last(),
                    _ => h,
                };
                for &(before, target) in &r.refs {
                    let target = target % raws.len();
                    if target != i && raws[target].phase == r.phase {
                        h = if before {
                            h.before(name(target))
                        } else {
                            h.after(name(target))
                        };
                    }
                }
                h
            })
            .collect();
        (flow, handlers)
    })
}

/// True when `order` (indices into `handlers`) respects phase order and
/// every placement rule.
pub fn satisfies(flow: &FlowConfig, handlers: &[HandlerSpec], order: &[usize]) -> bool {
    if order.len() != handlers.len() {
        return false;
    }
    let phase_rank = |h: &HandlerSpec| flow.phases.iter().position(|p| *p == h.phase).unwrap();
    let pos = |name: &str| {
        order
            .iter()
            .position(|&i| handlers[i].name == name)
            .unwrap()
    };
    if order
        .windows(2)
        .any(|w| phase_rank(&handlers[w[0]]) > phase_rank(&handlers[w[1]]))
    {
        return false;
    }
    for (k, &i) in order.iter().enumerate() {
        let h = &handlers[i];
        let same_phase: Vec<usize> = (0..order.len())
            .filter(|&j| handlers[order[j]].phase == h.phase)
            .collect();
        for rule in &h.placement {
            let ok = match rule {
                Placement::PhaseFirst => same_phase.first() == Some(&k),
                Placement::PhaseLast => same_phase.last() == Some(&k),
                Placement::Before(t) => k < pos(t),
                Placement::After(t) => k > pos(t),
            };
            if !ok {
                return false;
            }
        }
    }
    true
}

fn next_permutation(xs: &mut [usize]) -> bool {
    let Some(i) = (1..xs.len()).rev().find(|&i| xs[i - 1] < xs[i]) else {
        return false;
    };
    let j = (i..xs.len()).rev().find(|&j| xs[j] > xs[i - 1]).unwrap();
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

/// Exhaustive search over all n! orders, in lexicographic order of
/// registration indices; returns the first satisfying order.
pub fn brute_force_order(flow: &FlowConfig, handlers: &[HandlerSpec]) -> Option<Vec<String>> {
    let mut perm: Vec<usize> = (0..handlers.len()).collect();
    loop {
        if satisfies(flow, handlers, &perm) {
            return Some(perm.iter().map(|&i| handlers[i].name.clone()).collect());
        }
        if !next_permutation(&mut perm) {
            return None;
        }
    }
}

pub fn indices_of(handlers: &[HandlerSpec], names: &[String]) -> Vec<usize> {
    names
        .iter()
        .map(|n| handlers.iter().position(|h| h.name == *n).unwrap())
        .collect()
}

/// Turns a generated request into an Echo call whose output templates are
/// its own inputs, so the echoed response decodes to equal values.
pub fn as_echo_call(r: &Request) -> Request {
    let mut echo = Request::new();
    echo.set_target(
        "Echo",
        soapforge_core::mockserver::ECHO_NS,
        r.prefix(),
        "urn:soapforge:echo:Echo",
        "http://127.0.0.1:8190/echo",
    )
    .expect("valid echo target");
    for p in r.inputs() {
        echo.add_parameter(soapforge_core::Collection::Input, p.clone())
            .unwrap();
        echo.add_parameter(soapforge_core::Collection::Output, p.clone())
            .unwrap();
    }
    echo
}

fn envelope_for(op: &str, ns: &str, params: Vec<Parameter>) -> Vec<u8> {
    let mut r = Request::new();
    r.set_target(op, ns, "p", "", "http://127.0.0.1:8190/")
        .unwrap();
    for p in params {
        r.add_parameter(soapforge_core::Collection::Input, p)
            .unwrap();
    }
    soapforge_core::build_envelope(&r, vec![])
        .unwrap()
        .into_raw()
        .into_bytes()
}

/// (path, SOAPAction, body) triples covering every built-in mock service,
/// both MEPs, faults, and malformed input.
pub fn differential_cases() -> Vec<(String, String, Vec<u8>)> {
    use soapforge_core::mockserver::{market_rows, ECHO_NS, FAULT_NS, MARKET_NS};
    let text = |n: &str, v: &str| Parameter::new(n, Value::text(v));
    let mut cases = vec![
        (
            "/echo",
            "urn:soapforge:echo:Echo",
            envelope_for("Echo", ECHO_NS, vec![text("msg", "hi")]),
        ),
        (
            "/echo",
            "urn:soapforge:echo:Echo",
            envelope_for(
                "Echo",
                ECHO_NS,
                vec![
                    text("msg", "a & b <c>"),
                    Parameter::new(
                        "tags",
                        Value::Sequence(vec![Value::text("x"), Value::text("y")]),
                    )
                    .with_occurs(0, MaxOccurs::Unbounded),
                    Parameter::new("urgent", Value::Null).with_nullable(true),
                ],
            ),
        ),
        (
            "/echo",
            "urn:soapforge:echo:Ping",
            envelope_for("Ping", ECHO_NS, vec![]),
        ),
        (
            "/echo",
            "urn:soapforge:echo:Notify",
            envelope_for("Notify", ECHO_NS, vec![text("message", "m")]),
        ),
        ("/echo", "", envelope_for("Missing", ECHO_NS, vec![])),
        ("/echo", "", envelope_for("Echo", "urn:wrong", vec![])),
        ("/fault", "", envelope_for("Anything", FAULT_NS, vec![])),
        (
            "/market",
            "urn:market:GetQuote",
            envelope_for("GetQuote", MARKET_NS, vec![text("symbol", "NO SUCH CO")]),
        ),
        (
            "/market",
            "urn:market:GetQuote",
            envelope_for("GetQuote", MARKET_NS, vec![]),
        ),
        ("/market", "", b"garbage".to_vec()),
        ("/market", "", b"<unclosed>".to_vec()),
        ("/nowhere", "", envelope_for("Echo", ECHO_NS, vec![])),
    ];
    for row in market_rows() {
        cases.push((
            "/market",
            "urn:market:GetQuote",
            envelope_for("GetQuote", MARKET_NS, vec![text("symbol", &row.symbol)]),
        ));
    }
    cases
        .into_iter()
        .map(|(p, a, b)| (p.to_string(), a.to_string(), b))
        .collect()
}
