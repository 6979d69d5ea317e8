//! Acceptance suite: one PASS/FAIL line per criterion. Runs without the
//! libtest harness so the lines are always visible.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use soapforge_core::mockserver::{market_rows, ECHO_WSDL, FAULT_NS, MARKET_WSDL};
use soapforge_core::pipeline::{HandlerOutcome, HandlerSpec, PipelineError};
use soapforge_core::registry::{ENGINE_IDL, REQUEST_IDL};
use soapforge_core::{
    bind_request, build_envelope, canonical_form, create_engine, http_send, loopback_send,
    parse_idl, parse_response, parse_wsdl, resolve_order, validate_request, Collection,
    EngineConfig, EngineError, MockServer, Parameter, Request, ResponsePayload, TransportRequest,
    Value, ValueKind, Violation,
};

const GOLDEN: &str = include_str!("golden/market.csv");
const MARKET_WSDL_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/market.wsdl");
const ECHO_WSDL_PATH: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/fixtures/echo.wsdl");

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn runner(cases: u32) -> TestRunner {
    TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    )
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = soapforge_cli::run(
        std::iter::once("soapforge").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (
        code,
        String::from_utf8_lossy(&out).into_owned(),
        String::from_utf8_lossy(&err).into_owned(),
    )
}

fn host() -> Arc<MockServer> {
    Arc::new(MockServer::with_builtin_services())
}

fn market_table() -> Verdict {
    let symbols: Vec<String> = market_rows().iter().map(|r| r.symbol.clone()).collect();
    let mut args = vec!["market-data", "--transport", "loopback", "--output", "csv"];
    args.extend(symbols.iter().map(String::as_str));
    let started = Instant::now();
    let (code, out, err) = cli(&args);
    let elapsed = started.elapsed();
    if code != 0 {
        return Err(format!("exit {code}: {err}"));
    }
    if out != GOLDEN {
        let first = out.lines().zip(GOLDEN.lines()).find(|(a, b)| a != b);
        return Err(format!(
            "output differs from golden file, first mismatch {first:?}"
        ));
    }
    if elapsed.as_secs_f64() >= 5.0 {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!(
        "{} rows identical to the golden file in {:.0} ms",
        symbols.len(),
        elapsed.as_secs_f64() * 1e3
    ))
}

fn kinds_in(params: &[Parameter], seen: &mut BTreeSet<String>) {
    for p in params {
        let mut stack = vec![&p.value];
        while let Some(v) = stack.pop() {
            seen.insert(v.kind().to_string());
            match v {
                Value::Sequence(items) => stack.extend(items),
                Value::Record(fields) => stack.extend(fields.iter().map(|f| &f.value)),
                _ => {}
            }
        }
    }
}

fn codec_round_trip() -> Verdict {
    let seen = Mutex::new(BTreeSet::new());
    let mut runner = runner(1000);
    let result = runner.run(&support::request(), |r| {
        prop_assert!(support::depth(r.inputs()) <= 3);
        kinds_in(r.inputs(), &mut seen.lock().unwrap());
        let env = build_envelope(&r, vec![]).map_err(|e| TestCaseError::fail(e.to_string()))?;
        match parse_response(env.raw(), r.inputs()) {
            Ok(ResponsePayload::Params(ps)) => prop_assert_eq!(ps, r.inputs().to_vec()),
            other => prop_assert!(false, "{other:?}"),
        }
        Ok(())
    });
    result.map_err(|e| e.to_string())?;
    let seen = seen.into_inner().unwrap();
    if seen.len() != 7 {
        return Err(format!("generator covered only {seen:?}"));
    }
    Ok("1000 requests, 0 failures, 7 value kinds covered".into())
}

fn pipeline_oracle() -> Verdict {
    let rejected = AtomicUsize::new(0);
    let mut runner = runner(500);
    runner
        .run(&support::handler_set(), |(flow, handlers)| {
            let oracle = support::brute_force_order(&flow, &handlers);
            match (resolve_order(&flow, &handlers), oracle) {
                (Ok(order), Some(expected)) => {
                    prop_assert!(support::satisfies(
                        &flow,
                        &handlers,
                        &support::indices_of(&handlers, &order)
                    ));
                    prop_assert_eq!(order, expected);
                }
                (Err(PipelineError::Cycle { .. } | PipelineError::Conflict { .. }), None) => {
                    rejected.fetch_add(1, Ordering::Relaxed);
                }
                (got, want) => prop_assert!(false, "resolve_order gave {got:?}, oracle {want:?}"),
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!(
        "500 handler sets, 0 mismatches ({} unsatisfiable)",
        rejected.into_inner()
    ))
}

fn counting(name: &str, phase: &str, hits: &Arc<AtomicUsize>) -> HandlerSpec {
    let hits = Arc::clone(hits);
    HandlerSpec::new(name, phase, move |_| {
        hits.fetch_add(1, Ordering::SeqCst);
        HandlerOutcome::Continue
    })
}

fn mep_separation() -> Verdict {
    let out_hits = Arc::new(AtomicUsize::new(0));
    let in_hits = Arc::new(AtomicUsize::new(0));
    let config = EngineConfig::loopback(host())
        .with_out_handler(counting("out-trace", "MessageOut", &out_hits))
        .with_in_handler(counting("in-trace", "Dispatch", &in_hits));
    let mut runner = runner(100);
    runner
        .run(&(support::request(), any::<bool>()), |(r, two_way)| {
            let (out0, in0) = (
                out_hits.load(Ordering::SeqCst),
                in_hits.load(Ordering::SeqCst),
            );
            let mut engine = create_engine(support::as_echo_call(&r), config.clone()).unwrap();
            if two_way {
                engine
                    .out_in_execute()
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert_eq!(engine.last_in_trace(), ["in-trace"]);
                prop_assert_eq!(in_hits.load(Ordering::SeqCst), in0 + 1);
            } else {
                prop_assert!(engine
                    .out_execute()
                    .map_err(|e| TestCaseError::fail(e.to_string()))?);
                prop_assert!(engine.last_in_trace().is_empty());
                prop_assert_eq!(in_hits.load(Ordering::SeqCst), in0);
            }
            prop_assert_eq!(engine.last_out_trace(), ["addressing", "out-trace"]);
            prop_assert_eq!(out_hits.load(Ordering::SeqCst), out0 + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("100 randomized calls, IN flow ran only for request/response".into())
}

fn fault_policy() -> Verdict {
    let run = |raise: bool| {
        let mut r = Request::new();
        r.set_target(
            "Anything",
            FAULT_NS,
            "p",
            "urn:soapforge:fault:Anything",
            "http://127.0.0.1:8190/fault",
        )
        .unwrap();
        r.set_fault_policy(raise);
        let config = EngineConfig::loopback(host())
            .with_out_handler(HandlerSpec::noop("log-out", "MessageOut"))
            .with_in_handler(HandlerSpec::noop("log-in", "Dispatch"));
        let mut engine = create_engine(r, config).unwrap();
        let result = engine.out_in_execute();
        (
            result,
            engine.last_out_trace().to_vec(),
            engine.last_in_trace().to_vec(),
        )
    };
    let (raised, out_a, in_a) = run(true);
    let (returned, out_b, in_b) = run(false);
    if (&out_a, &in_a) != (&out_b, &in_b) {
        return Err(format!(
            "traces differ: {out_a:?}/{in_a:?} vs {out_b:?}/{in_b:?}"
        ));
    }
    let Err(EngineError::Fault(f)) = raised else {
        return Err(format!("raise=true gave {raised:?}"));
    };
    if f.fault_string != "bad input" {
        return Err(format!("faultstring {:?}", f.fault_string));
    }
    match returned {
        Ok(ps) if ps.len() == 1 && ps[0].name == "fault" => {}
        other => return Err(format!("raise=false gave {other:?}")),
    }
    Ok("fault raised or returned as a \"fault\" parameter, traces equal".into())
}

fn transport_differential() -> Verdict {
    let host = host();
    let running = host.serve_http(0).map_err(|e| e.to_string())?;
    let infoset =
        |body: Option<&str>| body.map(|t| canonical_form(t).unwrap_or_else(|_| t.to_string()));
    let cases = support::differential_cases();
    for (path, action, body) in &cases {
        let t = TransportRequest::new(running.url(path), action.clone(), body.clone());
        let (a, b) = (http_send(&t), loopback_send(&t, &host));
        if a.status != b.status || infoset(a.body_text()) != infoset(b.body_text()) {
            return Err(format!(
                "{path} {action}: http {:?} vs loopback {:?}",
                a.status, b.status
            ));
        }
    }
    Ok(format!(
        "{} fixture exchanges equal over HTTP and loopback",
        cases.len()
    ))
}

fn sample(kind: ValueKind) -> Value {
    match kind {
        ValueKind::Boolean => Value::Boolean(false),
        ValueKind::Integer => Value::Integer(7),
        ValueKind::Decimal => Value::Decimal(0.66),
        _ => Value::text("DLF LIMITED"),
    }
}

fn wsdl_binding() -> Verdict {
    let (mut operations, mut deletions) = (0, 0);
    for text in [MARKET_WSDL, ECHO_WSDL] {
        let sd = parse_wsdl(text).map_err(|e| e.to_string())?;
        for (name, op) in &sd.operations {
            let mut r = bind_request(&sd, name).map_err(|e| e.to_string())?;
            for part in &op.inputs {
                let v = sample(part.kind);
                let v = if part.max_occurs.is_repeatable() {
                    Value::Sequence(vec![v; part.min_occurs.max(1) as usize])
                } else {
                    v
                };
                r.set_input_value(&part.name, v)
                    .map_err(|e| e.to_string())?;
            }
            let v = validate_request(&sd, &r).map_err(|e| e.to_string())?;
            if !v.is_empty() {
                return Err(format!("{name}: {v:?}"));
            }
            for part in op.inputs.iter().filter(|p| p.min_occurs > 0) {
                let mut missing = r.clone();
                missing
                    .remove_parameter(Collection::Input, &part.name)
                    .unwrap();
                let v = validate_request(&sd, &missing).map_err(|e| e.to_string())?;
                if v != [Violation::MissingPart(part.name.clone())] {
                    return Err(format!("{name} without {}: {v:?}", part.name));
                }
                deletions += 1;
            }
            operations += 1;
        }
    }
    Ok(format!(
        "{operations} operations bind and validate, {deletions} deletions flip to MissingPart"
    ))
}

fn scripted_calls() -> Vec<Vec<String>> {
    let base = |wsdl: &str, op: &str| -> Vec<String> {
        [
            "call",
            "--transport",
            "loopback",
            "--wsdl",
            wsdl,
            "--operation",
            op,
        ]
        .map(String::from)
        .to_vec()
    };
    let with = |mut v: Vec<String>, extra: &[&str]| {
        v.extend(extra.iter().map(|s| s.to_string()));
        v
    };
    let mut calls: Vec<Vec<String>> = market_rows()
        .iter()
        .map(|row| {
            with(
                base(MARKET_WSDL_PATH, "GetQuote"),
                &["--param", &format!("symbol={}", row.symbol)],
            )
        })
        .collect();
    calls.push(with(
        base(MARKET_WSDL_PATH, "GetQuote"),
        &["--param", "symbol=NO SUCH CO"],
    ));
    calls.push(base(MARKET_WSDL_PATH, "GetQuote"));
    calls.push(with(
        base(ECHO_WSDL_PATH, "Echo"),
        &[
            "--param",
            "msg=a & b",
            "--param",
            "count=2",
            "--param",
            "tags=x",
            "--param",
            "tags=y",
            "--null",
            "urgent",
        ],
    ));
    calls.push(base(ECHO_WSDL_PATH, "Ping"));
    calls.push(with(
        base(ECHO_WSDL_PATH, "Notify"),
        &[
            "--param",
            "message=m",
            "--param",
            "level=1",
            "--param",
            "weight=0.25",
        ],
    ));
    calls.push(
        [
            "call",
            "--transport",
            "loopback",
            "--operation",
            "Anything",
            "--namespace",
            FAULT_NS,
            "--action",
            "urn:soapforge:fault:Anything",
            "--endpoint",
            "http://127.0.0.1:8190/fault",
        ]
        .map(String::from)
        .to_vec(),
    );
    calls
}

fn registry_equivalence() -> Verdict {
    let calls = scripted_calls();
    let mut codes = BTreeSet::new();
    for args in &calls {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let registry = cli(&args);
        let direct = cli(&[args.as_slice(), &["--direct"]].concat());
        if (registry.0, &registry.1) != (direct.0, &direct.1) {
            return Err(format!(
                "{args:?}: registry {registry:?} vs direct {direct:?}"
            ));
        }
        if registry.1.is_empty() && registry.0 != 2 {
            return Err(format!("{args:?}: no output"));
        }
        codes.insert(registry.0);
    }
    Ok(format!(
        "{} scripted calls print identically (exit codes {codes:?})",
        calls.len()
    ))
}

fn idl_golden() -> Verdict {
    let mut counts = Vec::new();
    for text in [ENGINE_IDL, REQUEST_IDL] {
        let iface = parse_idl(text).map_err(|e| e.to_string())?;
        let printed = iface.to_string();
        let again = parse_idl(&printed).map_err(|e| e.to_string())?;
        if again != iface || again.to_string() != printed {
            return Err(format!("{} does not survive print/reparse", iface.name));
        }
        counts.push(iface.methods.len());
    }
    if counts != [3, 12] {
        return Err(format!("method counts {counts:?}"));
    }
    Ok("engine 3 methods, request 12 methods, print/reparse fixpoint holds".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("market table reproduction", market_table),
        ("codec round-trip", codec_round_trip),
        ("pipeline oracle equivalence", pipeline_oracle),
        ("MEP separation", mep_separation),
        ("fault policy toggle", fault_policy),
        ("transport differential", transport_differential),
        ("WSDL binding", wsdl_binding),
        ("registry equivalence", registry_equivalence),
        ("IDL golden test", idl_golden),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match verdict {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
