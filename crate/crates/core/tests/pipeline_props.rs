mod support;

use proptest::prelude::*;
use soapforge_core::pipeline::{
    execute_flow, HandlerOutcome, HandlerSpec, MessageContext, PipelineError,
};
use soapforge_core::{resolve_order, Direction, FaultInfo, FlowConfig, FlowOutcome, Request};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    /// The verdict matches exhaustive search, and a returned order is the
    /// first valid order in registration-index lexicographic order.
    #[test]
    fn resolve_order_agrees_with_permutation_oracle((flow, handlers) in support::handler_set()) {
        let oracle = support::brute_force_order(&flow, &handlers);
        match (resolve_order(&flow, &handlers), oracle) {
            (Ok(order), Some(expected)) => {
                prop_assert!(support::satisfies(&flow, &handlers, &support::indices_of(&handlers, &order)));
                prop_assert_eq!(order, expected);
            }
            (Err(PipelineError::Cycle { .. } | PipelineError::Conflict { .. }), None) => {}
            (got, want) => prop_assert!(false, "resolve_order gave {got:?}, oracle {want:?}"),
        }
    }

    #[test]
    fn no_rules_keeps_registration_order(phases in prop::collection::vec(0usize..3, 1..8)) {
        let flow = FlowConfig::new(Direction::In, support::PHASES).unwrap();
        let handlers: Vec<HandlerSpec> = phases
            .iter()
            .enumerate()
            .map(|(i, &p)| HandlerSpec::noop(format!("h{i}"), support::PHASES[p]))
            .collect();
        let order = resolve_order(&flow, &handlers).unwrap();
        let mut expected: Vec<(usize, usize)> = phases.iter().copied().zip(0..).collect();
        expected.sort();
        let expected: Vec<String> = expected.into_iter().map(|(_, i)| format!("h{i}")).collect();
        prop_assert_eq!(order, expected);
    }

    /// The trace lists exactly the handlers run, stopping at the first abort.
    #[test]
    fn trace_stops_at_first_abort(aborts in prop::collection::vec(any::<bool>(), 0..8)) {
        let handlers: Vec<HandlerSpec> = aborts
            .iter()
            .enumerate()
            .map(|(i, &abort)| {
                HandlerSpec::new(format!("h{i}"), "P", move |_| {
                    if abort {
                        HandlerOutcome::Abort(FaultInfo::new("Stop", format!("h{i}")))
                    } else {
                        HandlerOutcome::Continue
                    }
                })
            })
            .collect();
        let outcome = execute_flow(&handlers, MessageContext::new(Request::new(), Direction::Out)).unwrap();
        let first_abort = aborts.iter().position(|&a| a);
        let ran = first_abort.map_or(aborts.len(), |i| i + 1);
        let expected: Vec<String> = (0..ran).map(|i| format!("h{i}")).collect();
        prop_assert_eq!(outcome.context().trace(), expected);
        match (outcome, first_abort) {
            (FlowOutcome::Aborted { fault, .. }, Some(i)) => prop_assert_eq!(fault.fault_string, format!("h{i}")),
            (FlowOutcome::Completed(_), None) => {}
            (other, _) => prop_assert!(false, "unexpected {other:?}"),
        }
    }
}

#[test]
fn oracle_sanity() {
    let flow = FlowConfig::new(Direction::Out, ["P"]).unwrap();
    let hs = [
        HandlerSpec::noop("B", "P"),
        HandlerSpec::noop("A", "P").phase_first(),
        HandlerSpec::noop("C", "P").phase_last(),
    ];
    assert_eq!(
        support::brute_force_order(&flow, &hs).unwrap(),
        ["A", "B", "C"]
    );
    let cyclic = [
        HandlerSpec::noop("A", "P").before("B"),
        HandlerSpec::noop("B", "P").before("A"),
    ];
    assert_eq!(support::brute_force_order(&flow, &cyclic), None);
}
