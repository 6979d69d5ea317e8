//! Preparing a call and executing it either through the service manager
//! or directly against the engine API.

use soapforge_core::registry::{
    ParameterService, RequestService, ENGINE_SERVICE, PARAMETER_SERVICE, REQUEST_SERVICE,
};
use soapforge_core::{
    bind_request, create_engine, validate_request, Collection, EngineConfig, MaxOccurs, Mep,
    Parameter, Request, ServiceDescription, ServiceManager, UnoService, UnoValue, Value, ValueKind,
};

use crate::CliError;

/// A fully prepared request plus what is needed to execute it.
#[derive(Debug, Clone)]
pub struct CallPlan {
    pub request: Request,
    pub mep: Mep,
    pub description: Option<ServiceDescription>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallOutcome {
    Returned(Vec<Parameter>),
    /// One-way delivery; false when the service answered with a fault.
    Delivered(bool),
}

/// Splits `name=value` arguments.
pub fn split_params(raw: &[String]) -> Result<Vec<(String, String)>, CliError> {
    raw.iter()
        .map(|p| {
            p.split_once('=')
                .map(|(n, v)| (n.to_string(), v.to_string()))
                .ok_or_else(|| CliError::Usage(format!("--param expects NAME=VALUE, got {p:?}")))
        })
        .collect()
}

/// Parses command-line text as a value of `kind`.
pub fn parse_value(name: &str, kind: ValueKind, raw: &str) -> Result<Value, CliError> {
    let bad = || CliError::Usage(format!("parameter {name}: {raw:?} is not a valid {kind}"));
    Ok(match kind {
        ValueKind::Boolean => match raw {
            "true" | "1" => Value::Boolean(true),
            "false" | "0" => Value::Boolean(false),
            _ => return Err(bad()),
        },
        ValueKind::Integer => Value::Integer(raw.trim().parse().map_err(|_| bad())?),
        ValueKind::Decimal => {
            let d: f64 = raw.trim().parse().map_err(|_| bad())?;
            if !d.is_finite() {
                return Err(bad());
            }
            Value::Decimal(d)
        }
        _ => Value::text(raw),
    })
}

/// Groups repeated names, keeping first-appearance order.
fn grouped(params: &[(String, String)]) -> Vec<(&str, Vec<&str>)> {
    let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
    for (name, value) in params {
        match out.iter_mut().find(|(n, _)| n == name) {
            Some((_, values)) => values.push(value),
            None => out.push((name, vec![value])),
        }
    }
    out
}

/// Binds `operation` from a service description and fills its inputs.
pub fn plan_from_wsdl(
    sd: &ServiceDescription,
    operation: &str,
    endpoint: Option<&str>,
    params: &[(String, String)],
    nulls: &[String],
) -> Result<CallPlan, CliError> {
    let op = sd.operation(operation)?;
    let part = |name: &str| {
        op.inputs.iter().find(|p| p.name == name).ok_or_else(|| {
            CliError::Usage(format!("operation {operation} has no input part {name:?}"))
        })
    };
    let mut request = bind_request(sd, operation)?;
    if let Some(endpoint) = endpoint {
        request.set_endpoint(endpoint)?;
    }
    for (name, raw) in grouped(params) {
        let part = part(name)?;
        let values = raw
            .iter()
            .map(|r| parse_value(name, part.kind, r))
            .collect::<Result<Vec<_>, _>>()?;
        let value = if part.max_occurs.is_repeatable() {
            Value::Sequence(values)
        } else if values.len() == 1 {
            values.into_iter().next().expect("one value")
        } else {
            return Err(CliError::Usage(format!(
                "parameter {name} given {} times but occurs at most once",
                values.len()
            )));
        };
        request.set_input_value(name, value)?;
    }
    for name in nulls {
        part(name)?;
        if params.iter().any(|(n, _)| n == name) {
            return Err(CliError::Usage(format!(
                "parameter {name} given both a value and --null"
            )));
        }
        request.set_input_value(name, Value::Null)?;
    }
    let violations = validate_request(sd, &request)?;
    if !violations.is_empty() {
        return Err(CliError::Validation(violations));
    }
    Ok(CallPlan {
        request,
        mep: op.mep,
        description: Some(sd.clone()),
    })
}

/// Builds a request without a service description. Every input is text and
/// results come back untyped.
pub fn plan_ad_hoc(
    operation: &str,
    namespace: &str,
    action: &str,
    endpoint: &str,
    params: &[(String, String)],
    mep: Mep,
) -> Result<CallPlan, CliError> {
    let mut request = Request::new();
    request.set_target(operation, namespace, "m", action, endpoint)?;
    for (name, raw) in grouped(params) {
        let p = match raw.as_slice() {
            [one] => Parameter::new(name, Value::text(*one)),
            many => Parameter::new(
                name,
                Value::Sequence(many.iter().map(|s| Value::text(*s)).collect()),
            )
            .with_occurs(1, MaxOccurs::Unbounded),
        };
        request.add_parameter(Collection::Input, p)?;
    }
    Ok(CallPlan {
        request,
        mep,
        description: None,
    })
}

pub fn execute_direct(plan: &CallPlan, config: EngineConfig) -> Result<CallOutcome, CliError> {
    let mut engine = create_engine(plan.request.clone(), config)?;
    if let Some(sd) = &plan.description {
        engine = engine.with_service_description(sd.clone());
    }
    Ok(match plan.mep {
        Mep::InOut => CallOutcome::Returned(engine.out_in_execute()?),
        Mep::InOnly => CallOutcome::Delivered(engine.out_execute()?),
    })
}

fn call(
    service: &mut dyn UnoService,
    method: &str,
    args: Vec<UnoValue>,
) -> Result<UnoValue, CliError> {
    service.invoke(method, args).map_err(CliError::from)
}

fn text(s: &str) -> Vec<UnoValue> {
    vec![UnoValue::Text(s.to_string())]
}

/// Wraps `p` in a fresh parameter handle and hands it to `method`.
fn pass_parameter(
    manager: &ServiceManager,
    request: &mut dyn UnoService,
    method: &str,
    p: &Parameter,
) -> Result<(), CliError> {
    let mut handle = manager.create_instance(PARAMETER_SERVICE)?;
    let slot = handle.downcast_mut::<ParameterService>().ok_or_else(|| {
        CliError::Internal(format!("{PARAMETER_SERVICE} is not a parameter service"))
    })?;
    slot.parameter = p.clone();
    call(
        request,
        method,
        vec![UnoValue::Parameter(slot.parameter.clone())],
    )?;
    Ok(())
}

/// Runs the plan through dynamically created service handles: request,
/// its target, parameters and return templates, engine, bind, execute.
pub fn execute_via_registry(
    plan: &CallPlan,
    manager: &ServiceManager,
) -> Result<CallOutcome, CliError> {
    let r = &plan.request;
    let mut request = manager.create_instance(REQUEST_SERVICE)?;
    call(request.as_mut(), "setOperation", text(r.operation()))?;
    call(request.as_mut(), "setNamespace", text(r.namespace()))?;
    call(request.as_mut(), "setPrefix", text(r.prefix()))?;
    call(request.as_mut(), "setAction", text(r.action()))?;
    call(request.as_mut(), "setEndpoint", text(r.endpoint()))?;
    call(
        request.as_mut(),
        "setExceptionOnSOAPFault",
        vec![UnoValue::Boolean(r.raise_on_fault())],
    )?;

    for p in r.inputs() {
        pass_parameter(manager, request.as_mut(), "addParameter", p)?;
    }
    for p in r.outputs() {
        pass_parameter(manager, request.as_mut(), "addReturnParameter", p)?;
    }

    let snapshot = request
        .downcast_ref::<RequestService>()
        .ok_or_else(|| CliError::Internal(format!("{REQUEST_SERVICE} is not a request service")))?
        .request
        .clone();
    let mut engine = manager.create_instance(ENGINE_SERVICE)?;
    call(
        engine.as_mut(),
        "Axis2WebService",
        vec![UnoValue::Request(snapshot)],
    )?;

    let (method, expect_params) = match plan.mep {
        Mep::InOut => ("outInExecute", true),
        Mep::InOnly => ("outExecute", false),
    };
    match (call(engine.as_mut(), method, vec![])?, expect_params) {
        (UnoValue::Parameters(ps), true) => Ok(CallOutcome::Returned(ps)),
        (UnoValue::Boolean(ok), false) => Ok(CallOutcome::Delivered(ok)),
        (other, _) => Err(CliError::Internal(format!("{method} returned {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use soapforge_core::mockserver::{ECHO_WSDL, MARKET_WSDL};
    use soapforge_core::{parse_wsdl, Violation};

    fn params(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs
            .iter()
            .map(|(n, v)| (n.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn values_follow_the_part_kind() {
        let sd = parse_wsdl(ECHO_WSDL).unwrap();
        let plan = plan_from_wsdl(
            &sd,
            "Echo",
            None,
            &params(&[
                ("msg", "hi"),
                ("count", "3"),
                ("tags", "a"),
                ("tags", "b"),
                ("urgent", "true"),
            ]),
            &[],
        )
        .unwrap();
        let r = &plan.request;
        let get = |n| r.get_parameter(Collection::Input, n).unwrap().value.clone();
        assert_eq!(get("count"), Value::Integer(3));
        assert_eq!(
            get("tags"),
            Value::Sequence(vec![Value::text("a"), Value::text("b")])
        );
        assert_eq!(get("urgent"), Value::Boolean(true));
    }

    #[test]
    fn bad_input_is_a_usage_error() {
        let sd = parse_wsdl(ECHO_WSDL).unwrap();
        for ps in [
            params(&[("msg", "a"), ("count", "three")]),
            params(&[("msg", "a"), ("msg", "b")]),
            params(&[("msg", "a"), ("colour", "red")]),
        ] {
            assert!(
                matches!(
                    plan_from_wsdl(&sd, "Echo", None, &ps, &[]),
                    Err(CliError::Usage(_))
                ),
                "{ps:?}"
            );
        }
        assert!(split_params(&["novalue".to_string()]).is_err());
    }

    #[test]
    fn explicit_nil_for_nillable_parts() {
        let sd = parse_wsdl(ECHO_WSDL).unwrap();
        let plan = plan_from_wsdl(
            &sd,
            "Echo",
            None,
            &params(&[("msg", "a")]),
            &["urgent".into()],
        )
        .unwrap();
        let urgent = plan
            .request
            .get_parameter(Collection::Input, "urgent")
            .unwrap();
        assert_eq!((urgent.value.clone(), urgent.filled), (Value::Null, true));
        let err = plan_from_wsdl(&sd, "Echo", None, &params(&[("msg", "a")]), &["msg".into()])
            .unwrap_err();
        assert_eq!(err.exit_code(), 2, "{err}");
    }

    #[test]
    fn missing_symbol_is_a_validation_error() {
        let sd = parse_wsdl(MARKET_WSDL).unwrap();
        match plan_from_wsdl(&sd, "GetQuote", None, &[], &[]) {
            Err(CliError::Validation(v)) => {
                assert_eq!(v, [Violation::MissingPart("symbol".into())])
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ad_hoc_plans_carry_text() {
        let plan = plan_ad_hoc(
            "Echo",
            "urn:x",
            "urn:x:Echo",
            "http://h/e",
            &params(&[("a", "1"), ("a", "2")]),
            Mep::InOut,
        )
        .unwrap();
        assert_eq!(
            plan.request.inputs()[0].value,
            Value::Sequence(vec![Value::text("1"), Value::text("2")])
        );
    }
}
