//! WSDL 1.1 subset: document/literal services with simple-typed parts.
//!
//! Supported shape: `types/schema` top-level `element` declarations whose
//! anonymous `complexType/sequence` lists simple-typed child elements;
//! messages with one `element=` part (or `type=` parts); portType
//! operations; SOAP binding `soapAction`s; and the first service port's
//! `soap:address`.

use std::collections::BTreeMap;

use roxmltree::{Document, Node};
use thiserror::Error;

use crate::model::{Collection, MaxOccurs, Parameter, Request, Value, ValueKind, Violation};

pub const WSDL_NS: &str = "http://schemas.xmlsoap.org/wsdl/";
pub const WSDL_SOAP_NS: &str = "http://schemas.xmlsoap.org/wsdl/soap/";
pub const XSD_NS: &str = "http://www.w3.org/2001/XMLSchema";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mep {
    InOnly,
    InOut,
}

impl std::fmt::Display for Mep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mep::InOnly => "IN_ONLY",
            Mep::InOut => "IN_OUT",
        })
    }
}

/// One message part with its simple type and occurrence constraints.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartSig {
    pub name: String,
    pub kind: ValueKind,
    /// XSD local type name as written, e.g. `string` or `double`.
    pub type_name: String,
    pub min_occurs: u32,
    pub max_occurs: MaxOccurs,
    pub nullable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationSig {
    pub name: String,
    pub soap_action: String,
    pub inputs: Vec<PartSig>,
    pub outputs: Vec<PartSig>,
    pub mep: Mep,
}

/// Parsed, typed view of a WSDL document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceDescription {
    pub target_namespace: String,
    pub service_name: String,
    pub endpoint: String,
    pub operations: BTreeMap<String, OperationSig>,
    /// Non-fatal notes, e.g. ignored extra ports.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WsdlError {
    #[error("malformed WSDL: {0}")]
    MalformedXml(String),
    #[error("unsupported XSD type {0:?}")]
    UnsupportedType(String),
    #[error("no service port with a soap:address location")]
    MissingEndpoint,
    #[error("unknown operation {0:?}")]
    UnknownOperation(String),
}

fn malformed(msg: impl Into<String>) -> WsdlError {
    WsdlError::MalformedXml(msg.into())
}

fn is(node: &Node, ns: &str, local: &str) -> bool {
    node.is_element() && node.tag_name().namespace() == Some(ns) && node.tag_name().name() == local
}

fn children<'a, 'i: 'a>(
    node: Node<'a, 'i>,
    ns: &'a str,
    local: &'a str,
) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |c| is(c, ns, local))
}

fn local_part(qname: &str) -> &str {
    qname.rsplit_once(':').map_or(qname, |(_, l)| l)
}

fn map_type(type_qname: &str) -> Result<ValueKind, WsdlError> {
    match local_part(type_qname) {
        "string" => Ok(ValueKind::Text),
        "int" | "long" => Ok(ValueKind::Integer),
        "float" | "double" => Ok(ValueKind::Decimal),
        "boolean" => Ok(ValueKind::Boolean),
        other => Err(WsdlError::UnsupportedType(other.to_string())),
    }
}

fn parse_occurs(node: Node) -> Result<(u32, MaxOccurs, bool), WsdlError> {
    let min = match node.attribute("minOccurs") {
        None => 1,
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| malformed(format!("bad minOccurs {v:?}")))?,
    };
    let max = match node.attribute("maxOccurs").map(str::trim) {
        None => MaxOccurs::Bounded(1),
        Some("unbounded") => MaxOccurs::Unbounded,
        Some(v) => MaxOccurs::Bounded(
            v.parse()
                .map_err(|_| malformed(format!("bad maxOccurs {v:?}")))?,
        ),
    };
    let nullable = matches!(
        node.attribute("nillable").map(str::trim),
        Some("true" | "1")
    );
    Ok((min, max, nullable))
}

fn part_from_element(el: Node) -> Result<PartSig, WsdlError> {
    let name = el
        .attribute("name")
        .ok_or_else(|| malformed("schema element without name"))?;
    let type_name = el
        .attribute("type")
        .ok_or_else(|| WsdlError::UnsupportedType(format!("{name} (anonymous type)")))?;
    let kind = map_type(type_name)?;
    let (min_occurs, max_occurs, nullable) = parse_occurs(el)?;
    Ok(PartSig {
        name: name.to_string(),
        kind,
        type_name: local_part(type_name).to_string(),
        min_occurs,
        max_occurs,
        nullable,
    })
}

/// Parses a WSDL 1.1 document into a [`ServiceDescription`].
pub fn parse_wsdl(text: &str) -> Result<ServiceDescription, WsdlError> {
    let doc = Document::parse(text).map_err(|e| malformed(e.to_string()))?;
    let defs = doc.root_element();
    if !is(&defs, WSDL_NS, "definitions") {
        return Err(malformed("document element is not wsdl:definitions"));
    }
    let target_namespace = defs
        .attribute("targetNamespace")
        .ok_or_else(|| malformed("definitions lacks targetNamespace"))?
        .to_string();

    // Top-level schema elements: name -> node.
    let mut elements: BTreeMap<&str, Node> = BTreeMap::new();
    for types in children(defs, WSDL_NS, "types") {
        for schema in children(types, XSD_NS, "schema") {
            for el in children(schema, XSD_NS, "element") {
                if let Some(name) = el.attribute("name") {
                    elements.insert(name, el);
                }
            }
        }
    }

    let element_parts = |qname: &str| -> Result<Vec<PartSig>, WsdlError> {
        let local = local_part(qname);
        let el = elements.get(local).ok_or_else(|| {
            malformed(format!("message part references unknown element {local:?}"))
        })?;
        if let Some(t) = el.attribute("type") {
            // A simple-typed top-level element is a single part.
            return Ok(vec![PartSig {
                name: local.to_string(),
                kind: map_type(t)?,
                type_name: local_part(t).to_string(),
                min_occurs: 1,
                max_occurs: MaxOccurs::Bounded(1),
                nullable: false,
            }]);
        }
        let Some(complex) = children(*el, XSD_NS, "complexType").next() else {
            return Ok(Vec::new());
        };
        let mut parts = Vec::new();
        for group in complex
            .children()
            .filter(|c| is(c, XSD_NS, "sequence") || is(c, XSD_NS, "all"))
        {
            for child in group.children().filter(Node::is_element) {
                if !is(&child, XSD_NS, "element") {
                    return Err(WsdlError::UnsupportedType(
                        child.tag_name().name().to_string(),
                    ));
                }
                parts.push(part_from_element(child)?);
            }
        }
        Ok(parts)
    };

    let mut messages: BTreeMap<&str, Vec<PartSig>> = BTreeMap::new();
    for msg in children(defs, WSDL_NS, "message") {
        let name = msg
            .attribute("name")
            .ok_or_else(|| malformed("message without name"))?;
        let mut parts = Vec::new();
        for part in children(msg, WSDL_NS, "part") {
            if let Some(element) = part.attribute("element") {
                parts.extend(element_parts(element)?);
            } else if let Some(t) = part.attribute("type") {
                let pname = part
                    .attribute("name")
                    .ok_or_else(|| malformed("part without name"))?;
                parts.push(PartSig {
                    name: pname.to_string(),
                    kind: map_type(t)?,
                    type_name: local_part(t).to_string(),
                    min_occurs: 1,
                    max_occurs: MaxOccurs::Bounded(1),
                    nullable: false,
                });
            } else {
                return Err(malformed("part has neither element nor type"));
            }
        }
        messages.insert(name, parts);
    }

    let mut actions: BTreeMap<&str, &str> = BTreeMap::new();
    for binding in children(defs, WSDL_NS, "binding") {
        for op in children(binding, WSDL_NS, "operation") {
            let (Some(name), Some(soap_op)) = (
                op.attribute("name"),
                children(op, WSDL_SOAP_NS, "operation").next(),
            ) else {
                continue;
            };
            actions
                .entry(name)
                .or_insert(soap_op.attribute("soapAction").unwrap_or(""));
        }
    }

    let lookup = |io: Node| -> Result<Vec<PartSig>, WsdlError> {
        let m = io
            .attribute("message")
            .ok_or_else(|| malformed("operation message reference missing"))?;
        messages
            .get(local_part(m))
            .cloned()
            .ok_or_else(|| malformed(format!("unknown message {m:?}")))
    };

    let mut operations = BTreeMap::new();
    for port_type in children(defs, WSDL_NS, "portType") {
        for op in children(port_type, WSDL_NS, "operation") {
            let name = op
                .attribute("name")
                .ok_or_else(|| malformed("operation without name"))?;
            let inputs = match children(op, WSDL_NS, "input").next() {
                Some(io) => lookup(io)?,
                None => Vec::new(),
            };
            let output = children(op, WSDL_NS, "output").next();
            let outputs = match output {
                Some(io) => lookup(io)?,
                None => Vec::new(),
            };
            let sig = OperationSig {
                name: name.to_string(),
                soap_action: actions.get(name).copied().unwrap_or("").to_string(),
                inputs,
                outputs,
                mep: if output.is_some() {
                    Mep::InOut
                } else {
                    Mep::InOnly
                },
            };
            if operations.insert(name.to_string(), sig).is_some() {
                return Err(malformed(format!("operation {name:?} declared twice")));
            }
        }
    }

    let mut warnings = Vec::new();
    let mut ports = Vec::new();
    for service in children(defs, WSDL_NS, "service") {
        for port in children(service, WSDL_NS, "port") {
            if let Some(location) = children(port, WSDL_SOAP_NS, "address")
                .next()
                .and_then(|a| a.attribute("location"))
            {
                ports.push((
                    service.attribute("name").unwrap_or(""),
                    port.attribute("name").unwrap_or(""),
                    location,
                ));
            }
        }
    }
    let &(service_name, _, endpoint) = ports.first().ok_or(WsdlError::MissingEndpoint)?;
    for (svc, port, _) in &ports[1..] {
        warnings.push(format!(
            "ignoring port {svc}/{port}; only the first port is used"
        ));
    }
    if url::Url::parse(endpoint).is_err() {
        return Err(WsdlError::MissingEndpoint);
    }

    Ok(ServiceDescription {
        target_namespace,
        service_name: service_name.to_string(),
        endpoint: endpoint.to_string(),
        operations,
        warnings,
    })
}

impl ServiceDescription {
    pub fn operation(&self, name: &str) -> Result<&OperationSig, WsdlError> {
        self.operations
            .get(name)
            .ok_or_else(|| WsdlError::UnknownOperation(name.to_string()))
    }
}

fn skeleton(part: &PartSig) -> Parameter {
    let mut p = Parameter::skeleton(&part.name, part.kind).with_nullable(part.nullable);
    p.min_occurs = part.min_occurs;
    p.max_occurs = part.max_occurs;
    p
}

/// Builds a request for `operation` with the description's target, input
/// skeletons and typed output templates. Target fields set afterwards win.
pub fn bind_request(sd: &ServiceDescription, operation: &str) -> Result<Request, WsdlError> {
    let op = sd.operation(operation)?;
    let mut r = Request::new();
    r.set_target(
        &op.name,
        &sd.target_namespace,
        "p",
        &op.soap_action,
        &sd.endpoint,
    )
    .map_err(|e| malformed(e.to_string()))?;
    for (collection, parts) in [
        (Collection::Input, &op.inputs),
        (Collection::Output, &op.outputs),
    ] {
        for part in parts {
            r.add_parameter(collection, skeleton(part))
                .map_err(|e| malformed(e.to_string()))?;
        }
    }
    Ok(r)
}

/// Checks the request's inputs against the operation's input parts.
pub fn validate_request(
    sd: &ServiceDescription,
    request: &Request,
) -> Result<Vec<Violation>, WsdlError> {
    let op = sd.operation(request.operation())?;
    let mut out = Vec::new();
    for part in &op.inputs {
        let supplied = request
            .inputs()
            .iter()
            .find(|p| p.name == part.name && p.filled);
        let Some(p) = supplied else {
            if part.min_occurs > 0 {
                out.push(Violation::MissingPart(part.name.clone()));
            }
            continue;
        };
        check_part(part, p, &mut out);
    }
    for p in request.inputs() {
        if !op.inputs.iter().any(|part| part.name == p.name) {
            out.push(Violation::UnknownPart(p.name.clone()));
        }
    }
    Ok(out)
}

fn check_part(part: &PartSig, p: &Parameter, out: &mut Vec<Violation>) {
    let field = || part.name.clone();
    let items: Vec<&Value> = match &p.value {
        Value::Sequence(items) => items.iter().collect(),
        Value::Null => {
            if !part.nullable && part.min_occurs > 0 {
                out.push(Violation::NullNotAllowed { field: field() });
            }
            Vec::new()
        }
        v => vec![v],
    };
    if matches!(p.value, Value::Sequence(_)) && !part.max_occurs.is_repeatable() {
        out.push(Violation::SequenceNotAllowed { field: field() });
    }
    let count = p.value.occurrences();
    if p.value != Value::Null
        && (count < part.min_occurs as usize || !part.max_occurs.admits(count))
    {
        out.push(Violation::CountOutOfRange {
            field: field(),
            count,
            min: part.min_occurs,
            max: part.max_occurs,
        });
    }
    for item in items {
        let found = item.kind();
        if found != part.kind && found != ValueKind::Null {
            out.push(Violation::KindMismatch {
                part: field(),
                expected: part.kind,
                found,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MARKET: &str = include_str!("../fixtures/market.wsdl");
    const ECHO: &str = include_str!("../fixtures/echo.wsdl");

    #[test]
    fn market_fixture_parses() {
        let sd = parse_wsdl(MARKET).unwrap();
        assert_eq!(sd.target_namespace, "urn:market");
        assert_eq!(sd.service_name, "MarketDataService");
        assert_eq!(sd.endpoint, "http://127.0.0.1:8190/market");
        assert_eq!(sd.operations.len(), 1);
        let op = &sd.operations["GetQuote"];
        assert_eq!(op.soap_action, "urn:market:GetQuote");
        assert_eq!(op.mep, Mep::InOut);
        assert_eq!(op.inputs.len(), 1);
        assert_eq!(op.inputs[0].kind, ValueKind::Text);
        let outs: Vec<_> = op
            .outputs
            .iter()
            .map(|p| (p.name.as_str(), p.kind))
            .collect();
        assert_eq!(
            outs,
            [
                ("Open", ValueKind::Decimal),
                ("High", ValueKind::Decimal),
                ("Low", ValueKind::Decimal),
                ("Close", ValueKind::Decimal)
            ]
        );
    }

    #[test]
    fn echo_fixture_occurrence_attributes() {
        let sd = parse_wsdl(ECHO).unwrap();
        let echo = &sd.operations["Echo"];
        let tags = echo.inputs.iter().find(|p| p.name == "tags").unwrap();
        assert_eq!(
            (tags.min_occurs, tags.max_occurs),
            (0, MaxOccurs::Unbounded)
        );
        let urgent = echo.inputs.iter().find(|p| p.name == "urgent").unwrap();
        assert!(urgent.nullable);
        assert_eq!(sd.operations["Notify"].mep, Mep::InOnly);
        assert!(sd.operations["Notify"].outputs.is_empty());
        assert_eq!(sd.operations["Ping"].mep, Mep::InOut);
    }

    #[test]
    fn unsupported_type_is_named() {
        let text = MARKET.replace("type=\"xsd:string\"", "type=\"xsd:base64Binary\"");
        assert_eq!(
            parse_wsdl(&text),
            Err(WsdlError::UnsupportedType("base64Binary".into()))
        );
    }

    #[test]
    fn missing_endpoint() {
        let text = MARKET.replace(
            "<soap:address location=\"http://127.0.0.1:8190/market\"/>",
            "",
        );
        assert_eq!(parse_wsdl(&text), Err(WsdlError::MissingEndpoint));
    }

    #[test]
    fn extra_ports_warn() {
        let extra = "<wsdl:port name=\"Second\" binding=\"tns:MarketDataBinding\"><soap:address location=\"http://other/\"/></wsdl:port>";
        let text = MARKET.replace("</wsdl:service>", &format!("{extra}</wsdl:service>"));
        let sd = parse_wsdl(&text).unwrap();
        assert_eq!(sd.endpoint, "http://127.0.0.1:8190/market");
        assert_eq!(sd.warnings.len(), 1);
    }

    #[test]
    fn bind_market_request() {
        let sd = parse_wsdl(MARKET).unwrap();
        let r = bind_request(&sd, "GetQuote").unwrap();
        assert_eq!(r.inputs().len(), 1);
        assert_eq!(r.inputs()[0].name, "symbol");
        assert!(!r.inputs()[0].filled);
        assert_eq!(r.outputs().len(), 4);
        assert_eq!(r.action(), "urn:market:GetQuote");
        assert_eq!(r.namespace(), sd.target_namespace);
        assert_eq!(r.endpoint(), sd.endpoint);
        assert_eq!(
            bind_request(&sd, "Nope"),
            Err(WsdlError::UnknownOperation("Nope".into()))
        );
    }

    #[test]
    fn validate_market_request() {
        let sd = parse_wsdl(MARKET).unwrap();
        let mut r = bind_request(&sd, "GetQuote").unwrap();
        assert_eq!(
            validate_request(&sd, &r).unwrap(),
            [Violation::MissingPart("symbol".into())]
        );

        r.set_input_value("symbol", Value::text("IFCI LTD"))
            .unwrap();
        assert_eq!(validate_request(&sd, &r).unwrap(), []);

        r.set_input_value("symbol", Value::Integer(5)).unwrap();
        assert_eq!(
            validate_request(&sd, &r).unwrap(),
            [Violation::KindMismatch {
                part: "symbol".into(),
                expected: ValueKind::Text,
                found: ValueKind::Integer
            }]
        );

        r.remove_parameter(Collection::Input, "symbol").unwrap();
        r.add_parameter(Collection::Input, Parameter::new("extra", Value::text("x")))
            .unwrap();
        assert_eq!(
            validate_request(&sd, &r).unwrap(),
            [
                Violation::MissingPart("symbol".into()),
                Violation::UnknownPart("extra".into())
            ]
        );
    }
}
