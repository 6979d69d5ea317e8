//! SOAP 1.1 envelope codec.
//!
//! Request wire layout: the Body holds one wrapper element named after the
//! operation, qualified by the request namespace under the request prefix.
//! Each input parameter becomes a child element in insertion order. A
//! parameter with an empty namespace inherits its parent's namespace and
//! prefix; otherwise it declares a fresh `nsN` prefix on itself. Null values
//! are empty elements carrying `xsi:nil="true"`, sequences repeat the element
//! once per item, and records nest their fields as child elements.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use roxmltree::{Document, Node};
use thiserror::Error;

use crate::model::{format_decimal, FaultInfo, Parameter, Request, Value, ValueKind, Violation};

pub const SOAP_ENV_NS: &str = "http://schemas.xmlsoap.org/soap/envelope/";
pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";
const XML_NS: &str = "http://www.w3.org/XML/1998/namespace";
const XML_DECL: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    #[error("cannot decode {name:?} as {expected}: {text:?}")]
    DecodeError {
        name: String,
        expected: ValueKind,
        text: String,
    },
    #[error("SOAP Body has no child element")]
    EmptyBody,
    #[error("validation failed: {}", crate::model::join_violations(.0))]
    ValidationFailed(Vec<Violation>),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Namespace-qualified element name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QName {
    pub namespace: String,
    pub prefix: String,
    pub local: String,
}

impl QName {
    pub fn new(
        namespace: impl Into<String>,
        prefix: impl Into<String>,
        local: impl Into<String>,
    ) -> Self {
        QName {
            namespace: namespace.into(),
            prefix: prefix.into(),
            local: local.into(),
        }
    }

    /// Same expanded name (namespace + local part); prefixes are ignored.
    pub fn matches(&self, other: &QName) -> bool {
        self.namespace == other.namespace && self.local == other.local
    }
}

/// A simple SOAP header block: element name, attributes and text content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderBlock {
    pub name: QName,
    pub attributes: Vec<(String, String)>,
    pub text: String,
}

impl HeaderBlock {
    pub fn new(name: QName, text: impl Into<String>) -> Self {
        HeaderBlock {
            name,
            attributes: Vec::new(),
            text: text.into(),
        }
    }

    fn write(&self, out: &mut String) {
        let tag = if self.name.prefix.is_empty() {
            self.name.local.clone()
        } else {
            format!("{}:{}", self.name.prefix, self.name.local)
        };
        out.push('<');
        out.push_str(&tag);
        if !self.name.namespace.is_empty() {
            if self.name.prefix.is_empty() {
                write_attr(out, "xmlns", &self.name.namespace);
            } else {
                write_attr(
                    out,
                    &format!("xmlns:{}", self.name.prefix),
                    &self.name.namespace,
                );
            }
        }
        for (k, v) in &self.attributes {
            write_attr(out, k, v);
        }
        if self.text.is_empty() {
            out.push_str("/>");
        } else {
            out.push('>');
            escape_text_into(out, &self.text);
            let _ = write!(out, "</{tag}>");
        }
    }
}

/// A SOAP 1.1 envelope: header blocks, the Body's child, and the full text.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    header_blocks: Vec<HeaderBlock>,
    body_xml: String,
    raw: String,
}

impl Envelope {
    /// Assembles an envelope around a self-contained Body child fragment.
    pub fn new(header_blocks: Vec<HeaderBlock>, body_xml: String) -> Self {
        let mut env = Envelope {
            header_blocks,
            body_xml,
            raw: String::new(),
        };
        env.render();
        env
    }

    /// Parses a document, keeping its text verbatim as `raw`.
    pub fn parse(xml: &str) -> Result<Self, CodecError> {
        let doc = parse_document(xml)?;
        let body = find_body(&doc)?;
        let header_blocks = match soap_child(doc.root_element(), "Header") {
            Some(header) => header
                .children()
                .filter(Node::is_element)
                .map(parse_header_block)
                .collect(),
            None => Vec::new(),
        };
        let body_xml = body
            .first_element_child()
            .map(serialize_subtree)
            .unwrap_or_default();
        Ok(Envelope {
            header_blocks,
            body_xml,
            raw: xml.to_string(),
        })
    }

    pub fn header_blocks(&self) -> &[HeaderBlock] {
        &self.header_blocks
    }

    pub fn body_xml(&self) -> &str {
        &self.body_xml
    }

    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn into_raw(self) -> String {
        self.raw
    }

    /// Replaces any header blocks with the same expanded name, else appends.
    pub fn upsert_header(&mut self, block: HeaderBlock) {
        match self
            .header_blocks
            .iter()
            .position(|h| h.name.matches(&block.name))
        {
            Some(i) => {
                self.header_blocks[i] = block.clone();
                let mut j = i + 1;
                while j < self.header_blocks.len() {
                    if self.header_blocks[j].name.matches(&block.name) {
                        self.header_blocks.remove(j);
                    } else {
                        j += 1;
                    }
                }
            }
            None => self.header_blocks.push(block),
        }
        self.render();
    }

    pub fn remove_headers(&mut self, name: &QName) {
        self.header_blocks.retain(|h| !h.name.matches(name));
        self.render();
    }

    fn render(&mut self) {
        let mut out = String::with_capacity(self.body_xml.len() + 256);
        out.push_str(XML_DECL);
        out.push_str("<soapenv:Envelope xmlns:soapenv=\"");
        out.push_str(SOAP_ENV_NS);
        out.push_str("\">");
        if !self.header_blocks.is_empty() {
            out.push_str("<soapenv:Header>");
            for h in &self.header_blocks {
                h.write(&mut out);
            }
            out.push_str("</soapenv:Header>");
        }
        out.push_str("<soapenv:Body>");
        out.push_str(&self.body_xml);
        out.push_str("</soapenv:Body></soapenv:Envelope>");
        self.raw = out;
    }
}

/// Decoded response body: either return parameters or a fault.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponsePayload {
    Params(Vec<Parameter>),
    Fault(FaultInfo),
}

/// Serializes `request` into a SOAP 1.1 envelope.
pub fn build_envelope(
    request: &Request,
    header_blocks: Vec<HeaderBlock>,
) -> Result<Envelope, CodecError> {
    if request.operation().is_empty() {
        return Err(CodecError::InvalidRequest("operation not set".into()));
    }
    if request.namespace().is_empty() {
        return Err(CodecError::InvalidRequest("namespace not set".into()));
    }
    // An optional skeleton that was never filled is simply not sent.
    let supplied: Vec<Parameter> = request
        .inputs()
        .iter()
        .filter(|p| p.filled || p.min_occurs > 0)
        .cloned()
        .collect();
    let violations: Vec<Violation> = supplied.iter().flat_map(Parameter::validate).collect();
    if !violations.is_empty() {
        return Err(CodecError::ValidationFailed(violations));
    }
    let body = write_wrapper(
        request.namespace(),
        request.prefix(),
        request.operation(),
        &supplied,
    );
    Ok(Envelope::new(header_blocks, body))
}

/// Envelope whose Body wrapper `{namespace}wrapper` holds `params`.
///
/// Used by service implementations; no request-side validation is applied.
pub fn build_response_envelope(
    namespace: &str,
    prefix: &str,
    wrapper: &str,
    params: &[Parameter],
) -> String {
    Envelope::new(
        Vec::new(),
        write_wrapper(namespace, prefix, wrapper, params),
    )
    .into_raw()
}

/// Envelope whose Body holds a single `soapenv:Fault`.
pub fn build_fault_envelope(fault: &FaultInfo) -> String {
    let mut body = String::from("<soapenv:Fault><faultcode>");
    escape_text_into(&mut body, &fault.fault_code);
    body.push_str("</faultcode><faultstring>");
    escape_text_into(&mut body, &fault.fault_string);
    body.push_str("</faultstring>");
    if let Some(detail) = &fault.detail {
        body.push_str("<detail>");
        body.push_str(detail);
        body.push_str("</detail>");
    }
    body.push_str("</soapenv:Fault>");
    Envelope::new(Vec::new(), body).into_raw()
}

fn write_wrapper(namespace: &str, prefix: &str, local: &str, params: &[Parameter]) -> String {
    let mut w = ParamWriter {
        out: String::new(),
        next_prefix: 1,
        reserved: prefix,
    };
    let tag = format!("{prefix}:{local}");
    w.out.push('<');
    w.out.push_str(&tag);
    write_attr(&mut w.out, &format!("xmlns:{prefix}"), namespace);
    if params.is_empty() {
        w.out.push_str("/>");
    } else {
        w.out.push('>');
        for p in params {
            w.parameter(p, namespace, prefix);
        }
        let _ = write!(w.out, "</{tag}>");
    }
    w.out
}

struct ParamWriter<'a> {
    out: String,
    next_prefix: usize,
    reserved: &'a str,
}

impl ParamWriter<'_> {
    fn fresh_prefix(&mut self) -> String {
        loop {
            let candidate = format!("ns{}", self.next_prefix);
            self.next_prefix += 1;
            if candidate != self.reserved {
                return candidate;
            }
        }
    }

    fn parameter(&mut self, p: &Parameter, parent_ns: &str, parent_prefix: &str) {
        match &p.value {
            Value::Sequence(items) => {
                for item in items {
                    self.element(p, item, parent_ns, parent_prefix);
                }
            }
            value => self.element(p, value, parent_ns, parent_prefix),
        }
    }

    fn element(&mut self, p: &Parameter, value: &Value, parent_ns: &str, parent_prefix: &str) {
        let ns = p.resolved_namespace(parent_ns);
        let (prefix, declare) = if ns == parent_ns {
            (parent_prefix.to_string(), false)
        } else {
            (self.fresh_prefix(), true)
        };
        let tag = format!("{prefix}:{}", p.name);
        self.out.push('<');
        self.out.push_str(&tag);
        if declare {
            write_attr(&mut self.out, &format!("xmlns:{prefix}"), ns);
        }
        match value {
            Value::Null => {
                write_attr(&mut self.out, "xmlns:xsi", XSI_NS);
                self.out.push_str(" xsi:nil=\"true\"/>");
                return;
            }
            Value::Record(fields) if fields.is_empty() => {
                self.out.push_str("/>");
                return;
            }
            _ => self.out.push('>'),
        }
        match value {
            Value::Boolean(b) => self.out.push_str(if *b { "true" } else { "false" }),
            Value::Integer(i) => {
                let _ = write!(self.out, "{i}");
            }
            Value::Decimal(d) => self.out.push_str(&format_decimal(*d)),
            Value::Text(s) => escape_text_into(&mut self.out, s),
            Value::Record(fields) => {
                for f in fields {
                    self.parameter(f, ns, &prefix);
                }
            }
            // Nested sequences are rejected by validation and have no encoding.
            Value::Sequence(_) | Value::Null => {}
        }
        let _ = write!(self.out, "</{tag}>");
    }
}

/// Decodes a response envelope into return parameters or a fault.
///
/// `templates` drive typed coercion: a child element whose name matches a
/// template is decoded to that template's kind; other children decode as
/// text, or as records when they have element children. Repeated sibling
/// names collapse into one sequence-valued parameter.
pub fn parse_response(xml: &str, templates: &[Parameter]) -> Result<ResponsePayload, CodecError> {
    let doc = parse_document(xml)?;
    let body = find_body(&doc)?;
    let child = body.first_element_child().ok_or(CodecError::EmptyBody)?;
    if child.tag_name().namespace() == Some(SOAP_ENV_NS) && child.tag_name().name() == "Fault" {
        return parse_fault(child).map(ResponsePayload::Fault);
    }
    decode_children(child, templates).map(ResponsePayload::Params)
}

/// Server-side view of a request envelope: the Body wrapper's expanded name
/// and its children decoded without templates.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRequest {
    pub operation: String,
    pub namespace: String,
    pub params: Vec<Parameter>,
}

pub fn decode_request(xml: &str) -> Result<DecodedRequest, CodecError> {
    let doc = parse_document(xml)?;
    let body = find_body(&doc)?;
    let wrapper = body.first_element_child().ok_or(CodecError::EmptyBody)?;
    Ok(DecodedRequest {
        operation: wrapper.tag_name().name().to_string(),
        namespace: wrapper.tag_name().namespace().unwrap_or("").to_string(),
        params: decode_children(wrapper, &[])?,
    })
}

fn parse_document(xml: &str) -> Result<Document<'_>, CodecError> {
    Document::parse(xml).map_err(|e| CodecError::MalformedXml(e.to_string()))
}

fn soap_child<'a, 'i>(node: Node<'a, 'i>, local: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|c| {
        c.is_element()
            && c.tag_name().namespace() == Some(SOAP_ENV_NS)
            && c.tag_name().name() == local
    })
}

fn find_body<'a, 'i>(doc: &'a Document<'i>) -> Result<Node<'a, 'i>, CodecError> {
    let root = doc.root_element();
    if root.tag_name().namespace() != Some(SOAP_ENV_NS) || root.tag_name().name() != "Envelope" {
        return Err(CodecError::MalformedXml(
            "document element is not a SOAP 1.1 Envelope".into(),
        ));
    }
    soap_child(root, "Body").ok_or_else(|| CodecError::MalformedXml("Envelope has no Body".into()))
}

fn parse_header_block(node: Node) -> HeaderBlock {
    let ns = node.tag_name().namespace().unwrap_or("");
    let prefix = if ns.is_empty() {
        None
    } else {
        node.lookup_prefix(ns)
    };
    let attributes = node
        .attributes()
        .map(|a| {
            let name = match a.namespace().and_then(|ns| node.lookup_prefix(ns)) {
                Some(p) => format!("{p}:{}", a.name()),
                None => a.name().to_string(),
            };
            (name, a.value().to_string())
        })
        .collect();
    HeaderBlock {
        name: QName::new(ns, prefix.unwrap_or(""), node.tag_name().name()),
        attributes,
        text: text_content(node),
    }
}

fn parse_fault(fault: Node) -> Result<FaultInfo, CodecError> {
    let field = |name: &str| {
        fault
            .children()
            .find(|c| c.is_element() && c.tag_name().name() == name)
    };
    let code = field("faultcode").map(text_content).unwrap_or_default();
    let string = field("faultstring").map(text_content).unwrap_or_default();
    if code.trim().is_empty() || string.is_empty() {
        return Err(CodecError::MalformedXml(
            "Fault lacks faultcode or faultstring".into(),
        ));
    }
    let detail = field("detail").map(|d| d.children().map(serialize_node).collect::<String>());
    Ok(FaultInfo {
        fault_code: code.trim().to_string(),
        fault_string: string,
        detail,
    })
}

fn text_content(node: Node) -> String {
    node.children()
        .filter(Node::is_text)
        .filter_map(|t| t.text())
        .collect()
}

fn is_nil(node: Node) -> bool {
    matches!(node.attribute((XSI_NS, "nil")), Some("true" | "1"))
}

/// What a template says about one occurrence of an element.
#[derive(Clone, Copy)]
enum Shape<'t> {
    Untyped,
    Scalar(ValueKind),
    Record(&'t [Parameter]),
}

fn value_shape(value: &Value) -> Shape<'_> {
    match value {
        Value::Boolean(_) => Shape::Scalar(ValueKind::Boolean),
        Value::Integer(_) => Shape::Scalar(ValueKind::Integer),
        Value::Decimal(_) => Shape::Scalar(ValueKind::Decimal),
        Value::Text(_) => Shape::Scalar(ValueKind::Text),
        Value::Record(fields) => Shape::Record(fields),
        Value::Null | Value::Sequence(_) => Shape::Untyped,
    }
}

fn declared_shape(kind: Option<ValueKind>) -> Shape<'static> {
    match kind {
        Some(
            k @ (ValueKind::Boolean | ValueKind::Integer | ValueKind::Decimal | ValueKind::Text),
        ) => Shape::Scalar(k),
        Some(ValueKind::Record) => Shape::Record(&[]),
        _ => Shape::Untyped,
    }
}

/// True when the template expects a sequence-valued parameter. A filled
/// null is a single nil element; only unfilled skeletons defer to max.
fn expects_sequence(t: &Parameter) -> bool {
    match &t.value {
        Value::Sequence(_) => true,
        Value::Null => !t.filled && t.max_occurs.is_repeatable(),
        _ => false,
    }
}

/// Shape of occurrence `index` under template `t`.
fn item_shape(t: &Parameter, index: usize) -> Shape<'_> {
    match &t.value {
        Value::Sequence(items) if !items.is_empty() => {
            value_shape(&items[index.min(items.len() - 1)])
        }
        Value::Sequence(_) | Value::Null => declared_shape(t.kind),
        value => match (value_shape(value), t.kind) {
            (Shape::Untyped, kind) => declared_shape(kind),
            (shape, _) => shape,
        },
    }
}

/// Expanded element name: namespace URI and local name.
type ExpandedName<'a> = (Option<&'a str>, &'a str);

fn decode_children(parent: Node, templates: &[Parameter]) -> Result<Vec<Parameter>, CodecError> {
    let parent_ns = parent.tag_name().namespace().unwrap_or("");
    // Group element children by expanded name, in first-occurrence order.
    let mut groups: Vec<(ExpandedName, Vec<Node>)> = Vec::new();
    for c in parent.children().filter(Node::is_element) {
        let key = (c.tag_name().namespace(), c.tag_name().name());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, nodes)) => nodes.push(c),
            None => groups.push((key, vec![c])),
        }
    }

    let mut out = Vec::with_capacity(groups.len());
    for ((ns, name), nodes) in groups {
        let template = templates.iter().find(|t| t.name == name);
        let value = match template {
            Some(t) if expects_sequence(t) || nodes.len() > 1 => Value::Sequence(
                nodes
                    .iter()
                    .enumerate()
                    .map(|(i, n)| decode_item(*n, item_shape(t, i)))
                    .collect::<Result<_, _>>()?,
            ),
            Some(t) => decode_item(nodes[0], item_shape(t, 0))?,
            None if nodes.len() > 1 => Value::Sequence(
                nodes
                    .iter()
                    .map(|n| decode_item(*n, Shape::Untyped))
                    .collect::<Result<_, _>>()?,
            ),
            None => decode_item(nodes[0], Shape::Untyped)?,
        };
        let namespace = match ns {
            Some(ns) if ns != parent_ns => ns.to_string(),
            _ => String::new(),
        };
        let mut p = match template {
            Some(t) => Parameter {
                name: name.to_string(),
                value,
                namespace,
                filled: true,
                ..t.clone()
            },
            None => Parameter::new(name, value).with_namespace(namespace),
        };
        if template.is_none() && nodes.len() > 1 {
            p.max_occurs = crate::model::MaxOccurs::Unbounded;
        }
        out.push(p);
    }

    // Zero occurrences of an optional repeated element decode as an empty
    // sequence, placed after the output of the preceding template.
    for (ti, t) in templates.iter().enumerate() {
        if t.min_occurs == 0 && expects_sequence(t) && !out.iter().any(|p| p.name == t.name) {
            let earlier = &templates[..ti];
            let at = out
                .iter()
                .rposition(|p| earlier.iter().any(|e| e.name == p.name))
                .map_or(0, |i| i + 1);
            let mut p = t.clone();
            p.value = Value::Sequence(Vec::new());
            p.filled = true;
            out.insert(at, p);
        }
    }
    Ok(out)
}

fn decode_item(node: Node, shape: Shape) -> Result<Value, CodecError> {
    if is_nil(node) {
        return Ok(Value::Null);
    }
    let name = node.tag_name().name();
    let has_elements = node.children().any(|c| c.is_element());
    let fail = |expected: ValueKind, text: &str| CodecError::DecodeError {
        name: name.to_string(),
        expected,
        text: text.to_string(),
    };
    match shape {
        Shape::Untyped if has_elements => Ok(Value::Record(decode_children(node, &[])?)),
        Shape::Untyped => Ok(Value::Text(text_content(node))),
        Shape::Record(fields) => Ok(Value::Record(decode_children(node, fields)?)),
        Shape::Scalar(kind) => {
            if has_elements {
                return Err(fail(kind, &serialize_subtree(node)));
            }
            let text = text_content(node);
            let trimmed = text.trim();
            match kind {
                ValueKind::Integer => trimmed
                    .parse()
                    .map(Value::Integer)
                    .map_err(|_| fail(kind, &text)),
                ValueKind::Decimal => match trimmed.parse::<f64>() {
                    Ok(d) if d.is_finite() && is_decimal_lexical(trimmed) => Ok(Value::Decimal(d)),
                    _ => Err(fail(kind, &text)),
                },
                ValueKind::Boolean => match trimmed {
                    "true" | "1" => Ok(Value::Boolean(true)),
                    "false" | "0" => Ok(Value::Boolean(false)),
                    _ => Err(fail(kind, &text)),
                },
                _ => Ok(Value::Text(text)),
            }
        }
    }
}

// Digits, sign, point and exponent only; rejects `inf`/`NaN` spellings.
fn is_decimal_lexical(s: &str) -> bool {
    s.chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'))
}

/// Re-serializes an element subtree so it stands alone. Each element
/// declares exactly the namespace bindings its own name and attributes use
/// that are not already in effect from an enclosing output element.
pub fn serialize_subtree(node: Node) -> String {
    let mut out = String::new();
    write_subtree(node, &mut Vec::new(), &mut out);
    out
}

fn serialize_node(node: Node) -> String {
    if node.is_element() {
        serialize_subtree(node)
    } else if node.is_text() {
        let mut out = String::new();
        escape_text_into(&mut out, node.text().unwrap_or(""));
        out
    } else {
        String::new()
    }
}

// `scope` holds (prefix, uri) bindings emitted by enclosing output elements;
// an empty prefix is the default namespace.
fn write_subtree(node: Node, scope: &mut Vec<(String, String)>, out: &mut String) {
    let mark = scope.len();
    let mut decls: Vec<(String, String)> = Vec::new();
    let mut bind = |prefix: &str, uri: &str, scope: &mut Vec<(String, String)>| {
        let current = scope
            .iter()
            .rev()
            .find(|(p, _)| p == prefix)
            .map(|(_, u)| u.as_str());
        if current != Some(uri) && !(prefix.is_empty() && uri.is_empty() && current.is_none()) {
            scope.push((prefix.to_string(), uri.to_string()));
            decls.push((prefix.to_string(), uri.to_string()));
        }
    };

    let local = node.tag_name().name();
    let tag = match node.tag_name().namespace() {
        None => {
            bind("", "", scope);
            local.to_string()
        }
        Some(uri) => match source_prefix(node, uri) {
            Some(p) => {
                bind(p, uri, scope);
                format!("{p}:{local}")
            }
            None => {
                bind("", uri, scope);
                local.to_string()
            }
        },
    };
    let mut attrs = Vec::new();
    for a in node.attributes() {
        let name = match a.namespace() {
            Some(XML_NS) => format!("xml:{}", a.name()),
            Some(uri) => {
                let p = prefix_for(node, uri).unwrap_or("ns");
                bind(p, uri, scope);
                format!("{p}:{}", a.name())
            }
            None => a.name().to_string(),
        };
        attrs.push((name, a.value()));
    }

    out.push('<');
    out.push_str(&tag);
    for (prefix, uri) in decls {
        if prefix.is_empty() {
            write_attr(out, "xmlns", &uri);
        } else {
            write_attr(out, &format!("xmlns:{prefix}"), &uri);
        }
    }
    for (name, value) in attrs {
        write_attr(out, &name, value);
    }
    if !node.has_children() {
        out.push_str("/>");
    } else {
        out.push('>');
        for c in node.children() {
            if c.is_element() {
                write_subtree(c, scope, out);
            } else if c.is_text() {
                escape_text_into(out, c.text().unwrap_or(""));
            }
        }
        let _ = write!(out, "</{tag}>");
    }
    scope.truncate(mark);
}

// Prefix the source used for an element in `uri`; `None` means the default
// namespace.
fn source_prefix<'i>(node: Node<'_, 'i>, uri: &str) -> Option<&'i str> {
    if node.default_namespace() == Some(uri) {
        None
    } else {
        prefix_for(node, uri)
    }
}

// Prefix bound to `uri` (non-default bindings only, as attributes require).
fn prefix_for<'i>(node: Node<'_, 'i>, uri: &str) -> Option<&'i str> {
    node.namespaces()
        .find(|n| n.uri() == uri && n.name().is_some())
        .and_then(|n| n.name())
}

/// Deterministic normal form for comparing documents by infoset.
///
/// Namespace prefixes are renamed `ns0`, `ns1`, … in order of first use and
/// all declared on the document element; attributes are sorted by expanded
/// name; whitespace-only text between elements is dropped; comments,
/// processing instructions and the XML declaration are removed.
pub fn canonical_form(xml: &str) -> Result<String, CodecError> {
    let doc = parse_document(xml)?;
    let root = doc.root_element();

    let mut prefixes: BTreeMap<String, String> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for node in root.descendants().filter(Node::is_element) {
        let uris = node.tag_name().namespace().into_iter().chain(
            sorted_attributes(node)
                .into_iter()
                .filter_map(|a| a.namespace()),
        );
        for uri in uris {
            if uri != XML_NS && !prefixes.contains_key(uri) {
                prefixes.insert(uri.to_string(), format!("ns{}", order.len()));
                order.push(uri.to_string());
            }
        }
    }

    let mut out = String::new();
    write_canonical(root, &prefixes, &order, true, &mut out);
    Ok(out)
}

fn sorted_attributes<'a, 'i>(node: Node<'a, 'i>) -> Vec<roxmltree::Attribute<'a, 'i>> {
    let mut attrs: Vec<_> = node.attributes().collect();
    attrs.sort_by(|a, b| {
        (a.namespace().unwrap_or(""), a.name()).cmp(&(b.namespace().unwrap_or(""), b.name()))
    });
    attrs
}

fn canonical_name(ns: Option<&str>, local: &str, prefixes: &BTreeMap<String, String>) -> String {
    match ns {
        Some(XML_NS) => format!("xml:{local}"),
        Some(uri) => format!("{}:{local}", prefixes[uri]),
        None => local.to_string(),
    }
}

fn write_canonical(
    node: Node,
    prefixes: &BTreeMap<String, String>,
    order: &[String],
    is_root: bool,
    out: &mut String,
) {
    let tag = canonical_name(
        node.tag_name().namespace(),
        node.tag_name().name(),
        prefixes,
    );
    out.push('<');
    out.push_str(&tag);
    if is_root {
        for uri in order {
            write_attr(out, &format!("xmlns:{}", prefixes[uri]), uri);
        }
    }
    for a in sorted_attributes(node) {
        write_attr(
            out,
            &canonical_name(a.namespace(), a.name(), prefixes),
            a.value(),
        );
    }
    let has_elements = node.children().any(|c| c.is_element());
    let mut content = String::new();
    for c in node.children() {
        if c.is_element() {
            write_canonical(c, prefixes, order, false, &mut content);
        } else if c.is_text() {
            let t = c.text().unwrap_or("");
            if has_elements && t.trim().is_empty() {
                continue;
            }
            escape_text_into(&mut content, t);
        }
    }
    if content.is_empty() {
        out.push_str("/>");
    } else {
        out.push('>');
        out.push_str(&content);
        let _ = write!(out, "</{tag}>");
    }
}

fn write_attr(out: &mut String, name: &str, value: &str) {
    out.push(' ');
    out.push_str(name);
    out.push_str("=\"");
    for c in value.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\t' => out.push_str("&#9;"),
            '\n' => out.push_str("&#10;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
    out.push('"');
}

fn escape_text_into(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '\r' => out.push_str("&#13;"),
            c => out.push(c),
        }
    }
}
