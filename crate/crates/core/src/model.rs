//! Parameter and request data model.
//!
//! A [`Request`] names a remote operation (namespace, prefix, SOAPAction and
//! endpoint) and carries two ordered parameter collections: the inputs that
//! are serialized into the request body, and the output templates used to
//! decode the response with typed coercion.

use std::fmt;

use thiserror::Error;

/// Which parameter collection of a [`Request`] an operation addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Collection {
    Input,
    Output,
}

impl fmt::Display for Collection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Collection::Input => f.write_str("input"),
            Collection::Output => f.write_str("output"),
        }
    }
}

/// A parameter value. Closed set of kinds so the codec stays total.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Boolean(bool),
    Integer(i64),
    /// Always finite; see [`Violation::NonFiniteDecimal`].
    Decimal(f64),
    Text(String),
    Sequence(Vec<Value>),
    /// Nested complex content.
    Record(Vec<Parameter>),
}

/// The kind tag of a [`Value`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Null,
    Boolean,
    Integer,
    Decimal,
    Text,
    Sequence,
    Record,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Null => ValueKind::Null,
            Value::Boolean(_) => ValueKind::Boolean,
            Value::Integer(_) => ValueKind::Integer,
            Value::Decimal(_) => ValueKind::Decimal,
            Value::Text(_) => ValueKind::Text,
            Value::Sequence(_) => ValueKind::Sequence,
            Value::Record(_) => ValueKind::Record,
        }
    }

    /// How many elements this value occupies on the wire.
    pub fn occurrences(&self) -> usize {
        match self {
            Value::Null => 0,
            Value::Sequence(items) => items.len(),
            _ => 1,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_decimal(&self) -> Option<f64> {
        match self {
            Value::Decimal(d) => Some(*d),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        }
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_decimal(d: f64) -> String {
    format!("{d}")
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Boolean(b) => write!(f, "{b}"),
            Value::Integer(i) => write!(f, "{i}"),
            Value::Decimal(d) => f.write_str(&format_decimal(*d)),
            Value::Text(s) => f.write_str(s),
            Value::Sequence(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
            Value::Record(fields) => {
                f.write_str("{")?;
                for (i, p) in fields.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{} = {}", p.name, p.value)?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Upper occurrence bound of a parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaxOccurs {
    Bounded(u32),
    Unbounded,
}

impl MaxOccurs {
    pub fn admits(self, count: usize) -> bool {
        match self {
            MaxOccurs::Bounded(max) => count <= max as usize,
            MaxOccurs::Unbounded => true,
        }
    }

    /// True when more than one occurrence is allowed.
    pub fn is_repeatable(self) -> bool {
        self.admits(2)
    }

    pub fn at_least(self, min: u32) -> bool {
        self.admits(min as usize)
    }
}

impl fmt::Display for MaxOccurs {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaxOccurs::Bounded(n) => write!(f, "{n}"),
            MaxOccurs::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// A named, namespaced value with occurrence and nullability constraints.
///
/// Fields are public data. `kind` is the declared value kind, if known (set
/// by WSDL binding); `filled` is false for skeletons produced by binding,
/// which are exempt from the null rule until a value is supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Value,
    /// Empty means "inherit the enclosing element's namespace".
    pub namespace: String,
    pub nullable: bool,
    pub min_occurs: u32,
    pub max_occurs: MaxOccurs,
    pub kind: Option<ValueKind>,
    pub filled: bool,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Value) -> Self {
        Parameter {
            name: name.into(),
            value,
            namespace: String::new(),
            nullable: false,
            min_occurs: 1,
            max_occurs: MaxOccurs::Bounded(1),
            kind: None,
            filled: true,
        }
    }

    /// An unfilled placeholder of a known kind.
    pub fn skeleton(name: impl Into<String>, kind: ValueKind) -> Self {
        Parameter {
            kind: Some(kind),
            filled: false,
            ..Parameter::new(name, Value::Null)
        }
    }

    pub fn with_namespace(mut self, namespace: impl Into<String>) -> Self {
        self.namespace = namespace.into();
        self
    }

    pub fn with_nullable(mut self, nullable: bool) -> Self {
        self.nullable = nullable;
        self
    }

    pub fn with_occurs(mut self, min: u32, max: MaxOccurs) -> Self {
        self.min_occurs = min;
        self.max_occurs = max;
        self
    }

    pub fn with_kind(mut self, kind: ValueKind) -> Self {
        self.kind = Some(kind);
        self
    }

    /// Supplies the value of a skeleton (or replaces an existing value).
    pub fn fill(&mut self, value: Value) {
        self.value = value;
        self.filled = true;
    }

    /// Namespace this parameter's element is qualified with when nested under
    /// an element in `enclosing`.
    pub fn resolved_namespace<'a>(&'a self, enclosing: &'a str) -> &'a str {
        if self.namespace.is_empty() {
            enclosing
        } else {
            &self.namespace
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate_occurrence(self)
    }
}

/// A failed parameter or request rule. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvalidName {
        field: String,
    },
    NullNotAllowed {
        field: String,
    },
    OccurrenceRangeInverted {
        field: String,
        min: u32,
        max: MaxOccurs,
    },
    SequenceNotAllowed {
        field: String,
    },
    CountOutOfRange {
        field: String,
        count: usize,
        min: u32,
        max: MaxOccurs,
    },
    NonFiniteDecimal {
        field: String,
    },
    DuplicateField {
        field: String,
    },
    NestedSequence {
        field: String,
    },
    MissingPart(String),
    KindMismatch {
        part: String,
        expected: ValueKind,
        found: ValueKind,
    },
    UnknownPart(String),
}

impl Violation {
    /// Name of the rule that failed.
    pub fn clause(&self) -> &'static str {
        match self {
            Violation::InvalidName { .. } => "InvalidName",
            Violation::NullNotAllowed { .. } => "NullNotAllowed",
            Violation::OccurrenceRangeInverted { .. } => "OccurrenceRangeInverted",
            Violation::SequenceNotAllowed { .. } => "SequenceNotAllowed",
            Violation::CountOutOfRange { .. } => "CountOutOfRange",
            Violation::NonFiniteDecimal { .. } => "NonFiniteDecimal",
            Violation::DuplicateField { .. } => "DuplicateField",
            Violation::NestedSequence { .. } => "NestedSequence",
            Violation::MissingPart(_) => "MissingPart",
            Violation::KindMismatch { .. } => "KindMismatch",
            Violation::UnknownPart(_) => "UnknownPart",
        }
    }

    /// The offending parameter (dotted path for nested record fields).
    pub fn field(&self) -> &str {
        match self {
            Violation::InvalidName { field }
            | Violation::NullNotAllowed { field }
            | Violation::OccurrenceRangeInverted { field, .. }
            | Violation::SequenceNotAllowed { field }
            | Violation::CountOutOfRange { field, .. }
            | Violation::NonFiniteDecimal { field }
            | Violation::DuplicateField { field }
            | Violation::NestedSequence { field } => field,
            Violation::MissingPart(part) | Violation::UnknownPart(part) => part,
            Violation::KindMismatch { part, .. } => part,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::OccurrenceRangeInverted { field, min, max } => {
                write!(
                    f,
                    "OccurrenceRangeInverted({field:?}, min={min}, max={max})"
                )
            }
            Violation::CountOutOfRange {
                field,
                count,
                min,
                max,
            } => {
                write!(
                    f,
                    "CountOutOfRange({field:?}, count={count}, min={min}, max={max})"
                )
            }
            Violation::KindMismatch {
                part,
                expected,
                found,
            } => {
                write!(f, "KindMismatch({part:?}, {expected}, {found})")
            }
            other => write!(f, "{}({:?})", other.clause(), other.field()),
        }
    }
}

/// Checks every [`Parameter`] invariant, recursing into records.
///
/// Returns an empty list exactly when the parameter is valid.
pub fn validate_occurrence(p: &Parameter) -> Vec<Violation> {
    let mut out = Vec::new();
    check_parameter(p, &p.name, &mut out);
    out
}

fn check_parameter(p: &Parameter, path: &str, out: &mut Vec<Violation>) {
    let field = || path.to_string();
    if !is_ncname(&p.name) {
        out.push(Violation::InvalidName { field: field() });
    }
    // A zero upper bound is an empty range as well.
    if !p.max_occurs.at_least(p.min_occurs) || p.max_occurs == MaxOccurs::Bounded(0) {
        out.push(Violation::OccurrenceRangeInverted {
            field: field(),
            min: p.min_occurs,
            max: p.max_occurs,
        });
    }
    match &p.value {
        Value::Null => {
            if !p.nullable && p.min_occurs > 0 {
                out.push(Violation::NullNotAllowed { field: field() });
            }
        }
        Value::Sequence(items) => {
            if !p.max_occurs.is_repeatable() {
                out.push(Violation::SequenceNotAllowed { field: field() });
            }
            let count = items.len();
            if count < p.min_occurs as usize || !p.max_occurs.admits(count) {
                out.push(Violation::CountOutOfRange {
                    field: field(),
                    count,
                    min: p.min_occurs,
                    max: p.max_occurs,
                });
            }
            for item in items {
                check_item(item, path, out);
            }
        }
        other => check_item(other, path, out),
    }
}

// Checks a single occurrence: a scalar, a record, or a sequence item.
fn check_item(value: &Value, path: &str, out: &mut Vec<Violation>) {
    match value {
        Value::Decimal(d) if !d.is_finite() => {
            out.push(Violation::NonFiniteDecimal {
                field: path.to_string(),
            });
        }
        Value::Sequence(_) => out.push(Violation::NestedSequence {
            field: path.to_string(),
        }),
        Value::Record(fields) => {
            for (i, f) in fields.iter().enumerate() {
                let sub = format!("{path}.{}", f.name);
                if fields[..i].iter().any(|g| g.name == f.name) {
                    out.push(Violation::DuplicateField { field: sub.clone() });
                }
                check_parameter(f, &sub, out);
            }
        }
        _ => {}
    }
}

/// Fault carried by a SOAP 1.1 `Fault` body element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultInfo {
    pub fault_code: String,
    pub fault_string: String,
    /// Raw XML of the `detail` element's content.
    pub detail: Option<String>,
}

impl FaultInfo {
    pub fn new(code: impl Into<String>, string: impl Into<String>) -> Self {
        FaultInfo {
            fault_code: code.into(),
            fault_string: string.into(),
            detail: None,
        }
    }

    /// Local part of the fault code (`soapenv:Client` → `Client`).
    pub fn code_local_name(&self) -> &str {
        self.fault_code
            .rsplit_once(':')
            .map_or(self.fault_code.as_str(), |(_, local)| local)
    }
}

impl fmt::Display for FaultInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.fault_code, self.fault_string)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate {collection} parameter {name:?}")]
    DuplicateName {
        collection: Collection,
        name: String,
    },
    #[error("invalid parameter {name:?}: {}", join_violations(.violations))]
    InvalidParameter {
        name: String,
        violations: Vec<Violation>,
    },
    #[error("no {collection} parameter named {name:?}")]
    NotFound {
        collection: Collection,
        name: String,
    },
    #[error("invalid name {0:?}")]
    InvalidName(String),
    #[error("invalid endpoint {0:?}")]
    InvalidEndpoint(String),
}

pub(crate) fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Prefixes the codec binds itself; a request may not reuse them.
const RESERVED_PREFIXES: [&str; 4] = ["xml", "xmlns", "soapenv", "xsi"];

/// A web service request: target descriptor plus input and output parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    operation: String,
    namespace: String,
    prefix: String,
    action: String,
    endpoint: String,
    inputs: Vec<Parameter>,
    outputs: Vec<Parameter>,
    raise_on_fault: bool,
}

impl Default for Request {
    fn default() -> Self {
        Request {
            operation: String::new(),
            namespace: String::new(),
            prefix: "p".to_string(),
            action: String::new(),
            endpoint: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            raise_on_fault: false,
        }
    }
}

impl Request {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn operation(&self) -> &str {
        &self.operation
    }

    pub fn namespace(&self) -> &str {
        &self.namespace
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn raise_on_fault(&self) -> bool {
        self.raise_on_fault
    }

    pub fn inputs(&self) -> &[Parameter] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Parameter] {
        &self.outputs
    }

    pub fn parameters(&self, collection: Collection) -> &[Parameter] {
        match collection {
            Collection::Input => &self.inputs,
            Collection::Output => &self.outputs,
        }
    }

    fn parameters_mut(&mut self, collection: Collection) -> &mut Vec<Parameter> {
        match collection {
            Collection::Input => &mut self.inputs,
            Collection::Output => &mut self.outputs,
        }
    }

    /// Appends `p` to a collection, keeping insertion order.
    ///
    /// Unfilled skeletons are exempt from the null rule.
    pub fn add_parameter(
        &mut self,
        collection: Collection,
        p: Parameter,
    ) -> Result<(), ModelError> {
        if self.parameters(collection).iter().any(|q| q.name == p.name) {
            return Err(ModelError::DuplicateName {
                collection,
                name: p.name,
            });
        }
        let violations: Vec<_> = validate_occurrence(&p)
            .into_iter()
            .filter(|v| p.filled || !matches!(v, Violation::NullNotAllowed { .. }))
            .collect();
        if !violations.is_empty() {
            return Err(ModelError::InvalidParameter {
                name: p.name,
                violations,
            });
        }
        self.parameters_mut(collection).push(p);
        Ok(())
    }

    pub fn remove_parameter(
        &mut self,
        collection: Collection,
        name: &str,
    ) -> Result<Parameter, ModelError> {
        let params = self.parameters_mut(collection);
        match params.iter().position(|p| p.name == name) {
            Some(i) => Ok(params.remove(i)),
            None => Err(ModelError::NotFound {
                collection,
                name: name.to_string(),
            }),
        }
    }

    pub fn get_parameter(
        &self,
        collection: Collection,
        name: &str,
    ) -> Result<&Parameter, ModelError> {
        self.parameters(collection)
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| ModelError::NotFound {
                collection,
                name: name.to_string(),
            })
    }

    /// Fills (or overwrites) the value of an existing input parameter.
    pub fn set_input_value(&mut self, name: &str, value: Value) -> Result<(), ModelError> {
        let p = self
            .inputs
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| ModelError::NotFound {
                collection: Collection::Input,
                name: name.to_string(),
            })?;
        let mut candidate = p.clone();
        candidate.fill(value);
        let violations = validate_occurrence(&candidate);
        if !violations.is_empty() {
            return Err(ModelError::InvalidParameter {
                name: candidate.name,
                violations,
            });
        }
        *p = candidate;
        Ok(())
    }

    /// Sets all five target fields at once; nothing changes on error.
    pub fn set_target(
        &mut self,
        operation: &str,
        namespace: &str,
        prefix: &str,
        action: &str,
        endpoint: &str,
    ) -> Result<(), ModelError> {
        check_operation(operation)?;
        check_prefix(prefix)?;
        check_endpoint(endpoint)?;
        self.operation = operation.to_string();
        self.namespace = namespace.to_string();
        self.prefix = prefix.to_string();
        self.action = action.to_string();
        self.endpoint = endpoint.to_string();
        Ok(())
    }

    pub fn set_operation(&mut self, operation: &str) -> Result<(), ModelError> {
        check_operation(operation)?;
        self.operation = operation.to_string();
        Ok(())
    }

    pub fn set_namespace(&mut self, namespace: &str) {
        self.namespace = namespace.to_string();
    }

    pub fn set_prefix(&mut self, prefix: &str) -> Result<(), ModelError> {
        check_prefix(prefix)?;
        self.prefix = prefix.to_string();
        Ok(())
    }

    pub fn set_action(&mut self, action: &str) {
        self.action = action.to_string();
    }

    pub fn set_endpoint(&mut self, endpoint: &str) -> Result<(), ModelError> {
        check_endpoint(endpoint)?;
        self.endpoint = endpoint.to_string();
        Ok(())
    }

    pub fn set_fault_policy(&mut self, raise_on_fault: bool) {
        self.raise_on_fault = raise_on_fault;
    }
}

fn check_operation(operation: &str) -> Result<(), ModelError> {
    if is_ncname(operation) {
        Ok(())
    } else {
        Err(ModelError::InvalidName(operation.to_string()))
    }
}

fn check_prefix(prefix: &str) -> Result<(), ModelError> {
    if is_ncname(prefix) && !RESERVED_PREFIXES.contains(&prefix) {
        Ok(())
    } else {
        Err(ModelError::InvalidName(prefix.to_string()))
    }
}

fn check_endpoint(endpoint: &str) -> Result<(), ModelError> {
    url::Url::parse(endpoint)
        .map(|_| ())
        .map_err(|_| ModelError::InvalidEndpoint(endpoint.to_string()))
}

/// XML 1.0 NCName check (a Name without colons).
pub fn is_ncname(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if is_name_start(c) => chars.all(is_name_char),
        _ => false,
    }
}

fn is_name_start(c: char) -> bool {
    matches!(c,
        'A'..='Z' | '_' | 'a'..='z'
        | '\u{C0}'..='\u{D6}' | '\u{D8}'..='\u{F6}' | '\u{F8}'..='\u{2FF}'
        | '\u{370}'..='\u{37D}' | '\u{37F}'..='\u{1FFF}' | '\u{200C}'..='\u{200D}'
        | '\u{2070}'..='\u{218F}' | '\u{2C00}'..='\u{2FEF}' | '\u{3001}'..='\u{D7FF}'
        | '\u{F900}'..='\u{FDCF}' | '\u{FDF0}'..='\u{FFFD}' | '\u{10000}'..='\u{EFFFF}')
}

fn is_name_char(c: char) -> bool {
    is_name_start(c)
        || matches!(c, '-' | '.' | '0'..='9' | '\u{B7}' | '\u{300}'..='\u{36F}' | '\u{203F}'..='\u{2040}')
}
