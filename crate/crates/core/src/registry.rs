//! Interface definitions and a service manager in the style of a component
//! model: interfaces are parsed from a small IDL, factories register against
//! them, and callers obtain fresh, independent service handles by name.

use std::any::Any;
use std::fmt;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::engine::{create_engine, Engine, EngineConfig, EngineError};
use crate::model::{Collection, ModelError, Parameter, Request};

pub const ENGINE_IDL: &str = include_str!("../fixtures/idl/engine.idl");
pub const REQUEST_IDL: &str = include_str!("../fixtures/idl/request.idl");
pub const PARAMETER_IDL: &str = include_str!("../fixtures/idl/parameter.idl");

pub const ENGINE_SERVICE: &str = "ws.Engine";
pub const REQUEST_SERVICE: &str = "ws.Request";
pub const PARAMETER_SERVICE: &str = "ws.Parameter";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TypeRef {
    Void,
    Boolean,
    Int,
    Double,
    String,
    List(Box<TypeRef>),
    Named(String),
}

impl fmt::Display for TypeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeRef::Void => f.write_str("void"),
            TypeRef::Boolean => f.write_str("boolean"),
            TypeRef::Int => f.write_str("int"),
            TypeRef::Double => f.write_str("double"),
            TypeRef::String => f.write_str("string"),
            TypeRef::List(inner) => write!(f, "list<{inner}>"),
            TypeRef::Named(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSig {
    pub name: String,
    pub params: Vec<(String, TypeRef)>,
    pub ret: TypeRef,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceDef {
    pub name: String,
    pub methods: Vec<MethodSig>,
}

impl InterfaceDef {
    pub fn method(&self, name: &str) -> Option<&MethodSig> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn method_names(&self) -> Vec<&str> {
        self.methods.iter().map(|m| m.name.as_str()).collect()
    }
}

/// Canonical IDL text; parses back to an equal definition.
impl fmt::Display for InterfaceDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "interface {} {{", self.name)?;
        for m in &self.methods {
            write!(f, "    {} {}(", m.ret, m.name)?;
            for (i, (name, ty)) in m.params.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{ty} {name}")?;
            }
            f.write_str(");\n")?;
        }
        f.write_str("}\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdlError {
    #[error("syntax error at {line}:{column}: {message}")]
    SyntaxError {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("interface {interface} declares method {method} twice")]
    DuplicateMethod { interface: String, method: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Punct(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s:?}"),
            Tok::Punct(c) => write!(f, "'{c}'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
}

fn lex(text: &str) -> Result<Vec<Spanned>, IdlError> {
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut chars = text.chars().peekable();
    while let Some(&c) = chars.peek() {
        let (l, col) = (line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next();
            if c == Some('\n') {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
        } else if c == '/' {
            bump(&mut chars);
            if chars.peek() != Some(&'/') {
                return Err(syntax(l, col, "expected '//' comment"));
            }
            while chars.peek().is_some_and(|&c| c != '\n') {
                bump(&mut chars);
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut ident = String::new();
            while let Some(&c) = chars
                .peek()
                .filter(|c| c.is_ascii_alphanumeric() || **c == '_')
            {
                ident.push(c);
                bump(&mut chars);
            }
            out.push(Spanned {
                tok: Tok::Ident(ident),
                line: l,
                column: col,
            });
        } else if "{}()<>,;".contains(c) {
            bump(&mut chars);
            out.push(Spanned {
                tok: Tok::Punct(c),
                line: l,
                column: col,
            });
        } else {
            return Err(syntax(l, col, &format!("unexpected character {c:?}")));
        }
    }
    out.push(Spanned {
        tok: Tok::End,
        line,
        column,
    });
    Ok(out)
}

fn syntax(line: usize, column: usize, message: &str) -> IdlError {
    IdlError::SyntaxError {
        line,
        column,
        message: message.to_string(),
    }
}

struct Parser {
    toks: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Spanned {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> &Spanned {
        let t = &self.toks[self.pos];
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &str) -> IdlError {
        let t = self.peek();
        syntax(
            t.line,
            t.column,
            &format!("expected {expected}, found {}", t.tok),
        )
    }

    fn punct(&mut self, c: char) -> Result<(), IdlError> {
        if self.peek().tok == Tok::Punct(c) {
            self.next();
            Ok(())
        } else {
            Err(self.error(&format!("'{c}'")))
        }
    }

    fn at_punct(&self, c: char) -> bool {
        self.peek().tok == Tok::Punct(c)
    }

    fn ident(&mut self, what: &str) -> Result<String, IdlError> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            _ => Err(self.error(what)),
        }
    }

    fn type_ref(&mut self, allow_void: bool) -> Result<TypeRef, IdlError> {
        let (line, column) = (self.peek().line, self.peek().column);
        let name = self.ident("a type")?;
        let ty = match name.as_str() {
            "void" if allow_void => TypeRef::Void,
            "void" => return Err(syntax(line, column, "void is only valid as a return type")),
            "boolean" => TypeRef::Boolean,
            "int" => TypeRef::Int,
            "double" => TypeRef::Double,
            "string" => TypeRef::String,
            "list" => {
                self.punct('<')?;
                let inner = self.type_ref(false)?;
                self.punct('>')?;
                TypeRef::List(Box::new(inner))
            }
            "interface" => {
                return Err(syntax(
                    line,
                    column,
                    "expected a type, found keyword \"interface\"",
                ))
            }
            _ => TypeRef::Named(name),
        };
        Ok(ty)
    }

    fn method(&mut self) -> Result<MethodSig, IdlError> {
        let ret = self.type_ref(true)?;
        let name = self.ident("a method name")?;
        self.punct('(')?;
        let mut params = Vec::new();
        if !self.at_punct(')') {
            loop {
                let ty = self.type_ref(false)?;
                let pname = self.ident("a parameter name")?;
                params.push((pname, ty));
                if self.at_punct(',') {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.punct(')')?;
        self.punct(';')?;
        Ok(MethodSig { name, params, ret })
    }

    fn interface(&mut self) -> Result<InterfaceDef, IdlError> {
        if self.peek().tok != Tok::Ident("interface".into()) {
            return Err(self.error("\"interface\""));
        }
        self.next();
        let name = self.ident("an interface name")?;
        self.punct('{')?;
        let mut methods: Vec<MethodSig> = Vec::new();
        while !self.at_punct('}') {
            let m = self.method()?;
            if methods.iter().any(|x| x.name == m.name) {
                return Err(IdlError::DuplicateMethod {
                    interface: name,
                    method: m.name,
                });
            }
            methods.push(m);
        }
        self.punct('}')?;
        if self.peek().tok != Tok::End {
            return Err(self.error("end of input"));
        }
        Ok(InterfaceDef { name, methods })
    }
}

/// Parses one `interface Name { ... }` definition.
///
/// Types: `void` (returns only), `boolean`, `int`, `double`, `string`,
/// `list<T>` and interface names. `//` starts a line comment.
pub fn parse_idl(text: &str) -> Result<InterfaceDef, IdlError> {
    Parser {
        toks: lex(text)?,
        pos: 0,
    }
    .interface()
}

/// Dynamic argument and result values crossing the service boundary.
#[derive(Debug, Clone, PartialEq)]
pub enum UnoValue {
    Void,
    Boolean(bool),
    Text(String),
    Parameter(Parameter),
    Parameters(Vec<Parameter>),
    Request(Request),
}

#[derive(Debug, Error)]
pub enum InvokeError {
    #[error("no method {0:?} on this service")]
    UnknownMethod(String),
    #[error("{method} expects ({expected})")]
    BadArguments {
        method: String,
        expected: &'static str,
    },
    #[error("engine not initialised; call Axis2WebService first")]
    NotInitialized,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// A live service handle. Methods are reached dynamically through
/// [`UnoService::invoke`]; concrete state through downcasting.
pub trait UnoService: Any + Send {
    fn method_names(&self) -> Vec<&'static str>;
    fn invoke(&mut self, method: &str, args: Vec<UnoValue>) -> Result<UnoValue, InvokeError>;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

impl dyn UnoService {
    pub fn downcast_ref<T: 'static>(&self) -> Option<&T> {
        self.as_any().downcast_ref()
    }

    pub fn downcast_mut<T: 'static>(&mut self) -> Option<&mut T> {
        self.as_any_mut().downcast_mut()
    }
}

pub type Factory = Arc<dyn Fn() -> Box<dyn UnoService> + Send + Sync>;

#[derive(Clone)]
pub struct ServiceEntry {
    pub service_name: String,
    pub interface: InterfaceDef,
    pub factory: Factory,
}

impl fmt::Debug for ServiceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ServiceEntry")
            .field("service_name", &self.service_name)
            .field("interface", &self.interface.name)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("service {0:?} is already registered")]
    AlreadyRegistered(String),
    #[error("service {service:?} does not implement {missing:?}")]
    NonConformant {
        service: String,
        missing: Vec<String>,
    },
    #[error("no service named {0:?}")]
    UnknownService(String),
}

/// Registry of installed services; lookups may run concurrently,
/// registrations are serialized.
#[derive(Debug, Default)]
pub struct ServiceManager {
    entries: RwLock<Vec<ServiceEntry>>,
}

impl ServiceManager {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registry holding `ws.Parameter`, `ws.Request` and `ws.Engine`; engines
    /// it creates use `config`.
    pub fn with_builtin_services(config: EngineConfig) -> Self {
        let sm = Self::new();
        let parse = |text| parse_idl(text).expect("bundled IDL parses");
        sm.register_service(PARAMETER_SERVICE, parse(PARAMETER_IDL), || {
            Box::new(ParameterService::default())
        })
        .expect("fresh registry");
        sm.register_service(REQUEST_SERVICE, parse(REQUEST_IDL), || {
            Box::new(RequestService::default())
        })
        .expect("fresh registry");
        sm.register_service(ENGINE_SERVICE, parse(ENGINE_IDL), move || {
            Box::new(EngineService::new(config.clone()))
        })
        .expect("fresh registry");
        sm
    }

    /// Stores `factory` after probing one instance for every interface
    /// method name.
    pub fn register_service<F>(
        &self,
        service_name: &str,
        interface: InterfaceDef,
        factory: F,
    ) -> Result<(), RegistryError>
    where
        F: Fn() -> Box<dyn UnoService> + Send + Sync + 'static,
    {
        let mut entries = self.entries.write().unwrap_or_else(|e| e.into_inner());
        if entries.iter().any(|e| e.service_name == service_name) {
            return Err(RegistryError::AlreadyRegistered(service_name.to_string()));
        }
        let offered = factory().method_names();
        let missing: Vec<String> = interface
            .methods
            .iter()
            .filter(|m| !offered.contains(&m.name.as_str()))
            .map(|m| m.name.clone())
            .collect();
        if !missing.is_empty() {
            return Err(RegistryError::NonConformant {
                service: service_name.to_string(),
                missing,
            });
        }
        entries.push(ServiceEntry {
            service_name: service_name.to_string(),
            interface,
            factory: Arc::new(factory),
        });
        Ok(())
    }

    /// A fresh handle from the named factory.
    pub fn create_instance(
        &self,
        service_name: &str,
    ) -> Result<Box<dyn UnoService>, RegistryError> {
        let factory = {
            let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
            entries
                .iter()
                .find(|e| e.service_name == service_name)
                .map(|e| Arc::clone(&e.factory))
                .ok_or_else(|| RegistryError::UnknownService(service_name.to_string()))?
        };
        Ok(factory())
    }

    /// Service names in registration order.
    pub fn enumerate(&self) -> Vec<String> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        entries.iter().map(|e| e.service_name.clone()).collect()
    }

    pub fn interface(&self, service_name: &str) -> Result<InterfaceDef, RegistryError> {
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        entries
            .iter()
            .find(|e| e.service_name == service_name)
            .map(|e| e.interface.clone())
            .ok_or_else(|| RegistryError::UnknownService(service_name.to_string()))
    }
}

/// A parameter container; its data is reached by downcasting.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterService {
    pub parameter: Parameter,
}

impl Default for ParameterService {
    fn default() -> Self {
        ParameterService {
            parameter: Parameter::new("param", crate::model::Value::Null),
        }
    }
}

impl UnoService for ParameterService {
    fn method_names(&self) -> Vec<&'static str> {
        Vec::new()
    }

    fn invoke(&mut self, method: &str, _: Vec<UnoValue>) -> Result<UnoValue, InvokeError> {
        Err(InvokeError::UnknownMethod(method.to_string()))
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestService {
    pub request: Request,
}

const REQUEST_METHODS: [&str; 12] = [
    "addParameter",
    "removeParameter",
    "getParameter",
    "addReturnParameter",
    "removeReturnParameter",
    "getReturnParameter",
    "setOperation",
    "setNamespace",
    "setPrefix",
    "setAction",
    "setEndpoint",
    "setExceptionOnSOAPFault",
];

fn one_text(method: &str, args: Vec<UnoValue>) -> Result<String, InvokeError> {
    match <[UnoValue; 1]>::try_from(args) {
        Ok([UnoValue::Text(s)]) => Ok(s),
        _ => Err(InvokeError::BadArguments {
            method: method.to_string(),
            expected: "string",
        }),
    }
}

fn one_parameter(method: &str, args: Vec<UnoValue>) -> Result<Parameter, InvokeError> {
    match <[UnoValue; 1]>::try_from(args) {
        Ok([UnoValue::Parameter(p)]) => Ok(p),
        _ => Err(InvokeError::BadArguments {
            method: method.to_string(),
            expected: "Axis2ParameterUNO",
        }),
    }
}

impl UnoService for RequestService {
    fn method_names(&self) -> Vec<&'static str> {
        REQUEST_METHODS.to_vec()
    }

    fn invoke(&mut self, method: &str, args: Vec<UnoValue>) -> Result<UnoValue, InvokeError> {
        let r = &mut self.request;
        let collection = if method.contains("Return") {
            Collection::Output
        } else {
            Collection::Input
        };
        match method {
            "addParameter" | "addReturnParameter" => {
                r.add_parameter(collection, one_parameter(method, args)?)?;
                Ok(UnoValue::Void)
            }
            "removeParameter" | "removeReturnParameter" => {
                r.remove_parameter(collection, &one_text(method, args)?)?;
                Ok(UnoValue::Void)
            }
            "getParameter" | "getReturnParameter" => {
                let name = one_text(method, args)?;
                Ok(UnoValue::Parameter(
                    r.get_parameter(collection, &name)?.clone(),
                ))
            }
            "setOperation" => {
                r.set_operation(&one_text(method, args)?)?;
                Ok(UnoValue::Void)
            }
            "setNamespace" => {
                r.set_namespace(&one_text(method, args)?);
                Ok(UnoValue::Void)
            }
            "setPrefix" => {
                r.set_prefix(&one_text(method, args)?)?;
                Ok(UnoValue::Void)
            }
            "setAction" => {
                r.set_action(&one_text(method, args)?);
                Ok(UnoValue::Void)
            }
            "setEndpoint" => {
                r.set_endpoint(&one_text(method, args)?)?;
                Ok(UnoValue::Void)
            }
            "setExceptionOnSOAPFault" => match <[UnoValue; 1]>::try_from(args) {
                Ok([UnoValue::Boolean(b)]) => {
                    r.set_fault_policy(b);
                    Ok(UnoValue::Void)
                }
                _ => Err(InvokeError::BadArguments {
                    method: method.to_string(),
                    expected: "boolean",
                }),
            },
            other => Err(InvokeError::UnknownMethod(other.to_string())),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Engine handle: bound to a request by `Axis2WebService`, then executed.
#[derive(Debug)]
pub struct EngineService {
    config: EngineConfig,
    engine: Option<Engine>,
}

impl EngineService {
    pub fn new(config: EngineConfig) -> Self {
        EngineService {
            config,
            engine: None,
        }
    }

    pub fn engine(&self) -> Option<&Engine> {
        self.engine.as_ref()
    }

    pub fn engine_mut(&mut self) -> Option<&mut Engine> {
        self.engine.as_mut()
    }
}

impl UnoService for EngineService {
    fn method_names(&self) -> Vec<&'static str> {
        vec!["Axis2WebService", "outInExecute", "outExecute"]
    }

    fn invoke(&mut self, method: &str, args: Vec<UnoValue>) -> Result<UnoValue, InvokeError> {
        match method {
            "Axis2WebService" => match <[UnoValue; 1]>::try_from(args) {
                Ok([UnoValue::Request(request)]) => {
                    self.engine = Some(create_engine(request, self.config.clone())?);
                    Ok(UnoValue::Void)
                }
                _ => Err(InvokeError::BadArguments {
                    method: method.to_string(),
                    expected: "Axis2RequestUNO",
                }),
            },
            "outInExecute" => {
                let engine = self.engine.as_mut().ok_or(InvokeError::NotInitialized)?;
                Ok(UnoValue::Parameters(engine.out_in_execute()?))
            }
            "outExecute" => {
                let engine = self.engine.as_mut().ok_or(InvokeError::NotInitialized)?;
                Ok(UnoValue::Boolean(engine.out_execute()?))
            }
            other => Err(InvokeError::UnknownMethod(other.to_string())),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
