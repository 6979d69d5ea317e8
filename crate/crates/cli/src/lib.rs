//! Command-line frontend: describe a WSDL, call one operation, build the
//! market-data table, or serve the mock host.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or validation error,
//! 3 SOAP fault, 4 transport failure, 5 mock port already in use.

pub mod call;
pub mod config;
pub mod market;

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::PathBuf;
use std::sync::{mpsc, Arc};

use clap::{Parser, Subcommand};
use thiserror::Error;

use soapforge_core::mockserver::{DEFAULT_PORT, MARKET_WSDL};
use soapforge_core::registry::InvokeError;
use soapforge_core::{
    parse_wsdl, EngineError, FaultInfo, MaxOccurs, MockError, MockServer, ModelError, PartSig,
    RegistryError, ServiceDescription, ServiceManager, Violation, WsdlError,
};

use call::{CallOutcome, CallPlan};
use config::{OutputFormat, Settings, TransportKind};

pub const ENDPOINT_ENV: &str = "SOAPFORGE_ENDPOINT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: io::Error },
    #[error(transparent)]
    Wsdl(#[from] WsdlError),
    #[error("request violates the service description: {}", describe_violations(.0))]
    Validation(Vec<Violation>),
    #[error("SOAP fault {}: {}", .0.fault_code, .0.fault_string)]
    Fault(FaultInfo),
    #[error("one-way message was answered with a SOAP fault")]
    Rejected,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{0}")]
    Internal(String),
    #[error("output failed: {0}")]
    Io(#[from] io::Error),
}

fn describe_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(", ")
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Read { .. }
            | CliError::Wsdl(_)
            | CliError::Validation(_) => 2,
            CliError::Fault(_) | CliError::Rejected => 3,
            CliError::Transport(_) => 4,
            CliError::PortInUse(_) => 5,
            CliError::Internal(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Fault(f) => CliError::Fault(f),
            EngineError::TransportFailed(m) => CliError::Transport(m),
            EngineError::Decode(e) => CliError::Transport(format!("unreadable response: {e}")),
            EngineError::ValidationFailed(v) => CliError::Validation(v),
            EngineError::Wsdl(e) => CliError::Wsdl(e),
            e @ (EngineError::InvalidRequest(_) | EngineError::Pipeline(_)) => {
                CliError::Usage(e.to_string())
            }
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        CliError::Internal(e.to_string())
    }
}

impl From<InvokeError> for CliError {
    fn from(e: InvokeError) -> Self {
        match e {
            InvokeError::Engine(e) => e.into(),
            InvokeError::Model(e) => e.into(),
            e => CliError::Internal(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "soapforge",
    version,
    about = "SOAP 1.1 client engine with a bundled mock host"
)]
struct Cli {
    /// Config file of `key = value` lines; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Service endpoint, overriding the WSDL address.
    #[arg(long, global = true, env = ENDPOINT_ENV, value_name = "URL")]
    endpoint: Option<String>,
    /// WSDL describing the service.
    #[arg(long, global = true, value_name = "FILE")]
    wsdl: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    transport: Option<TransportKind>,
    #[arg(long = "timeout-ms", global = true, value_name = "MS")]
    timeout_ms: Option<u64>,
    /// Table format for market-data.
    #[arg(long, global = true, value_enum)]
    output: Option<OutputFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the operations of a WSDL.
    Describe {
        /// WSDL file; defaults to --wsdl.
        file: Option<PathBuf>,
    },
    /// Invoke one operation and print its results as `name = value` lines.
    Call {
        #[arg(long)]
        operation: String,
        /// Required without a WSDL.
        #[arg(long)]
        namespace: Option<String>,
        /// Required without a WSDL.
        #[arg(long)]
        action: Option<String>,
        #[arg(long = "param", value_name = "NAME=VALUE")]
        params: Vec<String>,
        /// Send an explicit nil for a nillable part (WSDL calls only).
        #[arg(long = "null", value_name = "NAME")]
        nulls: Vec<String>,
        /// Send one-way (without a WSDL, where the pattern is unknown).
        #[arg(long)]
        one_way: bool,
        /// Return a fault as a `fault` result instead of failing.
        #[arg(long)]
        fault_as_result: bool,
        /// Drive the engine directly instead of through the service manager.
        #[arg(long)]
        direct: bool,
    },
    /// Fetch quotes for the given instruments.
    MarketData {
        symbols: Vec<String>,
        /// Use every instrument the bundled mock knows.
        #[arg(long, conflicts_with = "symbols")]
        all: bool,
    },
    /// Serve the mock host until interrupted.
    ServeMock {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
    },
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    2
                }
            };
        }
    };
    match dispatch(cli, out, err) {
        Ok(code) => code,
        Err(e) => {
            if let CliError::Fault(f) = &e {
                let _ = writeln!(out, "faultcode = {}", f.fault_code);
                let _ = writeln!(out, "faultstring = {}", f.fault_string);
            }
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        s.apply_file(path)?;
    }
    if let Some(e) = &cli.endpoint {
        s.endpoint = Some(e.clone());
    }
    if let Some(w) = &cli.wsdl {
        s.wsdl = Some(w.clone());
    }
    if let Some(t) = cli.transport {
        s.transport = t;
    }
    if let Some(t) = cli.timeout_ms {
        s.timeout_ms = t;
    }
    if let Some(o) = cli.output {
        s.output = o;
    }
    Ok(s)
}

fn load_wsdl(path: &PathBuf) -> Result<ServiceDescription, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_wsdl(&text)?)
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, CliError> {
    let s = settings(&cli)?;
    match cli.command {
        Command::Describe { file } => {
            let path = file
                .or(s.wsdl)
                .ok_or_else(|| CliError::Usage("describe needs a WSDL file".into()))?;
            let sd = load_wsdl(&path)?;
            for w in &sd.warnings {
                writeln!(err, "warning: {w}")?;
            }
            out.write_all(describe(&sd).as_bytes())?;
            Ok(0)
        }
        Command::Call {
            operation,
            namespace,
            action,
            params,
            nulls,
            one_way,
            fault_as_result,
            direct,
        } => {
            let params = call::split_params(&params)?;
            let mut plan = match &s.wsdl {
                Some(path) => call::plan_from_wsdl(
                    &load_wsdl(path)?,
                    &operation,
                    s.endpoint.as_deref(),
                    &params,
                    &nulls,
                )?,
                None if !nulls.is_empty() => {
                    return Err(CliError::Usage("--null needs --wsdl".into()));
                }
                None => {
                    let (Some(ns), Some(action), Some(endpoint)) =
                        (&namespace, &action, &s.endpoint)
                    else {
                        return Err(CliError::Usage(
                            "without --wsdl, call needs --namespace, --action and --endpoint"
                                .into(),
                        ));
                    };
                    let mep = if one_way {
                        soapforge_core::Mep::InOnly
                    } else {
                        soapforge_core::Mep::InOut
                    };
                    call::plan_ad_hoc(&operation, ns, action, endpoint, &params, mep)?
                }
            };
            plan.request.set_fault_policy(!fault_as_result);
            let config = s.engine_config()?;
            let outcome = if direct {
                call::execute_direct(&plan, config)?
            } else {
                call::execute_via_registry(&plan, &ServiceManager::with_builtin_services(config))?
            };
            print_outcome(&plan, &outcome, out)?;
            match outcome {
                CallOutcome::Delivered(false) => Err(CliError::Rejected),
                _ => Ok(0),
            }
        }
        Command::MarketData { symbols, all } => {
            let sd = match &s.wsdl {
                Some(path) => load_wsdl(path)?,
                None => parse_wsdl(MARKET_WSDL)?,
            };
            let symbols = if all {
                soapforge_core::mockserver::market_rows()
                    .iter()
                    .map(|r| r.symbol.clone())
                    .collect()
            } else {
                symbols
            };
            if symbols.is_empty() {
                return Err(CliError::Usage(
                    "no symbols given (list them or pass --all)".into(),
                ));
            }
            let config = s.engine_config()?;
            let rows = market::fetch_quotes(&sd, s.endpoint.as_deref(), &symbols, &config);
            market::render(&rows, s.output, out)?;
            if market::report_failures(&rows, err)? {
                return Err(CliError::Transport("every quote call failed".into()));
            }
            Ok(0)
        }
        Command::ServeMock { port } => {
            let (tx, rx) = mpsc::channel();
            serve_mock(port, out, move || {
                if let Err(e) = ctrlc::set_handler(move || {
                    let _ = tx.send(());
                }) {
                    eprintln!("warning: cannot install interrupt handler: {e}");
                }
                let _ = rx.recv();
            })?;
            Ok(0)
        }
    }
}

/// Serves the built-in mock services until `wait` returns.
pub fn serve_mock(port: u16, out: &mut dyn Write, wait: impl FnOnce()) -> Result<(), CliError> {
    let host = Arc::new(MockServer::with_builtin_services());
    let running = host.serve_http(port).map_err(|e| match e {
        MockError::PortInUse(p) => CliError::PortInUse(p),
        e => CliError::Internal(e.to_string()),
    })?;
    writeln!(out, "listening on {}", running.addr())?;
    for path in host.paths() {
        writeln!(out, "  {}", running.url(&path))?;
    }
    out.flush()?;
    wait();
    running.shutdown();
    writeln!(out, "stopped")?;
    Ok(())
}

fn print_outcome(
    plan: &CallPlan,
    outcome: &CallOutcome,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match outcome {
        CallOutcome::Returned(params) => {
            for p in params {
                writeln!(out, "{} = {}", p.name, p.value)?;
            }
            if params.is_empty() {
                writeln!(out, "({} returned no values)", plan.request.operation())?;
            }
        }
        CallOutcome::Delivered(ok) => writeln!(out, "delivered = {ok}")?,
    }
    Ok(())
}

fn occurs_marker(part: &PartSig) -> String {
    match (part.min_occurs, part.max_occurs) {
        (1, MaxOccurs::Bounded(1)) => String::new(),
        (0, MaxOccurs::Bounded(1)) => "?".into(),
        (0, MaxOccurs::Unbounded) => "*".into(),
        (1, MaxOccurs::Unbounded) => "+".into(),
        (min, MaxOccurs::Unbounded) => format!("{{{min},}}"),
        (min, MaxOccurs::Bounded(max)) => format!("{{{min},{max}}}"),
    }
}

/// `a,b:string, c:int?`: consecutive parts sharing a type and occurrence
/// marker are grouped.
fn signature(parts: &[PartSig]) -> String {
    if parts.is_empty() {
        return "()".into();
    }
    let mut groups: Vec<(Vec<&str>, String)> = Vec::new();
    for p in parts {
        let suffix = format!("{}{}", p.type_name, occurs_marker(p));
        match groups.last_mut() {
            Some((names, s)) if *s == suffix => names.push(&p.name),
            _ => groups.push((vec![&p.name], suffix)),
        }
    }
    groups
        .iter()
        .map(|(names, suffix)| format!("{}:{suffix}", names.join(",")))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Human-readable summary of a service description.
pub fn describe(sd: &ServiceDescription) -> String {
    let mut text = format!("service {}\nendpoint {}\n", sd.service_name, sd.endpoint);
    for op in sd.operations.values() {
        let mut line = format!("{} ({}): {}", op.name, op.mep, signature(&op.inputs));
        if op.mep == soapforge_core::Mep::InOut {
            line.push_str(&format!(" -> {}", signature(&op.outputs)));
        }
        text.push_str(&line);
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;
    use soapforge_core::mockserver::ECHO_WSDL;

    #[test]
    fn market_description() {
        let sd = parse_wsdl(MARKET_WSDL).unwrap();
        let text = describe(&sd);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(
            lines[2],
            "GetQuote (IN_OUT): symbol:string -> Open,High,Low,Close:double"
        );
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn echo_description_marks_occurrences() {
        let text = describe(&parse_wsdl(ECHO_WSDL).unwrap());
        assert!(
            text.contains("Echo (IN_OUT): msg:string, count:int?, tags:string*, urgent:boolean"),
            "{text}"
        );
        assert!(
            text.contains("Notify (IN_ONLY): message:string, level:long, weight:float\n"),
            "{text}"
        );
        assert!(text.contains("Ping (IN_OUT): () -> ()"), "{text}");
    }

    #[test]
    fn exit_codes_by_class() {
        let cases = [
            (CliError::Usage("x".into()), 2),
            (
                CliError::Validation(vec![Violation::MissingPart("symbol".into())]),
                2,
            ),
            (
                CliError::Fault(FaultInfo::new("soapenv:Client", "bad input")),
                3,
            ),
            (CliError::Rejected, 3),
            (CliError::Transport("refused".into()), 4),
            (CliError::PortInUse(8190), 5),
        ];
        for (e, code) in cases {
            assert_eq!(e.exit_code(), code, "{e}");
        }
        assert_eq!(
            CliError::Validation(vec![Violation::MissingPart("symbol".into())]).to_string(),
            "request violates the service description: MissingPart(\"symbol\")"
        );
    }
}
