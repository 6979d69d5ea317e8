//! The market-data table: one quote call per instrument.

use std::io::Write;
use std::sync::Mutex;

use soapforge_core::model::format_decimal;
use soapforge_core::{
    bind_request, create_engine, EngineConfig, EngineError, ServiceDescription, Value,
};

use crate::config::OutputFormat;
use crate::CliError;

pub const OPERATION: &str = "GetQuote";
pub const COLUMNS: [&str; 4] = ["Open", "High", "Low", "Close"];
const MAX_WORKERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum RowError {
    Fault(String),
    Transport(String),
    Other(String),
}

impl RowError {
    fn message(&self) -> &str {
        match self {
            RowError::Fault(m) | RowError::Transport(m) | RowError::Other(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuoteRow {
    pub symbol: String,
    pub quote: Result<[f64; 4], RowError>,
}

fn fetch_one(
    sd: &ServiceDescription,
    endpoint: Option<&str>,
    symbol: &str,
    config: &EngineConfig,
) -> Result<[f64; 4], RowError> {
    let other = |e: &dyn std::fmt::Display| RowError::Other(e.to_string());
    let mut request = bind_request(sd, OPERATION).map_err(|e| other(&e))?;
    if let Some(endpoint) = endpoint {
        request.set_endpoint(endpoint).map_err(|e| other(&e))?;
    }
    request
        .set_input_value("symbol", Value::text(symbol))
        .map_err(|e| other(&e))?;
    request.set_fault_policy(true);
    let mut engine = create_engine(request, config.clone())
        .map_err(|e| other(&e))?
        .with_service_description(sd.clone());
    let params = engine.out_in_execute().map_err(|e| match e {
        EngineError::Fault(f) => RowError::Fault(f.fault_string),
        EngineError::TransportFailed(m) => RowError::Transport(m),
        e => other(&e),
    })?;
    let mut quote = [0.0; 4];
    for (slot, column) in quote.iter_mut().zip(COLUMNS) {
        *slot = params
            .iter()
            .find(|p| p.name == column)
            .and_then(|p| p.value.as_decimal())
            .ok_or_else(|| RowError::Other(format!("response lacks a numeric {column}")))?;
    }
    Ok(quote)
}

/// Fetches every symbol, a few at a time. Rows come back in input order.
pub fn fetch_quotes(
    sd: &ServiceDescription,
    endpoint: Option<&str>,
    symbols: &[String],
    config: &EngineConfig,
) -> Vec<QuoteRow> {
    let workers = symbols.len().clamp(1, MAX_WORKERS);
    let slots: Vec<Mutex<Option<QuoteRow>>> = symbols.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for w in 0..workers {
            let slots = &slots;
            scope.spawn(move || {
                for i in (w..symbols.len()).step_by(workers) {
                    let quote = fetch_one(sd, endpoint, &symbols[i], config);
                    *slots[i].lock().expect("slot lock") = Some(QuoteRow {
                        symbol: symbols[i].clone(),
                        quote,
                    });
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| {
            s.into_inner()
                .expect("slot lock")
                .expect("every slot filled")
        })
        .collect()
}

fn cells(row: &QuoteRow) -> Vec<String> {
    let mut out = vec![row.symbol.clone()];
    match &row.quote {
        Ok(q) => out.extend(q.iter().map(|d| format_decimal(*d))),
        Err(_) => out.extend(std::iter::repeat_n("ERR".to_string(), 4)),
    }
    out
}

fn header() -> Vec<&'static str> {
    let mut h = vec!["SYMBOL"];
    h.extend(COLUMNS);
    h
}

pub fn render(
    rows: &[QuoteRow],
    format: OutputFormat,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(header()).map_err(csv_error)?;
            for row in rows {
                w.write_record(cells(row)).map_err(csv_error)?;
            }
            let bytes = w
                .into_inner()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            out.write_all(&bytes)?;
        }
        OutputFormat::Table => {
            let table: Vec<Vec<String>> =
                std::iter::once(header().into_iter().map(String::from).collect())
                    .chain(rows.iter().map(cells))
                    .collect();
            let widths: Vec<usize> = (0..5)
                .map(|c| {
                    table
                        .iter()
                        .map(|r| r[c].chars().count())
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            for r in &table {
                let mut line = format!("{:<w$}", r[0], w = widths[0]);
                for c in 1..5 {
                    line.push_str(&format!("  {:>w$}", r[c], w = widths[c]));
                }
                writeln!(out, "{line}")?;
            }
        }
        OutputFormat::JsonLines => {
            for row in rows {
                let mut obj = serde_json::Map::new();
                obj.insert("SYMBOL".into(), row.symbol.clone().into());
                match &row.quote {
                    Ok(q) => {
                        for (column, v) in COLUMNS.iter().zip(q) {
                            obj.insert(column.to_string(), (*v).into());
                        }
                    }
                    Err(e) => {
                        obj.insert("error".into(), e.message().into());
                    }
                }
                writeln!(out, "{}", serde_json::Value::Object(obj))?;
            }
        }
    }
    Ok(())
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Internal(e.to_string())
}

/// Writes one warning per failed row plus a count. Returns true when every
/// row failed at the transport level.
pub fn report_failures(rows: &[QuoteRow], err: &mut dyn Write) -> Result<bool, CliError> {
    let failed: Vec<(&str, &RowError)> = rows
        .iter()
        .filter_map(|r| r.quote.as_ref().err().map(|e| (r.symbol.as_str(), e)))
        .collect();
    for (symbol, e) in &failed {
        writeln!(err, "warning: {symbol}: {}", e.message())?;
    }
    if !failed.is_empty() {
        writeln!(err, "{} warning(s)", failed.len())?;
    }
    Ok(!rows.is_empty()
        && failed.len() == rows.len()
        && failed
            .iter()
            .all(|(_, e)| matches!(e, RowError::Transport(_))))
}
