//! Handler/phase execution framework.
//!
//! A flow is an ordered list of phases; each handler belongs to one phase and
//! may carry placement rules (`PhaseFirst`, `PhaseLast`, `Before(name)`,
//! `After(name)`) scoped to that phase. [`resolve_order`] turns the rules
//! into a deterministic execution order: phases in flow order, and within a
//! phase the lexicographically smallest order (by registration index) that
//! satisfies every rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{Envelope, HeaderBlock, QName};
use crate::model::{FaultInfo, Request, Value};

pub const WSA_NS: &str = "http://www.w3.org/2005/08/addressing";
pub const ADDRESSING_PHASE: &str = "Addressing";
pub const TRACE_PROPERTY: &str = "pipeline.trace";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Out,
    In,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Placement {
    PhaseFirst,
    PhaseLast,
    Before(String),
    After(String),
}

/// What a handler tells the flow to do next.
#[derive(Debug, Clone, PartialEq)]
pub enum HandlerOutcome {
    Continue,
    Abort(FaultInfo),
}

pub type HandlerAction = Arc<dyn Fn(&mut MessageContext) -> HandlerOutcome + Send + Sync>;

/// A named message-processing step with its phase and placement rules.
#[derive(Clone)]
pub struct HandlerSpec {
    pub name: String,
    pub phase: String,
    pub placement: BTreeSet<Placement>,
    pub action: HandlerAction,
}

impl fmt::Debug for HandlerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HandlerSpec")
            .field("name", &self.name)
            .field("phase", &self.phase)
            .field("placement", &self.placement)
            .finish_non_exhaustive()
    }
}

impl HandlerSpec {
    pub fn new<F>(name: impl Into<String>, phase: impl Into<String>, action: F) -> Self
    where
        F: Fn(&mut MessageContext) -> HandlerOutcome + Send + Sync + 'static,
    {
        HandlerSpec {
            name: name.into(),
            phase: phase.into(),
            placement: BTreeSet::new(),
            action: Arc::new(action),
        }
    }

    /// A handler that does nothing but continue.
    pub fn noop(name: impl Into<String>, phase: impl Into<String>) -> Self {
        Self::new(name, phase, |_| HandlerOutcome::Continue)
    }

    pub fn with_placement(mut self, rule: Placement) -> Self {
        self.placement.insert(rule);
        self
    }

    pub fn phase_first(self) -> Self {
        self.with_placement(Placement::PhaseFirst)
    }

    pub fn phase_last(self) -> Self {
        self.with_placement(Placement::PhaseLast)
    }

    pub fn before(self, other: impl Into<String>) -> Self {
        self.with_placement(Placement::Before(other.into()))
    }

    pub fn after(self, other: impl Into<String>) -> Self {
        self.with_placement(Placement::After(other.into()))
    }
}

/// The ordered phases of one flow direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowConfig {
    pub direction: Direction,
    pub phases: Vec<String>,
}

impl FlowConfig {
    pub fn new(
        direction: Direction,
        phases: impl IntoIterator<Item = impl Into<String>>,
    ) -> Result<Self, PipelineError> {
        let phases: Vec<String> = phases.into_iter().map(Into::into).collect();
        if phases.is_empty() {
            return Err(PipelineError::InvalidFlow("flow has no phases".into()));
        }
        for (i, p) in phases.iter().enumerate() {
            if phases[..i].contains(p) {
                return Err(PipelineError::InvalidFlow(format!(
                    "phase {p:?} listed twice"
                )));
            }
        }
        Ok(FlowConfig { direction, phases })
    }

    pub fn default_out() -> Self {
        FlowConfig {
            direction: Direction::Out,
            phases: ["Validation", "Addressing", "Security", "MessageOut"]
                .map(String::from)
                .to_vec(),
        }
    }

    pub fn default_in() -> Self {
        FlowConfig {
            direction: Direction::In,
            phases: ["TransportIn", "Security", "Dispatch"]
                .map(String::from)
                .to_vec(),
        }
    }
}

/// Mutable state threaded through a flow.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageContext {
    pub request: Request,
    pub envelope: Option<Envelope>,
    pub transport_headers: BTreeMap<String, String>,
    pub properties: BTreeMap<String, Value>,
    pub direction: Direction,
}

impl MessageContext {
    pub fn new(request: Request, direction: Direction) -> Self {
        MessageContext {
            request,
            envelope: None,
            transport_headers: BTreeMap::new(),
            properties: BTreeMap::new(),
            direction,
        }
    }

    /// Handler names executed by the last flow run over this context.
    pub fn trace(&self) -> Vec<String> {
        match self.properties.get(TRACE_PROPERTY) {
            Some(Value::Sequence(items)) => items
                .iter()
                .filter_map(|v| v.as_text().map(str::to_string))
                .collect(),
            _ => Vec::new(),
        }
    }

    fn push_trace(&mut self, name: &str) {
        if let Some(Value::Sequence(items)) = self.properties.get_mut(TRACE_PROPERTY) {
            items.push(Value::text(name));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("handler {handler:?} names unknown phase {phase:?}")]
    UnknownPhase { handler: String, phase: String },
    #[error("handler {handler:?} references {target:?}, which is not a handler in the same phase")]
    UnknownReference { handler: String, target: String },
    #[error("phase {phase:?} has conflicting rules: {reason}")]
    Conflict { phase: String, reason: String },
    #[error("placement rules in phase {phase:?} form a cycle")]
    Cycle { phase: String },
    #[error("duplicate handler name {0:?}")]
    DuplicateHandler(String),
    #[error("invalid handler {handler:?}: {reason}")]
    InvalidHandler { handler: String, reason: String },
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
    #[error("handler {handler:?} panicked: {message}")]
    HandlerPanic { handler: String, message: String },
}

/// Resolves the execution order of `handlers` under `flow`.
pub fn resolve_order(
    flow: &FlowConfig,
    handlers: &[HandlerSpec],
) -> Result<Vec<String>, PipelineError> {
    Ok(arrange(flow, handlers)?
        .into_iter()
        .map(|h| h.name)
        .collect())
}

/// Like [`resolve_order`] but returns the handlers themselves, ready for
/// [`execute_flow`].
pub fn arrange(
    flow: &FlowConfig,
    handlers: &[HandlerSpec],
) -> Result<Vec<HandlerSpec>, PipelineError> {
    for (i, h) in handlers.iter().enumerate() {
        if handlers[..i].iter().any(|g| g.name == h.name) {
            return Err(PipelineError::DuplicateHandler(h.name.clone()));
        }
        if !flow.phases.contains(&h.phase) {
            return Err(PipelineError::UnknownPhase {
                handler: h.name.clone(),
                phase: h.phase.clone(),
            });
        }
        if h.placement.contains(&Placement::PhaseFirst)
            && h.placement.contains(&Placement::PhaseLast)
        {
            return Err(PipelineError::InvalidHandler {
                handler: h.name.clone(),
                reason: "both PhaseFirst and PhaseLast".into(),
            });
        }
        for rule in &h.placement {
            if let Placement::Before(t) | Placement::After(t) = rule {
                if *t == h.name {
                    return Err(PipelineError::InvalidHandler {
                        handler: h.name.clone(),
                        reason: "placement references itself".into(),
                    });
                }
                if !handlers.iter().any(|g| g.name == *t && g.phase == h.phase) {
                    return Err(PipelineError::UnknownReference {
                        handler: h.name.clone(),
                        target: t.clone(),
                    });
                }
            }
        }
    }

    let mut ordered = Vec::with_capacity(handlers.len());
    for phase in &flow.phases {
        let members: Vec<&HandlerSpec> = handlers.iter().filter(|h| &h.phase == phase).collect();
        for i in order_phase(phase, &members)? {
            ordered.push(members[i].clone());
        }
    }
    Ok(ordered)
}

// Returns indices into `members` (registration order).
fn order_phase(phase: &str, members: &[&HandlerSpec]) -> Result<Vec<usize>, PipelineError> {
    let n = members.len();
    let index_of = |name: &str| {
        members
            .iter()
            .position(|h| h.name == name)
            .expect("reference checked")
    };
    let unique = |rule: Placement, label: &str| -> Result<Option<usize>, PipelineError> {
        let found: Vec<usize> = (0..n)
            .filter(|&i| members[i].placement.contains(&rule))
            .collect();
        match found.len() {
            0 => Ok(None),
            1 => Ok(Some(found[0])),
            _ => Err(PipelineError::Conflict {
                phase: phase.to_string(),
                reason: format!(
                    "{label} claimed by {}",
                    found
                        .iter()
                        .map(|&i| members[i].name.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            }),
        }
    };
    let first = unique(Placement::PhaseFirst, "PhaseFirst")?;
    let last = unique(Placement::PhaseLast, "PhaseLast")?;

    // successors[a] contains b when a must run before b.
    let mut successors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (i, h) in members.iter().enumerate() {
        for rule in &h.placement {
            match rule {
                Placement::Before(t) => {
                    successors[i].insert(index_of(t));
                }
                Placement::After(t) => {
                    successors[index_of(t)].insert(i);
                }
                _ => {}
            }
        }
    }
    for j in 0..n {
        if let Some(f) = first.filter(|&f| f != j) {
            successors[f].insert(j);
        }
        if let Some(l) = last.filter(|&l| l != j) {
            successors[j].insert(l);
        }
    }

    // Kahn's algorithm, always taking the earliest-registered ready handler.
    let mut indegree = vec![0usize; n];
    for succ in &successors {
        for &b in succ {
            indegree[b] += 1;
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &b in &successors[i] {
            indegree[b] -= 1;
            if indegree[b] == 0 {
                ready.insert(b);
            }
        }
    }
    if order.len() < n {
        return Err(PipelineError::Cycle {
            phase: phase.to_string(),
        });
    }
    Ok(order)
}

/// Result of running a flow: the final context, and the fault if a handler
/// aborted.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowOutcome {
    Completed(MessageContext),
    Aborted {
        fault: FaultInfo,
        context: MessageContext,
    },
}

impl FlowOutcome {
    pub fn context(&self) -> &MessageContext {
        match self {
            FlowOutcome::Completed(ctx) | FlowOutcome::Aborted { context: ctx, .. } => ctx,
        }
    }

    pub fn into_context(self) -> MessageContext {
        match self {
            FlowOutcome::Completed(ctx) | FlowOutcome::Aborted { context: ctx, .. } => ctx,
        }
    }
}

/// Applies `ordered` handlers left to right, stopping at the first abort.
///
/// The executed handler names are recorded under [`TRACE_PROPERTY`],
/// replacing any previous trace.
pub fn execute_flow(
    ordered: &[HandlerSpec],
    mut ctx: MessageContext,
) -> Result<FlowOutcome, PipelineError> {
    ctx.properties
        .insert(TRACE_PROPERTY.to_string(), Value::Sequence(Vec::new()));
    for h in ordered {
        ctx.push_trace(&h.name);
        let action = &h.action;
        let outcome = catch_unwind(AssertUnwindSafe(|| action(&mut ctx))).map_err(|payload| {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "non-string panic payload".to_string());
            PipelineError::HandlerPanic {
                handler: h.name.clone(),
                message,
            }
        })?;
        if let HandlerOutcome::Abort(fault) = outcome {
            return Ok(FlowOutcome::Aborted {
                fault,
                context: ctx,
            });
        }
    }
    Ok(FlowOutcome::Completed(ctx))
}

/// Built-in WS-Addressing handler for the OUT flow.
///
/// Sets `wsa:To` to the request endpoint and `wsa:Action` to its action,
/// replacing earlier values; aborts with `MissingAction` when the action is
/// empty.
pub fn addressing_handler() -> HandlerSpec {
    HandlerSpec::new("addressing", ADDRESSING_PHASE, |ctx| {
        if ctx.request.action().is_empty() {
            return HandlerOutcome::Abort(FaultInfo::new(
                "MissingAction",
                "request has no action for wsa:Action",
            ));
        }
        let Some(env) = ctx.envelope.as_mut() else {
            return HandlerOutcome::Abort(FaultInfo::new(
                "MissingEnvelope",
                "no envelope to address",
            ));
        };
        env.upsert_header(HeaderBlock::new(
            QName::new(WSA_NS, "wsa", "To"),
            ctx.request.endpoint(),
        ));
        env.upsert_header(HeaderBlock::new(
            QName::new(WSA_NS, "wsa", "Action"),
            ctx.request.action(),
        ));
        HandlerOutcome::Continue
    })
}
