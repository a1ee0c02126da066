//! Step-level simulation of branch-parallel decoding: a fork/join scheduler
//! driven by a pluggable token source, with grammar enforcement, a shared
//! prefix cache and abstract cost accounting.

mod backend;
mod cost;
mod metrics;
mod sim;

pub use backend::{Backend, DecodeContext, ScriptedModel, SeqAddr, ToyBackend};
pub use cost::{CostKind, CostModel};
pub use metrics::*;
pub use sim::{
    run, run_batch, run_report, BatchReport, BlockStats, EngineConfig, EngineError, EngineLimits, Event, EventKind,
    Phase, RequestStatus, SimulationReport, Termination, WorkerState, WorkerStats, DEFAULT_MAX_LEN,
};
