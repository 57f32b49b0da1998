//! The out-of-order timing model.
//!
//! [`Core`] simulates one program cycle by cycle. By default every commit
//! is checked against the functional executor, so a timing bug shows up as
//! [`SimError::CoSimDivergence`] instead of a silently wrong answer.

mod config;
mod core;
mod mdp;
mod rename;

pub use self::config::{ConfigError, CoreConfig};
pub use self::core::Core;
pub use self::mdp::{DependencePredictor, MDP_THRESHOLD};
pub use self::rename::{PhysReg, RenameTables, Renamed};

use std::io::Write;
use std::time::Instant;

use thiserror::Error;

use crate::isa::{IsaError, Memory, Program};
use crate::metrics::RunStats;
use crate::predictor::PredictorError;
use crate::trace::TraceError;

/// Why the front end or commit could not make progress this cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StallReason {
    RobFull,
    IqFull,
    LqFull,
    SqFull,
    NoPhysReg,
    IcacheMshrFull,
    StoreMshrFull,
}

/// What happened in one cycle, plus occupancy at its end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CycleReport {
    pub cycle: u64,
    pub fetched: usize,
    pub renamed: usize,
    pub issued: usize,
    pub written_back: usize,
    pub committed: usize,
    pub committed_total: u64,
    pub flushed: bool,
    pub stall: Option<StallReason>,
    pub rob: usize,
    pub iq: usize,
    pub lq: usize,
    pub sq: usize,
    pub free_regs: usize,
    pub inflight_regs: usize,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("co-simulation divergence at seq {seq} (pc {pc:#010x}): {field} is {timing}, expected {oracle}")]
    CoSimDivergence {
        seq: u64,
        pc: u32,
        field: &'static str,
        timing: String,
        oracle: String,
    },
    #[error("deadlock: no commit by cycle {cycle} (head pc {head_pc:x?})")]
    Deadlock { cycle: u64, head_pc: Option<u32> },
    #[error("cycle limit of {cycles} reached")]
    MaxCyclesExceeded { cycles: u64 },
    #[error("guest fault at {pc:#010x}: {error}")]
    GuestFault { pc: u32, error: IsaError },
    #[error("invariant violated in cycle {cycle}: {what}")]
    InvariantViolated { cycle: u64, what: String },
    #[error("configuration: {0}")]
    Config(String),
    #[error("trace: {0}")]
    Trace(TraceError),
    #[error("predictor: {0}")]
    Predictor(PredictorError),
}

/// Outcome of a completed simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub stats: RunStats,
    /// Guest exit status; `None` only if the run was stopped early.
    pub exit_code: Option<i32>,
    pub regs: [u32; 32],
    /// Guest memory after the last commit.
    pub memory: Memory,
    /// Bytes the guest wrote to stdout or stderr.
    pub output: Vec<u8>,
}

/// Options for [`simulate`].
pub struct RunOptions<'t> {
    pub name: String,
    pub trace: Option<Box<dyn Write + 't>>,
    pub trace_window: Option<(u64, u64)>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            name: "program".into(),
            trace: None,
            trace_window: None,
        }
    }
}

/// Runs `program` to completion and records wall-clock time.
pub fn simulate(
    program: &Program,
    config: &CoreConfig,
    options: RunOptions<'_>,
) -> Result<RunResult, SimError> {
    let start = Instant::now();
    let mut core = Core::new(program, config)?;
    core.set_name(options.name);
    if let Some(sink) = options.trace {
        core.attach_trace(sink, options.trace_window)?;
    }
    core.run_to_exit()?;
    let mut result = core.finish()?;
    result.stats.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    Ok(result)
}

/// [`simulate`] without tracing.
pub fn run(program: &Program, config: &CoreConfig) -> Result<RunResult, SimError> {
    simulate(program, config, RunOptions::default())
}
