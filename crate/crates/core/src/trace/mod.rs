//! Kanata pipeline logs for the Konata visualizer.
//!
//! A log is a `Kanata\t0004` header followed by one tab-separated command
//! per line:
//!
//! | command | meaning |
//! |---|---|
//! | `C=\t<cycle>` | set the current cycle |
//! | `C\t<delta>` | advance the current cycle |
//! | `I\t<id>\t<id>\t0` | instruction birth |
//! | `L\t<id>\t0\t<text>` | left-pane label |
//! | `S\t<id>\t0\t<stage>` / `E\t<id>\t0\t<stage>` | stage begin / end |
//! | `R\t<id>\t<retire-id>\t<0\|1>` | commit (0) or flush (1) |

mod validate;
mod writer;

pub use validate::{validate_trace, TraceSummary, TraceViolation};
pub use writer::{open_trace, TraceWriter};

use std::fmt;

use thiserror::Error;

pub const HEADER: &str = "Kanata\t0004";

/// Pipeline stage labels shown by the visualizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Fetch,
    Decode,
    Rename,
    Dispatch,
    Issue,
    RegRead,
    Execute,
    Memory,
    Writeback,
    Commit,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Fetch,
        Stage::Decode,
        Stage::Rename,
        Stage::Dispatch,
        Stage::Issue,
        Stage::RegRead,
        Stage::Execute,
        Stage::Memory,
        Stage::Writeback,
        Stage::Commit,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Fetch => "F",
            Stage::Decode => "D",
            Stage::Rename => "Rn",
            Stage::Dispatch => "Ds",
            Stage::Issue => "Is",
            Stage::RegRead => "RR",
            Stage::Execute => "X",
            Stage::Memory => "Ma",
            Stage::Writeback => "Wb",
            Stage::Commit => "Cm",
        }
    }

    pub fn from_label(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.label() == s)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetireKind {
    Commit = 0,
    Flush = 1,
}

/// One record of the log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KanataEvent {
    /// Move the log to absolute cycle `cycle`.
    CycleAdvance {
        cycle: u64,
    },
    InstBirth {
        id: u64,
    },
    Label {
        id: u64,
        text: String,
    },
    StageBegin {
        id: u64,
        stage: Stage,
    },
    StageEnd {
        id: u64,
        stage: Stage,
    },
    Retire {
        id: u64,
        retire_id: u64,
        kind: RetireKind,
    },
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace sink is not writable: {0}")]
    SinkUnwritable(#[from] std::io::Error),
    #[error("trace already opened")]
    AlreadyOpen,
    #[error("trace not opened")]
    NotOpen,
    #[error("event for cycle {event} arrived after cycle {current}")]
    OutOfOrderEvent { current: u64, event: u64 },
    #[error("event for unknown instruction {0}")]
    UnknownInst(u64),
}
