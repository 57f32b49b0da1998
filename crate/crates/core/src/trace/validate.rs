//! Structural checker for Kanata logs.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use super::{Stage, HEADER};

/// First problem found in a log, with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceViolation {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for TraceViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for TraceViolation {}

/// Counts gathered from a well-formed log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceSummary {
    pub instructions: u64,
    pub commits: u64,
    pub flushes: u64,
    pub last_cycle: u64,
}

#[derive(Default)]
struct InstState {
    open: BTreeSet<(u32, Stage)>,
}

/// Checks the header, command grammar, stage begin/end pairing, single
/// retirement per instruction and cycle monotonicity.
pub fn validate_trace(bytes: &[u8]) -> Result<TraceSummary, TraceViolation> {
    let text = std::str::from_utf8(bytes).map_err(|e| TraceViolation {
        line: 1 + bytes[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count(),
        message: "invalid UTF-8".into(),
    })?;
    let line_count = text.lines().count();
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(TraceViolation {
            line: line_count,
            message: "unexpected end of input".into(),
        });
    }

    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, l)) if l == HEADER => {}
        Some((n, _)) => {
            return Err(TraceViolation {
                line: n,
                message: format!("expected header {HEADER:?}"),
            })
        }
        None => {
            return Err(TraceViolation {
                line: 1,
                message: "unexpected end of input".into(),
            })
        }
    }

    let mut summary = TraceSummary::default();
    let mut cycle: Option<u64> = None;
    let mut live: HashMap<u64, InstState> = HashMap::new();
    let mut retired: BTreeSet<u64> = BTreeSet::new();

    for (n, line) in lines {
        let bad = |message: String| TraceViolation { line: n, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let num = |i: usize| -> Result<u64, TraceViolation> {
            fields
                .get(i)
                .and_then(|f| f.parse::<u64>().ok())
                .ok_or_else(|| bad(format!("expected integer in field {}", i + 1)))
        };
        let arity = |k: usize| -> Result<(), TraceViolation> {
            if fields.len() == k {
                Ok(())
            } else {
                Err(bad(format!(
                    "command {:?} takes {} fields, found {}",
                    fields[0],
                    k - 1,
                    fields.len() - 1
                )))
            }
        };
        if cycle.is_none() && !matches!(fields[0], "C=") {
            return Err(bad("first command must set the cycle with C=".into()));
        }
        match fields[0] {
            "C=" => {
                arity(2)?;
                let c = num(1)?;
                if let Some(cur) = cycle {
                    if c < cur {
                        return Err(bad(format!("cycle moves backwards from {cur} to {c}")));
                    }
                }
                cycle = Some(c);
            }
            "C" => {
                arity(2)?;
                let d = num(1)?;
                cycle = cycle.map(|c| c + d);
            }
            "I" => {
                arity(4)?;
                let id = num(1)?;
                num(2)?;
                num(3)?;
                if live.contains_key(&id) || retired.contains(&id) {
                    return Err(bad(format!("instruction {id} born twice")));
                }
                live.insert(id, InstState::default());
                summary.instructions += 1;
            }
            "L" => {
                if fields.len() < 4 {
                    return Err(bad("label needs id, type and text".into()));
                }
                let id = num(1)?;
                num(2)?;
                if !live.contains_key(&id) {
                    return Err(bad(format!("label for unknown instruction {id}")));
                }
            }
            "S" | "E" => {
                arity(4)?;
                let id = num(1)?;
                let lane = u32::try_from(num(2)?).map_err(|_| bad("lane out of range".into()))?;
                let stage = Stage::from_label(fields[3])
                    .ok_or_else(|| bad(format!("unknown stage {:?}", fields[3])))?;
                let inst = live
                    .get_mut(&id)
                    .ok_or_else(|| bad(format!("stage event for unknown instruction {id}")))?;
                if fields[0] == "S" {
                    if !inst.open.insert((lane, stage)) {
                        return Err(bad(format!("stage {stage} of {id} begun twice")));
                    }
                } else if !inst.open.remove(&(lane, stage)) {
                    return Err(bad(format!("E before S for stage {stage} of {id}")));
                }
            }
            "R" => {
                arity(4)?;
                let id = num(1)?;
                num(2)?;
                let kind = num(3)?;
                if live.remove(&id).is_none() {
                    return Err(bad(if retired.contains(&id) {
                        format!("instruction {id} retired twice")
                    } else {
                        format!("retire of unknown instruction {id}")
                    }));
                }
                retired.insert(id);
                match kind {
                    0 => summary.commits += 1,
                    1 => summary.flushes += 1,
                    k => return Err(bad(format!("retire type {k} is not 0 or 1"))),
                }
            }
            "W" => {
                arity(4)?;
                num(1)?;
                num(2)?;
                num(3)?;
            }
            other => return Err(bad(format!("unknown command {other:?}"))),
        }
    }

    if let Some(id) = live.keys().min() {
        return Err(TraceViolation {
            line: line_count,
            message: format!("instruction {id} never retired"),
        });
    }
    summary.last_cycle = cycle.unwrap_or(0);
    Ok(summary)
}
