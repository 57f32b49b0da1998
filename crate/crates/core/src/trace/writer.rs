use std::collections::HashSet;
use std::io::Write;

use super::{KanataEvent, TraceError, HEADER};

/// Serializes [`KanataEvent`]s to a byte sink.
#[derive(Debug)]
pub struct TraceWriter<W: Write> {
    sink: W,
    opened: bool,
    cycle: u64,
    live: HashSet<u64>,
}

/// Creates a writer on `sink` and writes the header.
pub fn open_trace<W: Write>(sink: W) -> Result<TraceWriter<W>, TraceError> {
    let mut w = TraceWriter::new(sink);
    w.open(0)?;
    Ok(w)
}

impl<W: Write> TraceWriter<W> {
    pub fn new(sink: W) -> Self {
        Self {
            sink,
            opened: false,
            cycle: 0,
            live: HashSet::new(),
        }
    }

    /// Writes the header and sets the starting cycle. Only allowed once.
    pub fn open(&mut self, start_cycle: u64) -> Result<(), TraceError> {
        if self.opened {
            return Err(TraceError::AlreadyOpen);
        }
        writeln!(self.sink, "{HEADER}")?;
        writeln!(self.sink, "C=\t{start_cycle}")?;
        self.opened = true;
        self.cycle = start_cycle;
        Ok(())
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    /// Instructions born and not yet retired.
    pub fn live(&self) -> usize {
        self.live.len()
    }

    fn known(&self, id: u64) -> Result<(), TraceError> {
        if self.live.contains(&id) {
            Ok(())
        } else {
            Err(TraceError::UnknownInst(id))
        }
    }

    pub fn record(&mut self, event: KanataEvent) -> Result<(), TraceError> {
        if !self.opened {
            return Err(TraceError::NotOpen);
        }
        match event {
            KanataEvent::CycleAdvance { cycle } => {
                if cycle < self.cycle {
                    return Err(TraceError::OutOfOrderEvent {
                        current: self.cycle,
                        event: cycle,
                    });
                }
                if cycle > self.cycle {
                    writeln!(self.sink, "C\t{}", cycle - self.cycle)?;
                    self.cycle = cycle;
                }
            }
            KanataEvent::InstBirth { id } => {
                self.live.insert(id);
                writeln!(self.sink, "I\t{id}\t{id}\t0")?;
            }
            KanataEvent::Label { id, text } => {
                self.known(id)?;
                // labels are single-line
                let text = text.replace(['\n', '\r', '\t'], " ");
                writeln!(self.sink, "L\t{id}\t0\t{text}")?;
            }
            KanataEvent::StageBegin { id, stage } => {
                self.known(id)?;
                writeln!(self.sink, "S\t{id}\t0\t{stage}")?;
            }
            KanataEvent::StageEnd { id, stage } => {
                self.known(id)?;
                writeln!(self.sink, "E\t{id}\t0\t{stage}")?;
            }
            KanataEvent::Retire {
                id,
                retire_id,
                kind,
            } => {
                self.known(id)?;
                self.live.remove(&id);
                writeln!(self.sink, "R\t{id}\t{retire_id}\t{}", kind as u8)?;
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), TraceError> {
        self.sink.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.sink
    }
}
