//! Front-end branch prediction: gshare direction, BTB targets, and
//! checkpoint-based recovery of the speculative global history.

mod btb;
mod gshare;

pub use btb::Btb;
pub use gshare::{GsharePredictor, COUNTER_INIT};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub pht_entries: usize,
    pub btb_entries: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            pht_entries: 2048,
            btb_entries: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum PredictorError {
    #[error("checkpoint {0} was squashed by an older recovery")]
    StaleCheckpoint(u64),
}

/// History snapshot taken before an instruction's own prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictorCheckpoint {
    ghr: u32,
    tag: u64,
}

impl PredictorCheckpoint {
    pub fn ghr(&self) -> u32 {
        self.ghr
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub taken: bool,
    /// BTB target, `None` on a BTB miss.
    pub target: Option<u32>,
    pub checkpoint: PredictorCheckpoint,
}

impl Prediction {
    /// Fetch address following the predicted instruction.
    pub fn next_pc(&self, pc: u32) -> u32 {
        match (self.taken, self.target) {
            (true, Some(t)) => t,
            _ => pc.wrapping_add(4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    /// Conditional branch: PHT direction plus BTB target.
    Conditional,
    /// JAL/JALR: always taken, BTB target only.
    Jump,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchPredictor {
    gshare: GsharePredictor,
    btb: Btb,
    next_tag: u64,
    // Tag ranges [lo, hi) squashed by recoveries and not yet retired.
    dead: Vec<(u64, u64)>,
}

impl BranchPredictor {
    pub fn new(config: &PredictorConfig) -> Self {
        Self {
            gshare: GsharePredictor::new(config.pht_entries),
            btb: Btb::new(config.btb_entries),
            next_tag: 0,
            dead: Vec::new(),
        }
    }

    pub fn gshare(&self) -> &GsharePredictor {
        &self.gshare
    }

    pub fn btb(&self) -> &Btb {
        &self.btb
    }

    pub fn ghr(&self) -> u32 {
        self.gshare.ghr()
    }

    /// Snapshot of the current history without predicting anything.
    pub fn checkpoint(&mut self) -> PredictorCheckpoint {
        let cp = PredictorCheckpoint {
            ghr: self.gshare.ghr(),
            tag: self.next_tag,
        };
        self.next_tag += 1;
        cp
    }

    /// Predicts a conditional branch at `pc` and shifts the predicted
    /// direction into the history.
    pub fn predict(&mut self, pc: u32) -> Prediction {
        debug_assert_eq!(pc % 4, 0);
        let checkpoint = self.checkpoint();
        let taken = self.gshare.lookup(pc);
        self.gshare.shift(taken);
        Prediction {
            taken,
            target: self.btb.lookup(pc),
            checkpoint,
        }
    }

    /// Predicts an unconditional jump: taken, target from the BTB.
    pub fn predict_jump(&mut self, pc: u32) -> Prediction {
        let checkpoint = self.checkpoint();
        Prediction {
            taken: true,
            target: self.btb.lookup(pc),
            checkpoint,
        }
    }

    /// Commit-time training for a resolved control instruction.
    pub fn update_commit(
        &mut self,
        pc: u32,
        checkpoint: &PredictorCheckpoint,
        kind: ControlKind,
        outcome: bool,
        target: u32,
    ) {
        if kind == ControlKind::Conditional {
            self.gshare.train(pc, checkpoint.ghr, outcome);
        }
        if outcome {
            self.btb.insert(pc, target);
        }
        self.retire(checkpoint);
    }

    /// Forgets squash bookkeeping older than a committed checkpoint.
    pub fn retire(&mut self, checkpoint: &PredictorCheckpoint) {
        let tag = checkpoint.tag;
        self.dead.retain(|&(_, hi)| hi > tag);
    }

    fn check_live(&self, checkpoint: &PredictorCheckpoint) -> Result<(), PredictorError> {
        let t = checkpoint.tag;
        if self.dead.iter().any(|&(lo, hi)| (lo..hi).contains(&t)) {
            return Err(PredictorError::StaleCheckpoint(t));
        }
        Ok(())
    }

    fn squash_younger(&mut self, checkpoint: &PredictorCheckpoint) {
        let lo = checkpoint.tag + 1;
        if lo < self.next_tag {
            self.dead.push((lo, self.next_tag));
        }
    }

    /// Mispredicted conditional branch: history becomes the checkpoint with
    /// the actual direction shifted in; everything younger is discarded.
    pub fn recover(
        &mut self,
        checkpoint: &PredictorCheckpoint,
        actual: bool,
    ) -> Result<(), PredictorError> {
        self.check_live(checkpoint)?;
        self.gshare.set_ghr(checkpoint.ghr);
        self.gshare.shift(actual);
        self.squash_younger(checkpoint);
        Ok(())
    }

    /// Restores the history exactly as it was before the checkpointed
    /// instruction (non-branch flushes, mispredicted jumps).
    pub fn restore(&mut self, checkpoint: &PredictorCheckpoint) -> Result<(), PredictorError> {
        self.check_live(checkpoint)?;
        self.gshare.set_ghr(checkpoint.ghr);
        self.squash_younger(checkpoint);
        Ok(())
    }
}
