//! Gshare direction predictor.
//!
//! The pattern history table holds 2-bit saturating counters indexed by
//! `(pc >> 2) ^ ghr`. The global history register is updated speculatively
//! when a prediction is made; the table is trained only at commit.

/// Counter value a fresh table is filled with (weakly not-taken).
pub const COUNTER_INIT: u8 = 1;
const COUNTER_MAX: u8 = 3;
const TAKEN_THRESHOLD: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GsharePredictor {
    pht: Vec<u8>,
    ghr: u32,
    history_bits: u32,
}

impl GsharePredictor {
    /// `entries` must be a power of two; the history length is its log2.
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two(), "PHT size must be a power of two");
        Self {
            pht: vec![COUNTER_INIT; entries],
            ghr: 0,
            history_bits: entries.trailing_zeros(),
        }
    }

    pub fn history_bits(&self) -> u32 {
        self.history_bits
    }

    pub fn ghr(&self) -> u32 {
        self.ghr
    }

    fn history_mask(&self) -> u32 {
        (1u32 << self.history_bits) - 1
    }

    /// PHT index for `pc` under history `ghr`.
    pub fn index(&self, pc: u32, ghr: u32) -> usize {
        let idx = (((pc >> 2) ^ ghr) & self.history_mask()) as usize;
        assert!(idx < self.pht.len());
        idx
    }

    pub fn counter(&self, index: usize) -> u8 {
        self.pht[index]
    }

    /// Direction for `pc` under the current history. Does not modify state.
    pub fn lookup(&self, pc: u32) -> bool {
        self.pht[self.index(pc, self.ghr)] >= TAKEN_THRESHOLD
    }

    /// Shifts `taken` into the history, LSB first.
    pub fn shift(&mut self, taken: bool) {
        self.ghr = ((self.ghr << 1) | u32::from(taken)) & self.history_mask();
    }

    pub fn set_ghr(&mut self, ghr: u32) {
        self.ghr = ghr & self.history_mask();
    }

    /// Trains the counter selected by `(pc, ghr_at_predict)`.
    pub fn train(&mut self, pc: u32, ghr_at_predict: u32, taken: bool) {
        let idx = self.index(pc, ghr_at_predict);
        let c = &mut self.pht[idx];
        *c = if taken {
            (*c + 1).min(COUNTER_MAX)
        } else {
            c.saturating_sub(1)
        };
        debug_assert!(*c <= COUNTER_MAX);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cold_table_predicts_not_taken() {
        let g = GsharePredictor::new(2048);
        assert_eq!(g.history_bits(), 11);
        for pc in (0..0x4000).step_by(4) {
            assert!(!g.lookup(pc));
        }
    }

    #[test]
    fn saturation() {
        let mut g = GsharePredictor::new(2048);
        let idx = g.index(0x100, 0);
        for _ in 0..5 {
            g.train(0x100, 0, true);
        }
        assert_eq!(g.counter(idx), 3);
        for _ in 0..5 {
            g.train(0x100, 0, false);
        }
        assert_eq!(g.counter(idx), 0);
        g.train(0x100, 0, true);
        g.train(0x100, 0, true);
        assert_eq!(g.counter(idx), 2);
    }

    #[test]
    fn history_is_masked() {
        let mut g = GsharePredictor::new(2048);
        for _ in 0..20 {
            g.shift(true);
        }
        assert_eq!(g.ghr(), 0x7ff);
        g.shift(false);
        assert_eq!(g.ghr(), 0x7fe);
    }
}
