//! Memory dependence predictor: 2-bit counters indexed by load pc.

/// Loads whose counter reaches this value wait for all older store
/// addresses before issuing.
pub const MDP_THRESHOLD: u8 = 2;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencePredictor {
    counters: Vec<u8>,
}

impl DependencePredictor {
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two());
        Self {
            counters: vec![0; entries],
        }
    }

    fn index(&self, pc: u32) -> usize {
        (pc as usize >> 2) & (self.counters.len() - 1)
    }

    pub fn counter(&self, pc: u32) -> u8 {
        self.counters[self.index(pc)]
    }

    /// True if the load at `pc` must wait for older store addresses.
    pub fn must_wait(&self, pc: u32) -> bool {
        self.counter(pc) >= MDP_THRESHOLD
    }

    /// Called when the load at `pc` caused an ordering violation.
    pub fn violated(&mut self, pc: u32) {
        let i = self.index(pc);
        self.counters[i] = (self.counters[i] + 2).min(3);
    }

    /// Called when a load that bypassed an unresolved store commits cleanly.
    pub fn speculated_ok(&mut self, pc: u32) {
        let i = self.index(pc);
        self.counters[i] = self.counters[i].saturating_sub(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn violation_trains_to_wait() {
        let mut m = DependencePredictor::new(1024);
        assert!(!m.must_wait(0x8000_0010));
        m.violated(0x8000_0010);
        assert!(m.must_wait(0x8000_0010));
        m.violated(0x8000_0010);
        assert_eq!(m.counter(0x8000_0010), 3);
        m.speculated_ok(0x8000_0010);
        assert!(m.must_wait(0x8000_0010));
        m.speculated_ok(0x8000_0010);
        assert!(!m.must_wait(0x8000_0010));
        // aliasing over pc[11:2]
        assert_eq!(m.counter(0x8000_1010), 1);
    }
}
