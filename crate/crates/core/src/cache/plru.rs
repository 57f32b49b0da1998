//! Tree pseudo-LRU state for one cache set.
//!
//! A set of `n` ways (a power of two) keeps `n - 1` direction bits laid out
//! as an implicit binary heap. Each bit names the half that holds the next
//! victim: 0 for the lower ways, 1 for the upper ways. With two ways the
//! single bit is exactly true LRU.

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TreePlru {
    bits: u64,
}

impl TreePlru {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    /// Points every node on the path to `way` away from it.
    pub fn touch(&mut self, way: usize, ways: usize) {
        let mut node = 0usize;
        let mut lo = 0usize;
        let mut span = ways;
        while span > 1 {
            span /= 2;
            let upper = way >= lo + span;
            if upper {
                self.bits &= !(1 << node);
                lo += span;
                node = 2 * node + 2;
            } else {
                self.bits |= 1 << node;
                node = 2 * node + 1;
            }
        }
    }

    /// Way the direction bits currently point at.
    pub fn victim(&self, ways: usize) -> usize {
        let mut node = 0usize;
        let mut lo = 0usize;
        let mut span = ways;
        while span > 1 {
            span /= 2;
            if self.bits & (1 << node) != 0 {
                lo += span;
                node = 2 * node + 2;
            } else {
                node = 2 * node + 1;
            }
        }
        lo
    }
}
