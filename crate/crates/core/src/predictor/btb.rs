//! Direct-mapped branch target buffer.

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct BtbEntry {
    valid: bool,
    tag: u32,
    target: u32,
}

/// Direct-mapped BTB indexed by `pc[log2(entries)+1:2]` with a full tag of
/// the remaining upper pc bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Btb {
    entries: Vec<BtbEntry>,
    index_bits: u32,
}

impl Btb {
    /// `entries` must be a power of two.
    pub fn new(entries: usize) -> Self {
        assert!(entries.is_power_of_two(), "BTB size must be a power of two");
        Self {
            entries: vec![BtbEntry::default(); entries],
            index_bits: entries.trailing_zeros(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index(&self, pc: u32) -> usize {
        let idx = ((pc >> 2) as usize) & (self.entries.len() - 1);
        debug_assert!(idx < self.entries.len());
        idx
    }

    fn tag(&self, pc: u32) -> u32 {
        pc >> (2 + self.index_bits)
    }

    pub fn lookup(&self, pc: u32) -> Option<u32> {
        let e = &self.entries[self.index(pc)];
        (e.valid && e.tag == self.tag(pc)).then_some(e.target)
    }

    pub fn insert(&mut self, pc: u32, target: u32) {
        let tag = self.tag(pc);
        let idx = self.index(pc);
        self.entries[idx] = BtbEntry {
            valid: true,
            tag,
            target,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hit_requires_tag_match() {
        let mut btb = Btb::new(1024);
        assert_eq!(btb.lookup(0x8000_0100), None);
        btb.insert(0x8000_0100, 0x8000_0040);
        assert_eq!(btb.lookup(0x8000_0100), Some(0x8000_0040));
        // same index, different upper bits
        assert_eq!(btb.lookup(0x8000_1100), None);
        btb.insert(0x8000_1100, 0x1234);
        assert_eq!(btb.lookup(0x8000_0100), None);
        assert_eq!(btb.lookup(0x8000_1100), Some(0x1234));
    }

    #[test]
    fn index_uses_pc_bits_11_to_2() {
        let btb = Btb::new(1024);
        assert_eq!(btb.index(0xffff_fffc), 1023);
        assert_eq!(btb.index(0x0000_1000), 0);
        assert_eq!(btb.index(0x0000_0ffc), 1023);
    }
}
