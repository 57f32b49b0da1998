//! Register alias tables and the physical-register free list.

use std::collections::VecDeque;

pub type PhysReg = u16;

/// Result of renaming one instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Renamed {
    pub srcs: [Option<PhysReg>; 2],
    pub dest: Option<PhysReg>,
    /// Previous mapping of the destination, freed when this commits.
    pub old_dest: Option<PhysReg>,
}

/// Speculative and retirement maps plus the free list.
///
/// `x0` is pinned to physical register 0 and never renamed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenameTables {
    spec: [PhysReg; 32],
    retired: [PhysReg; 32],
    free: VecDeque<PhysReg>,
    total: usize,
}

impl RenameTables {
    /// Identity mapping for the architectural registers; the rest are free.
    pub fn new(phys_regs: usize) -> Self {
        assert!((33..=usize::from(PhysReg::MAX)).contains(&phys_regs));
        let map: [PhysReg; 32] = std::array::from_fn(|i| i as PhysReg);
        Self {
            spec: map,
            retired: map,
            free: (32..phys_regs as PhysReg).collect(),
            total: phys_regs,
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn lookup(&self, arch: u8) -> PhysReg {
        self.spec[usize::from(arch)]
    }

    pub fn retired(&self, arch: u8) -> PhysReg {
        self.retired[usize::from(arch)]
    }

    pub fn retired_map(&self) -> &[PhysReg; 32] {
        &self.retired
    }

    /// Renames sources against the current map, then allocates the
    /// destination. Returns `None` (and changes nothing) when a destination
    /// is needed and the free list is empty.
    pub fn rename(&mut self, srcs: [Option<u8>; 2], dest: Option<u8>) -> Option<Renamed> {
        let srcs = srcs.map(|s| s.map(|a| self.lookup(a)));
        let (dest, old_dest) = match dest.filter(|&d| d != 0) {
            Some(d) => {
                let p = self.free.pop_front()?;
                let old = std::mem::replace(&mut self.spec[usize::from(d)], p);
                (Some(p), Some(old))
            }
            None => (None, None),
        };
        Some(Renamed {
            srcs,
            dest,
            old_dest,
        })
    }

    /// Undoes a rename during a squash (youngest first).
    pub fn rollback(&mut self, arch: u8, dest: PhysReg, old_dest: PhysReg) {
        debug_assert_eq!(self.spec[usize::from(arch)], dest);
        self.spec[usize::from(arch)] = old_dest;
        self.free.push_back(dest);
    }

    /// Makes `dest` the architectural mapping of `arch` and frees the
    /// register it replaces.
    pub fn commit(&mut self, arch: u8, dest: PhysReg, old_dest: PhysReg) {
        debug_assert_eq!(self.retired[usize::from(arch)], old_dest);
        self.retired[usize::from(arch)] = dest;
        self.free.push_back(old_dest);
    }

    /// Free registers are distinct and disjoint from the retirement map.
    pub fn free_list(&self) -> impl Iterator<Item = PhysReg> + '_ {
        self.free.iter().copied()
    }
}
