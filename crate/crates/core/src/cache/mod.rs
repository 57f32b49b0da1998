//! Non-blocking L1 cache timing model.
//!
//! Tags and replacement state only; data lives in the guest memory image.
//! Misses allocate an MSHR and complete a fixed number of cycles later;
//! secondary misses to an in-flight line merge into its MSHR.

mod plru;

pub use plru::TreePlru;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub size_bytes: u32,
    pub associativity: u32,
    pub line_bytes: u32,
    pub hit_latency: u64,
    pub miss_latency: u64,
    pub mshr_count: usize,
}

impl Default for CacheConfig {
    fn default() -> Self {
        Self {
            size_bytes: 4096,
            associativity: 2,
            line_bytes: 8,
            hit_latency: 1,
            miss_latency: 100,
            mshr_count: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid cache configuration: {0}")]
pub struct CacheConfigError(pub String);

impl CacheConfig {
    pub fn sets(&self) -> u32 {
        self.size_bytes / (self.associativity * self.line_bytes)
    }

    pub fn validate(&self) -> Result<(), CacheConfigError> {
        let err = |m: &str| Err(CacheConfigError(m.to_string()));
        if self.size_bytes == 0
            || self.associativity == 0
            || self.line_bytes == 0
            || self.hit_latency == 0
            || self.miss_latency == 0
            || self.mshr_count == 0
        {
            return err("all fields must be positive");
        }
        if !self.line_bytes.is_power_of_two() {
            return err("line size must be a power of two");
        }
        if !self.associativity.is_power_of_two() || self.associativity > 64 {
            return err("associativity must be a power of two no larger than 64");
        }
        if !self
            .size_bytes
            .is_multiple_of(self.associativity * self.line_bytes)
            || !self.sets().is_power_of_two()
        {
            return err("size / (ways * line) must be a power of two");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Fetch,
    Load,
    Store,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessOutcome {
    Hit,
    MissAllocated,
    MissMerged,
    StructuralStall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessResult {
    pub outcome: AccessOutcome,
    /// Cycle the data is usable; `None` for a structural stall.
    pub ready_cycle: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Way {
    valid: bool,
    dirty: bool,
    tag: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheSet {
    ways: Vec<Way>,
    plru: TreePlru,
}

impl CacheSet {
    fn new(ways: usize) -> Self {
        Self {
            ways: vec![Way::default(); ways],
            plru: TreePlru::new(),
        }
    }

    fn find(&self, tag: u32) -> Option<usize> {
        self.ways.iter().position(|w| w.valid && w.tag == tag)
    }

    /// Replacement victim: the first invalid way, else the PLRU way.
    pub fn plru_victim(&self) -> usize {
        self.ways
            .iter()
            .position(|w| !w.valid)
            .unwrap_or_else(|| self.plru.victim(self.ways.len()))
    }

    pub fn plru(&self) -> TreePlru {
        self.plru
    }

    pub fn is_full(&self) -> bool {
        self.ways.iter().all(|w| w.valid)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mshr {
    pub line_addr: u32,
    pub fill_ready_cycle: u64,
    pub requesters: Vec<u64>,
    dirty_on_fill: bool,
}

/// A line installed by [`Cache::tick`] together with the requests it wakes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fill {
    pub line_addr: u32,
    pub requesters: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    pub mshr_allocations: u64,
    pub mshr_merges: u64,
    pub structural_stalls: u64,
    pub dirty_evictions: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    config: CacheConfig,
    sets: Vec<CacheSet>,
    mshrs: Vec<Option<Mshr>>,
    line_shift: u32,
    set_mask: u32,
    set_bits: u32,
    stats: CacheStats,
}

impl Cache {
    pub fn new(config: CacheConfig) -> Result<Self, CacheConfigError> {
        config.validate()?;
        let sets = config.sets();
        Ok(Self {
            config,
            sets: (0..sets)
                .map(|_| CacheSet::new(config.associativity as usize))
                .collect(),
            mshrs: vec![None; config.mshr_count],
            line_shift: config.line_bytes.trailing_zeros(),
            set_mask: sets - 1,
            set_bits: sets.trailing_zeros(),
            stats: CacheStats::default(),
        })
    }

    pub fn config(&self) -> &CacheConfig {
        &self.config
    }

    pub fn stats(&self) -> &CacheStats {
        &self.stats
    }

    pub fn line_addr(&self, addr: u32) -> u32 {
        addr & !(self.config.line_bytes - 1)
    }

    fn set_index(&self, addr: u32) -> usize {
        ((addr >> self.line_shift) & self.set_mask) as usize
    }

    fn tag(&self, addr: u32) -> u32 {
        addr >> (self.line_shift + self.set_bits)
    }

    pub fn set(&self, addr: u32) -> &CacheSet {
        &self.sets[self.set_index(addr)]
    }

    /// True if the line holding `addr` is resident.
    pub fn probe(&self, addr: u32) -> bool {
        self.set(addr).find(self.tag(addr)).is_some()
    }

    pub fn mshrs(&self) -> impl Iterator<Item = &Mshr> {
        self.mshrs.iter().flatten()
    }

    pub fn mshrs_in_use(&self) -> usize {
        self.mshrs.iter().filter(|m| m.is_some()).count()
    }

    /// Looks up `addr` at cycle `now` on behalf of `requester`.
    pub fn access(
        &mut self,
        addr: u32,
        kind: AccessKind,
        now: u64,
        requester: u64,
    ) -> AccessResult {
        let line = self.line_addr(addr);
        let tag = self.tag(addr);
        let set_idx = self.set_index(addr);
        let ways = self.config.associativity as usize;

        if let Some(way) = self.sets[set_idx].find(tag) {
            let set = &mut self.sets[set_idx];
            set.plru.touch(way, ways);
            if kind == AccessKind::Store {
                set.ways[way].dirty = true;
            }
            self.stats.accesses += 1;
            self.stats.hits += 1;
            return AccessResult {
                outcome: AccessOutcome::Hit,
                ready_cycle: Some(now + self.config.hit_latency),
            };
        }

        if let Some(m) = self
            .mshrs
            .iter_mut()
            .flatten()
            .find(|m| m.line_addr == line)
        {
            m.requesters.push(requester);
            m.dirty_on_fill |= kind == AccessKind::Store;
            self.stats.accesses += 1;
            self.stats.misses += 1;
            self.stats.mshr_merges += 1;
            return AccessResult {
                outcome: AccessOutcome::MissMerged,
                ready_cycle: Some(m.fill_ready_cycle),
            };
        }

        match self.mshrs.iter_mut().find(|m| m.is_none()) {
            Some(slot) => {
                let ready = now + self.config.miss_latency;
                *slot = Some(Mshr {
                    line_addr: line,
                    fill_ready_cycle: ready,
                    requesters: vec![requester],
                    dirty_on_fill: kind == AccessKind::Store,
                });
                self.stats.accesses += 1;
                self.stats.misses += 1;
                self.stats.mshr_allocations += 1;
                AccessResult {
                    outcome: AccessOutcome::MissAllocated,
                    ready_cycle: Some(ready),
                }
            }
            None => {
                self.stats.structural_stalls += 1;
                AccessResult {
                    outcome: AccessOutcome::StructuralStall,
                    ready_cycle: None,
                }
            }
        }
    }

    /// Installs every line whose fill is due at `now` and frees its MSHR.
    pub fn tick(&mut self, now: u64) -> Vec<Fill> {
        let mut fills = Vec::new();
        for i in 0..self.mshrs.len() {
            let due = matches!(&self.mshrs[i], Some(m) if m.fill_ready_cycle <= now);
            if !due {
                continue;
            }
            let Some(m) = self.mshrs[i].take() else {
                continue;
            };
            self.install(m.line_addr, m.dirty_on_fill);
            fills.push(Fill {
                line_addr: m.line_addr,
                requesters: m.requesters,
            });
        }
        fills
    }

    fn install(&mut self, line: u32, dirty: bool) {
        let tag = self.tag(line);
        let ways = self.config.associativity as usize;
        let set_idx = self.set_index(line);
        let set = &mut self.sets[set_idx];
        let way = set.plru_victim();
        if set.ways[way].valid && set.ways[way].dirty {
            self.stats.dirty_evictions += 1;
        }
        set.ways[way] = Way {
            valid: true,
            dirty,
            tag,
        };
        set.plru.touch(way, ways);
    }
}
