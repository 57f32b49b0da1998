//! Core configuration and its `section.key = value` text form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cache::CacheConfig;
use crate::isa::{DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE};
use crate::predictor::PredictorConfig;

/// Microarchitecture parameters plus simulator policy knobs.
///
/// `Default` reproduces the reference machine: 2-wide front end and
/// commit, 5-wide issue and writeback, 64-entry ROB, 64 physical
/// registers, 16/16 load/store queues, gshare with 2048 counters, a
/// 1024-entry BTB and 4 KiB 2-way L1 caches with 8-byte lines.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreConfig {
    pub fetch_width: usize,
    pub decode_width: usize,
    pub rename_width: usize,
    pub issue_width: usize,
    pub writeback_width: usize,
    pub commit_width: usize,
    pub rob_entries: usize,
    pub phys_regs: usize,
    pub lq_entries: usize,
    pub sq_entries: usize,
    /// Not a reference-machine parameter; sized between rename and ROB
    /// pressure.
    pub iq_entries: usize,
    pub int_ports: usize,
    /// Memory ports; all can issue loads.
    pub mem_ports: usize,
    /// How many of the memory ports can also issue stores.
    pub store_ports: usize,
    pub mdp_entries: usize,
    pub predictor: PredictorConfig,
    pub icache: CacheConfig,
    pub dcache: CacheConfig,
    pub max_cycles: u64,
    /// Cycles without a commit (ROB non-empty) before declaring deadlock.
    pub deadlock_window: u64,
    /// Lockstep comparison against the functional executor at every commit.
    pub cosim: bool,
    /// Check structural invariants after every cycle.
    pub check_invariants: bool,
    pub ram_base: u32,
    pub ram_size: u32,
}

impl Default for CoreConfig {
    fn default() -> Self {
        Self {
            fetch_width: 2,
            decode_width: 2,
            rename_width: 2,
            issue_width: 5,
            writeback_width: 5,
            commit_width: 2,
            rob_entries: 64,
            phys_regs: 64,
            lq_entries: 16,
            sq_entries: 16,
            iq_entries: 32,
            int_ports: 3,
            mem_ports: 2,
            store_ports: 1,
            mdp_entries: 1024,
            predictor: PredictorConfig::default(),
            icache: CacheConfig::default(),
            dcache: CacheConfig::default(),
            max_cycles: 50_000_000,
            deadlock_window: 10_000,
            cosim: true,
            check_invariants: false,
            ram_base: DEFAULT_RAM_BASE,
            ram_size: DEFAULT_RAM_SIZE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: bad value {value:?} for {key}")]
    BadValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

enum Field<'a> {
    Usize(&'a mut usize),
    U64(&'a mut u64),
    U32(&'a mut u32),
    Bool(&'a mut bool),
}

const SECTIONS: [&str; 5] = ["core", "predictor", "icache", "dcache", "sim"];

impl CoreConfig {
    fn cache_field<'a>(c: &'a mut CacheConfig, key: &str) -> Option<Field<'a>> {
        Some(match key {
            "size-bytes" => Field::U32(&mut c.size_bytes),
            "associativity" => Field::U32(&mut c.associativity),
            "line-bytes" => Field::U32(&mut c.line_bytes),
            "hit-latency" => Field::U64(&mut c.hit_latency),
            "miss-latency" => Field::U64(&mut c.miss_latency),
            "mshr-count" => Field::Usize(&mut c.mshr_count),
            _ => return None,
        })
    }

    fn field(&mut self, key: &str) -> Option<Field<'_>> {
        let (section, name) = key.split_once('.')?;
        Some(match (section, name) {
            ("core", "fetch-width") => Field::Usize(&mut self.fetch_width),
            ("core", "decode-width") => Field::Usize(&mut self.decode_width),
            ("core", "rename-width") => Field::Usize(&mut self.rename_width),
            ("core", "issue-width") => Field::Usize(&mut self.issue_width),
            ("core", "writeback-width") => Field::Usize(&mut self.writeback_width),
            ("core", "commit-width") => Field::Usize(&mut self.commit_width),
            ("core", "rob-entries") => Field::Usize(&mut self.rob_entries),
            ("core", "phys-regs") => Field::Usize(&mut self.phys_regs),
            ("core", "lq-entries") => Field::Usize(&mut self.lq_entries),
            ("core", "sq-entries") => Field::Usize(&mut self.sq_entries),
            ("core", "iq-entries") => Field::Usize(&mut self.iq_entries),
            ("core", "int-ports") => Field::Usize(&mut self.int_ports),
            ("core", "mem-ports") => Field::Usize(&mut self.mem_ports),
            ("core", "store-ports") => Field::Usize(&mut self.store_ports),
            ("core", "mdp-entries") => Field::Usize(&mut self.mdp_entries),
            ("predictor", "pht-entries") => Field::Usize(&mut self.predictor.pht_entries),
            ("predictor", "btb-entries") => Field::Usize(&mut self.predictor.btb_entries),
            ("icache", k) => return Self::cache_field(&mut self.icache, k),
            ("dcache", k) => return Self::cache_field(&mut self.dcache, k),
            ("sim", "max-cycles") => Field::U64(&mut self.max_cycles),
            ("sim", "deadlock-window") => Field::U64(&mut self.deadlock_window),
            ("sim", "cosim") => Field::Bool(&mut self.cosim),
            ("sim", "check-invariants") => Field::Bool(&mut self.check_invariants),
            ("sim", "ram-base") => Field::U32(&mut self.ram_base),
            ("sim", "ram-size") => Field::U32(&mut self.ram_size),
            _ => return None,
        })
    }

    /// Every addressable key, in file order.
    pub fn keys() -> Vec<String> {
        let core = [
            "fetch-width",
            "decode-width",
            "rename-width",
            "issue-width",
            "writeback-width",
            "commit-width",
            "rob-entries",
            "phys-regs",
            "lq-entries",
            "sq-entries",
            "iq-entries",
            "int-ports",
            "mem-ports",
            "store-ports",
            "mdp-entries",
        ];
        let cache = [
            "size-bytes",
            "associativity",
            "line-bytes",
            "hit-latency",
            "miss-latency",
            "mshr-count",
        ];
        let mut keys: Vec<String> = core.iter().map(|k| format!("core.{k}")).collect();
        keys.push("predictor.pht-entries".into());
        keys.push("predictor.btb-entries".into());
        for c in ["icache", "dcache"] {
            keys.extend(cache.iter().map(|k| format!("{c}.{k}")));
        }
        for k in [
            "max-cycles",
            "deadlock-window",
            "cosim",
            "check-invariants",
            "ram-base",
            "ram-size",
        ] {
            keys.push(format!("sim.{k}"));
        }
        keys
    }

    fn value_of(&self, key: &str) -> String {
        let mut copy = self.clone();
        match copy.field(key) {
            Some(Field::Usize(v)) => v.to_string(),
            Some(Field::U64(v)) => v.to_string(),
            Some(Field::U32(v)) if key.starts_with("sim.ram") => format!("0x{:08x}", v),
            Some(Field::U32(v)) => v.to_string(),
            Some(Field::Bool(v)) => v.to_string(),
            None => String::new(),
        }
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        self.set_at(0, key, value)
    }

    fn set_at(&mut self, line: usize, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            line,
            key: key.to_string(),
            value: value.to_string(),
        };
        let field = self.field(key).ok_or_else(|| ConfigError::UnknownKey {
            line,
            key: key.to_string(),
        })?;
        match field {
            Field::Usize(v) => {
                *v = usize::try_from(parse_int(value).ok_or_else(bad)?).map_err(|_| bad())?
            }
            Field::U64(v) => *v = parse_int(value).ok_or_else(bad)?,
            Field::U32(v) => {
                *v = u32::try_from(parse_int(value).ok_or_else(bad)?).map_err(|_| bad())?
            }
            Field::Bool(v) => {
                *v = match value {
                    "true" => true,
                    "false" => false,
                    _ => return Err(bad()),
                }
            }
        }
        Ok(())
    }

    /// Parses a configuration file. Keys not present keep their defaults;
    /// unknown and repeated keys are rejected.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = CoreConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                message: "expected `section.key = value`".into(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !key.contains('.') || !SECTIONS.contains(&key.split('.').next().unwrap_or("")) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            cfg.set_at(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form: every key, one per line, grouped by section.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut section = String::new();
        for key in Self::keys() {
            let s = key.split('.').next().unwrap_or("");
            if s != section {
                if !section.is_empty() {
                    out.push('\n');
                }
                section = s.to_string();
            }
            let _ = writeln!(out, "{key} = {}", self.value_of(&key));
        }
        out
    }

    /// Short hash of the timing-relevant settings (`sim.*` policy knobs
    /// other than the RAM window are excluded).
    pub fn fingerprint(&self) -> String {
        let mut text = String::new();
        for key in Self::keys() {
            if key.starts_with("sim.") && !key.starts_with("sim.ram") {
                continue;
            }
            let _ = writeln!(text, "{key}={}", self.value_of(&key));
        }
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: String| Err(ConfigError::Invalid(m));
        for (name, v) in [
            ("fetch-width", self.fetch_width),
            ("decode-width", self.decode_width),
            ("rename-width", self.rename_width),
            ("issue-width", self.issue_width),
            ("writeback-width", self.writeback_width),
            ("commit-width", self.commit_width),
            ("lq-entries", self.lq_entries),
            ("sq-entries", self.sq_entries),
            ("iq-entries", self.iq_entries),
            ("int-ports", self.int_ports),
            ("mem-ports", self.mem_ports),
            ("store-ports", self.store_ports),
        ] {
            if v == 0 {
                return fail(format!("{name} must be at least 1"));
            }
        }
        if self.store_ports > self.mem_ports {
            return fail("store-ports cannot exceed mem-ports".into());
        }
        if self.phys_regs < 32 + self.rename_width || self.phys_regs > usize::from(u16::MAX) {
            return fail(format!(
                "phys-regs must be at least 32 + rename-width ({})",
                32 + self.rename_width
            ));
        }
        if self.rob_entries < self.commit_width {
            return fail("rob-entries must be at least commit-width".into());
        }
        if !self.mdp_entries.is_power_of_two() {
            return fail("mdp-entries must be a power of two".into());
        }
        if !self.predictor.pht_entries.is_power_of_two()
            || !self.predictor.btb_entries.is_power_of_two()
            || self.predictor.pht_entries > 1 << 30
        {
            return fail("predictor tables must be powers of two".into());
        }
        for (name, c) in [("icache", &self.icache), ("dcache", &self.dcache)] {
            if let Err(e) = c.validate() {
                return fail(format!("{name}: {e}"));
            }
        }
        if self.ram_size == 0 || u64::from(self.ram_base) + u64::from(self.ram_size) > 1 << 32 {
            return fail("RAM window must be non-empty and inside the address space".into());
        }
        Ok(())
    }
}

fn parse_int(s: &str) -> Option<u64> {
    let s = s.replace('_', "");
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}
