use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{maki, mpki, MetricsError};

/// Counters for one simulation run.
///
/// Serialized with kebab-case field names, one JSON object per run. Only
/// `benchmark`, `cycles` and `committed-instructions` are required when
/// reading records produced by other tools; the rest are optional and
/// render as `n/a` in reports when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunStats {
    pub benchmark: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_fingerprint: Option<String>,
    pub cycles: u64,
    pub committed_instructions: u64,
    #[serde(default)]
    pub branch_predictions: Option<u64>,
    #[serde(default)]
    pub branch_mispredictions: Option<u64>,
    #[serde(default)]
    pub squashed_branch_predictions: Option<u64>,
    #[serde(default)]
    pub icache_accesses: Option<u64>,
    #[serde(default)]
    pub icache_misses: Option<u64>,
    #[serde(default)]
    pub dcache_accesses: Option<u64>,
    #[serde(default)]
    pub dcache_misses: Option<u64>,
    #[serde(default)]
    pub mshr_allocations: Option<u64>,
    #[serde(default)]
    pub mshr_merges: Option<u64>,
    #[serde(default)]
    pub mshr_structural_stalls: Option<u64>,
    #[serde(default)]
    pub loads: Option<u64>,
    #[serde(default)]
    pub stores: Option<u64>,
    #[serde(default)]
    pub pipeline_flushes_mispredict: Option<u64>,
    #[serde(default)]
    pub pipeline_flushes_memory_violation: Option<u64>,
    #[serde(default)]
    pub squashed_instructions: Option<u64>,
    #[serde(default)]
    pub exit_code: Option<i32>,
    #[serde(default)]
    pub wall_clock_seconds: Option<f64>,
}

impl RunStats {
    pub fn ipc(&self) -> Option<f64> {
        (self.cycles > 0).then(|| self.committed_instructions as f64 / self.cycles as f64)
    }

    pub fn cpi(&self) -> Option<f64> {
        (self.committed_instructions > 0)
            .then(|| self.cycles as f64 / self.committed_instructions as f64)
    }

    pub fn mpki(&self) -> Option<f64> {
        mpki(self.branch_mispredictions?, self.committed_instructions).ok()
    }

    /// Committed loads + stores per kilo-instruction.
    pub fn maki(&self) -> Option<f64> {
        maki(self.loads? + self.stores?, self.committed_instructions).ok()
    }

    /// Copy with the host-dependent wall-clock field cleared.
    pub fn without_wall_clock(&self) -> RunStats {
        RunStats {
            wall_clock_seconds: None,
            ..self.clone()
        }
    }

    /// Checks the counter relations every complete run must satisfy.
    pub fn check_consistency(&self) -> Result<(), String> {
        let le = |a: Option<u64>, b: Option<u64>, what: &str| match (a, b) {
            (Some(a), Some(b)) if a > b => Err(format!("{what}: {a} > {b}")),
            _ => Ok(()),
        };
        le(
            self.icache_misses,
            self.icache_accesses,
            "icache misses > accesses",
        )?;
        le(
            self.dcache_misses,
            self.dcache_accesses,
            "dcache misses > accesses",
        )?;
        le(
            self.branch_mispredictions,
            self.branch_predictions,
            "mispredictions > predictions",
        )?;
        if self.committed_instructions > 2 * self.cycles.max(1) {
            return Err("IPC above 2".into());
        }
        Ok(())
    }
}

/// Writes one JSON object per line.
pub fn write_stats<W: Write>(mut sink: W, runs: &[RunStats]) -> std::io::Result<()> {
    for run in runs {
        serde_json::to_writer(&mut sink, run)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records written by [`write_stats`]. Also accepts a single JSON
/// object or a JSON array of objects.
pub fn read_stats(text: &str) -> Result<Vec<RunStats>, MetricsError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        return serde_json::from_str(trimmed).map_err(|e| MetricsError::Parse(e.to_string()));
    }
    let mut runs = Vec::new();
    let stream = serde_json::Deserializer::from_str(text).into_iter::<RunStats>();
    for run in stream {
        runs.push(run.map_err(|e| MetricsError::Parse(e.to_string()))?);
    }
    Ok(runs)
}
