use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{means, Means, MetricsError, RunStats};

/// Per-benchmark comparison of side A against side B.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub benchmark: String,
    /// cycles_A / cycles_B
    pub cycle_ratio: f64,
    /// committed_A / committed_B
    pub instruction_ratio: f64,
    /// wall_B / wall_A, when both sides recorded wall-clock time.
    pub speedup: Option<f64>,
    pub mpki_a: Option<f64>,
    pub mpki_b: Option<f64>,
    pub maki_a: Option<f64>,
    pub maki_b: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioReport {
    pub rows: Vec<RatioRow>,
    pub cycle_ratio_means: Means,
    pub instruction_ratio_means: Means,
    /// Reference line: identical models give a ratio of exactly 1.
    pub ideal_ratio: f64,
}

fn ratio(a: u64, b: u64) -> Result<f64, MetricsError> {
    if a == 0 || b == 0 {
        return Err(MetricsError::NonPositiveValue(0.0));
    }
    Ok(a as f64 / b as f64)
}

fn group(runs: &[RunStats]) -> BTreeMap<&str, Vec<&RunStats>> {
    let mut map: BTreeMap<&str, Vec<&RunStats>> = BTreeMap::new();
    for r in runs {
        map.entry(r.benchmark.as_str()).or_default().push(r);
    }
    map
}

/// Pairs runs by benchmark name and computes A/B ratios. Both sides must
/// hold the same multiset of names; rows come out sorted by name.
pub fn compare(a: &[RunStats], b: &[RunStats]) -> Result<RatioReport, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::Empty);
    }
    let (ga, gb) = (group(a), group(b));
    let short = |from: &BTreeMap<&str, Vec<&RunStats>>, other: &BTreeMap<&str, Vec<&RunStats>>| {
        let mut missing = Vec::new();
        for (name, runs) in other {
            let have = from.get(name).map_or(0, Vec::len);
            for _ in have..runs.len() {
                missing.push((*name).to_string());
            }
        }
        missing
    };
    let missing_in_a = short(&ga, &gb);
    let missing_in_b = short(&gb, &ga);
    if !missing_in_a.is_empty() || !missing_in_b.is_empty() {
        return Err(MetricsError::BenchmarkMismatch {
            missing_in_a,
            missing_in_b,
        });
    }

    let mut rows = Vec::new();
    for (name, runs_a) in &ga {
        for (ra, rb) in runs_a.iter().zip(&gb[name]) {
            let speedup = match (ra.wall_clock_seconds, rb.wall_clock_seconds) {
                (Some(wa), Some(wb)) if wa > 0.0 && wb > 0.0 => Some(wb / wa),
                _ => None,
            };
            rows.push(RatioRow {
                benchmark: (*name).to_string(),
                cycle_ratio: ratio(ra.cycles, rb.cycles)?,
                instruction_ratio: ratio(ra.committed_instructions, rb.committed_instructions)?,
                speedup,
                mpki_a: ra.mpki(),
                mpki_b: rb.mpki(),
                maki_a: ra.maki(),
                maki_b: rb.maki(),
            });
        }
    }
    let cycles: Vec<f64> = rows.iter().map(|r| r.cycle_ratio).collect();
    let insts: Vec<f64> = rows.iter().map(|r| r.instruction_ratio).collect();
    Ok(RatioReport {
        cycle_ratio_means: means(&cycles)?,
        instruction_ratio_means: means(&insts)?,
        rows,
        ideal_ratio: 1.0,
    })
}

/// Signed percentage distance from the ideal ratio, e.g. 1.36 -> "+36%".
pub fn format_divergence(ratio: f64) -> String {
    let pct = ((ratio - 1.0) * 100.0).round();
    if pct < 0.0 {
        format!("{pct:.0}%")
    } else {
        format!("+{:.0}%", pct.abs())
    }
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.prec$}"))
}

impl RatioReport {
    /// Fixed-width text table: one row per benchmark, then the three means.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.benchmark.len())
            .chain(["harmonic-mean".len()])
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>8} {:>6}  {:>8} {:>6}  {:>8}  {:>8} {:>8}  {:>8} {:>8}",
            "benchmark",
            "cycles",
            "div",
            "insts",
            "div",
            "speedup",
            "mpki-A",
            "mpki-B",
            "maki-A",
            "maki-B"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>8.4} {:>6}  {:>8.4} {:>6}  {:>8}  {:>8} {:>8}  {:>8} {:>8}",
                r.benchmark,
                r.cycle_ratio,
                format_divergence(r.cycle_ratio),
                r.instruction_ratio,
                format_divergence(r.instruction_ratio),
                opt(r.speedup, 2),
                opt(r.mpki_a, 2),
                opt(r.mpki_b, 2),
                opt(r.maki_a, 1),
                opt(r.maki_b, 1),
            );
        }
        let c = &self.cycle_ratio_means;
        let i = &self.instruction_ratio_means;
        for (label, cv, iv) in [
            ("arithmetic-mean", c.arithmetic, i.arithmetic),
            ("geometric-mean", c.geometric, i.geometric),
            ("harmonic-mean", c.harmonic, i.harmonic),
        ] {
            let _ = writeln!(
                out,
                "{label:<width$}  {cv:>8.4} {:>6}  {iv:>8.4} {:>6}",
                format_divergence(cv),
                format_divergence(iv)
            );
        }
        let _ = writeln!(out, "ideal ratio = {:.1}", self.ideal_ratio);
        out
    }
}
