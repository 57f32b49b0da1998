//! Criterion benchmarks for simulator throughput live in `benches/`:
//!
//! * `models`: decoder, cache, predictor and functional executor in isolation.
//! * `suite`: the cycle-level core on each embedded benchmark.
//!
//! Run with `cargo bench -p ooosim-bench`.

use ooosim_core::isa::{Program, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE};

/// Retired instructions of `program` on the functional reference, for
/// per-instruction throughput numbers.
pub fn reference_instructions(program: &Program) -> u64 {
    ooosim_core::benchkit::run_reference(program, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE, 50_000_000)
        .expect("embedded benchmarks run to exit")
        .instructions
}
