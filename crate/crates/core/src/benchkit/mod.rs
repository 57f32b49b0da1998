//! Embedded benchmark programs, their expected results and a functional
//! reference runner.

mod asm;
mod lcg;
mod suite;

pub use asm::{AsmError, Assembler};
pub use lcg::{Lcg, LCG_INCREMENT, LCG_MASK, LCG_MULTIPLIER, LCG_SEED};
pub use suite::{
    branch_random_taken, integer_stress_sum, memory_random_checksum, Benchmark, FinalState,
    BENCHMARKS, BRANCH_NEVER_ITERS, BRANCH_RANDOM_BITS, BRANCH_RANDOM_STEPS, BUBBLESORT_LEN,
    DATA_BASE, EXTERNAL_BENCHMARKS, FIB_FAST_TERMS, FIB_SLOW_N, INTEGER_STRESS_ITERS,
    MEMORY_RANDOM_BYTES, MEMORY_RANDOM_STEPS, RESULT_ADDR, STACK_TOP, TEXT_BASE,
};

use thiserror::Error;

use crate::isa::{ArchState, IsaError, Program, SyscallEffect};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BenchError {
    #[error("unknown benchmark {0:?}")]
    Unknown(String),
    #[error("{0} is not embedded; run it from an image with --program or --binary")]
    ExternalOnly(String),
}

/// Builds one embedded benchmark by name.
pub fn get(name: &str) -> Result<Benchmark, BenchError> {
    if let Some(b) = suite::build(name) {
        return Ok(b);
    }
    if EXTERNAL_BENCHMARKS.contains(&name) {
        return Err(BenchError::ExternalOnly(name.to_string()));
    }
    Err(BenchError::Unknown(name.to_string()))
}

/// All embedded benchmarks in canonical order.
pub fn all() -> Vec<Benchmark> {
    BENCHMARKS
        .iter()
        .map(|n| suite::build(n).expect("listed benchmark exists"))
        .collect()
}

/// Flat image of a program: (load address, entry, bytes).
pub fn export_flat(program: &Program) -> (u32, u32, Vec<u8>) {
    let (base, bytes) = program.flat_image();
    (base, program.entry, bytes)
}

/// Result of running a program on the functional executor alone.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub exit_code: i32,
    pub instructions: u64,
    pub state: ArchState,
    pub output: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReferenceError {
    #[error("fault after {executed} instructions: {error}")]
    Fault { executed: u64, error: IsaError },
    #[error("no exit within {0} instructions")]
    StepLimit(u64),
}

/// Runs `program` on the functional executor until it exits.
pub fn run_reference(
    program: &Program,
    ram_base: u32,
    ram_size: u32,
    max_steps: u64,
) -> Result<ReferenceRun, ReferenceError> {
    let mut state = ArchState::from_program(program, ram_base, ram_size);
    let mut output = Vec::new();
    for executed in 0..max_steps {
        let rec = state
            .step()
            .map_err(|error| ReferenceError::Fault { executed, error })?;
        match rec.syscall {
            Some(SyscallEffect::Exit(code)) => {
                return Ok(ReferenceRun {
                    exit_code: code,
                    instructions: executed + 1,
                    state,
                    output,
                })
            }
            Some(SyscallEffect::Write { fd: 1 | 2, bytes }) => output.extend(bytes),
            _ => {}
        }
    }
    Err(ReferenceError::StepLimit(max_steps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::{DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE};

    #[test]
    fn every_benchmark_passes_on_the_reference() {
        for b in all() {
            let r = run_reference(&b.program, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE, 10_000_000)
                .unwrap_or_else(|e| panic!("{}: {e}", b.name));
            let regs = r.state.regs();
            let fs = FinalState {
                exit_code: r.exit_code,
                regs: &regs,
                memory: &r.state.mem,
            };
            b.check(&fs).unwrap_or_else(|e| panic!("{}: {e}", b.name));
        }
    }

    #[test]
    fn external_names_are_reported() {
        assert_eq!(
            get("Qsort").unwrap_err(),
            BenchError::ExternalOnly("Qsort".into())
        );
        assert!(matches!(get("Nope"), Err(BenchError::Unknown(_))));
    }
}
