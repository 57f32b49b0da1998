//! The embedded microbenchmarks.

use std::collections::HashMap;

use crate::isa::reg::*;
use crate::isa::{Memory, Op, Program, Segment};

use super::asm::Assembler;
use super::lcg::{Lcg, LCG_INCREMENT, LCG_MASK, LCG_MULTIPLIER};

pub const TEXT_BASE: u32 = 0x8000_0000;
pub const DATA_BASE: u32 = 0x8001_0000;
/// Word where single-value benchmarks leave their answer.
pub const RESULT_ADDR: u32 = 0x8000_f000;
pub const STACK_TOP: u32 = 0x80ff_fff0;

pub const BUBBLESORT_LEN: u32 = 250;
pub const FIB_SLOW_N: u32 = 20;
pub const FIB_FAST_TERMS: u32 = 45;
pub const INTEGER_STRESS_ITERS: u32 = 25_000;
pub const BRANCH_NEVER_ITERS: u32 = 25_000;
pub const BRANCH_RANDOM_STEPS: u32 = 3_000;
pub const MEMORY_RANDOM_STEPS: u32 = 3_000;
/// Footprint of MemoryRandom in bytes.
pub const MEMORY_RANDOM_BYTES: u32 = 64 * 1024;

const S8: u8 = 24;
const S9: u8 = 25;
const S10: u8 = 26;
const S11: u8 = 27;

/// Architectural state at guest exit, as seen by a result check.
#[derive(Debug, Clone, Copy)]
pub struct FinalState<'a> {
    pub exit_code: i32,
    pub regs: &'a [u32; 32],
    pub memory: &'a Memory,
}

impl FinalState<'_> {
    fn word(&self, addr: u32) -> Result<u32, String> {
        self.memory.load(addr, 4).map_err(|e| e.to_string())
    }

    fn expect_exit(&self, code: i32) -> Result<(), String> {
        if self.exit_code == code {
            Ok(())
        } else {
            Err(format!("exit code {} instead of {code}", self.exit_code))
        }
    }

    fn expect_reg(&self, r: u8, want: u32, what: &str) -> Result<(), String> {
        let got = self.regs[usize::from(r)];
        if got == want {
            Ok(())
        } else {
            Err(format!("{what}: x{r} = {got}, expected {want}"))
        }
    }
}

/// One program of the suite and the check its final state must pass.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub name: &'static str,
    pub description: &'static str,
    pub program: Program,
    check: fn(&FinalState<'_>) -> Result<(), String>,
}

impl Benchmark {
    /// Verifies the benchmark's expected result.
    pub fn check(&self, state: &FinalState<'_>) -> Result<(), String> {
        (self.check)(state)
    }
}

fn program(asm: Assembler, data: Vec<u8>) -> Program {
    let text = asm.finish_bytes().expect("suite programs assemble");
    let mut segments = vec![Segment {
        base: TEXT_BASE,
        bytes: text,
    }];
    if !data.is_empty() {
        segments.push(Segment {
            base: DATA_BASE,
            bytes: data,
        });
    }
    Program::new(segments, TEXT_BASE, STACK_TOP).expect("suite layout is valid")
}

/// Emits `x = (a * x + c) & mask` with shift-and-add multiplication.
/// Uses `S10` = mask, `S11` = increment, `T5`/`T6` as scratch.
fn lcg_step(a: &mut Assembler, x: u8) {
    a.mv(T5, x);
    for bit in 1..32 {
        if LCG_MULTIPLIER & (1 << bit) != 0 {
            a.i(Op::Slli, T6, x, bit);
            a.r(Op::Add, T5, T5, T6);
        }
    }
    const { assert!(LCG_MULTIPLIER & 1 == 1) };
    a.r(Op::Add, T5, T5, S11);
    a.r(Op::And, x, T5, S10);
}

fn lcg_setup(a: &mut Assembler, x: u8) {
    a.li(S10, LCG_MASK)
        .li(S11, LCG_INCREMENT)
        .li(x, Lcg::default().state());
}

fn bubblesort_asm() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    a.li(S0, DATA_BASE).li(S1, BUBBLESORT_LEN);
    a.label("outer")
        .addi(S1, S1, -1)
        .branch(Op::Beq, S1, ZERO, "done")
        .mv(T0, S0)
        .li(T1, 0);
    a.label("inner")
        .i(Op::Lw, T2, T0, 0)
        .i(Op::Lw, T3, T0, 4)
        .branch(Op::Bge, T3, T2, "noswap")
        .s(Op::Sw, T3, T0, 0)
        .s(Op::Sw, T2, T0, 4);
    a.label("noswap")
        .addi(T0, T0, 4)
        .addi(T1, T1, 1)
        .branch(Op::Blt, T1, S1, "inner")
        .j("outer");
    a.label("done").exit(0);
    let data = (0..BUBBLESORT_LEN)
        .flat_map(|i| (BUBBLESORT_LEN - i).to_le_bytes())
        .collect();
    Benchmark {
        name: "BubblesortAsm",
        description: "bubble sort of 250 words, initially descending",
        program: program(a, data),
        check: |s| {
            s.expect_exit(0)?;
            for i in 0..BUBBLESORT_LEN {
                let w = s.word(DATA_BASE + 4 * i)?;
                if w != i + 1 {
                    return Err(format!("element {i} is {w}, expected {}", i + 1));
                }
            }
            Ok(())
        },
    }
}

fn memory_random() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    lcg_setup(&mut a, S0);
    a.li(S1, MEMORY_RANDOM_STEPS)
        .li(S5, MEMORY_RANDOM_BYTES - 4)
        .li(S6, DATA_BASE)
        .li(S3, 0);
    a.label("loop");
    lcg_step(&mut a, S0);
    a.i(Op::Srli, T0, S0, 8)
        .r(Op::And, T0, T0, S5)
        .r(Op::Add, T0, T0, S6)
        .i(Op::Lw, T1, T0, 0)
        .r(Op::Add, S3, S3, T1)
        .r(Op::Add, T1, T1, S0)
        .s(Op::Sw, T1, T0, 0)
        .i(Op::Srli, T2, S0, 15)
        .r(Op::And, T2, T2, S5)
        .r(Op::Add, T2, T2, S6)
        .i(Op::Lw, T3, T2, 0)
        .r(Op::Add, S3, S3, T3)
        .r(Op::Xor, T3, T3, S0)
        .s(Op::Sw, T3, T2, 0)
        .addi(S1, S1, -1)
        .branch(Op::Bne, S1, ZERO, "loop");
    a.li(T0, RESULT_ADDR).s(Op::Sw, S3, T0, 0).exit(0);
    Benchmark {
        name: "MemoryRandom",
        description: "LCG-addressed load/store pairs over a 64 KiB array",
        program: program(a, Vec::new()),
        check: |s| {
            s.expect_exit(0)?;
            s.expect_reg(S3, memory_random_checksum(), "checksum")
        },
    }
}

/// Host replay of MemoryRandom's checksum.
pub fn memory_random_checksum() -> u32 {
    let mut g = Lcg::default();
    let mut mem: HashMap<u32, u32> = HashMap::new();
    let mut sum = 0u32;
    let mask = MEMORY_RANDOM_BYTES - 4;
    for _ in 0..MEMORY_RANDOM_STEPS {
        let x = g.next();
        let p = ((x >> 8) & mask) + DATA_BASE;
        let v = mem.get(&p).copied().unwrap_or(0);
        sum = sum.wrapping_add(v);
        mem.insert(p, v.wrapping_add(x));
        let q = ((x >> 15) & mask) + DATA_BASE;
        let w = mem.get(&q).copied().unwrap_or(0);
        sum = sum.wrapping_add(w);
        mem.insert(q, w ^ x);
    }
    sum
}

fn fib_slow() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    a.li(A0, FIB_SLOW_N).call("fib").mv(S1, A0);
    a.li(T0, RESULT_ADDR).s(Op::Sw, A0, T0, 0).exit(0);
    a.label("fib")
        .li(T0, 2)
        .branch(Op::Blt, A0, T0, "base")
        .addi(SP, SP, -12)
        .s(Op::Sw, RA, SP, 8)
        .s(Op::Sw, S0, SP, 4)
        .s(Op::Sw, S1, SP, 0)
        .mv(S0, A0)
        .addi(A0, A0, -1)
        .call("fib")
        .mv(S1, A0)
        .addi(A0, S0, -2)
        .call("fib")
        .r(Op::Add, A0, A0, S1)
        .i(Op::Lw, RA, SP, 8)
        .i(Op::Lw, S0, SP, 4)
        .i(Op::Lw, S1, SP, 0)
        .addi(SP, SP, 12);
    a.label("base").ret();
    Benchmark {
        name: "FibSlow",
        description: "naive recursive fib(20)",
        program: program(a, Vec::new()),
        check: |s| {
            s.expect_exit(0)?;
            s.expect_reg(S1, 6765, "fib(20)")?;
            match s.word(RESULT_ADDR)? {
                6765 => Ok(()),
                w => Err(format!("result word is {w}, expected 6765")),
            }
        },
    }
}

fn fib_fast() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    a.li(S0, DATA_BASE)
        .li(S1, FIB_FAST_TERMS)
        .li(T0, 0)
        .li(T1, 1);
    a.label("loop")
        .s(Op::Sw, T1, S0, 0)
        .r(Op::Add, T2, T0, T1)
        .mv(T0, T1)
        .mv(T1, T2)
        .addi(S0, S0, 4)
        .addi(S1, S1, -1)
        .branch(Op::Bne, S1, ZERO, "loop");
    a.exit(0);
    Benchmark {
        name: "FibFast",
        description: "iterative Fibonacci, terms 1..45 stored to memory",
        program: program(a, Vec::new()),
        check: |s| {
            s.expect_exit(0)?;
            let (mut x, mut y) = (0u64, 1u64);
            for k in 0..FIB_FAST_TERMS {
                let w = s.word(DATA_BASE + 4 * k)?;
                if u64::from(w) != y {
                    return Err(format!("term {} is {w}, expected {y}", k + 1));
                }
                (x, y) = (y, x + y);
            }
            Ok(())
        },
    }
}

fn integer_stress() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    a.li(S0, 0)
        .li(S1, INTEGER_STRESS_ITERS)
        .li(S2, 0)
        .li(S3, 0x1357_9bdf);
    a.label("loop")
        .i(Op::Slli, T0, S0, 1)
        .r(Op::Add, T0, T0, S0)
        .addi(T0, T0, 1)
        .r(Op::Add, S2, S2, T0)
        .r(Op::Xor, T1, S0, S3)
        .r(Op::Or, T2, T1, T0)
        .r(Op::And, T3, T2, S3)
        .i(Op::Srli, T4, T3, 3)
        .r(Op::Sub, S3, S3, T4)
        .i(Op::Srai, T4, S3, 1)
        .r(Op::Sltu, T5, T4, S3)
        .r(Op::Add, S3, S3, T5)
        .addi(S0, S0, 1)
        .branch(Op::Bltu, S0, S1, "loop");
    a.exit(0);
    Benchmark {
        name: "IntegerStress",
        description: "ALU-only loop with a closed-form accumulator",
        program: program(a, Vec::new()),
        check: |s| {
            s.expect_exit(0)?;
            s.expect_reg(S2, integer_stress_sum(), "accumulator")
        },
    }
}

/// Sum of 3i + 1 for i in 0..N, wrapped to 32 bits.
pub fn integer_stress_sum() -> u32 {
    let n = u64::from(INTEGER_STRESS_ITERS);
    (3 * n * (n - 1) / 2 + n) as u32
}

fn branch_mis_never() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    a.li(S0, 0).li(S1, BRANCH_NEVER_ITERS).li(S2, 0);
    a.label("loop")
        .addi(S0, S0, 1)
        .i(Op::Andi, T0, S0, 0)
        .branch(Op::Bne, T0, ZERO, "never")
        .r(Op::Add, T1, T1, S0)
        .r(Op::Xor, T2, T2, T1)
        .branch(Op::Bltu, S0, S1, "loop")
        .j("done");
    a.label("never").addi(S2, S2, 1).j("loop");
    a.label("done").exit(0);
    Benchmark {
        name: "BranchMisNever",
        description: "loop whose branches always resolve the same way",
        program: program(a, Vec::new()),
        check: |s| {
            s.expect_exit(0)?;
            s.expect_reg(S0, BRANCH_NEVER_ITERS, "iterations")?;
            s.expect_reg(S2, 0, "never-taken path count")
        },
    }
}

/// Bits of each LCG value that BranchMisRandom branches on.
pub const BRANCH_RANDOM_BITS: [i32; 4] = [16, 20, 24, 28];

fn branch_mis_random() -> Benchmark {
    let mut a = Assembler::new(TEXT_BASE);
    lcg_setup(&mut a, S0);
    a.li(S1, BRANCH_RANDOM_STEPS).li(S4, 0);
    a.label("loop");
    lcg_step(&mut a, S0);
    for bit in BRANCH_RANDOM_BITS {
        let skip = format!("skip{bit}");
        a.i(Op::Srli, T0, S0, bit)
            .i(Op::Andi, T0, T0, 1)
            .branch(Op::Beq, T0, ZERO, &skip)
            .addi(S4, S4, 1)
            .label(&skip);
    }
    a.addi(S1, S1, -1).branch(Op::Bne, S1, ZERO, "loop");
    a.mv(S8, S4).mv(S9, S0).exit(0);
    Benchmark {
        name: "BranchMisRandom",
        description: "branches on pseudo-random LCG bits",
        program: program(a, Vec::new()),
        check: |s| {
            s.expect_exit(0)?;
            s.expect_reg(S4, branch_random_taken(), "taken count")
        },
    }
}

/// Host replay of BranchMisRandom's taken count (branches skip on 0).
pub fn branch_random_taken() -> u32 {
    let mut g = Lcg::default();
    let mut count = 0;
    for _ in 0..BRANCH_RANDOM_STEPS {
        let x = g.next();
        count += BRANCH_RANDOM_BITS
            .iter()
            .filter(|&&b| (x >> b) & 1 == 1)
            .count() as u32;
    }
    count
}

/// Suite names in their canonical order.
pub const BENCHMARKS: [&str; 7] = [
    "BubblesortAsm",
    "MemoryRandom",
    "FibSlow",
    "FibFast",
    "IntegerStress",
    "BranchMisNever",
    "BranchMisRandom",
];

/// Names known to the suite but only runnable from a user-supplied image.
pub const EXTERNAL_BENCHMARKS: [&str; 3] = ["Qsort", "StringSearch", "BubblesortC"];

pub fn build(name: &str) -> Option<Benchmark> {
    Some(match name {
        "BubblesortAsm" => bubblesort_asm(),
        "MemoryRandom" => memory_random(),
        "FibSlow" => fib_slow(),
        "FibFast" => fib_fast(),
        "IntegerStress" => integer_stress(),
        "BranchMisNever" => branch_mis_never(),
        "BranchMisRandom" => branch_mis_random(),
        _ => return None,
    })
}
