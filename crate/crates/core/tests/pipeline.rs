mod common;

use common::{committed_lives, program_from, program_with_data};
use ooosim_core::benchkit::{Assembler, DATA_BASE};
use ooosim_core::isa::reg::*;
use ooosim_core::isa::{IsaError, Op, Program};
use ooosim_core::pipeline::{run, simulate, Core, CoreConfig, RunOptions, RunResult, SimError};
use proptest::prelude::*;

fn checked() -> CoreConfig {
    CoreConfig {
        check_invariants: true,
        ..CoreConfig::default()
    }
}

fn traced(program: &Program, cfg: &CoreConfig) -> (RunResult, String) {
    let mut log = Vec::new();
    let r = simulate(
        program,
        cfg,
        RunOptions {
            name: "t".into(),
            trace: Some(Box::new(&mut log)),
            trace_window: None,
        },
    )
    .unwrap();
    let text = String::from_utf8(log).unwrap();
    ooosim_core::trace::validate_trace(text.as_bytes()).unwrap();
    (r, text)
}

fn issue_cycle(l: &common::Life) -> u64 {
    l.begin("RR").unwrap() - 1
}

#[test]
fn single_instruction_schedule() {
    let mut a = Assembler::new(0x8000_0000);
    a.addi(T0, ZERO, 1).exit(0);
    let (_, log) = traced(&program_from(a), &checked());
    let first = &committed_lives(&log)[0];
    assert!(first.label.contains("addi x5, x0, 1"), "{}", first.label);
    // cold I-cache: the line arrives 100 cycles after the fetch at cycle 0
    let expect = [
        ("F", 0),
        ("D", 100),
        ("Rn", 101),
        ("Ds", 102),
        ("Is", 103),
        ("RR", 104),
        ("X", 105),
        ("Wb", 106),
        ("Cm", 107),
    ];
    for (stage, cycle) in expect {
        assert_eq!(first.begin(stage), Some(cycle), "{stage}");
    }
}

#[test]
fn dependent_alu_ops_issue_back_to_back() {
    let mut a = Assembler::new(0x8000_0000);
    a.addi(T0, ZERO, 1).addi(T1, T0, 1).addi(T2, T1, 1).exit(0);
    // keep instruction fetch out of the way
    let mut cfg = checked();
    cfg.icache.miss_latency = 1;
    let (r, log) = traced(&program_from(a), &cfg);
    let lives = committed_lives(&log);
    assert_eq!(issue_cycle(&lives[1]), issue_cycle(&lives[0]) + 1);
    assert_eq!(issue_cycle(&lives[2]), issue_cycle(&lives[1]) + 1);
    assert_eq!(r.regs[usize::from(T2)], 3);
}

#[test]
fn load_use_on_hit_is_two_cycles() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, DATA_BASE)
        .i(Op::Lw, T1, T0, 0)
        .i(Op::Andi, T4, T1, 0)
        .r(Op::Add, T5, T0, T4)
        .i(Op::Lw, T3, T5, 4)
        .addi(T6, T3, 1)
        .exit(0);
    let data = [7u32, 41].iter().flat_map(|w| w.to_le_bytes()).collect();
    let (r, log) = traced(&program_with_data(a, data), &checked());
    let lives = committed_lives(&log);
    let second_load = lives
        .iter()
        .position(|l| l.label.contains("lw x28, 4(x30)"))
        .unwrap();
    let consumer = &lives[second_load + 1];
    assert_eq!(issue_cycle(consumer), issue_cycle(&lives[second_load]) + 2);
    assert_eq!(r.regs[usize::from(T6)], 42);
}

#[test]
fn miss_replays_dependents_until_fill() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, DATA_BASE)
        .i(Op::Lw, T1, T0, 0)
        .addi(T2, T1, 1)
        .exit(0);
    let data = 9u32.to_le_bytes().to_vec();
    let program = program_with_data(a, data);
    let (r, log) = traced(&program, &checked());
    let lives = committed_lives(&log);
    let load = lives.iter().find(|l| l.label.contains("lw")).unwrap();
    let ma = load.begin("Ma").unwrap();
    let consumer = lives
        .iter()
        .find(|l| l.label.contains("addi x7, x6, 1"))
        .unwrap();
    assert_eq!(issue_cycle(consumer), ma + 100);
    assert_eq!(r.regs[usize::from(T2)], 10);

    let mut core = Core::new(&program, &checked()).unwrap();
    core.run_to_exit().unwrap();
    assert!(core.replays() >= 1);
}

#[test]
fn store_to_load_forwarding_and_partial_overlap() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, DATA_BASE)
        .li(T1, 0x1122_3344)
        .s(Op::Sw, T1, T0, 0)
        .i(Op::Lhu, T2, T0, 2)
        .i(Op::Lb, T3, T0, 0)
        .li(T4, 0xff)
        .s(Op::Sb, T4, T0, 1)
        .i(Op::Lw, T5, T0, 0)
        .exit(0);
    let r = run(&program_from(a), &checked()).unwrap();
    assert_eq!(r.regs[usize::from(T2)], 0x1122);
    assert_eq!(r.regs[usize::from(T3)], 0x44);
    assert_eq!(r.regs[usize::from(T5)], 0x1122_ff44);
}

/// A store whose address waits on a cache miss, followed by a load to the
/// same address that can issue right away.
fn violation_loop(iterations: u32) -> Program {
    let mut a = Assembler::new(0x8000_0000);
    a.li(S0, DATA_BASE).li(S1, iterations).li(S2, 0);
    a.label("loop")
        .i(Op::Lw, T0, S0, 0x100)
        .r(Op::Add, T1, S0, T0)
        .s(Op::Sw, S1, T1, 0)
        .i(Op::Lw, T2, S0, 0)
        .r(Op::Add, S2, S2, T2)
        .addi(S0, S0, 64)
        .addi(S1, S1, -1)
        .branch(Op::Bne, S1, ZERO, "loop");
    a.exit(0);
    program_from(a)
}

#[test]
fn memory_violation_is_detected_and_learned() {
    let r = run(&violation_loop(40), &checked()).unwrap();
    let v = r.stats.pipeline_flushes_memory_violation.unwrap();
    assert!(v >= 1, "no violation recorded");
    // the dependence predictor stops the repeat offender quickly
    assert!(v <= 3, "{v} violations for one static load");
    let want: u32 = (1..=40).sum();
    assert_eq!(r.regs[usize::from(S2)], want);
}

#[test]
fn mispredict_squashes_wrong_path() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, 1)
        .branch(Op::Bne, T0, ZERO, "skip")
        .addi(T1, ZERO, 99)
        .addi(T2, ZERO, 99);
    a.label("skip").addi(T3, ZERO, 5).exit(0);
    let (r, log) = traced(&program_from(a), &checked());
    assert_eq!(r.regs[usize::from(T1)], 0);
    assert_eq!(r.regs[usize::from(T3)], 5);
    assert_eq!(r.stats.pipeline_flushes_mispredict, Some(1));
    assert!(r.stats.squashed_instructions.unwrap() >= 2);
    let summary = ooosim_core::trace::validate_trace(log.as_bytes()).unwrap();
    assert_eq!(summary.commits, r.stats.committed_instructions);
    assert!(summary.flushes >= 2);
}

#[test]
fn wrong_path_fault_is_harmless() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, 1).branch(Op::Bne, T0, ZERO, "ok");
    a.emit(Op::Ebreak, 0, 0, 0, 0);
    a.label("ok").exit(3);
    let r = run(&program_from(a), &checked()).unwrap();
    assert_eq!(r.exit_code, Some(3));
}

#[test]
fn faults_raise_at_commit() {
    let mut a = Assembler::new(0x8000_0000);
    a.addi(T0, ZERO, 1).emit(Op::Ebreak, 0, 0, 0, 0);
    match run(&program_from(a), &checked()) {
        Err(SimError::GuestFault { pc, error }) => {
            assert_eq!(pc, 0x8000_0004);
            assert_eq!(error, IsaError::Breakpoint(0x8000_0004));
        }
        other => panic!("{other:?}"),
    }
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, DATA_BASE + 2).i(Op::Lw, T1, T0, 0).exit(0);
    assert!(matches!(
        run(&program_from(a), &checked()),
        Err(SimError::GuestFault {
            error: IsaError::MisalignedAccess { .. },
            ..
        })
    ));
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, 0x1000).i(Op::Jalr, 0, T0, 0);
    assert!(matches!(
        run(&program_from(a), &checked()),
        Err(SimError::GuestFault {
            pc: 0x1000,
            error: IsaError::OutOfImageAccess { .. }
        })
    ));
}

#[test]
fn write_syscall_output() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, DATA_BASE)
        .li(T1, u32::from_le_bytes(*b"hi!\n"))
        .s(Op::Sw, T1, T0, 0);
    a.li(A0, 1).li(A1, DATA_BASE).li(A2, 4).li(A7, 64).ecall();
    a.mv(S1, A0).exit(0);
    let r = run(&program_from(a), &checked()).unwrap();
    assert_eq!(r.output, b"hi!\n");
    assert_eq!(r.regs[usize::from(S1)], 4);
}

#[test]
fn unsupported_syscall_faults() {
    let mut a = Assembler::new(0x8000_0000);
    a.li(A7, 1234).ecall();
    assert!(matches!(
        run(&program_from(a), &checked()),
        Err(SimError::GuestFault {
            error: IsaError::UnsupportedSyscall(1234),
            ..
        })
    ));
}

#[test]
fn deadlock_and_cycle_limits() {
    let mut a = Assembler::new(0x8000_0000);
    a.label("spin").j("spin");
    let cfg = CoreConfig {
        max_cycles: 5_000,
        ..checked()
    };
    assert!(matches!(
        run(&program_from(a), &cfg),
        Err(SimError::MaxCyclesExceeded { cycles: 5_000 })
    ));

    // a 100-cycle miss at the ROB head looks like a hang with a short window
    let mut a = Assembler::new(0x8000_0000);
    a.li(T0, DATA_BASE).i(Op::Lw, T1, T0, 0).exit(0);
    let cfg = CoreConfig {
        deadlock_window: 50,
        ..checked()
    };
    assert!(matches!(
        run(&program_from(a), &cfg),
        Err(SimError::Deadlock { .. })
    ));
}

#[test]
fn trace_window_limits_recorded_instructions() {
    let b = ooosim_core::benchkit::get("FibFast").unwrap();
    let mut log = Vec::new();
    let r = simulate(
        &b.program,
        &checked(),
        RunOptions {
            name: "FibFast".into(),
            trace: Some(Box::new(&mut log)),
            trace_window: Some((300, 400)),
        },
    )
    .unwrap();
    let s = ooosim_core::trace::validate_trace(&log).unwrap();
    assert!(s.instructions > 0);
    assert!(s.commits < r.stats.committed_instructions);
}

#[test]
fn per_cycle_reports_respect_widths() {
    let b = ooosim_core::benchkit::get("BubblesortAsm").unwrap();
    let cfg = CoreConfig::default();
    let mut core = Core::new(&b.program, &cfg).unwrap();
    while core.exited().is_none() {
        let r = core.tick().unwrap();
        assert!(r.rob <= 64 && r.lq <= 16 && r.sq <= 16);
        assert!(r.issued <= 5 && r.committed <= 2 && r.fetched <= 2);
        assert_eq!(r.free_regs + r.inflight_regs + 32, 64);
        assert!(r.committed_total <= 2 * (r.cycle + 1));
    }
}

#[derive(Debug, Clone)]
enum Gen {
    Alu(Op, u8, u8, u8),
    AluImm(Op, u8, u8, i32),
    Load(Op, u8, i32),
    Store(Op, u8, i32),
    /// Store whose base register waits on a load.
    SlowStore(Op, u8, i32, i32),
    Branch(Op, u8, u8, usize),
    Jal(usize),
}

fn gen_inst() -> impl Strategy<Value = Gen> {
    let r = 1u8..16;
    let alu = prop_oneof![
        Just(Op::Add),
        Just(Op::Sub),
        Just(Op::Xor),
        Just(Op::Or),
        Just(Op::And),
        Just(Op::Sll),
        Just(Op::Srl),
        Just(Op::Sra),
        Just(Op::Slt),
        Just(Op::Sltu)
    ];
    let imm = prop_oneof![
        Just(Op::Addi),
        Just(Op::Xori),
        Just(Op::Andi),
        Just(Op::Slti),
        Just(Op::Slli),
        Just(Op::Srai)
    ];
    let load = prop_oneof![
        Just(Op::Lw),
        Just(Op::Lh),
        Just(Op::Lhu),
        Just(Op::Lb),
        Just(Op::Lbu)
    ];
    let store = prop_oneof![Just(Op::Sw), Just(Op::Sh), Just(Op::Sb)];
    let br = prop_oneof![Just(Op::Beq), Just(Op::Bne), Just(Op::Blt), Just(Op::Bgeu)];
    prop_oneof![
        4 => (alu, r.clone(), r.clone(), r.clone()).prop_map(|(o, d, a, b)| Gen::Alu(o, d, a, b)),
        3 => (imm, r.clone(), r.clone(), -64i32..64).prop_map(|(o, d, a, i)| Gen::AluImm(o, d, a, i & if matches!(o, Op::Slli | Op::Srai) { 31 } else { -1 })),
        3 => (load, r.clone(), 0i32..6).prop_map(|(o, d, w)| Gen::Load(o, d, w * 4)),
        3 => (store.clone(), r.clone(), 0i32..6).prop_map(|(o, s, w)| Gen::Store(o, s, w * 4)),
        2 => (store, r.clone(), 0i32..6, 16i32..32).prop_map(|(o, s, w, via)| Gen::SlowStore(o, s, w * 4, via * 4)),
        2 => (br, r.clone(), r, 1usize..5).prop_map(|(o, a, b, k)| Gen::Branch(o, a, b, k)),
        1 => (1usize..4).prop_map(Gen::Jal),
    ]
}

fn build_random(body: &[Gen], seeds: &[u32]) -> Program {
    let mut a = Assembler::new(0x8000_0000);
    for (i, &v) in seeds.iter().enumerate() {
        a.li(i as u8 + 1, v);
    }
    a.li(20, DATA_BASE).li(22, 3);
    let n = body.len();
    for (i, g) in body.iter().enumerate() {
        a.label(&format!("L{i}"));
        let target = |k: usize| format!("L{}", (i + k).min(n));
        match *g {
            Gen::Alu(op, d, x, y) => {
                a.r(op, d, x, y);
            }
            Gen::AluImm(op, d, x, imm) => {
                a.i(op, d, x, imm);
            }
            Gen::Load(op, d, off) => {
                a.i(op, d, 20, off);
            }
            Gen::Store(op, s, off) => {
                a.s(op, s, 20, off);
            }
            Gen::SlowStore(op, s, off, via) => {
                a.i(Op::Lw, 21, 20, via)
                    .i(Op::Andi, 21, 21, 0)
                    .r(Op::Add, 21, 21, 20)
                    .s(op, s, 21, off);
            }
            Gen::Branch(op, x, y, k) => {
                a.branch(op, x, y, &target(k));
            }
            Gen::Jal(k) => {
                a.jal(1, &target(k));
            }
        }
    }
    a.label(&format!("L{n}"))
        .addi(22, 22, -1)
        .branch(Op::Bne, 22, ZERO, "L0")
        .exit(0);
    program_from(a)
}

fn small_config() -> impl Strategy<Value = CoreConfig> {
    (
        1usize..4,
        1usize..6,
        4usize..40,
        2usize..16,
        1usize..8,
        1usize..3,
        1u64..30,
        1usize..3,
        2usize..33,
    )
        .prop_map(
            |(fw, iw, rob, iq, lsq, mshr, miss, mem_ports, extra_regs)| {
                let mut c = CoreConfig {
                    fetch_width: fw,
                    decode_width: fw,
                    rename_width: fw,
                    commit_width: fw,
                    issue_width: iw,
                    writeback_width: iw,
                    rob_entries: rob.max(fw),
                    iq_entries: iq,
                    lq_entries: lsq,
                    sq_entries: lsq,
                    mem_ports,
                    phys_regs: 32 + fw + extra_regs,
                    check_invariants: true,
                    ..CoreConfig::default()
                };
                c.dcache.mshr_count = mshr;
                c.icache.mshr_count = mshr;
                c.dcache.miss_latency = miss;
                c.icache.miss_latency = miss;
                c
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    /// Random branchy programs match the functional model commit by commit,
    /// under random machine sizes, with every per-cycle invariant checked.
    #[test]
    fn random_programs_cosimulate(
        body in proptest::collection::vec(gen_inst(), 1..120),
        seeds in proptest::collection::vec(any::<u32>(), 15),
        cfg in small_config(),
    ) {
        let program = build_random(&body, &seeds);
        let r = run(&program, &cfg);
        prop_assert!(r.is_ok(), "{:?}", r.err());
    }
}

#[test]
fn two_runs_are_identical() {
    let b = ooosim_core::benchkit::get("MemoryRandom").unwrap();
    let (r1, t1) = traced(&b.program, &checked());
    let (r2, t2) = traced(&b.program, &checked());
    assert_eq!(r1.stats.without_wall_clock(), r2.stats.without_wall_clock());
    assert_eq!(t1, t2);
}

#[test]
fn random_corpus_exercises_speculation() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let (mut v, mut m, mut rp, mut n) = (0, 0, 0, 0);
    for _ in 0..500 {
        let body = proptest::collection::vec(gen_inst(), 1..120)
            .new_tree(&mut runner)
            .unwrap()
            .current();
        let seeds = proptest::collection::vec(any::<u32>(), 15)
            .new_tree(&mut runner)
            .unwrap()
            .current();
        let cfg = small_config().new_tree(&mut runner).unwrap().current();
        let p = build_random(&body, &seeds);
        let mut core = Core::new(&p, &cfg).unwrap();
        core.run_to_exit().unwrap();
        rp += core.replays();
        let s = core.finish().unwrap().stats;
        v += s.pipeline_flushes_memory_violation.unwrap();
        m += s.pipeline_flushes_mispredict.unwrap();
        n += s.committed_instructions;
    }
    assert!(
        v > 10 && m > 1000 && rp > 1000,
        "violations {v} mispredicts {m} replays {rp}"
    );
    assert!(n > 50_000);
}
