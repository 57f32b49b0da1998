//! Acceptance report: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;

use std::time::Instant;

use common::oracle::{cache_vs_brute, plru_vs_lru, predictor_vs_model};
use ooosim_core::benchkit::{self, Benchmark, FinalState, FIB_SLOW_N};
use ooosim_core::cache::CacheConfig;
use ooosim_core::isa::{DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE};
use ooosim_core::metrics::{compare, means, mpki, RunStats};
use ooosim_core::pipeline::{run, Core, CoreConfig, RunResult};
use ooosim_core::trace::validate_trace;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// A traced, per-cycle-checked run of one benchmark.
struct Instrumented {
    result: RunResult,
    trace: Vec<u8>,
    cycles_checked: u64,
    /// Statistics captured when half the instructions had committed.
    halfway: Option<RunStats>,
}

fn instrumented(b: &Benchmark, expected_instructions: u64) -> Result<Instrumented, String> {
    let cfg = CoreConfig {
        check_invariants: true,
        ..CoreConfig::default()
    };
    let mut trace = Vec::new();
    let mut halfway = None;
    let mut cycles_checked = 0;
    let result = {
        let mut core = Core::new(&b.program, &cfg).map_err(|e| e.to_string())?;
        core.set_name(b.name);
        core.attach_trace(Box::new(&mut trace), None)
            .map_err(|e| e.to_string())?;
        while core.exited().is_none() {
            let r = core.tick().map_err(|e| format!("{}: {e}", b.name))?;
            ensure!(
                r.rob <= 64,
                "{}: ROB {} in cycle {}",
                b.name,
                r.rob,
                r.cycle
            );
            ensure!(
                r.lq <= 16 && r.sq <= 16,
                "{}: LQ/SQ {}/{}",
                b.name,
                r.lq,
                r.sq
            );
            ensure!(
                r.free_regs + r.inflight_regs + 32 == 64,
                "{}: {} free + {} in flight registers",
                b.name,
                r.free_regs,
                r.inflight_regs
            );
            ensure!(r.issued <= 5, "{}: issued {}", b.name, r.issued);
            ensure!(r.committed <= 2, "{}: committed {}", b.name, r.committed);
            ensure!(
                r.committed_total <= 2 * (r.cycle + 1),
                "{}: IPC above 2",
                b.name
            );
            cycles_checked += 1;
            if halfway.is_none() && 2 * core.committed() >= expected_instructions {
                halfway = Some(core.stats());
            }
        }
        core.finish().map_err(|e| e.to_string())?
    };
    Ok(Instrumented {
        result,
        trace,
        cycles_checked,
        halfway,
    })
}

fn reference_instructions(b: &Benchmark) -> Result<u64, String> {
    benchkit::run_reference(&b.program, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE, 50_000_000)
        .map(|r| r.instructions)
        .map_err(|e| format!("{}: {e}", b.name))
}

fn cosim_all() -> Outcome {
    let start = Instant::now();
    let mut commits = 0;
    for b in benchkit::all() {
        let r = run(&b.program, &CoreConfig::default()).map_err(|e| format!("{}: {e}", b.name))?;
        ensure!(r.exit_code.is_some(), "{}: did not exit", b.name);
        commits += r.stats.committed_instructions;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!(
        "{commits} commits checked against the reference in {secs:.2} s"
    ))
}

fn expected_results() -> Outcome {
    for b in benchkit::all() {
        let r = benchkit::run_reference(&b.program, DEFAULT_RAM_BASE, DEFAULT_RAM_SIZE, 50_000_000)
            .map_err(|e| format!("{}: {e}", b.name))?;
        let regs = r.state.regs();
        b.check(&FinalState {
            exit_code: r.exit_code,
            regs: &regs,
            memory: &r.state.mem,
        })
        .map_err(|e| format!("{} on the reference: {e}", b.name))?;

        let t = run(&b.program, &CoreConfig::default()).map_err(|e| e.to_string())?;
        b.check(&FinalState {
            exit_code: t.exit_code.unwrap_or(-1),
            regs: &t.regs,
            memory: &t.memory,
        })
        .map_err(|e| format!("{} on the timing model: {e}", b.name))?;
    }
    let fib = benchkit::get("FibSlow").map_err(|e| e.to_string())?;
    let t = run(&fib.program, &CoreConfig::default()).map_err(|e| e.to_string())?;
    let got = t
        .memory
        .load(benchkit::RESULT_ADDR, 4)
        .map_err(|e| e.to_string())?;
    ensure!(got == 6765, "fib({FIB_SLOW_N}) = {got}");
    Ok(format!(
        "all 7 checks pass on both models, fib({FIB_SLOW_N}) = {got}"
    ))
}

fn predictor() -> Outcome {
    let r = predictor_vs_model(200_000, 1)?;
    Ok(format!(
        "{} events, {} predictions, {} recoveries, bit-exact",
        r.events, r.predictions, r.mispredicts
    ))
}

fn cache() -> Outcome {
    let checks = plru_vs_lru(10_000, 2)?;
    let r = cache_vs_brute(CacheConfig::default(), 100_000, 3)?;
    Ok(format!(
        "PLRU = LRU on 10000 sequences ({checks} victims); 100000 references ({} hits at +1, {} misses at +100) match",
        r.hits, r.misses
    ))
}

fn invariants_and_traces(runs: &[Instrumented]) -> (Outcome, Outcome) {
    let cycles: u64 = runs.iter().map(|r| r.cycles_checked).sum();
    let inv = Ok(format!("{cycles} cycles checked across 7 benchmarks"));
    let mut commits = 0;
    for r in runs {
        let name = &r.result.stats.benchmark;
        let summary = match validate_trace(&r.trace) {
            Ok(s) => s,
            Err(e) => return (inv, Err(format!("{name}: {e}"))),
        };
        if summary.commits != r.result.stats.committed_instructions {
            return (
                inv,
                Err(format!(
                    "{name}: {} commit records for {} instructions",
                    summary.commits, r.result.stats.committed_instructions
                )),
            );
        }
        commits += summary.commits;
    }
    (inv, Ok(format!("7 traces valid, {commits} commit records")))
}

fn metrics() -> Outcome {
    let runs: Vec<RunStats> = benchkit::all()
        .iter()
        .map(|b| run(&b.program, &CoreConfig::default()).map(|r| r.stats))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let report = compare(&runs, &runs).map_err(|e| e.to_string())?;
    for row in &report.rows {
        ensure!(
            row.cycle_ratio == 1.0 && row.instruction_ratio == 1.0,
            "{}: ratio not 1",
            row.benchmark
        );
    }
    let m = report.cycle_ratio_means;
    ensure!(
        m.arithmetic == 1.0 && m.geometric == 1.0 && m.harmonic == 1.0,
        "self-compare means {m:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..1000 {
        let n = rng.gen_range(1..50);
        let v: Vec<f64> = (0..n)
            .map(|_| 10f64.powf(rng.gen_range(-3.0..3.0)))
            .collect();
        let m = means(&v).map_err(|e| e.to_string())?;
        let tol = 1e-12 * m.arithmetic;
        ensure!(
            m.harmonic <= m.geometric + tol && m.geometric <= m.arithmetic + tol,
            "vector {i}: {m:?}"
        );
    }
    let k = mpki(10, 2000).map_err(|e| e.to_string())?;
    ensure!(k == 5.0, "mpki(10, 2000) = {k}");
    Ok("self-compare is all ones; H <= G <= A on 1000 vectors; mpki(10, 2000) = 5".into())
}

fn signatures(runs: &[Instrumented]) -> Outcome {
    let stats = |name: &str| {
        runs.iter()
            .find(|r| r.result.stats.benchmark == name)
            .ok_or_else(|| format!("{name} missing"))
    };
    let int = &stats("IntegerStress")?.result.stats;
    let (int_maki, int_mpki) = (
        int.maki().unwrap_or(f64::NAN),
        int.mpki().unwrap_or(f64::NAN),
    );
    ensure!(
        int_maki < 1.0 && int_mpki < 1.0,
        "IntegerStress MAKI {int_maki:.2} MPKI {int_mpki:.2}"
    );
    let mem = stats("MemoryRandom")?
        .result
        .stats
        .maki()
        .unwrap_or(f64::NAN);
    ensure!(mem > 50.0, "MemoryRandom MAKI {mem:.1}");
    let rnd = stats("BranchMisRandom")?
        .result
        .stats
        .mpki()
        .unwrap_or(f64::NAN);
    ensure!(rnd > 10.0, "BranchMisRandom MPKI {rnd:.1}");

    let never = stats("BranchMisNever")?;
    let half = never
        .halfway
        .as_ref()
        .ok_or("BranchMisNever: no halfway sample")?;
    let end = &never.result.stats;
    let steady = mpki(
        end.branch_mispredictions.unwrap_or(0) - half.branch_mispredictions.unwrap_or(0),
        end.committed_instructions - half.committed_instructions,
    )
    .map_err(|e| e.to_string())?;
    ensure!(steady < 1.0, "BranchMisNever steady-state MPKI {steady:.3}");
    Ok(format!(
        "IntegerStress MAKI {int_maki:.2} MPKI {int_mpki:.2}; MemoryRandom MAKI {mem:.1}; \
         BranchMisRandom MPKI {rnd:.1}; BranchMisNever steady MPKI {steady:.3}"
    ))
}

fn determinism(first: &[Instrumented], expected: &[u64]) -> Outcome {
    for (b, (a, &n)) in benchkit::all().iter().zip(first.iter().zip(expected)) {
        let again = instrumented(b, n)?;
        let sa = serde_json::to_string(&a.result.stats.without_wall_clock()).unwrap();
        let sb = serde_json::to_string(&again.result.stats.without_wall_clock()).unwrap();
        ensure!(sa == sb, "{}: stats differ", b.name);
        ensure!(a.trace == again.trace, "{}: traces differ", b.name);
    }
    Ok("second run of all 7 gives identical stats and traces".into())
}

fn main() {
    let mut failed = 0;
    let mut report = |id: u32, what: &str, o: Outcome| match o {
        Ok(detail) => println!("PASS {id} {what}: {detail}"),
        Err(detail) => {
            failed += 1;
            println!("FAIL {id} {what}: {detail}");
        }
    };

    report(1, "co-simulation", cosim_all());
    report(2, "expected results", expected_results());
    report(3, "branch predictor oracle", predictor());
    report(4, "cache oracle", cache());

    let benches = benchkit::all();
    let expected: Result<Vec<u64>, String> = benches.iter().map(reference_instructions).collect();
    let runs: Result<Vec<Instrumented>, String> = expected.clone().and_then(|n| {
        benches
            .iter()
            .zip(&n)
            .map(|(b, &n)| instrumented(b, n))
            .collect()
    });
    match &runs {
        Ok(runs) => {
            let (inv, traces) = invariants_and_traces(runs);
            report(5, "per-cycle invariants", inv);
            report(6, "metrics", metrics());
            report(7, "benchmark signatures", signatures(runs));
            report(8, "trace validity", traces);
            report(
                9,
                "determinism",
                determinism(runs, expected.as_ref().unwrap()),
            );
        }
        Err(e) => {
            report(5, "per-cycle invariants", Err(e.clone()));
            report(6, "metrics", metrics());
            for (id, what) in [
                (7, "benchmark signatures"),
                (8, "trace validity"),
                (9, "determinism"),
            ] {
                report(id, what, Err("instrumented runs failed".into()));
            }
        }
    }
    println!("trace loading in Konata: manual check, see README");
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
