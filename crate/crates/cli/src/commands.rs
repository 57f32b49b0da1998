use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use ooosim_core::benchkit::{self, BenchError, Benchmark, FinalState, BENCHMARKS};
use ooosim_core::isa::{load_program, ImageFormat, Program};
use ooosim_core::metrics::{self, write_stats, MetricsError};
use ooosim_core::pipeline::{simulate, CoreConfig, RunOptions, RunResult, SimError};
use ooosim_core::trace;

use crate::{CompareArgs, RunArgs};

pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGENCE: u8 = 3;
pub const EXIT_DEADLOCK: u8 = 4;
pub const EXIT_MAX_CYCLES: u8 = 5;
pub const EXIT_GUEST_FAULT: u8 = 6;
pub const EXIT_IO: u8 = 7;
pub const EXIT_INTERNAL: u8 = 8;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            kind,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, "usage", message)
    }

    fn io(path: &Path, e: io::Error) -> Self {
        Self::new(EXIT_IO, "io", format!("{}: {e}", path.display()))
    }

    fn sim(name: &str, e: SimError) -> Self {
        let (code, kind) = match &e {
            SimError::CoSimDivergence { .. } => (EXIT_DIVERGENCE, "divergence"),
            SimError::Deadlock { .. } => (EXIT_DEADLOCK, "deadlock"),
            SimError::MaxCyclesExceeded { .. } => (EXIT_MAX_CYCLES, "max-cycles"),
            SimError::GuestFault { .. } => (EXIT_GUEST_FAULT, "guest-fault"),
            SimError::Trace(_) => (EXIT_IO, "io"),
            SimError::Config(_) => (EXIT_USAGE, "config"),
            SimError::InvariantViolated { .. } | SimError::Predictor(_) => {
                (EXIT_INTERNAL, "internal")
            }
        };
        Self::new(code, kind, format!("{name}: {e}"))
    }
}

type Result<T = ()> = std::result::Result<T, Failure>;

fn load_config(args: &RunArgs) -> Result<CoreConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
            CoreConfig::parse(&text).map_err(|e| {
                Failure::new(EXIT_USAGE, "config", format!("{}: {e}", path.display()))
            })?
        }
        None => CoreConfig::default(),
    };
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("--set {kv:?}: expected KEY=VALUE")))?;
        cfg.set(k.trim(), v.trim()).map_err(|_| {
            Failure::new(
                EXIT_USAGE,
                "config",
                format!("--set {kv:?}: unknown key or bad value"),
            )
        })?;
    }
    if args.no_cosim {
        cfg.cosim = false;
    }
    if let Some(n) = args.max_cycles {
        cfg.max_cycles = n;
    }
    cfg.validate()
        .map_err(|e| Failure::new(EXIT_USAGE, "config", e.to_string()))?;
    Ok(cfg)
}

/// One program to simulate, with the checker for embedded benchmarks.
struct Job {
    name: String,
    program: Program,
    bench: Option<Benchmark>,
}

fn jobs(args: &RunArgs) -> Result<Vec<Job>> {
    if let Some(path) = &args.program {
        let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
        let program = load_program(&bytes, ImageFormat::Elf32)
            .map_err(|e| Failure::new(EXIT_USAGE, "image", format!("{}: {e}", path.display())))?;
        return Ok(vec![Job {
            name: file_stem(path),
            program,
            bench: None,
        }]);
    }
    if let Some(path) = &args.binary {
        let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
        let format = ImageFormat::FlatBinary {
            base: args.base.unwrap_or_default(),
            entry: args.entry.unwrap_or_default(),
        };
        let program = load_program(&bytes, format)
            .map_err(|e| Failure::new(EXIT_USAGE, "image", format!("{}: {e}", path.display())))?;
        return Ok(vec![Job {
            name: file_stem(path),
            program,
            bench: None,
        }]);
    }
    let mut names: Vec<String> = Vec::new();
    for n in &args.bench {
        if n == "all" {
            names.extend(BENCHMARKS.iter().map(|s| s.to_string()));
        } else {
            names.push(n.clone());
        }
    }
    names.sort();
    names.dedup();
    names
        .into_iter()
        .map(|n| {
            let b = benchkit::get(&n).map_err(bench_failure)?;
            Ok(Job {
                name: n,
                program: b.program.clone(),
                bench: Some(b),
            })
        })
        .collect()
}

fn bench_failure(e: BenchError) -> Failure {
    Failure::usage(e.to_string())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "program".into(), |s| s.to_string_lossy().into_owned())
}

fn check(job: &Job, r: &RunResult) -> Result {
    let code = r.exit_code.unwrap_or(-1);
    if let Some(b) = &job.bench {
        b.check(&FinalState {
            exit_code: code,
            regs: &r.regs,
            memory: &r.memory,
        })
        .map_err(|e| Failure::new(EXIT_FAILED, "check", format!("{}: {e}", job.name)))?;
    }
    if code != 0 {
        return Err(Failure::new(
            EXIT_FAILED,
            "guest-exit",
            format!("{} exited with {code}", job.name),
        ));
    }
    Ok(())
}

fn summary(r: &RunResult) -> String {
    let s = &r.stats;
    let rate = |v: Option<f64>, digits: usize| v.map_or("n/a".into(), |v| format!("{v:.digits$}"));
    format!(
        "{}: exit {}, {} cycles, {} instructions, IPC {}, MPKI {}, MAKI {}",
        s.benchmark,
        r.exit_code.map_or("-".into(), |c| c.to_string()),
        s.cycles,
        s.committed_instructions,
        rate(s.ipc(), 3),
        rate(s.mpki(), 2),
        rate(s.maki(), 1),
    )
}

pub fn run(args: &RunArgs) -> Result {
    let cfg = load_config(args)?;
    let jobs = jobs(args)?;
    if jobs.is_empty() {
        return Err(Failure::usage("no program given"));
    }
    if args.trace_out.is_some() && jobs.len() > 1 {
        return Err(Failure::usage("--trace-out needs exactly one program"));
    }

    let results: Vec<std::result::Result<RunResult, SimError>> = if let Some(path) = &args.trace_out
    {
        let file = File::create(path).map_err(|e| Failure::io(path, e))?;
        let options = RunOptions {
            name: jobs[0].name.clone(),
            trace: Some(Box::new(BufWriter::new(file))),
            trace_window: args.trace_window,
        };
        vec![simulate(&jobs[0].program, &cfg, options)]
    } else {
        run_parallel(&jobs, &cfg, args.jobs)
    };

    let mut first_failure = None;
    let mut failed = 0;
    let mut stats = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let outcome = result
            .map_err(|e| Failure::sim(&job.name, e))
            .and_then(|r| {
                println!("{}", summary(&r));
                io::stdout().write_all(&r.output).ok();
                stats.push(r.stats.clone());
                check(job, &r)
            });
        if let Err(f) = outcome {
            eprintln!("ooosim: {}: {}", f.kind, f.message);
            failed += 1;
            first_failure.get_or_insert(f);
        }
    }
    if let Some(path) = &args.stats_out {
        let file = File::create(path).map_err(|e| Failure::io(path, e))?;
        let mut w = BufWriter::new(file);
        write_stats(&mut w, &stats)
            .and_then(|_| w.flush())
            .map_err(|e| Failure::io(path, e))?;
    }
    match first_failure {
        Some(f) => Err(Failure::new(
            f.code,
            "run",
            format!("{failed} of {} runs failed", jobs.len()),
        )),
        None => Ok(()),
    }
}

fn run_parallel(
    jobs: &[Job],
    cfg: &CoreConfig,
    threads: Option<usize>,
) -> Vec<std::result::Result<RunResult, SimError>> {
    let threads = threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, jobs.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<_>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let options = RunOptions {
                    name: job.name.clone(),
                    ..RunOptions::default()
                };
                *slots[i].lock().unwrap() = Some(simulate(&job.program, cfg, options));
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect()
}

fn read_side(paths: &[std::path::PathBuf]) -> Result<Vec<metrics::RunStats>> {
    let mut runs = Vec::new();
    for p in paths {
        let text = fs::read_to_string(p).map_err(|e| Failure::io(p, e))?;
        let mut r = metrics::read_stats(&text)
            .map_err(|e| Failure::new(EXIT_FAILED, "stats", format!("{}: {e}", p.display())))?;
        runs.append(&mut r);
    }
    Ok(runs)
}

pub fn compare(args: &CompareArgs) -> Result {
    let a = read_side(&args.a)?;
    let b = read_side(&args.b)?;
    let report = metrics::compare(&a, &b).map_err(|e| match e {
        MetricsError::BenchmarkMismatch { .. } => {
            Failure::new(EXIT_FAILED, "mismatch", e.to_string())
        }
        other => Failure::new(EXIT_FAILED, "compare", other.to_string()),
    })?;
    print!("{}", report.render_table());
    if let Some(path) = &args.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| Failure::io(path, e))?;
    }
    Ok(())
}

pub fn bench_list(long: bool) -> Result {
    for b in benchkit::all() {
        if long {
            println!("{:<16}{}", b.name, b.description);
        } else {
            println!("{}", b.name);
        }
    }
    Ok(())
}

pub fn bench_export(name: &str, out: &Path) -> Result {
    let b = benchkit::get(name).map_err(bench_failure)?;
    let (base, entry, bytes) = benchkit::export_flat(&b.program);
    fs::write(out, bytes).map_err(|e| Failure::io(out, e))?;
    println!("base=0x{base:08x} entry=0x{entry:08x}");
    Ok(())
}

pub fn validate_trace(path: &Path) -> Result {
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    match trace::validate_trace(&bytes) {
        Ok(s) => {
            println!(
                "ok: {} instructions, {} committed, {} flushed, last cycle {}",
                s.instructions, s.commits, s.flushes, s.last_cycle
            );
            Ok(())
        }
        Err(v) => Err(Failure::new(
            EXIT_FAILED,
            "invalid-trace",
            format!("{}: {v}", path.display()),
        )),
    }
}
