//! The cycle loop.
//!
//! Stages run in reverse pipeline order inside one [`Core::tick`], so each
//! stage consumes what the stage before it produced in the previous cycle:
//! cache fills, commit, writeback, memory, execute, register read, issue,
//! dispatch, rename, decode, fetch.

use std::collections::VecDeque;
use std::io::Write;

use crate::cache::{AccessKind, AccessOutcome, Cache};
use crate::isa::{
    alu, branch_taken, decode, load_extend, reg, ArchState, CommitRecord, DecodedInst, InstClass,
    IsaError, MemEffect, Memory, Op, Program, SyscallEffect, SYS_EXIT, SYS_WRITE,
};
use crate::metrics::RunStats;
use crate::predictor::{BranchPredictor, ControlKind, Prediction, PredictorCheckpoint};
use crate::trace::{KanataEvent, RetireKind, Stage, TraceError, TraceWriter};

use super::mdp::DependencePredictor;
use super::rename::{PhysReg, RenameTables};
use super::{CoreConfig, CycleReport, RunResult, SimError, StallReason};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Int,
    Load,
    Store,
    Ecall,
    Nop,
    Fault,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Port {
    Int,
    Load,
    Store,
}

#[derive(Debug, Clone)]
struct FrontInst {
    uid: u64,
    pc: u32,
    raw: u32,
    inst: Result<DecodedInst, IsaError>,
    checkpoint: PredictorCheckpoint,
    pred: Option<Prediction>,
    predicted_next: u32,
    traced: bool,
    stage: Option<Stage>,
}

struct FetchGroup {
    insts: VecDeque<FrontInst>,
    ready_at: u64,
}

#[derive(Debug, Clone)]
struct RobEntry {
    seq: u64,
    uid: u64,
    pc: u32,
    raw: u32,
    inst: Option<DecodedInst>,
    kind: Kind,
    fault: Option<IsaError>,
    dest_arch: Option<u8>,
    dest: Option<PhysReg>,
    old_dest: Option<PhysReg>,
    srcs: [Option<PhysReg>; 2],
    checkpoint: PredictorCheckpoint,
    pred: Option<Prediction>,
    predicted_next: u32,
    next_pc: u32,
    taken: bool,
    done_at: Option<u64>,
    mem: Option<MemEffect>,
    traced: bool,
    stage: Option<Stage>,
}

#[derive(Debug, Clone)]
struct IqEntry {
    seq: u64,
    pc: u32,
    port: Port,
    srcs: [Option<PhysReg>; 2],
    dest: Option<PhysReg>,
    dispatched_at: u64,
    issued: bool,
}

#[derive(Debug, Clone, Copy)]
struct Flight {
    seq: u64,
    issued_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LoadState {
    /// Not yet through address generation.
    Pending,
    /// Address known; memory stage at `ma_at`.
    Agu {
        ma_at: u64,
    },
    /// Blocked by a partial overlap or a full MSHR; retried every cycle.
    Retry,
    WaitFill,
    Done,
}

#[derive(Debug, Clone)]
struct LqEntry {
    seq: u64,
    uid: u64,
    pc: u32,
    op: Op,
    dest: Option<PhysReg>,
    addr: Option<u32>,
    width: u32,
    state: LoadState,
    forwarded_from: Option<u64>,
    speculated: bool,
}

#[derive(Debug, Clone)]
struct SqEntry {
    seq: u64,
    addr: Option<u32>,
    width: u32,
    data: u32,
}

struct Tracer<'t> {
    writer: TraceWriter<Box<dyn Write + 't>>,
    window: Option<(u64, u64)>,
    error: Option<TraceError>,
}

impl Tracer<'_> {
    fn emit(&mut self, now: u64, event: KanataEvent) {
        if self.error.is_some() {
            return;
        }
        let res = self
            .writer
            .record(KanataEvent::CycleAdvance { cycle: now })
            .and_then(|_| self.writer.record(event));
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}

fn trace_stage(
    tracer: &mut Option<Tracer<'_>>,
    now: u64,
    uid: u64,
    traced: bool,
    cur: &mut Option<Stage>,
    next: Stage,
) {
    if let (Some(t), true) = (tracer.as_mut(), traced) {
        if let Some(s) = cur.take() {
            t.emit(now, KanataEvent::StageEnd { id: uid, stage: s });
        }
        t.emit(
            now,
            KanataEvent::StageBegin {
                id: uid,
                stage: next,
            },
        );
    }
    *cur = Some(next);
}

fn trace_retire(
    tracer: &mut Option<Tracer<'_>>,
    now: u64,
    uid: u64,
    traced: bool,
    cur: &mut Option<Stage>,
    retire_id: u64,
    kind: RetireKind,
) {
    if let (Some(t), true) = (tracer.as_mut(), traced) {
        if let Some(s) = cur.take() {
            t.emit(now, KanataEvent::StageEnd { id: uid, stage: s });
        }
        t.emit(
            now,
            KanataEvent::Retire {
                id: uid,
                retire_id,
                kind,
            },
        );
    }
    *cur = None;
}

fn truncate(value: u32, width: u32) -> u32 {
    match width {
        1 => value & 0xff,
        2 => value & 0xffff,
        _ => value,
    }
}

fn overlaps(a: u32, aw: u32, b: u32, bw: u32) -> bool {
    let (a, b) = (u64::from(a), u64::from(b));
    a < b + u64::from(bw) && b < a + u64::from(aw)
}

fn covers(outer: u32, ow: u32, inner: u32, iw: u32) -> bool {
    let (o, i) = (u64::from(outer), u64::from(inner));
    o <= i && i + u64::from(iw) <= o + u64::from(ow)
}

#[derive(Debug, Default, Clone, Copy)]
struct Counters {
    committed: u64,
    branch_predictions: u64,
    branch_mispredictions: u64,
    squashed_branch_predictions: u64,
    loads: u64,
    stores: u64,
    flushes_mispredict: u64,
    flushes_violation: u64,
    squashed: u64,
    replays: u64,
}

/// The out-of-order timing model for one program.
pub struct Core<'t> {
    cfg: CoreConfig,
    name: String,
    now: u64,
    mem: Memory,
    oracle: Option<ArchState>,
    predictor: BranchPredictor,
    mdp: DependencePredictor,
    icache: Cache,
    dcache: Cache,
    rename: RenameTables,
    prf: Vec<u32>,
    ready_at: Vec<Option<u64>>,

    fetch_pc: u32,
    fetch_halted: bool,
    fetch_resume_at: u64,
    fetch_group: Option<FetchGroup>,
    decoded: VecDeque<FrontInst>,
    renamed: Vec<u64>,

    rob: VecDeque<RobEntry>,
    iq: Vec<IqEntry>,
    flights: Vec<Flight>,
    wb_queue: Vec<(u64, u64)>,
    lq: VecDeque<LqEntry>,
    sq: VecDeque<SqEntry>,

    next_uid: u64,
    next_seq: u64,
    last_commit: u64,
    counters: Counters,
    exit_code: Option<i32>,
    output: Vec<u8>,
    tracer: Option<Tracer<'t>>,
    report: CycleReport,
}

impl<'t> Core<'t> {
    pub fn new(program: &Program, config: &CoreConfig) -> Result<Self, SimError> {
        config
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        let cache = |c| Cache::new(c).map_err(|e| SimError::Config(e.to_string()));
        let mem = program.memory(config.ram_base, config.ram_size);
        let n = config.phys_regs;
        let mut prf = vec![0u32; n];
        prf[usize::from(reg::SP)] = program.initial_sp;
        let mut ready_at = vec![None; n];
        for r in ready_at.iter_mut().take(32) {
            *r = Some(0);
        }
        Ok(Self {
            cfg: config.clone(),
            name: "program".into(),
            now: 0,
            oracle: config
                .cosim
                .then(|| ArchState::from_program(program, config.ram_base, config.ram_size)),
            mem,
            predictor: BranchPredictor::new(&config.predictor),
            mdp: DependencePredictor::new(config.mdp_entries),
            icache: cache(config.icache)?,
            dcache: cache(config.dcache)?,
            rename: RenameTables::new(n),
            prf,
            ready_at,
            fetch_pc: program.entry,
            fetch_halted: false,
            fetch_resume_at: 0,
            fetch_group: None,
            decoded: VecDeque::new(),
            renamed: Vec::new(),
            rob: VecDeque::new(),
            iq: Vec::new(),
            flights: Vec::new(),
            wb_queue: Vec::new(),
            lq: VecDeque::new(),
            sq: VecDeque::new(),
            next_uid: 0,
            next_seq: 0,
            last_commit: 0,
            counters: Counters::default(),
            exit_code: None,
            output: Vec::new(),
            tracer: None,
            report: CycleReport::default(),
        })
    }

    /// Name recorded in the run statistics.
    pub fn set_name(&mut self, name: impl Into<String>) {
        self.name = name.into();
    }

    /// Streams a Kanata log to `sink`. With a window `(from, to)` only
    /// instructions fetched in cycles `from..to` are recorded.
    pub fn attach_trace(
        &mut self,
        sink: Box<dyn Write + 't>,
        window: Option<(u64, u64)>,
    ) -> Result<(), SimError> {
        let mut writer = TraceWriter::new(sink);
        writer.open(self.now).map_err(SimError::Trace)?;
        self.tracer = Some(Tracer {
            writer,
            window,
            error: None,
        });
        Ok(())
    }

    pub fn cycle(&self) -> u64 {
        self.now
    }

    pub fn exited(&self) -> Option<i32> {
        self.exit_code
    }

    pub fn committed(&self) -> u64 {
        self.counters.committed
    }

    /// Times a load was sent back to wait after a speculative wakeup.
    pub fn replays(&self) -> u64 {
        self.counters.replays
    }

    pub fn config(&self) -> &CoreConfig {
        &self.cfg
    }

    /// Architectural register values as of the last commit.
    pub fn arch_regs(&self) -> [u32; 32] {
        let map = self.rename.retired_map();
        std::array::from_fn(|i| {
            if i == 0 {
                0
            } else {
                self.prf[usize::from(map[i])]
            }
        })
    }

    /// Memory as seen by committed stores.
    pub fn memory(&self) -> &Memory {
        &self.mem
    }

    pub fn output(&self) -> &[u8] {
        &self.output
    }

    /// Advances one cycle.
    pub fn tick(&mut self) -> Result<CycleReport, SimError> {
        if self.exit_code.is_some() {
            return Ok(self.report);
        }
        self.report = CycleReport {
            cycle: self.now,
            ..CycleReport::default()
        };
        self.fills();
        self.commit()?;
        if self.exit_code.is_none() {
            self.writeback();
            self.memory_stage();
            self.execute()?;
            self.register_read();
            self.issue();
            self.dispatch();
            self.rename_stage();
            self.decode_stage();
            self.fetch();
        }
        self.fill_report();
        if self.cfg.check_invariants {
            self.check_invariants()?;
        }
        if let Some(t) = self.tracer.as_mut() {
            if let Some(e) = t.error.take() {
                return Err(SimError::Trace(e));
            }
        }
        let report = self.report;
        if self.exit_code.is_none() {
            if !self.rob.is_empty() && self.now - self.last_commit > self.cfg.deadlock_window {
                return Err(SimError::Deadlock {
                    cycle: self.now,
                    head_pc: self.rob.front().map(|e| e.pc),
                });
            }
            self.now += 1;
            if self.now >= self.cfg.max_cycles {
                return Err(SimError::MaxCyclesExceeded { cycles: self.now });
            }
        } else {
            self.now += 1;
        }
        Ok(report)
    }

    /// Ticks until the guest exits.
    pub fn run_to_exit(&mut self) -> Result<i32, SimError> {
        loop {
            self.tick()?;
            if let Some(code) = self.exit_code {
                return Ok(code);
            }
        }
    }

    /// Drains the trace and builds the run result. In-flight instructions
    /// are recorded as flushed.
    pub fn finish(mut self) -> Result<RunResult, SimError> {
        let now = self.now;
        let mut front: Vec<FrontInst> = self.decoded.drain(..).collect();
        if let Some(g) = self.fetch_group.take() {
            front.extend(g.insts);
        }
        for mut f in front {
            self.counters.squashed += 1;
            trace_retire(
                &mut self.tracer,
                now,
                f.uid,
                f.traced,
                &mut f.stage,
                0,
                RetireKind::Flush,
            );
        }
        while let Some(mut e) = self.rob.pop_front() {
            self.counters.squashed += 1;
            trace_retire(
                &mut self.tracer,
                now,
                e.uid,
                e.traced,
                &mut e.stage,
                e.seq,
                RetireKind::Flush,
            );
        }
        if let Some(mut t) = self.tracer.take() {
            if let Some(e) = t.error.take() {
                return Err(SimError::Trace(e));
            }
            t.writer.flush().map_err(SimError::Trace)?;
        }
        let stats = self.stats();
        Ok(RunResult {
            exit_code: self.exit_code,
            regs: self.arch_regs(),
            memory: std::mem::replace(&mut self.mem, Memory::new(0, 0)),
            output: std::mem::take(&mut self.output),
            stats,
        })
    }

    /// Statistics so far.
    pub fn stats(&self) -> RunStats {
        let c = &self.counters;
        let (i, d) = (self.icache.stats(), self.dcache.stats());
        RunStats {
            benchmark: self.name.clone(),
            config_fingerprint: Some(self.cfg.fingerprint()),
            cycles: self.now,
            committed_instructions: c.committed,
            branch_predictions: Some(c.branch_predictions),
            branch_mispredictions: Some(c.branch_mispredictions),
            squashed_branch_predictions: Some(c.squashed_branch_predictions),
            icache_accesses: Some(i.accesses),
            icache_misses: Some(i.misses),
            dcache_accesses: Some(d.accesses),
            dcache_misses: Some(d.misses),
            mshr_allocations: Some(i.mshr_allocations + d.mshr_allocations),
            mshr_merges: Some(i.mshr_merges + d.mshr_merges),
            mshr_structural_stalls: Some(i.structural_stalls + d.structural_stalls),
            loads: Some(c.loads),
            stores: Some(c.stores),
            pipeline_flushes_mispredict: Some(c.flushes_mispredict),
            pipeline_flushes_memory_violation: Some(c.flushes_violation),
            squashed_instructions: Some(c.squashed),
            exit_code: self.exit_code,
            wall_clock_seconds: None,
        }
    }

    fn rob_index(&self, seq: u64) -> Option<usize> {
        self.rob.binary_search_by_key(&seq, |e| e.seq).ok()
    }

    fn lq_index(&self, seq: u64) -> Option<usize> {
        self.lq.binary_search_by_key(&seq, |e| e.seq).ok()
    }

    fn sq_index(&self, seq: u64) -> Option<usize> {
        self.sq.binary_search_by_key(&seq, |e| e.seq).ok()
    }

    fn is_ready(&self, p: Option<PhysReg>) -> bool {
        p.is_none_or(|p| self.ready_at[usize::from(p)].is_some_and(|r| r <= self.now))
    }

    fn read(&self, p: Option<PhysReg>) -> u32 {
        p.map_or(0, |p| self.prf[usize::from(p)])
    }

    fn write(&mut self, p: Option<PhysReg>, value: u32) {
        if let Some(p) = p.filter(|&p| p != 0) {
            self.prf[usize::from(p)] = value;
        }
    }

    fn set_ready(&mut self, p: Option<PhysReg>, at: Option<u64>) {
        if let Some(p) = p.filter(|&p| p != 0) {
            self.ready_at[usize::from(p)] = at;
        }
    }

    // ---- cache fills -------------------------------------------------

    fn fills(&mut self) {
        self.icache.tick(self.now);
        for fill in self.dcache.tick(self.now) {
            for uid in fill.requesters {
                if let Some(l) = self
                    .lq
                    .iter_mut()
                    .find(|l| l.uid == uid && l.state == LoadState::WaitFill)
                {
                    l.state = LoadState::Done;
                    self.wb_queue.push((self.now, l.seq));
                }
            }
        }
    }

    // ---- commit ------------------------------------------------------

    fn commit(&mut self) -> Result<(), SimError> {
        let now = self.now;
        for _ in 0..self.cfg.commit_width {
            let Some(head) = self.rob.front() else { break };
            if !head.done_at.is_some_and(|d| d < now) {
                break;
            }
            if let Some(err) = head.fault.clone() {
                if let Some(oracle) = self.oracle.as_mut() {
                    match oracle.step() {
                        Err(e) if e == err => {}
                        other => {
                            return Err(SimError::CoSimDivergence {
                                seq: head.seq,
                                pc: head.pc,
                                field: "fault",
                                timing: err.to_string(),
                                oracle: format!("{other:?}"),
                            })
                        }
                    }
                }
                return Err(SimError::GuestFault {
                    pc: head.pc,
                    error: err,
                });
            }
            if head.kind == Kind::Store {
                let addr = head.mem.map_or(0, |m| m.addr);
                let res = self.dcache.access(addr, AccessKind::Store, now, head.uid);
                if res.outcome == AccessOutcome::StructuralStall {
                    self.report.stall = Some(StallReason::StoreMshrFull);
                    break;
                }
            }
            let mut entry = self.rob.pop_front().expect("head");
            let mut syscall = None;
            match entry.kind {
                Kind::Store => {
                    let m = entry.mem.expect("store address");
                    self.mem
                        .store(m.addr, m.width, m.store_data.unwrap_or(0))
                        .expect("checked at execute");
                    self.sq.pop_front();
                    self.counters.stores += 1;
                }
                Kind::Load => {
                    let l = self.lq.pop_front().expect("load queue head");
                    if l.speculated {
                        self.mdp.speculated_ok(l.pc);
                    }
                    self.counters.loads += 1;
                }
                Kind::Ecall => {
                    let effect = self.syscall(&entry)?;
                    let a0 = match &effect {
                        SyscallEffect::Exit(_) => {
                            self.prf[usize::from(self.rename.retired(reg::A0))]
                        }
                        SyscallEffect::Write { bytes, .. } => bytes.len() as u32,
                    };
                    self.write(entry.dest, a0);
                    self.set_ready(entry.dest, Some(now));
                    syscall = Some(effect);
                }
                _ => {}
            }
            if let Some(oracle) = self.oracle.as_mut() {
                let timing = CommitRecord {
                    pc: entry.pc,
                    raw: entry.raw,
                    dest: entry
                        .dest_arch
                        .filter(|&a| a != 0)
                        .map(|a| (a, entry.dest.map_or(0, |p| self.prf[usize::from(p)]))),
                    mem: entry.mem,
                    next_pc: entry.next_pc,
                    syscall: syscall.clone(),
                };
                compare(entry.seq, &timing, oracle.step())?;
            }
            if let (Some(a), Some(d), Some(o)) = (entry.dest_arch, entry.dest, entry.old_dest) {
                self.rename.commit(a, d, o);
            }
            match (entry.pred, entry.inst.map(|i| i.class())) {
                (Some(_), Some(class)) => {
                    let kind = if class == InstClass::Branch {
                        ControlKind::Conditional
                    } else {
                        ControlKind::Jump
                    };
                    self.predictor.update_commit(
                        entry.pc,
                        &entry.checkpoint,
                        kind,
                        entry.taken,
                        entry.next_pc,
                    );
                    self.counters.branch_predictions += 1;
                    if entry.predicted_next != entry.next_pc {
                        self.counters.branch_mispredictions += 1;
                    }
                }
                _ => self.predictor.retire(&entry.checkpoint),
            }
            trace_stage(
                &mut self.tracer,
                now,
                entry.uid,
                entry.traced,
                &mut entry.stage,
                Stage::Commit,
            );
            trace_retire(
                &mut self.tracer,
                now,
                entry.uid,
                entry.traced,
                &mut entry.stage,
                self.counters.committed,
                RetireKind::Commit,
            );
            self.counters.committed += 1;
            self.report.committed += 1;
            self.last_commit = now;
            if entry.kind == Kind::Ecall {
                match syscall {
                    Some(SyscallEffect::Exit(code)) => {
                        self.exit_code = Some(code);
                        break;
                    }
                    _ => {
                        self.fetch_halted = false;
                        self.fetch_resume_at = now + 1;
                    }
                }
            }
        }
        Ok(())
    }

    fn syscall(&mut self, entry: &RobEntry) -> Result<SyscallEffect, SimError> {
        let arch = |r: u8| self.prf[usize::from(self.rename.retired(r))];
        let fault = |error| SimError::GuestFault {
            pc: entry.pc,
            error,
        };
        match arch(reg::A7) {
            SYS_EXIT => Ok(SyscallEffect::Exit(arch(reg::A0) as i32)),
            SYS_WRITE => {
                let (fd, buf, len) = (arch(reg::A0), arch(reg::A1), arch(reg::A2));
                let bytes = self.mem.read_bytes(buf, len).map_err(fault)?;
                if fd == 1 || fd == 2 {
                    self.output.extend_from_slice(&bytes);
                }
                Ok(SyscallEffect::Write { fd, bytes })
            }
            n => Err(fault(IsaError::UnsupportedSyscall(n))),
        }
    }

    // ---- writeback ---------------------------------------------------

    fn writeback(&mut self) {
        let now = self.now;
        let mut due: Vec<u64> = self
            .wb_queue
            .iter()
            .filter(|&&(at, _)| at <= now)
            .map(|&(_, s)| s)
            .collect();
        due.sort_unstable();
        due.truncate(self.cfg.writeback_width);
        self.wb_queue.retain(|(_, s)| due.binary_search(s).is_err());
        for seq in due {
            if let Some(i) = self.rob_index(seq) {
                let e = &mut self.rob[i];
                e.done_at = Some(now);
                trace_stage(
                    &mut self.tracer,
                    now,
                    e.uid,
                    e.traced,
                    &mut e.stage,
                    Stage::Writeback,
                );
                self.report.written_back += 1;
            }
        }
    }

    // ---- memory stage ------------------------------------------------

    fn memory_stage(&mut self) {
        let now = self.now;
        let todo: Vec<u64> = self
            .lq
            .iter()
            .filter(|l| match l.state {
                LoadState::Agu { ma_at } => ma_at <= now,
                LoadState::Retry => true,
                _ => false,
            })
            .map(|l| l.seq)
            .collect();
        for seq in todo {
            self.load_access(seq);
        }
    }

    fn load_access(&mut self, seq: u64) {
        let now = self.now;
        let Some(li) = self.lq_index(seq) else { return };
        let l = self.lq[li].clone();
        let addr = l.addr.expect("address known at memory stage");
        if let LoadState::Agu { .. } = l.state {
            if let Some(ri) = self.rob_index(seq) {
                let e = &mut self.rob[ri];
                trace_stage(
                    &mut self.tracer,
                    now,
                    e.uid,
                    e.traced,
                    &mut e.stage,
                    Stage::Memory,
                );
            }
        }

        let mut unknown_older = false;
        let mut forward = None;
        let mut blocked = false;
        for st in self.sq.iter().rev().filter(|s| s.seq < seq) {
            match st.addr {
                None => unknown_older = true,
                Some(sa) if overlaps(sa, st.width, addr, l.width) => {
                    if covers(sa, st.width, addr, l.width) {
                        let shifted = st.data >> (8 * (addr - sa));
                        forward = Some((st.seq, truncate(shifted, l.width)));
                    } else {
                        blocked = true;
                    }
                    break;
                }
                Some(_) => {}
            }
        }

        if blocked {
            self.lq[li].state = LoadState::Retry;
            self.replay_load(li);
            return;
        }
        let (raw, wb_at) = if let Some((from, raw)) = forward {
            self.lq[li].forwarded_from = Some(from);
            (raw, now + 1)
        } else {
            let res = self.dcache.access(addr, AccessKind::Load, now, l.uid);
            match res.outcome {
                AccessOutcome::StructuralStall => {
                    self.lq[li].state = LoadState::Retry;
                    self.replay_load(li);
                    return;
                }
                AccessOutcome::Hit => {
                    self.lq[li].forwarded_from = None;
                    let ready = res.ready_cycle.unwrap_or(now + 1);
                    if ready > now + 1 && l.state != LoadState::Retry {
                        // slower than the speculative wakeup assumed
                        self.replay_load(li);
                        self.set_ready(l.dest, Some(ready - 1));
                    }
                    (self.mem.load_unchecked(addr, l.width), ready)
                }
                AccessOutcome::MissAllocated | AccessOutcome::MissMerged => {
                    let fill = res.ready_cycle.expect("miss has a fill cycle");
                    let l = &mut self.lq[li];
                    l.forwarded_from = None;
                    l.speculated = unknown_older;
                    l.state = LoadState::WaitFill;
                    let (dest, op, width) = (l.dest, l.op, l.width);
                    let raw = self.mem.load_unchecked(addr, width);
                    self.write(dest, load_extend(op, raw));
                    self.replay_load(li);
                    self.set_ready(dest, Some(fill));
                    return;
                }
            }
        };
        let was_retry = l.state == LoadState::Retry;
        let le = &mut self.lq[li];
        le.speculated = unknown_older;
        le.state = LoadState::Done;
        let (dest, op) = (le.dest, le.op);
        self.write(dest, load_extend(op, raw));
        if was_retry {
            self.set_ready(dest, Some(wb_at.saturating_sub(1).max(now)));
        }
        self.wb_queue.push((wb_at, seq));
    }

    /// The load's speculative wakeup was wrong: pull back dependents that
    /// issued on it and mark its destination not ready.
    fn replay_load(&mut self, li: usize) {
        self.counters.replays += 1;
        if let Some(d) = self.lq[li].dest {
            self.set_ready(Some(d), None);
            self.cancel_dependents(d);
        }
    }

    fn cancel_dependents(&mut self, preg: PhysReg) {
        let now = self.now;
        let mut work = vec![preg];
        while let Some(p) = work.pop() {
            let mut i = 0;
            while i < self.flights.len() {
                let seq = self.flights[i].seq;
                let Some(qi) = self.iq.iter().position(|q| q.seq == seq) else {
                    i += 1;
                    continue;
                };
                if !self.iq[qi].srcs.contains(&Some(p)) {
                    i += 1;
                    continue;
                }
                self.flights.remove(i);
                let q = &mut self.iq[qi];
                q.issued = false;
                if let Some(d) = q.dest {
                    self.ready_at[usize::from(d)] = None;
                    work.push(d);
                }
                if let Some(ri) = self.rob_index(seq) {
                    let e = &mut self.rob[ri];
                    if e.stage == Some(Stage::RegRead) {
                        trace_stage(
                            &mut self.tracer,
                            now,
                            e.uid,
                            e.traced,
                            &mut e.stage,
                            Stage::Issue,
                        );
                    }
                }
            }
        }
    }

    // ---- execute -----------------------------------------------------

    fn execute(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let mut due: Vec<u64> = self
            .flights
            .iter()
            .filter(|f| f.issued_at + 2 == now)
            .map(|f| f.seq)
            .collect();
        due.sort_unstable();
        for seq in due {
            let Some(fi) = self.flights.iter().position(|f| f.seq == seq) else {
                continue;
            };
            self.flights.remove(fi);
            if let Some(qi) = self.iq.iter().position(|q| q.seq == seq) {
                self.iq.remove(qi);
            }
            let Some(ri) = self.rob_index(seq) else {
                continue;
            };
            {
                let e = &mut self.rob[ri];
                trace_stage(
                    &mut self.tracer,
                    now,
                    e.uid,
                    e.traced,
                    &mut e.stage,
                    Stage::Execute,
                );
            }
            match self.rob[ri].kind {
                Kind::Int => self.execute_int(ri)?,
                Kind::Load => self.execute_load(ri),
                Kind::Store => self.execute_store(ri)?,
                _ => unreachable!("only IQ kinds execute"),
            }
        }
        Ok(())
    }

    fn execute_int(&mut self, ri: usize) -> Result<(), SimError> {
        let now = self.now;
        let e = &self.rob[ri];
        let inst = e.inst.expect("decoded");
        let (a, b) = (self.read(e.srcs[0]), self.read(e.srcs[1]));
        let (pc, seq, dest) = (e.pc, e.seq, e.dest);
        let fall = pc.wrapping_add(4);
        let (value, next, taken) = match inst.class() {
            InstClass::Jal => (Some(fall), pc.wrapping_add(inst.imm as u32), true),
            InstClass::Jalr => (Some(fall), a.wrapping_add(inst.imm as u32) & !1, true),
            InstClass::Branch => {
                let t = branch_taken(inst.op, a, b);
                (
                    None,
                    if t {
                        pc.wrapping_add(inst.imm as u32)
                    } else {
                        fall
                    },
                    t,
                )
            }
            _ => (Some(alu(&inst, pc, a, b)), fall, false),
        };
        if let Some(v) = value {
            self.write(dest, v);
        }
        let e = &mut self.rob[ri];
        e.next_pc = next;
        e.taken = taken;
        let mispredicted = e.pred.is_some() && e.predicted_next != next;
        let cp = e.checkpoint;
        self.wb_queue.push((now + 1, seq));
        if mispredicted {
            self.squash(seq + 1, next);
            self.counters.flushes_mispredict += 1;
            let r = if inst.class() == InstClass::Branch {
                self.predictor.recover(&cp, taken)
            } else {
                self.predictor.restore(&cp)
            };
            r.map_err(SimError::Predictor)?;
        }
        Ok(())
    }

    fn execute_load(&mut self, ri: usize) {
        let now = self.now;
        let e = &self.rob[ri];
        let inst = e.inst.expect("decoded");
        let addr = self.read(e.srcs[0]).wrapping_add(inst.imm as u32);
        let width = inst.op.mem_width().unwrap_or(4);
        let seq = e.seq;
        let li = self.lq_index(seq).expect("load queue entry");
        self.rob[ri].mem = Some(MemEffect {
            addr,
            width,
            store_data: None,
        });
        if let Err(err) = self.mem.check(addr, width) {
            self.rob[ri].fault = Some(err);
            self.lq[li].state = LoadState::Done;
            self.wb_queue.push((now + 1, seq));
            return;
        }
        self.lq[li].addr = Some(addr);
        self.lq[li].state = LoadState::Agu { ma_at: now + 1 };
    }

    fn execute_store(&mut self, ri: usize) -> Result<(), SimError> {
        let now = self.now;
        let e = &self.rob[ri];
        let inst = e.inst.expect("decoded");
        let addr = self.read(e.srcs[0]).wrapping_add(inst.imm as u32);
        let width = inst.op.mem_width().unwrap_or(4);
        let data = truncate(self.read(e.srcs[1]), width);
        let seq = e.seq;
        self.rob[ri].mem = Some(MemEffect {
            addr,
            width,
            store_data: Some(data),
        });
        self.wb_queue.push((now + 1, seq));
        if let Err(err) = self.mem.check(addr, width) {
            // younger instructions never commit past a faulting store
            self.rob[ri].fault = Some(err);
            return Ok(());
        }
        let si = self.sq_index(seq).expect("store queue entry");
        self.sq[si].addr = Some(addr);
        self.sq[si].data = data;

        let victim = self
            .lq
            .iter()
            .filter(|l| l.seq > seq && matches!(l.state, LoadState::WaitFill | LoadState::Done))
            .filter(|l| l.addr.is_some_and(|la| overlaps(addr, width, la, l.width)))
            .find(|l| l.forwarded_from.is_none_or(|f| f < seq))
            .map(|l| (l.seq, l.pc));
        if let Some((lseq, lpc)) = victim {
            let li = self.rob_index(lseq).expect("load in ROB");
            let cp = self.rob[li].checkpoint;
            self.mdp.violated(lpc);
            self.squash(lseq, lpc);
            self.counters.flushes_violation += 1;
            self.predictor.restore(&cp).map_err(SimError::Predictor)?;
        }
        Ok(())
    }

    // ---- register read -----------------------------------------------

    fn register_read(&mut self) {
        let now = self.now;
        let due: Vec<u64> = self
            .flights
            .iter()
            .filter(|f| f.issued_at + 1 == now)
            .map(|f| f.seq)
            .collect();
        for seq in due {
            if let Some(ri) = self.rob_index(seq) {
                let e = &mut self.rob[ri];
                trace_stage(
                    &mut self.tracer,
                    now,
                    e.uid,
                    e.traced,
                    &mut e.stage,
                    Stage::RegRead,
                );
            }
        }
    }

    // ---- issue -------------------------------------------------------

    fn issue(&mut self) {
        let now = self.now;
        for q in &self.iq {
            if q.dispatched_at + 1 == now {
                if let Ok(ri) = self.rob.binary_search_by_key(&q.seq, |e| e.seq) {
                    let e = &mut self.rob[ri];
                    trace_stage(
                        &mut self.tracer,
                        now,
                        e.uid,
                        e.traced,
                        &mut e.stage,
                        Stage::Issue,
                    );
                }
            }
        }
        let (mut int, mut mem, mut st, mut total) = (0, 0, 0, 0);
        for qi in 0..self.iq.len() {
            if total == self.cfg.issue_width {
                break;
            }
            let q = &self.iq[qi];
            if q.issued || q.dispatched_at >= now {
                continue;
            }
            if !q.srcs.iter().all(|&s| self.is_ready(s)) {
                continue;
            }
            let ok = match q.port {
                Port::Int => int < self.cfg.int_ports,
                Port::Load => {
                    mem < self.cfg.mem_ports
                        && (!self.mdp.must_wait(q.pc)
                            || self.sq.iter().all(|s| s.seq > q.seq || s.addr.is_some()))
                }
                Port::Store => mem < self.cfg.mem_ports && st < self.cfg.store_ports,
            };
            if !ok {
                continue;
            }
            match q.port {
                Port::Int => int += 1,
                Port::Load => mem += 1,
                Port::Store => {
                    mem += 1;
                    st += 1;
                }
            }
            total += 1;
            let (seq, port, dest) = (q.seq, q.port, q.dest);
            self.iq[qi].issued = true;
            self.flights.push(Flight {
                seq,
                issued_at: now,
            });
            match port {
                Port::Int => self.set_ready(dest, Some(now + 1)),
                Port::Load => self.set_ready(dest, Some(now + 2)),
                Port::Store => {}
            }
        }
        self.report.issued = total;
    }

    // ---- dispatch ----------------------------------------------------

    fn dispatch(&mut self) {
        let now = self.now;
        for seq in std::mem::take(&mut self.renamed) {
            let Some(ri) = self.rob_index(seq) else {
                continue;
            };
            let e = &mut self.rob[ri];
            trace_stage(
                &mut self.tracer,
                now,
                e.uid,
                e.traced,
                &mut e.stage,
                Stage::Dispatch,
            );
            let port = match e.kind {
                Kind::Int => Port::Int,
                Kind::Load => Port::Load,
                Kind::Store => Port::Store,
                Kind::Ecall | Kind::Nop | Kind::Fault => {
                    self.wb_queue.push((now + 1, seq));
                    continue;
                }
            };
            self.iq.push(IqEntry {
                seq,
                pc: e.pc,
                port,
                srcs: e.srcs,
                dest: e.dest,
                dispatched_at: now,
                issued: false,
            });
        }
    }

    // ---- rename ------------------------------------------------------

    fn rename_stage(&mut self) {
        let now = self.now;
        for _ in 0..self.cfg.rename_width {
            let Some(f) = self.decoded.front() else { break };
            let (kind, inst, fault) = match &f.inst {
                Ok(i) => {
                    let kind = match i.class() {
                        InstClass::Load => Kind::Load,
                        InstClass::Store => Kind::Store,
                        InstClass::Fence => Kind::Nop,
                        InstClass::System if i.op == Op::Ecall => Kind::Ecall,
                        InstClass::System => Kind::Fault,
                        _ => Kind::Int,
                    };
                    let fault = (kind == Kind::Fault).then_some(IsaError::Breakpoint(f.pc));
                    (kind, Some(*i), fault)
                }
                Err(e) => (Kind::Fault, None, Some(e.clone())),
            };
            let needs_iq = matches!(kind, Kind::Int | Kind::Load | Kind::Store);
            let stall = if self.rob.len() >= self.cfg.rob_entries {
                Some(StallReason::RobFull)
            } else if needs_iq && self.iq.len() + self.renamed.len() >= self.cfg.iq_entries {
                Some(StallReason::IqFull)
            } else if kind == Kind::Load && self.lq.len() >= self.cfg.lq_entries {
                Some(StallReason::LqFull)
            } else if kind == Kind::Store && self.sq.len() >= self.cfg.sq_entries {
                Some(StallReason::SqFull)
            } else {
                None
            };
            if stall.is_some() {
                self.report.stall = stall;
                break;
            }
            let dest_arch = match (kind, inst) {
                (Kind::Ecall, _) => Some(reg::A0),
                (_, Some(i)) => i.dest(),
                _ => None,
            };
            let srcs = match (kind, inst) {
                (Kind::Int | Kind::Load | Kind::Store, Some(i)) => i.sources(),
                _ => [None, None],
            };
            let Some(r) = self.rename.rename(srcs, dest_arch) else {
                self.report.stall = Some(StallReason::NoPhysReg);
                break;
            };
            let mut f = self.decoded.pop_front().expect("front");
            self.set_ready(r.dest, None);
            let seq = self.next_seq;
            self.next_seq += 1;
            trace_stage(
                &mut self.tracer,
                now,
                f.uid,
                f.traced,
                &mut f.stage,
                Stage::Rename,
            );
            match kind {
                Kind::Load => {
                    let i = inst.expect("decoded");
                    self.lq.push_back(LqEntry {
                        seq,
                        uid: f.uid,
                        pc: f.pc,
                        op: i.op,
                        dest: r.dest,
                        addr: None,
                        width: i.op.mem_width().unwrap_or(4),
                        state: LoadState::Pending,
                        forwarded_from: None,
                        speculated: false,
                    })
                }
                Kind::Store => self.sq.push_back(SqEntry {
                    seq,
                    addr: None,
                    width: inst.and_then(|i| i.op.mem_width()).unwrap_or(4),
                    data: 0,
                }),
                _ => {}
            }
            self.rob.push_back(RobEntry {
                seq,
                uid: f.uid,
                pc: f.pc,
                raw: f.raw,
                inst,
                kind,
                fault,
                dest_arch: dest_arch.filter(|&a| a != 0),
                dest: r.dest,
                old_dest: r.old_dest,
                srcs: r.srcs,
                checkpoint: f.checkpoint,
                pred: f.pred,
                predicted_next: f.predicted_next,
                next_pc: f.pc.wrapping_add(4),
                taken: false,
                done_at: None,
                mem: None,
                traced: f.traced,
                stage: f.stage,
            });
            self.renamed.push(seq);
            self.report.renamed += 1;
        }
    }

    // ---- decode ------------------------------------------------------

    fn decode_stage(&mut self) {
        let now = self.now;
        if !self.decoded.is_empty() {
            return;
        }
        let Some(group) = self.fetch_group.as_mut() else {
            return;
        };
        if group.ready_at > now {
            return;
        }
        for _ in 0..self.cfg.decode_width {
            let Some(mut f) = group.insts.pop_front() else {
                break;
            };
            trace_stage(
                &mut self.tracer,
                now,
                f.uid,
                f.traced,
                &mut f.stage,
                Stage::Decode,
            );
            self.decoded.push_back(f);
        }
        if group.insts.is_empty() {
            self.fetch_group = None;
        }
    }

    // ---- fetch -------------------------------------------------------

    fn fetch(&mut self) {
        let now = self.now;
        if self.fetch_group.is_some() || self.fetch_halted || now < self.fetch_resume_at {
            return;
        }
        let traced = self
            .tracer
            .as_ref()
            .is_some_and(|t| t.window.is_none_or(|(a, b)| (a..b).contains(&now)));

        // Sequential candidates up to the first fetch fault.
        let mut words: Vec<(u32, Result<u32, IsaError>)> = Vec::new();
        for slot in 0..self.cfg.fetch_width as u32 {
            let pc = self.fetch_pc.wrapping_add(4 * slot);
            let w = self.mem.fetch(pc);
            let fault = w.is_err();
            if fault && slot > 0 {
                break;
            }
            words.push((pc, w));
            if fault {
                break;
            }
        }

        let mut ready = now + 1;
        let mut lines: Vec<(u32, u64)> = Vec::new();
        if words[0].1.is_ok() {
            let uid = self.next_uid;
            let mut keep = words.len();
            for (k, (pc, _)) in words.iter().enumerate() {
                let line = self.icache.line_addr(*pc);
                if lines.iter().any(|(l, _)| *l == line) {
                    continue;
                }
                let res = self.icache.access(line, AccessKind::Fetch, now, uid);
                match res.ready_cycle {
                    Some(r) => lines.push((line, r)),
                    None => {
                        keep = k;
                        break;
                    }
                }
            }
            if keep == 0 {
                self.report.stall = Some(StallReason::IcacheMshrFull);
                return;
            }
            words.truncate(keep);
        }

        let mut insts = VecDeque::new();
        let mut next = self.fetch_pc;
        for (pc, w) in words {
            let (raw, inst) = match w {
                Ok(raw) => (raw, decode(raw)),
                Err(e) => (0, Err(e)),
            };
            if inst.is_ok() {
                let line = self.icache.line_addr(pc);
                if let Some(&(_, r)) = lines.iter().find(|(l, _)| *l == line) {
                    ready = ready.max(r);
                }
            }
            let class = inst.as_ref().ok().map(|i| i.class());
            let (checkpoint, pred) = match class {
                Some(InstClass::Branch) => {
                    let p = self.predictor.predict(pc);
                    (p.checkpoint, Some(p))
                }
                Some(InstClass::Jal | InstClass::Jalr) => {
                    let p = self.predictor.predict_jump(pc);
                    (p.checkpoint, Some(p))
                }
                _ => (self.predictor.checkpoint(), None),
            };
            let predicted_next = pred.map_or(pc.wrapping_add(4), |p| p.next_pc(pc));
            let uid = self.next_uid;
            self.next_uid += 1;
            let mut f = FrontInst {
                uid,
                pc,
                raw,
                inst,
                checkpoint,
                pred,
                predicted_next,
                traced,
                stage: None,
            };
            if let (Some(t), true) = (self.tracer.as_mut(), traced) {
                let text = match &f.inst {
                    Ok(i) => format!("{pc:08x}: {i}"),
                    Err(e) => format!("{pc:08x}: <{e}>"),
                };
                t.emit(now, KanataEvent::InstBirth { id: uid });
                t.emit(now, KanataEvent::Label { id: uid, text });
            }
            trace_stage(
                &mut self.tracer,
                now,
                uid,
                traced,
                &mut f.stage,
                Stage::Fetch,
            );
            let stop_fetch = match &f.inst {
                Err(_) => true,
                Ok(i) => i.op == Op::Ecall,
            };
            next = predicted_next;
            insts.push_back(f);
            self.report.fetched += 1;
            if stop_fetch {
                self.fetch_halted = true;
                break;
            }
            if predicted_next != pc.wrapping_add(4) {
                break;
            }
        }
        self.fetch_pc = next;
        self.fetch_group = Some(FetchGroup {
            insts,
            ready_at: ready,
        });
    }

    // ---- squash ------------------------------------------------------

    /// Removes every instruction with sequence number `>= from` plus the
    /// whole front end, and redirects fetch to `redirect` next cycle.
    fn squash(&mut self, from: u64, redirect: u32) {
        let now = self.now;
        let mut front: Vec<FrontInst> = self.decoded.drain(..).collect();
        if let Some(g) = self.fetch_group.take() {
            front.extend(g.insts);
        }
        for mut f in front.into_iter().rev() {
            self.counters.squashed += 1;
            if f.pred.is_some() {
                self.counters.squashed_branch_predictions += 1;
            }
            trace_retire(
                &mut self.tracer,
                now,
                f.uid,
                f.traced,
                &mut f.stage,
                0,
                RetireKind::Flush,
            );
        }
        while self.rob.back().is_some_and(|e| e.seq >= from) {
            let mut e = self.rob.pop_back().expect("back");
            if let (Some(a), Some(d), Some(o)) = (e.dest_arch, e.dest, e.old_dest) {
                self.rename.rollback(a, d, o);
            }
            self.counters.squashed += 1;
            if e.pred.is_some() {
                self.counters.squashed_branch_predictions += 1;
            }
            trace_retire(
                &mut self.tracer,
                now,
                e.uid,
                e.traced,
                &mut e.stage,
                e.seq,
                RetireKind::Flush,
            );
        }
        self.iq.retain(|q| q.seq < from);
        self.flights.retain(|f| f.seq < from);
        self.wb_queue.retain(|&(_, s)| s < from);
        self.renamed.retain(|&s| s < from);
        while self.lq.back().is_some_and(|l| l.seq >= from) {
            self.lq.pop_back();
        }
        while self.sq.back().is_some_and(|s| s.seq >= from) {
            self.sq.pop_back();
        }
        self.fetch_pc = redirect;
        self.fetch_halted = false;
        self.fetch_resume_at = now + 1;
        self.report.flushed = true;
    }

    // ---- bookkeeping -------------------------------------------------

    fn fill_report(&mut self) {
        let r = &mut self.report;
        r.rob = self.rob.len();
        r.iq = self.iq.len();
        r.lq = self.lq.len();
        r.sq = self.sq.len();
        r.free_regs = self.rename.free_count();
        r.inflight_regs = self.rob.iter().filter(|e| e.dest.is_some()).count();
        r.committed_total = self.counters.committed;
    }

    fn check_invariants(&self) -> Result<(), SimError> {
        let r = &self.report;
        let c = &self.cfg;
        let fail = |what: String| {
            Err(SimError::InvariantViolated {
                cycle: self.now,
                what,
            })
        };
        if r.rob > c.rob_entries {
            return fail(format!("ROB holds {} > {}", r.rob, c.rob_entries));
        }
        if r.lq > c.lq_entries || r.sq > c.sq_entries {
            return fail(format!("LQ/SQ hold {}/{}", r.lq, r.sq));
        }
        if r.iq > c.iq_entries {
            return fail(format!("IQ holds {} > {}", r.iq, c.iq_entries));
        }
        if r.issued > c.issue_width || r.committed > c.commit_width {
            return fail(format!("issued {} committed {}", r.issued, r.committed));
        }
        if r.written_back > c.writeback_width || r.fetched > c.fetch_width {
            return fail(format!(
                "wrote back {} fetched {}",
                r.written_back, r.fetched
            ));
        }
        if r.free_regs + r.inflight_regs + 32 != c.phys_regs {
            return fail(format!(
                "register conservation: {} free + {} in flight + 32 != {}",
                r.free_regs, r.inflight_regs, c.phys_regs
            ));
        }
        let mut seen = vec![false; c.phys_regs];
        let owned = self
            .rename
            .retired_map()
            .iter()
            .copied()
            .chain(self.rename.free_list())
            .chain(self.rob.iter().filter_map(|e| e.dest));
        for p in owned {
            if std::mem::replace(&mut seen[usize::from(p)], true) {
                return fail(format!("physical register {p} owned twice"));
            }
        }
        if !self
            .rob
            .iter()
            .zip(self.rob.iter().skip(1))
            .all(|(a, b)| a.seq < b.seq)
        {
            return fail("ROB out of order".into());
        }
        Ok(())
    }
}

fn compare(
    seq: u64,
    timing: &CommitRecord,
    oracle: Result<CommitRecord, IsaError>,
) -> Result<(), SimError> {
    let diverge = |field: &'static str, t: String, o: String| {
        Err(SimError::CoSimDivergence {
            seq,
            pc: timing.pc,
            field,
            timing: t,
            oracle: o,
        })
    };
    let o = match oracle {
        Ok(o) => o,
        Err(e) => return diverge("fault", "no fault".into(), e.to_string()),
    };
    if timing.pc != o.pc {
        return diverge(
            "pc",
            format!("{:#010x}", timing.pc),
            format!("{:#010x}", o.pc),
        );
    }
    if timing.raw != o.raw {
        return diverge(
            "raw",
            format!("{:#010x}", timing.raw),
            format!("{:#010x}", o.raw),
        );
    }
    if timing.dest != o.dest {
        return diverge(
            "dest",
            format!("{:?}", timing.dest),
            format!("{:?}", o.dest),
        );
    }
    if timing.mem != o.mem {
        return diverge("mem", format!("{:?}", timing.mem), format!("{:?}", o.mem));
    }
    if timing.next_pc != o.next_pc {
        return diverge(
            "next-pc",
            format!("{:#010x}", timing.next_pc),
            format!("{:#010x}", o.next_pc),
        );
    }
    if timing.syscall != o.syscall {
        return diverge(
            "syscall",
            format!("{:?}", timing.syscall),
            format!("{:?}", o.syscall),
        );
    }
    Ok(())
}
