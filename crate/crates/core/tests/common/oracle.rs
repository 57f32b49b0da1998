//! Brute-force reference models shared by the oracle tests and the
//! acceptance report.

use std::collections::{HashMap, VecDeque};

use ooosim_core::cache::{AccessKind, AccessOutcome, Cache, CacheConfig, TreePlru};
use ooosim_core::predictor::{
    BranchPredictor, ControlKind, PredictorCheckpoint, PredictorConfig, PredictorError,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// 2048 counters starting at 1, an 11-bit history shifted left with the
/// newest outcome in bit 0, and a 1024-entry direct-mapped BTB holding the
/// full branch address.
struct Gshare {
    pht: Vec<u8>,
    ghr: u32,
    btb: HashMap<u32, (u32, u32)>,
}

impl Gshare {
    fn new() -> Self {
        Self {
            pht: vec![1; 2048],
            ghr: 0,
            btb: HashMap::new(),
        }
    }

    fn slot(pc: u32, ghr: u32) -> usize {
        (((pc / 4) ^ ghr) % 2048) as usize
    }

    fn push(ghr: u32, bit: bool) -> u32 {
        (ghr * 2 + u32::from(bit)) % 2048
    }

    fn target(&self, pc: u32) -> Option<u32> {
        match self.btb.get(&((pc / 4) % 1024)) {
            Some(&(owner, t)) if owner == pc => Some(t),
            _ => None,
        }
    }

    fn predict(&mut self, pc: u32) -> (bool, Option<u32>, u32) {
        let ghr = self.ghr;
        let taken = self.pht[Self::slot(pc, ghr)] >= 2;
        self.ghr = Self::push(ghr, taken);
        (taken, self.target(pc), ghr)
    }

    fn commit(&mut self, pc: u32, ghr: u32, conditional: bool, taken: bool, target: u32) {
        if conditional {
            let c = &mut self.pht[Self::slot(pc, ghr)];
            *c = if taken {
                (*c + 1).min(3)
            } else {
                c.saturating_sub(1)
            };
        }
        if taken {
            self.btb.insert((pc / 4) % 1024, (pc, target));
        }
    }
}

struct InFlight {
    pc: u32,
    cp: PredictorCheckpoint,
    model_ghr: u32,
    conditional: bool,
    predicted: bool,
    actual: bool,
    target: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct PredictorRun {
    pub events: u64,
    pub predictions: u64,
    pub mispredicts: u64,
}

/// Drives the predictor and the model with the same random stream of
/// predictions, in-order commits and mispredict recoveries, comparing
/// direction, target and history after every event.
pub fn predictor_vs_model(events: u64, seed: u64) -> Result<PredictorRun, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pcs: Vec<u32> = (0..3000)
        .map(|_| 0x8000_0000 + 4 * rng.gen_range(0..1 << 16))
        .collect();
    let bias: Vec<f64> = pcs.iter().map(|_| rng.gen()).collect();
    let targets: Vec<u32> = pcs
        .iter()
        .map(|_| 0x8000_0000 + 4 * rng.gen_range(0..1 << 16))
        .collect();
    let mut bp = BranchPredictor::new(&PredictorConfig::default());
    let mut model = Gshare::new();
    let mut window: VecDeque<InFlight> = VecDeque::new();
    let mut run = PredictorRun {
        events: 0,
        predictions: 0,
        mispredicts: 0,
    };

    while run.events < events {
        let e = run.events;
        if window.len() < 12 && rng.gen_bool(0.55) {
            let k = rng.gen_range(0..pcs.len());
            let pc = pcs[k];
            let conditional = rng.gen_bool(0.9);
            let (p, (taken, target, ghr)) = if conditional {
                let m = model.predict(pc);
                (bp.predict(pc), m)
            } else {
                let ghr = model.ghr;
                (bp.predict_jump(pc), (true, model.target(pc), ghr))
            };
            ensure!(
                p.taken == taken,
                "event {e}: direction {} vs {taken}",
                p.taken
            );
            ensure!(
                p.target == target,
                "event {e}: target {:?} vs {target:?}",
                p.target
            );
            ensure!(p.checkpoint.ghr() == ghr, "event {e}: checkpoint history");
            ensure!(
                bp.ghr() == model.ghr,
                "event {e}: history {:#x} vs {:#x}",
                bp.ghr(),
                model.ghr
            );
            let actual = !conditional || rng.gen_bool(bias[k]);
            window.push_back(InFlight {
                pc,
                cp: p.checkpoint,
                model_ghr: ghr,
                conditional,
                predicted: p.taken,
                actual,
                target: targets[k],
            });
            run.predictions += 1;
        } else if let Some(b) = window.pop_front() {
            if b.conditional && b.predicted != b.actual {
                run.mispredicts += 1;
                bp.recover(&b.cp, b.actual).map_err(|x| x.to_string())?;
                model.ghr = Gshare::push(b.model_ghr, b.actual);
                for young in window.drain(..) {
                    ensure!(
                        bp.recover(&young.cp, true)
                            == Err(PredictorError::StaleCheckpoint(young.cp.tag())),
                        "event {e}: squashed checkpoint still usable"
                    );
                }
            }
            let kind = if b.conditional {
                ControlKind::Conditional
            } else {
                ControlKind::Jump
            };
            bp.update_commit(b.pc, &b.cp, kind, b.actual, b.target);
            model.commit(b.pc, b.model_ghr, b.conditional, b.actual, b.target);
            ensure!(bp.ghr() == model.ghr, "event {e}: history after commit");
        }
        run.events += 1;
    }
    for i in 0..2048 {
        ensure!(
            bp.gshare().counter(i) == model.pht[i],
            "counter {i} differs at the end"
        );
    }
    Ok(run)
}

/// Least recently used way of a 2-way set, from its full use history.
fn lru_victim(history: &[usize]) -> usize {
    let mut last = [None, None];
    for (t, &w) in history.iter().enumerate() {
        last[w] = Some(t);
    }
    match last {
        [None, _] => 0,
        [_, None] => 1,
        [Some(a), Some(b)] => usize::from(a > b),
    }
}

/// Checks the tree-PLRU victim against true LRU after every touch of
/// `sequences` random 2-way use sequences.
pub fn plru_vs_lru(sequences: usize, seed: u64) -> Result<u64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for s in 0..sequences {
        let len = rng.gen_range(1..40);
        let history: Vec<usize> = (0..len).map(|_| rng.gen_range(0..2)).collect();
        let mut plru = TreePlru::new();
        for (i, &w) in history.iter().enumerate() {
            plru.touch(w, 2);
            ensure!(
                plru.victim(2) == lru_victim(&history[..=i]),
                "sequence {s} {:?}: victim differs",
                &history[..=i]
            );
            checks += 1;
        }
    }
    Ok(checks)
}

/// Set-associative cache with true LRU and write-allocate, as a list of
/// line numbers per set from most to least recently used.
struct BruteCache {
    sets: Vec<Vec<u32>>,
    ways: usize,
    line: u32,
}

impl BruteCache {
    fn new(c: &CacheConfig) -> Self {
        Self {
            sets: vec![Vec::new(); c.sets() as usize],
            ways: c.associativity as usize,
            line: c.line_bytes,
        }
    }

    fn access(&mut self, addr: u32) -> bool {
        let line = addr / self.line;
        let n = self.sets.len();
        let set = &mut self.sets[(line as usize) % n];
        let hit = match set.iter().position(|&l| l == line) {
            Some(i) => {
                set.remove(i);
                true
            }
            None => {
                set.truncate(self.ways - 1);
                false
            }
        };
        set.insert(0, line);
        hit
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CacheRun {
    pub hits: u64,
    pub misses: u64,
}

/// Issues `references` serialized loads and stores, waiting out each miss,
/// and compares hit/miss and ready cycles with the brute-force model.
pub fn cache_vs_brute(cfg: CacheConfig, references: u64, seed: u64) -> Result<CacheRun, String> {
    let mut cache = Cache::new(cfg).map_err(|e| e.to_string())?;
    let mut brute = BruteCache::new(&cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut now = 0u64;
    let mut recent: VecDeque<u32> = VecDeque::new();
    let span = cfg.size_bytes / 4 * 4;
    let mut run = CacheRun { hits: 0, misses: 0 };
    for id in 0..references {
        let addr = if !recent.is_empty() && rng.gen_bool(0.6) {
            recent[rng.gen_range(0..recent.len())] + 4 * rng.gen_range(0..cfg.line_bytes / 4)
        } else {
            0x8000_0000 + 4 * rng.gen_range(0..span)
        };
        recent.push_back(addr & !(cfg.line_bytes - 1));
        if recent.len() > 64 {
            recent.pop_front();
        }
        let kind = if rng.gen_bool(0.3) {
            AccessKind::Store
        } else {
            AccessKind::Load
        };
        let r = cache.access(addr, kind, now, id);
        let expect_hit = brute.access(addr);
        match r.outcome {
            AccessOutcome::Hit => {
                ensure!(
                    expect_hit,
                    "reference {id} at {addr:#x}: hit, model says miss"
                );
                let want = now + cfg.hit_latency;
                ensure!(
                    r.ready_cycle == Some(want),
                    "hit ready {:?}, want {want}",
                    r.ready_cycle
                );
                run.hits += 1;
            }
            AccessOutcome::MissAllocated => {
                ensure!(
                    !expect_hit,
                    "reference {id} at {addr:#x}: miss, model says hit"
                );
                let want = now + cfg.miss_latency;
                ensure!(
                    r.ready_cycle == Some(want),
                    "miss ready {:?}, want {want}",
                    r.ready_cycle
                );
                ensure!(cache.tick(want - 1).is_empty(), "line filled early");
                now = want;
                let fills = cache.tick(now);
                ensure!(
                    fills.len() == 1 && fills[0].requesters == vec![id],
                    "reference {id}: fill {fills:?}"
                );
                run.misses += 1;
            }
            other => return Err(format!("reference {id}: serialized access gave {other:?}")),
        }
        now += 1;
    }
    ensure!(cache.stats().accesses == references, "access count");
    ensure!(cache.stats().misses == run.misses, "miss count");
    Ok(run)
}
