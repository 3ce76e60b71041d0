use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::{mpsc, Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::Rng as _;
use serde::Serialize;

use crate::embedding::{EmbeddingMatrix, SharedRows};
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::sampling::{fill_pool, PartNeighbors, SamplePool};
use crate::trainer::{lr_at, TrainConfig};

use super::dag::{build_dag, Task, TaskDag};
use super::{kernel_order, PartitionPlan};

const POOL_STREAM: u64 = 0x706f6f6c;
const KERNEL_STREAM: u64 = 0x6b65726e;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExecOptions {
    pub workers: usize,
    /// Randomizes the pick among ready tasks and injects short pauses.
    pub jitter: Option<u64>,
    pub record_trace: bool,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            jitter: None,
            record_trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TracePhase {
    Start,
    End,
}

/// One line of the execution log; `seq` is a global order over all events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub task: usize,
    pub phase: TracePhase,
}

struct Schedule {
    ready: BinaryHeap<Reverse<usize>>,
    start_wait: Vec<usize>,
    finish_wait: Vec<usize>,
    finished: usize,
    running: usize,
    error: Option<Error>,
    trace: Vec<TraceEvent>,
    jitter: Option<Rng>,
}

impl Schedule {
    fn log(&mut self, task: usize, phase: TracePhase) {
        let seq = self.trace.len() as u64;
        self.trace.push(TraceEvent { seq, task, phase });
    }

    fn release(&mut self, t: usize) {
        if self.start_wait[t] == 0 && self.finish_wait[t] == 0 {
            self.ready.push(Reverse(t));
        }
    }

    fn pick(&mut self) -> Option<usize> {
        match self.jitter.as_mut() {
            Some(rng) if self.ready.len() > 1 => {
                let mut all = std::mem::take(&mut self.ready).into_vec();
                let at = rng.gen_range(0..all.len());
                let Reverse(t) = all.swap_remove(at);
                self.ready = all.into();
                Some(t)
            }
            _ => self.ready.pop().map(|Reverse(t)| t),
        }
    }
}

/// Runs every task of `dag` with a team of workers pulling from a shared
/// ready queue. Returns the event log (empty unless requested).
pub fn execute<F>(dag: &TaskDag, opts: &ExecOptions, run: F) -> Result<Vec<TraceEvent>>
where
    F: Fn(usize) -> Result<()> + Sync,
{
    let n = dag.len();
    let mut start_succ = vec![Vec::new(); n];
    let mut finish_succ = vec![Vec::new(); n];
    for t in 0..n {
        for &p in &dag.after_start[t] {
            start_succ[p].push(t);
        }
        for &p in &dag.after_finish[t] {
            finish_succ[p].push(t);
        }
    }
    let mut sched = Schedule {
        ready: BinaryHeap::new(),
        start_wait: dag.after_start.iter().map(Vec::len).collect(),
        finish_wait: dag.after_finish.iter().map(Vec::len).collect(),
        finished: 0,
        running: 0,
        error: None,
        trace: Vec::new(),
        jitter: opts.jitter.map(|s| rng_for(s, 0)),
    };
    for t in 0..n {
        sched.release(t);
    }
    let state = Mutex::new(sched);
    let wake = Condvar::new();

    let worker = |id: usize| {
        let mut pause = opts.jitter.map(|s| rng_for(s, 1 + id as u64));
        loop {
            let task = {
                let mut s = state.lock().unwrap();
                loop {
                    if s.error.is_some() || s.finished == n {
                        return;
                    }
                    if let Some(t) = s.pick() {
                        s.running += 1;
                        if opts.record_trace {
                            s.log(t, TracePhase::Start);
                        }
                        for &x in &start_succ[t] {
                            s.start_wait[x] -= 1;
                            s.release(x);
                        }
                        wake.notify_all();
                        break t;
                    }
                    if s.running == 0 {
                        s.error = Some(Error::Internal(format!(
                            "task graph stalled with {} of {n} tasks finished",
                            s.finished
                        )));
                        wake.notify_all();
                        return;
                    }
                    s = wake.wait(s).unwrap();
                }
            };
            if let Some(rng) = pause.as_mut() {
                match rng.gen_range(0..4) {
                    0 => std::thread::yield_now(),
                    1 => std::thread::sleep(Duration::from_micros(rng.gen_range(1..20))),
                    _ => {}
                }
            }
            let outcome = run(task);
            let mut s = state.lock().unwrap();
            s.running -= 1;
            s.finished += 1;
            if opts.record_trace {
                s.log(task, TracePhase::End);
            }
            if let Err(e) = outcome {
                s.error.get_or_insert(e);
            }
            for &x in &finish_succ[task] {
                s.finish_wait[x] -= 1;
                s.release(x);
            }
            wake.notify_all();
        }
    };

    let workers = opts.workers.max(1);
    if workers == 1 {
        worker(0);
    } else {
        std::thread::scope(|scope| {
            for id in 0..workers {
                let worker = &worker;
                scope.spawn(move || worker(id));
            }
        });
    }
    let sched = state.into_inner().unwrap();
    match sched.error {
        Some(e) => Err(e),
        None => Ok(sched.trace),
    }
}

/// Checks an event log against the graph: every task ran once, every
/// dependency was honored, and no bin changed while a kernel was using it.
pub fn verify_trace(dag: &TaskDag, trace: &[TraceEvent]) -> Result<()> {
    let n = dag.len();
    let mut start = vec![None; n];
    let mut end = vec![None; n];
    for ev in trace {
        let slot = match ev.phase {
            TracePhase::Start => &mut start[ev.task],
            TracePhase::End => &mut end[ev.task],
        };
        if slot.replace(ev.seq).is_some() {
            return Err(Error::Internal(format!("task {} logged twice", ev.task)));
        }
    }
    for t in 0..n {
        let (Some(s), Some(e)) = (start[t], end[t]) else {
            return Err(Error::Internal(format!("task {t} never completed")));
        };
        if e < s {
            return Err(Error::Internal(format!("task {t} ended before it started")));
        }
        for &p in &dag.after_start[t] {
            if start[p].unwrap() > s {
                return Err(Error::Internal(format!("task {t} started before {p}")));
            }
        }
        for &p in &dag.after_finish[t] {
            if end[p].unwrap() > s {
                return Err(Error::Internal(format!("task {t} started before {p} finished")));
            }
        }
    }

    let bins = dag
        .tasks
        .iter()
        .filter_map(|t| match t {
            Task::Swap { bin, .. } => Some(bin + 1),
            _ => None,
        })
        .max()
        .unwrap_or(0);
    let mut content: Vec<Option<u32>> = vec![None; bins];
    let mut swapping = vec![false; bins];
    let mut users = vec![0usize; bins];
    let mut ordered = trace.to_vec();
    ordered.sort_by_key(|e| e.seq);
    for ev in ordered {
        match (dag.tasks[ev.task], ev.phase) {
            (Task::Kernel { a, b, kernel }, TracePhase::Start) => {
                for r in [a, b] {
                    if swapping[r.bin] || content[r.bin] != Some(r.part) {
                        return Err(Error::Internal(format!(
                            "kernel {kernel} started without part {} in bin {}",
                            r.part, r.bin
                        )));
                    }
                    users[r.bin] += 1;
                }
            }
            (Task::Kernel { a, b, .. }, TracePhase::End) => {
                users[a.bin] -= 1;
                users[b.bin] -= 1;
            }
            (Task::Swap { bin, .. }, TracePhase::Start) => {
                if users[bin] > 0 || swapping[bin] {
                    return Err(Error::Internal(format!("bin {bin} swapped while in use")));
                }
                swapping[bin] = true;
            }
            (Task::Swap { bin, load, .. }, TracePhase::End) => {
                swapping[bin] = false;
                content[bin] = load;
            }
            (Task::PoolCopy { .. }, _) => {}
        }
    }
    Ok(())
}

/// Random stream of the pool for kernel `j` of `round`.
pub fn pool_rng(seed: u64, round: usize, j: usize) -> Rng {
    rng_for(derive_seed(derive_seed(seed, POOL_STREAM), round as u64), j as u64)
}

/// Random stream of the negatives drawn by kernel `j` of `round`.
pub fn kernel_rng(seed: u64, round: usize, j: usize) -> Rng {
    rng_for(derive_seed(derive_seed(seed, KERNEL_STREAM), round as u64), j as u64)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct PartitionedReport {
    pub parts: usize,
    pub rounds_planned: usize,
    pub rounds_run: usize,
    pub positive_updates: u64,
    pub budget: u64,
    pub loads_per_round: usize,
    pub wall: Duration,
    #[serde(skip)]
    pub traces: Vec<Vec<TraceEvent>>,
}

struct Arena {
    bins: Vec<Box<[AtomicU32]>>,
    pools: Mutex<Vec<Option<SamplePool>>>,
    pool_slot: Mutex<Vec<usize>>,
}

/// Trains `m` on `g` for an `e_i`-epoch budget, part pair by part pair.
///
/// Runs up to `ceil(e_i / B)` rounds of the inside-out kernel order; a
/// shared counter stops all kernels once `e_i·|V|` positive updates were
/// made. `stream` separates the random streams of different levels.
pub fn embed_partitioned(
    g: &Graph,
    m: &mut EmbeddingMatrix,
    cfg: &TrainConfig,
    e_i: usize,
    plan: &PartitionPlan,
    opts: &ExecOptions,
    stream: u64,
) -> Result<PartitionedReport> {
    cfg.validate()?;
    let n = g.vertex_count();
    let d = cfg.dim;
    if m.rows() != n || m.dim() != d || plan.part_of.len() != n {
        return Err(Error::Index("matrix, graph and partition disagree on size".into()));
    }
    let started = Instant::now();
    let seed = derive_seed(cfg.seed, stream);
    let budget = e_i as u64 * n as u64;
    let rounds = e_i.div_ceil(plan.pool_b());
    let order = kernel_order(plan.part_count());
    let dag = build_dag(&order, plan)?;
    let nbrs = PartNeighbors::new(g, plan);

    let host: Vec<Mutex<Vec<f32>>> = (0..plan.part_count() as u32)
        .map(|p| {
            let mut rows = Vec::with_capacity(plan.part(p).len() * d);
            for &v in plan.part(p) {
                rows.extend_from_slice(m.row(v as usize));
            }
            Mutex::new(rows)
        })
        .collect();
    let bin_len = plan.largest_part() * d;
    let arena = Arena {
        bins: (0..plan.sub_bins())
            .map(|_| (0..bin_len).map(|_| AtomicU32::new(0)).collect())
            .collect(),
        pools: Mutex::new(vec![None; plan.pool_bins()]),
        pool_slot: Mutex::new(vec![usize::MAX; order.len()]),
    };
    let counter = AtomicU64::new(0);
    let mut report = PartitionedReport {
        parts: plan.part_count(),
        rounds_planned: rounds,
        budget,
        loads_per_round: dag.load_count(),
        ..Default::default()
    };

    for round in 0..rounds {
        if counter.load(Ordering::Relaxed) >= budget {
            break;
        }
        let lr = lr_at(cfg.learning_rate, round, rounds);
        let trace = std::thread::scope(|scope| {
            let (tx, rx) = mpsc::sync_channel::<SamplePool>(plan.pool_bins());
            let order = &order;
            let nbrs = &nbrs;
            scope.spawn(move || {
                for (j, &pair) in order.iter().enumerate() {
                    let pool = fill_pool(nbrs, plan, pair, &mut pool_rng(seed, round, j));
                    if tx.send(pool).is_err() {
                        return;
                    }
                }
            });
            let rx = Mutex::new(rx);
            let run = |t: usize| -> Result<()> {
                match dag.tasks[t] {
                    Task::Swap { bin, out, load } => {
                        let cells = &arena.bins[bin];
                        if let Some(p) = out {
                            let mut rows = host[p as usize].lock().unwrap();
                            for (x, c) in rows.iter_mut().zip(cells.iter()) {
                                *x = f32::from_bits(c.load(Ordering::Relaxed));
                            }
                        }
                        if let Some(p) = load {
                            let rows = host[p as usize].lock().unwrap();
                            for (x, c) in rows.iter().zip(cells.iter()) {
                                c.store(x.to_bits(), Ordering::Relaxed);
                            }
                        }
                        Ok(())
                    }
                    Task::PoolCopy { kernel } => {
                        let pool = rx
                            .lock()
                            .unwrap()
                            .recv()
                            .map_err(|_| Error::Internal("sample producer stopped early".into()))?;
                        let mut pools = arena.pools.lock().unwrap();
                        let slot = pools
                            .iter()
                            .position(Option::is_none)
                            .ok_or_else(|| Error::Internal("no free pool bin".into()))?;
                        pools[slot] = Some(pool);
                        arena.pool_slot.lock().unwrap()[kernel] = slot;
                        Ok(())
                    }
                    Task::Kernel { kernel, a, b } => {
                        let slot = arena.pool_slot.lock().unwrap()[kernel];
                        let pool = arena.pools.lock().unwrap()[slot]
                            .take()
                            .ok_or_else(|| Error::Internal(format!("pool of kernel {kernel} missing")))?;
                        let len_a = plan.part(a.part).len();
                        let len_b = plan.part(b.part).len();
                        let rows_a = SharedRows::from_cells(&arena.bins[a.bin][..len_a * d], d);
                        let rows_b = SharedRows::from_cells(&arena.bins[b.bin][..len_b * d], d);
                        let mut rng = kernel_rng(seed, round, kernel);
                        run_kernel(&pool, plan, (a.part, rows_a), (b.part, rows_b), cfg.negatives, lr, &counter, budget, &mut rng);
                        Ok(())
                    }
                }
            };
            let result = execute(&dag, opts, run);
            drop(rx);
            result
        })?;
        report.rounds_run += 1;
        if opts.record_trace {
            report.traces.push(trace);
        }
    }

    for p in 0..plan.part_count() as u32 {
        let rows = host[p as usize].lock().unwrap();
        for (i, &v) in plan.part(p).iter().enumerate() {
            m.row_mut(v as usize).copy_from_slice(&rows[i * d..(i + 1) * d]);
        }
    }
    report.positive_updates = counter.load(Ordering::Relaxed).min(budget);
    report.wall = started.elapsed();
    if !m.is_finite() {
        return Err(Error::Numeric("embedding diverged to non-finite values".into()));
    }
    Ok(report)
}

/// Applies one pool: per entry a positive update against the opposite part
/// and `negatives` updates against uniform rows of that part.
#[allow(clippy::too_many_arguments)]
fn run_kernel(
    pool: &SamplePool,
    plan: &PartitionPlan,
    (part_a, rows_a): (u32, SharedRows<'_>),
    (_, rows_b): (u32, SharedRows<'_>),
    negatives: usize,
    lr: f32,
    counter: &AtomicU64,
    budget: u64,
    rng: &mut Rng,
) {
    let mut v = vec![0f32; rows_a.dim()];
    // the source row stays staged across the consecutive entries of one source
    let mut staged: Option<(SharedRows<'_>, usize, VertexId)> = None;
    for &(src, pos) in &pool.pairs {
        if counter.fetch_add(1, Ordering::Relaxed) >= budget {
            break;
        }
        let (own, other) = if plan.part_of(src) == part_a {
            (rows_a, rows_b)
        } else {
            (rows_b, rows_a)
        };
        if staged.map_or(true, |(_, _, cur)| cur != src) {
            if let Some((rows, row, _)) = staged {
                rows.store_row(row, &v);
            }
            let s = plan.local_index(src);
            own.load_row(s, &mut v);
            staged = Some((own, s, src));
        }
        other.update_against(&mut v, plan.local_index(pos), 1.0, lr);
        for _ in 0..negatives {
            let neg = rng.gen_range(0..other.rows());
            other.update_against(&mut v, neg, 0.0, lr);
        }
    }
    if let Some((rows, row, _)) = staged {
        rows.store_row(row, &v);
    }
}
