//! Multi-edge-collapse coarsening.
//!
//! Vertices are visited one by one (highest degree first with the ordering
//! heuristic). An unmarked vertex opens a cluster and pulls its unmarked
//! neighbors into it. With the hub² restriction a neighbor is refused when
//! both endpoints have degree above the level density `δ = |E| / |V|`.
//! Each cluster becomes one super vertex of the next level; self-loops and
//! parallel edges created by the collapse are removed.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};

const UNMAPPED: u32 = u32::MAX;
const BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Heuristics {
    /// Input order, no degree guard.
    Naive,
    /// Descending degree order.
    Ordering,
    /// Descending degree order plus the hub² restriction.
    OrderingHub2,
}

impl fmt::Display for Heuristics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Heuristics::Naive => "naive",
            Heuristics::Ordering => "ordering",
            Heuristics::OrderingHub2 => "ordering+hub2",
        })
    }
}

impl FromStr for Heuristics {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "naive" => Ok(Heuristics::Naive),
            "ordering" => Ok(Heuristics::Ordering),
            "ordering+hub2" | "hub2" => Ok(Heuristics::OrderingHub2),
            other => Err(Error::Config(format!("unknown heuristics {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseningConfig {
    /// Stop once a level has at most this many vertices.
    pub threshold: usize,
    /// Stop once a level keeps more than this fraction of its parent's vertices.
    pub shrink_limit: f64,
    pub heuristics: Heuristics,
    pub thread_count: usize,
    /// Optional cap on the number of levels `D` (including the input graph).
    pub max_levels: Option<usize>,
}

impl Default for CoarseningConfig {
    fn default() -> Self {
        Self {
            threshold: 100,
            shrink_limit: 0.80,
            heuristics: Heuristics::OrderingHub2,
            thread_count: 1,
            max_levels: None,
        }
    }
}

impl CoarseningConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.shrink_limit > 0.0 && self.shrink_limit < 1.0) {
            return Err(Error::Config(format!(
                "shrink limit must lie in (0, 1), got {}",
                self.shrink_limit
            )));
        }
        if self.threshold < 1 {
            return Err(Error::Config("coarsening threshold must be >= 1".into()));
        }
        if self.thread_count < 1 {
            return Err(Error::Config("thread count must be >= 1".into()));
        }
        if self.max_levels == Some(0) {
            return Err(Error::Config("level cap must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fine vertex → super vertex map between two consecutive levels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelMapping {
    map: Vec<VertexId>,
    coarse_count: usize,
}

impl LevelMapping {
    /// Checks range and contiguity (every coarse id is hit).
    pub fn new(map: Vec<VertexId>, coarse_count: usize) -> Result<Self> {
        if coarse_count > map.len() {
            return Err(Error::Index(format!(
                "{coarse_count} super vertices for {} vertices",
                map.len()
            )));
        }
        let mut hit = vec![false; coarse_count];
        for (v, &c) in map.iter().enumerate() {
            if c as usize >= coarse_count {
                return Err(Error::Index(format!("vertex {v} maps to {c} >= {coarse_count}")));
            }
            hit[c as usize] = true;
        }
        if let Some(c) = hit.iter().position(|h| !h) {
            return Err(Error::Index(format!("super vertex {c} has no members")));
        }
        Ok(Self { map, coarse_count })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            map: (0..n as VertexId).collect(),
            coarse_count: n,
        }
    }

    pub fn map(&self) -> &[VertexId] {
        &self.map
    }

    #[inline]
    pub fn get(&self, v: VertexId) -> VertexId {
        self.map[v as usize]
    }

    pub fn coarse_count(&self) -> usize {
        self.coarse_count
    }

    pub fn fine_count(&self) -> usize {
        self.map.len()
    }
}

/// The hierarchy `G_0 … G_{D-1}` and the mappings between consecutive levels.
#[derive(Clone, Debug)]
pub struct CoarseningResult {
    pub levels: Vec<Graph>,
    pub mappings: Vec<LevelMapping>,
    /// Wall time spent producing each level (zero for the input level).
    pub level_times: Vec<Duration>,
}

impl CoarseningResult {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// A one-level hierarchy holding only `g`.
    pub fn trivial(g: Graph) -> Self {
        Self {
            levels: vec![g],
            mappings: Vec::new(),
            level_times: vec![Duration::ZERO],
        }
    }

    /// Writes `level i |V| |E|` lines to `summary` and each mapping as a
    /// little-endian u32 array `map_<i>.u32` under `dir`.
    pub fn dump<W: Write>(&self, mut summary: W, dir: Option<&Path>) -> Result<()> {
        for (i, g) in self.levels.iter().enumerate() {
            writeln!(summary, "level {i} {} {}", g.vertex_count(), g.edge_slots())?;
        }
        if let Some(dir) = dir {
            std::fs::create_dir_all(dir)?;
            for (i, m) in self.mappings.iter().enumerate() {
                let bytes: Vec<u8> = m.map.iter().flat_map(|x| x.to_le_bytes()).collect();
                std::fs::write(dir.join(format!("map_{i}.u32")), bytes)?;
            }
        }
        Ok(())
    }
}

/// Vertices by descending degree (counting sort); ties by ascending id.
pub fn order_vertices(g: &Graph) -> Vec<VertexId> {
    let n = g.vertex_count();
    let max_degree = (0..n as VertexId).map(|v| g.degree(v)).max().unwrap_or(0);
    let mut count = vec![0usize; max_degree + 2];
    for v in 0..n as VertexId {
        // bucket index grows as degree shrinks
        count[max_degree - g.degree(v) + 1] += 1;
    }
    for i in 1..count.len() {
        count[i] += count[i - 1];
    }
    let mut order = vec![0 as VertexId; n];
    for v in 0..n as VertexId {
        let slot = &mut count[max_degree - g.degree(v)];
        order[*slot] = v;
        *slot += 1;
    }
    order
}

fn processing_order(g: &Graph, heuristics: Heuristics) -> Vec<VertexId> {
    match heuristics {
        Heuristics::Naive => (0..g.vertex_count() as VertexId).collect(),
        Heuristics::Ordering | Heuristics::OrderingHub2 => order_vertices(g),
    }
}

/// Merge guard for pulling `u` into the cluster opened by `v`.
#[derive(Clone, Copy)]
struct Guard {
    active: bool,
    delta: f64,
}

impl Guard {
    fn new(g: &Graph, heuristics: Heuristics) -> Self {
        let delta = if g.vertex_count() == 0 {
            0.0
        } else {
            g.edge_slots() as f64 / g.vertex_count() as f64
        };
        Self {
            active: heuristics == Heuristics::OrderingHub2,
            delta,
        }
    }

    #[inline]
    fn admits(&self, g: &Graph, v: VertexId, u: VertexId) -> bool {
        !self.active || g.degree(v) as f64 <= self.delta || g.degree(u) as f64 <= self.delta
    }
}

/// One sequential collapse pass.
pub fn collapse_level(g: &Graph, cfg: &CoarseningConfig) -> (LevelMapping, Graph) {
    let order = processing_order(g, cfg.heuristics);
    let guard = Guard::new(g, cfg.heuristics);
    let mut map = vec![UNMAPPED; g.vertex_count()];
    let mut clusters = 0u32;
    for &v in &order {
        if map[v as usize] != UNMAPPED {
            continue;
        }
        map[v as usize] = clusters;
        for &u in g.neighbors(v) {
            if guard.admits(g, v, u) && map[u as usize] == UNMAPPED {
                map[u as usize] = clusters;
            }
        }
        clusters += 1;
    }
    let mapping = LevelMapping {
        map,
        coarse_count: clusters as usize,
    };
    let coarse = contract(g, &mapping);
    (mapping, coarse)
}

/// Members of each super vertex, grouped by a counting sort over the mapping.
fn cluster_members(mapping: &LevelMapping) -> (Vec<usize>, Vec<VertexId>) {
    let k = mapping.coarse_count;
    let mut start = vec![0usize; k + 1];
    for &c in &mapping.map {
        start[c as usize + 1] += 1;
    }
    for i in 0..k {
        start[i + 1] += start[i];
    }
    let mut cursor = start.clone();
    let mut members = vec![0 as VertexId; mapping.map.len()];
    for (v, &c) in mapping.map.iter().enumerate() {
        members[cursor[c as usize]] = v as VertexId;
        cursor[c as usize] += 1;
    }
    (start, members)
}

/// Sorted, deduplicated, loop-free coarse neighbor list of super vertex `c`.
fn coarse_neighbors(
    g: &Graph,
    mapping: &LevelMapping,
    members: &[VertexId],
    c: VertexId,
    out: &mut Vec<VertexId>,
) {
    let begin = out.len();
    for &u in members {
        for &w in g.neighbors(u) {
            let cw = mapping.map[w as usize];
            if cw != c {
                out.push(cw);
            }
        }
    }
    let tail = &mut out[begin..];
    tail.sort_unstable();
    let mut keep = begin;
    for i in begin..out.len() {
        if i == begin || out[i] != out[keep - 1] {
            out[keep] = out[i];
            keep += 1;
        }
    }
    out.truncate(keep);
}

/// Builds the next level from a mapping (sequential).
pub fn contract(g: &Graph, mapping: &LevelMapping) -> Graph {
    let (start, members) = cluster_members(mapping);
    let k = mapping.coarse_count;
    let mut offsets = Vec::with_capacity(k + 1);
    offsets.push(0);
    let mut neighbors = Vec::new();
    for c in 0..k {
        coarse_neighbors(
            g,
            mapping,
            &members[start[c]..start[c + 1]],
            c as VertexId,
            &mut neighbors,
        );
        offsets.push(neighbors.len());
    }
    Graph::from_csr_unchecked(offsets, neighbors, g.is_directed())
}

/// Spin-free try-lock table, one flag per mapping entry.
struct EntryLocks(Vec<AtomicBool>);

impl EntryLocks {
    fn new(n: usize) -> Self {
        Self((0..n).map(|_| AtomicBool::new(false)).collect())
    }

    #[inline]
    fn try_lock(&self, v: VertexId) -> bool {
        self.0[v as usize]
            .compare_exchange(false, true, Ordering::Acquire, Ordering::Relaxed)
            .is_ok()
    }

    #[inline]
    fn unlock(&self, v: VertexId) {
        self.0[v as usize].store(false, Ordering::Release);
    }
}

/// Parallel collapse pass.
///
/// Workers take small batches of the processing order. Mapping entries are
/// only written while their lock is held; a candidate whose lock is busy is
/// skipped for this level. Clusters are labelled by their hub id and
/// relabelled to contiguous ids afterwards, in processing order, so a single
/// worker reproduces [`collapse_level`] exactly. The coarse adjacency is
/// built in per-worker buffers and then copied into place.
pub fn collapse_level_parallel(g: &Graph, cfg: &CoarseningConfig) -> (LevelMapping, Graph) {
    let threads = cfg.thread_count.max(1);
    let n = g.vertex_count();
    let order = processing_order(g, cfg.heuristics);
    let guard = Guard::new(g, cfg.heuristics);
    let map: Vec<AtomicU32> = (0..n).map(|_| AtomicU32::new(UNMAPPED)).collect();
    let locks = EntryLocks::new(n);
    let cursor = AtomicUsize::new(0);

    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let begin = cursor.fetch_add(BATCH, Ordering::Relaxed);
                if begin >= n {
                    break;
                }
                for &v in &order[begin..(begin + BATCH).min(n)] {
                    if map[v as usize].load(Ordering::Relaxed) != UNMAPPED || !locks.try_lock(v) {
                        continue;
                    }
                    if map[v as usize].load(Ordering::Relaxed) != UNMAPPED {
                        locks.unlock(v);
                        continue;
                    }
                    map[v as usize].store(v, Ordering::Relaxed);
                    for &u in g.neighbors(v) {
                        if !guard.admits(g, v, u)
                            || map[u as usize].load(Ordering::Relaxed) != UNMAPPED
                            || !locks.try_lock(u)
                        {
                            continue;
                        }
                        if map[u as usize].load(Ordering::Relaxed) == UNMAPPED {
                            map[u as usize].store(v, Ordering::Relaxed);
                        }
                        locks.unlock(u);
                    }
                    locks.unlock(v);
                }
            });
        }
    });

    let mut hub_map: Vec<VertexId> = map.into_iter().map(AtomicU32::into_inner).collect();
    // a vertex left unmapped by lock contention stands alone
    for (v, m) in hub_map.iter_mut().enumerate() {
        if *m == UNMAPPED {
            *m = v as VertexId;
        }
    }
    let mut label = vec![UNMAPPED; n];
    let mut clusters = 0u32;
    for &v in &order {
        if hub_map[v as usize] == v {
            label[v as usize] = clusters;
            clusters += 1;
        }
    }
    for m in hub_map.iter_mut() {
        *m = label[*m as usize];
    }
    let mapping = LevelMapping {
        map: hub_map,
        coarse_count: clusters as usize,
    };
    let coarse = contract_parallel(g, &mapping, threads);
    (mapping, coarse)
}

fn contract_parallel(g: &Graph, mapping: &LevelMapping, threads: usize) -> Graph {
    let (start, members) = cluster_members(mapping);
    let k = mapping.coarse_count;
    let cursor = AtomicUsize::new(0);

    // each worker: private edge buffer plus (super vertex, begin, len) segments
    let buffers: Vec<(Vec<VertexId>, Vec<(usize, usize, usize)>)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|_| {
                s.spawn(|| {
                    let mut edges = Vec::new();
                    let mut segments = Vec::new();
                    loop {
                        let begin = cursor.fetch_add(BATCH, Ordering::Relaxed);
                        if begin >= k {
                            break;
                        }
                        for c in begin..(begin + BATCH).min(k) {
                            let at = edges.len();
                            coarse_neighbors(
                                g,
                                mapping,
                                &members[start[c]..start[c + 1]],
                                c as VertexId,
                                &mut edges,
                            );
                            segments.push((c, at, edges.len() - at));
                        }
                    }
                    (edges, segments)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });

    let mut degree = vec![0usize; k + 1];
    for (_, segments) in &buffers {
        for &(c, _, len) in segments {
            degree[c + 1] = len;
        }
    }
    for c in 0..k {
        degree[c + 1] += degree[c];
    }
    let offsets = degree;
    let mut neighbors = vec![0 as VertexId; offsets[k]];
    for (edges, segments) in &buffers {
        for &(c, at, len) in segments {
            neighbors[offsets[c]..offsets[c] + len].copy_from_slice(&edges[at..at + len]);
        }
    }
    Graph::from_csr_unchecked(offsets, neighbors, g.is_directed())
}

/// Builds the coarsening hierarchy.
///
/// Levels are appended until one has at most `threshold` vertices or keeps
/// more than `shrink_limit` of its parent's vertices; that last level is
/// kept. A pass that does not shrink at all is discarded.
pub fn coarsen(g: &Graph, cfg: &CoarseningConfig) -> Result<CoarseningResult> {
    cfg.validate()?;
    let mut result = CoarseningResult::trivial(g.clone());
    if g.vertex_count() <= cfg.threshold {
        return Ok(result);
    }
    loop {
        if cfg.max_levels.is_some_and(|cap| result.levels.len() >= cap) {
            break;
        }
        let current = result.levels.last().expect("non-empty hierarchy");
        let started = Instant::now();
        let (mapping, next) = if cfg.thread_count > 1 {
            collapse_level_parallel(current, cfg)
        } else {
            collapse_level(current, cfg)
        };
        let elapsed = started.elapsed();
        let (before, after) = (current.vertex_count(), next.vertex_count());
        if after >= before {
            break;
        }
        log::debug!("coarsening level {}: {before} -> {after} vertices", result.levels.len());
        result.levels.push(next);
        result.mappings.push(mapping);
        result.level_times.push(elapsed);
        if after <= cfg.threshold || after as f64 > cfg.shrink_limit * before as f64 {
            break;
        }
    }
    Ok(result)
}
