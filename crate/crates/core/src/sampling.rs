//! Positive and negative sample generation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::partition::PartitionPlan;

/// Uniform neighbor of `src`.
pub fn positive_adjacency<R: Rng + ?Sized>(g: &Graph, src: VertexId, rng: &mut R) -> Result<VertexId> {
    let nbrs = g.neighbors(src);
    if nbrs.is_empty() {
        return Err(Error::Sampling(format!("vertex {src} has no neighbors")));
    }
    Ok(nbrs[rng.gen_range(0..nbrs.len())])
}

/// Uniform vertex of `[0, vertex_count)`; true neighbors and the source are not excluded.
#[inline]
pub fn negative_uniform<R: Rng + ?Sized>(vertex_count: usize, rng: &mut R) -> VertexId {
    rng.gen_range(0..vertex_count as VertexId)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Number of vertices on a walk (ℓ).
    pub walk_length: usize,
    /// Largest distance along the walk at which a pair is emitted (g).
    pub window: usize,
    pub walks_per_vertex: usize,
    pub shuffle: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walk_length: 40,
            window: 5,
            walks_per_vertex: 1,
            shuffle: true,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(Error::Config("walk length must be >= 2".into()));
        }
        if self.window < 1 || self.window >= self.walk_length {
            return Err(Error::Config(format!(
                "window must lie in [1, {}), got {}",
                self.walk_length, self.window
            )));
        }
        if self.walks_per_vertex < 1 {
            return Err(Error::Config("walks per vertex must be >= 1".into()));
        }
        Ok(())
    }

    /// Pairs emitted by one walk that is never truncated.
    pub fn pairs_per_walk(&self) -> usize {
        let (l, g) = (self.walk_length, self.window);
        g * l - g * (g + 1) / 2
    }
}

/// Uniform random walk of at most `len` vertices starting at `start`,
/// written to `out` (cleared first). Stops early at a vertex without
/// out-neighbors.
pub fn random_walk<R: Rng + ?Sized>(
    g: &Graph,
    start: VertexId,
    len: usize,
    rng: &mut R,
    out: &mut Vec<VertexId>,
) {
    out.clear();
    out.push(start);
    let mut at = start;
    while out.len() < len {
        let nbrs = g.neighbors(at);
        if nbrs.is_empty() {
            break;
        }
        at = nbrs[rng.gen_range(0..nbrs.len())];
        out.push(at);
    }
}

/// Appends every `(walk[a], walk[b])` with `0 < b - a <= window`.
pub fn window_pairs(walk: &[VertexId], window: usize, out: &mut Vec<(VertexId, VertexId)>) {
    for a in 0..walk.len() {
        for b in a + 1..walk.len().min(a + window + 1) {
            out.push((walk[a], walk[b]));
        }
    }
}

/// All walk pairs for one sweep: `walks_per_vertex` walks from every vertex.
pub fn walk_pairs<R: Rng + ?Sized>(
    g: &Graph,
    cfg: &WalkConfig,
    rng: &mut R,
) -> Result<Vec<(VertexId, VertexId)>> {
    cfg.validate()?;
    let mut pairs = Vec::with_capacity(g.vertex_count() * cfg.walks_per_vertex * cfg.pairs_per_walk());
    let mut walk = Vec::with_capacity(cfg.walk_length);
    for _ in 0..cfg.walks_per_vertex {
        for v in 0..g.vertex_count() as VertexId {
            random_walk(g, v, cfg.walk_length, rng, &mut walk);
            window_pairs(&walk, cfg.window, &mut pairs);
        }
    }
    if cfg.shuffle {
        pairs.shuffle(rng);
    }
    Ok(pairs)
}

/// Per-worker walk pair source that refills a shuffled buffer on demand.
pub struct WalkStream<'a> {
    graph: &'a Graph,
    cfg: WalkConfig,
    starts: Vec<VertexId>,
    next_start: usize,
    walk: Vec<VertexId>,
    buffer: Vec<(VertexId, VertexId)>,
}

impl<'a> WalkStream<'a> {
    /// Walks begin at `starts` in round-robin order; vertices without
    /// neighbors are dropped from the start list.
    pub fn new(graph: &'a Graph, cfg: WalkConfig, starts: impl IntoIterator<Item = VertexId>) -> Self {
        let starts = starts.into_iter().filter(|&v| graph.degree(v) > 0).collect();
        Self {
            graph,
            cfg,
            starts,
            next_start: 0,
            walk: Vec::with_capacity(cfg.walk_length),
            buffer: Vec::new(),
        }
    }

    pub fn next_pair<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<(VertexId, VertexId)> {
        if self.buffer.is_empty() {
            if self.starts.is_empty() {
                return None;
            }
            // one batch = every start vertex walked `walks_per_vertex` times
            let batch = 64.min(self.starts.len()) * self.cfg.walks_per_vertex;
            for _ in 0..batch {
                let v = self.starts[self.next_start];
                self.next_start = (self.next_start + 1) % self.starts.len();
                random_walk(self.graph, v, self.cfg.walk_length, rng, &mut self.walk);
                window_pairs(&self.walk, self.cfg.window, &mut self.buffer);
            }
            if self.cfg.shuffle {
                self.buffer.shuffle(rng);
            }
        }
        self.buffer.pop()
    }
}

/// Neighbor lists regrouped by part so that the neighbors of `v` inside one
/// part form a contiguous, searchable range.
pub struct PartNeighbors {
    offsets: Vec<usize>,
    neighbors: Vec<VertexId>,
    keys: Vec<u32>,
}

impl PartNeighbors {
    pub fn new(g: &Graph, plan: &PartitionPlan) -> Self {
        let offsets = g.offsets().to_vec();
        let mut neighbors = g.neighbor_array().to_vec();
        for v in 0..g.vertex_count() {
            neighbors[offsets[v]..offsets[v + 1]].sort_by_key(|&u| (plan.part_of(u), u));
        }
        let keys = neighbors.iter().map(|&u| plan.part_of(u)).collect();
        Self {
            offsets,
            neighbors,
            keys,
        }
    }

    /// Neighbors of `v` lying in `part`.
    pub fn in_part(&self, v: VertexId, part: u32) -> &[VertexId] {
        let (lo, hi) = (self.offsets[v as usize], self.offsets[v as usize + 1]);
        let keys = &self.keys[lo..hi];
        let begin = keys.partition_point(|&k| k < part);
        let end = keys.partition_point(|&k| k <= part);
        &self.neighbors[lo + begin..lo + end]
    }
}

/// Positive pairs for one kernel `(a, b)` of the partitioned executor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SamplePool {
    pub part_pair: (u32, u32),
    pub pairs: Vec<(VertexId, VertexId)>,
}

impl SamplePool {
    /// Text dump, one `src dst` line per pair.
    pub fn write_text<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for &(s, t) in &self.pairs {
            writeln!(out, "{s} {t}")?;
        }
        Ok(())
    }
}

/// Draws `B` positives (with replacement) for every source of the pair that
/// has a neighbor in the opposite part; for `a == b` both endpoints lie in
/// part `a`. Sources without such a neighbor contribute nothing.
pub fn fill_pool<R: Rng + ?Sized>(
    nbrs: &PartNeighbors,
    plan: &PartitionPlan,
    pair: (u32, u32),
    rng: &mut R,
) -> SamplePool {
    let (a, b) = pair;
    let cap = plan.pool_b();
    let mut pairs = Vec::with_capacity(cap * (plan.part(a).len() + plan.part(b).len()));
    let mut draw = |src: VertexId, other: u32, pairs: &mut Vec<(VertexId, VertexId)>| {
        let cand = nbrs.in_part(src, other);
        if !cand.is_empty() {
            for _ in 0..cap {
                pairs.push((src, cand[rng.gen_range(0..cand.len())]));
            }
        }
    };
    for &v in plan.part(a) {
        draw(v, b, &mut pairs);
    }
    if a != b {
        for &v in plan.part(b) {
            draw(v, a, &mut pairs);
        }
    }
    SamplePool {
        part_pair: pair,
        pairs,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::star;
    use crate::rng::rng_for;

    #[test]
    fn path_middle_is_fair() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)], false).unwrap();
        let mut rng = rng_for(1, 0);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| positive_adjacency(&g, 1, &mut rng).unwrap() == 0)
            .count() as f64;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((zeros - n as f64 / 2.0).abs() < 3.0 * sigma);
    }

    #[test]
    fn leaf_and_isolated_vertices() {
        let g = Graph::from_edges(4, [(0, 1), (1, 2)], false).unwrap();
        let mut rng = rng_for(2, 0);
        for _ in 0..100 {
            assert_eq!(positive_adjacency(&g, 0, &mut rng).unwrap(), 1);
        }
        assert!(matches!(positive_adjacency(&g, 3, &mut rng), Err(Error::Sampling(_))));
        assert_eq!(negative_uniform(1, &mut rng), 0);
    }

    #[test]
    fn star_hub_chi_square() {
        let g = star(10);
        let mut rng = rng_for(3, 0);
        let n = 50_000;
        let mut counts = [0f64; 11];
        for _ in 0..n {
            counts[positive_adjacency(&g, 0, &mut rng).unwrap() as usize] += 1.0;
        }
        assert_eq!(counts[0], 0.0);
        let expect = n as f64 / 10.0;
        let chi: f64 = counts[1..].iter().map(|c| (c - expect).powi(2) / expect).sum();
        // 9 degrees of freedom, p = 0.01
        assert!(chi < 21.67, "chi2 = {chi}");
    }

    #[test]
    fn window_examples() {
        let mut out = Vec::new();
        window_pairs(&[0, 1, 2], 1, &mut out);
        assert_eq!(out, [(0, 1), (1, 2)]);
        out.clear();
        window_pairs(&[0, 1, 2], 2, &mut out);
        out.sort_unstable();
        assert_eq!(out, [(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn pair_count_closed_form() {
        let g = crate::generators::ring(30);
        let mut rng = rng_for(4, 0);
        for (l, w) in [(2, 1), (5, 2), (10, 9), (40, 5)] {
            let cfg = WalkConfig {
                walk_length: l,
                window: w,
                walks_per_vertex: 1,
                shuffle: false,
            };
            let pairs = walk_pairs(&g, &cfg, &mut rng).unwrap();
            let per_walk: usize = (0..l).map(|a| (l - 1 - a).min(w)).sum();
            assert_eq!(cfg.pairs_per_walk(), per_walk);
            assert_eq!(pairs.len(), 30 * per_walk);
        }
    }

    #[test]
    fn walk_truncates_at_sink() {
        let g = Graph::from_edges(3, [(0, 1), (1, 2)], true).unwrap();
        let mut rng = rng_for(5, 0);
        let mut walk = Vec::new();
        random_walk(&g, 0, 10, &mut rng, &mut walk);
        assert_eq!(walk, [0, 1, 2]);
    }

    #[test]
    fn bad_walk_configs() {
        let base = WalkConfig::default();
        assert!(WalkConfig { walk_length: 1, ..base }.validate().is_err());
        assert!(WalkConfig { window: 0, ..base }.validate().is_err());
        assert!(WalkConfig { window: 40, ..base }.validate().is_err());
        assert!(base.validate().is_ok());
    }
}
