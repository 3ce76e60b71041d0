//! In-memory training of one level and the epoch schedule across levels.

use serde::{Deserialize, Serialize};

use crate::embedding::{sigmoid, EmbeddingMatrix, SharedRows};
use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::rng::{derive_seed, rng_for, Rng};
use crate::sampling::{negative_uniform, WalkConfig, WalkStream};

use rand::Rng as _;

/// Where positive samples come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplerKind {
    /// One uniform neighbor per source per epoch.
    Adjacency,
    /// Window pairs of random walks; an epoch consumes `|E|` pairs.
    Walk(WalkConfig),
}

/// How the updates of a level are scheduled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    /// Worker threads over contiguous source ranges.
    Threads,
    /// Deterministic emulation of a device running `lanes` source updates at
    /// once. Each wave stages its source rows, applies the sample updates in
    /// place and writes the source rows back, the last lane winning. Waves
    /// never cross a synchronization point.
    Lockstep { lanes: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f32,
    pub smoothing: f64,
    pub epochs_per_sync: usize,
    pub threads: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub execution: Execution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            negatives: 3,
            epochs: 1000,
            learning_rate: 0.035,
            smoothing: 0.3,
            epochs_per_sync: 1,
            threads: 1,
            seed: 0,
            sampler: SamplerKind::Adjacency,
            execution: Execution::Threads,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.dim == 0 {
            return fail("dimension must be >= 1");
        }
        if self.negatives == 0 {
            return fail("negative sample count must be >= 1");
        }
        if self.epochs == 0 {
            return fail("epoch budget must be >= 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning rate must be positive");
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return fail("smoothing ratio must lie in [0, 1]");
        }
        if self.epochs_per_sync == 0 {
            return fail("sync period must be >= 1");
        }
        if self.threads == 0 {
            return fail("thread count must be >= 1");
        }
        if let Execution::Lockstep { lanes: 0 } = self.execution {
            return fail("lane count must be >= 1");
        }
        if let SamplerKind::Walk(w) = &self.sampler {
            w.validate()?;
        }
        Ok(())
    }
}

/// Checked single update of a source row `v` against a sample row `s`.
///
/// Both rows move by `score = (b - σ(v·s))·lr`, each along the other's
/// pre-update value.
pub fn update_embed(v: &mut [f32], s: &mut [f32], positive: bool, lr: f32) -> Result<()> {
    if v.len() != s.len() {
        return Err(Error::Numeric(format!("dimension mismatch {} vs {}", v.len(), s.len())));
    }
    if !lr.is_finite() || v.iter().chain(s.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite update input".into()));
    }
    let dot: f32 = v.iter().zip(s.iter()).map(|(a, b)| a * b).sum();
    let score = (f32::from(u8::from(positive)) - sigmoid(dot)) * lr;
    for (a, b) in v.iter_mut().zip(s.iter_mut()) {
        let old = *a;
        *a += *b * score;
        *b += old * score;
    }
    Ok(())
}

/// Epochs per level, index 0 being the finest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub epochs_per_level: Vec<usize>,
}

impl LevelSchedule {
    pub fn total(&self) -> usize {
        self.epochs_per_level.iter().sum()
    }
}

/// Splits `e` epochs over `depth` levels: a `p` share evenly, the rest
/// geometrically with each level receiving twice its finer neighbor.
///
/// Rounding residue goes to the coarsest level. Every level gets at least
/// one epoch; when `e < depth` the coarsest `e` levels get one each and the
/// others none.
pub fn calculate_epochs(e: usize, p: f64, depth: usize) -> LevelSchedule {
    assert!(depth >= 1, "hierarchy depth must be >= 1");
    if e < depth {
        let mut epochs = vec![0; depth];
        for x in epochs.iter_mut().rev().take(e) {
            *x = 1;
        }
        return LevelSchedule { epochs_per_level: epochs };
    }
    let ef = e as f64;
    let denom = 2f64.powi(depth as i32) - 1.0;
    let mut epochs: Vec<usize> = (0..depth)
        .map(|i| {
            let share = p * ef / depth as f64 + (1.0 - p) * ef * 2f64.powi(i as i32) / denom;
            (share.round() as usize).max(1)
        })
        .collect();
    let mut total: usize = epochs.iter().sum();
    if total < e {
        epochs[depth - 1] += e - total;
    }
    while total > e {
        let top = *epochs.iter().max().unwrap();
        let at = epochs.iter().position(|&x| x == top).unwrap();
        epochs[at] -= 1;
        total -= 1;
    }
    LevelSchedule { epochs_per_level: epochs }
}

/// Linearly decayed rate for epoch `j` of `e_i`, floored at `lr·1e-4`.
#[inline]
pub fn lr_at(lr: f32, j: usize, e_i: usize) -> f32 {
    if e_i == 0 {
        return lr;
    }
    lr * (1.0 - j as f32 / e_i as f32).max(1e-4)
}

/// Contiguous source ranges, one per worker.
fn chunks(n: usize, workers: usize) -> Vec<std::ops::Range<usize>> {
    let workers = workers.clamp(1, n.max(1));
    (0..workers)
        .map(|w| n * w / workers..n * (w + 1) / workers)
        .collect()
}

/// Trains `m` on `g` for `e_i` epochs. `stream` separates the random
/// streams of different levels.
pub fn train_level(g: &Graph, m: &mut EmbeddingMatrix, cfg: &TrainConfig, e_i: usize, stream: u64) -> Result<()> {
    cfg.validate()?;
    if m.rows() != g.vertex_count() || m.dim() != cfg.dim {
        return Err(Error::Index(format!(
            "matrix {}x{} does not fit a {}-vertex graph at dimension {}",
            m.rows(),
            m.dim(),
            g.vertex_count(),
            cfg.dim
        )));
    }
    if e_i == 0 || g.vertex_count() == 0 {
        return Ok(());
    }
    let seed = derive_seed(cfg.seed, stream);
    match cfg.execution {
        Execution::Threads => train_threads(g, m, cfg, e_i, seed),
        Execution::Lockstep { lanes } => train_lockstep(g, m, cfg, e_i, seed, lanes),
    }
    if !m.is_finite() {
        return Err(Error::Numeric("embedding diverged to non-finite values".into()));
    }
    Ok(())
}

/// One positive update of the staged source row `v`, then `negatives`
/// negative ones.
#[inline]
fn source_step(
    rows: SharedRows<'_>,
    g: &Graph,
    v: &mut [f32],
    pos: VertexId,
    negatives: usize,
    lr: f32,
    rng: &mut Rng,
) {
    rows.update_against(v, pos as usize, 1.0, lr);
    for _ in 0..negatives {
        let neg = negative_uniform(g.vertex_count(), rng);
        rows.update_against(v, neg as usize, 0.0, lr);
    }
}

fn run_worker(
    rows: SharedRows<'_>,
    g: &Graph,
    cfg: &TrainConfig,
    epochs: std::ops::Range<usize>,
    e_i: usize,
    sources: std::ops::Range<usize>,
    rng: &mut Rng,
) {
    let mut v = vec![0f32; cfg.dim];
    match cfg.sampler {
        SamplerKind::Adjacency => {
            for j in epochs {
                let lr = lr_at(cfg.learning_rate, j, e_i);
                for src in sources.clone() {
                    let nbrs = g.neighbors(src as VertexId);
                    if nbrs.is_empty() {
                        continue;
                    }
                    let pos = nbrs[rng.gen_range(0..nbrs.len())];
                    rows.load_row(src, &mut v);
                    source_step(rows, g, &mut v, pos, cfg.negatives, lr, rng);
                    rows.store_row(src, &v);
                }
            }
        }
        SamplerKind::Walk(wcfg) => {
            let quota = walk_quota(g, sources.len());
            let mut stream = WalkStream::new(g, wcfg, sources.map(|s| s as VertexId));
            for j in epochs {
                let lr = lr_at(cfg.learning_rate, j, e_i);
                for _ in 0..quota {
                    let Some((src, pos)) = stream.next_pair(rng) else {
                        return;
                    };
                    rows.load_row(src as usize, &mut v);
                    source_step(rows, g, &mut v, pos, cfg.negatives, lr, rng);
                    rows.store_row(src as usize, &v);
                }
            }
        }
    }
}

/// Walk pairs a worker owning `share` of the sources consumes per epoch.
fn walk_quota(g: &Graph, share: usize) -> usize {
    let n = g.vertex_count().max(1) as u128;
    (g.edge_count() as u128 * share as u128).div_ceil(n) as usize
}

fn train_threads(g: &Graph, m: &mut EmbeddingMatrix, cfg: &TrainConfig, e_i: usize, seed: u64) {
    let ranges = chunks(g.vertex_count(), cfg.threads);
    let rows = m.shared();
    let mut group = 0u64;
    let mut start = 0;
    while start < e_i {
        let end = (start + cfg.epochs_per_sync).min(e_i);
        let base = derive_seed(seed, group);
        if ranges.len() == 1 {
            let mut rng = rng_for(base, 0);
            run_worker(rows, g, cfg, start..end, e_i, ranges[0].clone(), &mut rng);
        } else {
            std::thread::scope(|s| {
                for (w, r) in ranges.iter().enumerate() {
                    let r = r.clone();
                    s.spawn(move || {
                        let mut rng = rng_for(base, w as u64);
                        run_worker(rows, g, cfg, start..end, e_i, r, &mut rng);
                    });
                }
            });
        }
        start = end;
        group += 1;
    }
}

fn train_lockstep(g: &Graph, m: &mut EmbeddingMatrix, cfg: &TrainConfig, e_i: usize, seed: u64, lanes: usize) {
    let rows = m.shared();
    let dim = cfg.dim;
    let mut staged = vec![0f32; lanes * dim];
    let mut owners: Vec<usize> = Vec::with_capacity(lanes);
    let mut group = 0u64;
    let mut start = 0;
    while start < e_i {
        let end = (start + cfg.epochs_per_sync).min(e_i);
        let mut rng = rng_for(derive_seed(seed, group), 0);
        // (epoch, source, walk positive) items of this sync group, epoch-major;
        // adjacency positives are drawn when the lane runs
        let mut items: Vec<(usize, VertexId, Option<VertexId>)> = Vec::new();
        match cfg.sampler {
            SamplerKind::Adjacency => {
                for j in start..end {
                    for src in 0..g.vertex_count() as VertexId {
                        if g.degree(src) > 0 {
                            items.push((j, src, None));
                        }
                    }
                }
            }
            SamplerKind::Walk(wcfg) => {
                let mut stream = WalkStream::new(g, wcfg, 0..g.vertex_count() as VertexId);
                for j in start..end {
                    for _ in 0..g.edge_count() {
                        match stream.next_pair(&mut rng) {
                            Some((s, t)) => items.push((j, s, Some(t))),
                            None => break,
                        }
                    }
                }
            }
        }
        for wave in items.chunks(lanes) {
            owners.clear();
            for (lane, &(_, src, _)) in wave.iter().enumerate() {
                rows.load_row(src as usize, &mut staged[lane * dim..(lane + 1) * dim]);
                owners.push(src as usize);
            }
            for (lane, &(j, src, pos)) in wave.iter().enumerate() {
                let lr = lr_at(cfg.learning_rate, j, e_i);
                let pos = pos.unwrap_or_else(|| {
                    let nbrs = g.neighbors(src);
                    nbrs[rng.gen_range(0..nbrs.len())]
                });
                let v = &mut staged[lane * dim..(lane + 1) * dim];
                source_step(rows, g, v, pos, cfg.negatives, lr, &mut rng);
            }
            for (lane, &src) in owners.iter().enumerate() {
                rows.store_row(src, &staged[lane * dim..(lane + 1) * dim]);
            }
        }
        start = end;
        group += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_vectors_stay_put() {
        let (mut v, mut s) = (vec![0.0; 4], vec![0.0; 4]);
        update_embed(&mut v, &mut s, true, 0.05).unwrap();
        assert_eq!(v, [0.0; 4]);
        assert_eq!(s, [0.0; 4]);
    }

    #[test]
    fn scalar_update() {
        let (mut v, mut s) = (vec![1.0f32], vec![1.0f32]);
        update_embed(&mut v, &mut s, true, 0.1).unwrap();
        let score = (1.0 - 1.0 / (1.0 + (-1.0f64).exp())) * 0.1;
        assert!((v[0] as f64 - (1.0 + score)).abs() < 1e-6);
        assert!((s[0] as f64 - (1.0 + score)).abs() < 1e-6);
    }

    #[test]
    fn saturated_negative_pushes_apart() {
        let (mut v, mut s) = (vec![10.0f32, 0.0], vec![10.0f32, 0.0]);
        update_embed(&mut v, &mut s, false, 0.1).unwrap();
        assert!((v[0] - (10.0 - 1.0)).abs() < 1e-4);
        assert!((s[0] - 9.0).abs() < 1e-4);
    }

    #[test]
    fn rejects_nan() {
        let (mut v, mut s) = (vec![f32::NAN], vec![1.0]);
        assert!(matches!(update_embed(&mut v, &mut s, true, 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(calculate_epochs(1000, 0.3, 4).epochs_per_level, [122, 168, 262, 448]);
        assert_eq!(calculate_epochs(600, 1.0, 3).epochs_per_level, [200, 200, 200]);
        assert_eq!(calculate_epochs(77, 0.1, 1).epochs_per_level, [77]);
        assert_eq!(calculate_epochs(2, 0.5, 4).epochs_per_level, [0, 0, 1, 1]);
    }

    #[test]
    fn lr_examples() {
        assert_eq!(lr_at(0.05, 0, 100), 0.05);
        assert!((lr_at(0.05, 50, 100) - 0.025).abs() < 1e-9);
        assert!((lr_at(0.05, 100, 100) - 0.05e-4).abs() < 1e-12);
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let g = crate::generators::ring(10);
        let cfg = TrainConfig { dim: 4, ..Default::default() };
        let mut m = EmbeddingMatrix::random(10, 4, &mut rng_for(1, 0));
        let before = m.clone();
        train_level(&g, &mut m, &cfg, 0, 0).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn single_worker_is_deterministic() {
        let g = crate::generators::ring(50);
        for execution in [Execution::Threads, Execution::Lockstep { lanes: 16 }] {
            let cfg = TrainConfig { dim: 8, execution, ..Default::default() };
            let run = || {
                let mut m = EmbeddingMatrix::random(50, 8, &mut rng_for(2, 0));
                train_level(&g, &mut m, &cfg, 20, 7).unwrap();
                m
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn one_lane_matches_one_thread() {
        let g = crate::generators::ring(40);
        let threads = TrainConfig { dim: 8, ..Default::default() };
        let lanes = TrainConfig {
            execution: Execution::Lockstep { lanes: 1 },
            ..threads.clone()
        };
        let init = EmbeddingMatrix::random(40, 8, &mut rng_for(3, 0));
        let (mut a, mut b) = (init.clone(), init);
        train_level(&g, &mut a, &threads, 10, 0).unwrap();
        train_level(&g, &mut b, &lanes, 10, 0).unwrap();
        assert_eq!(a, b);
    }
}
