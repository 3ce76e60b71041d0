//! Training a level that does not fit the memory budget.
//!
//! The vertex set is split into `K` equal parts. Kernels operate on one pair
//! of parts at a time, visiting the pairs in inside-out order so that the
//! row part stays resident. An arena of `P` submatrix bins and `S` pool bins
//! stands in for device memory; a task graph orders the swaps, pool copies
//! and kernels.

mod dag;
mod exec;

pub use dag::{build_dag, BinRef, Task, TaskDag};
pub use exec::{
    embed_partitioned, execute, kernel_rng, pool_rng, verify_trace, ExecOptions, PartitionedReport, TraceEvent,
    TracePhase,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::rng::rng_for;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionConfig {
    /// Submatrix bins (`P`).
    pub sub_bins: usize,
    /// Sample pool bins (`S`).
    pub pool_bins: usize,
    /// Positives per source vertex per pool (`B`).
    pub pool_b: usize,
    /// Fixed part count; derived from the budget when absent.
    pub parts: Option<usize>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            sub_bins: 3,
            pool_bins: 2,
            pool_b: 5,
            parts: None,
        }
    }
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sub_bins < 2 {
            return Err(Error::Config("at least 2 submatrix bins are required".into()));
        }
        if self.pool_bins < 1 {
            return Err(Error::Config("at least 1 pool bin is required".into()));
        }
        if self.pool_b < 1 {
            return Err(Error::Config("pool size B must be >= 1".into()));
        }
        if let Some(k) = self.parts {
            if k < self.sub_bins {
                return Err(Error::Config(format!(
                    "{k} parts is fewer than {} submatrix bins",
                    self.sub_bins
                )));
            }
        }
        Ok(())
    }
}

/// Arena bytes needed with `k` parts: the submatrix bins plus the pool bins,
/// a pool holding `B` (source, positive) pairs of 8 bytes for each vertex of
/// two parts.
pub fn arena_bytes(n: usize, k: usize, dim: usize, cfg: &PartitionConfig) -> u64 {
    let part = n.div_ceil(k.max(1)) as u64;
    let sub = cfg.sub_bins as u64 * part * dim as u64 * 4;
    let pool = cfg.pool_bins as u64 * cfg.pool_b as u64 * 2 * part * 8;
    sub + pool
}

/// Smallest `K >= P` whose arena fits in `budget` bytes.
pub fn choose_part_count(n: usize, dim: usize, budget: u64, cfg: &PartitionConfig) -> Result<usize> {
    cfg.validate()?;
    let max_k = n.max(cfg.sub_bins);
    if arena_bytes(n, max_k, dim, cfg) > budget {
        return Err(Error::Config(format!(
            "memory budget of {budget} bytes cannot hold {} single-vertex submatrices and {} pools",
            cfg.sub_bins, cfg.pool_bins
        )));
    }
    // arena_bytes is non-increasing in k
    let (mut lo, mut hi) = (cfg.sub_bins, max_k);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if arena_bytes(n, mid, dim, cfg) <= budget {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionPlan {
    part_of: Vec<u32>,
    local: Vec<u32>,
    parts: Vec<Vec<VertexId>>,
    config: PartitionConfig,
}

impl PartitionPlan {
    /// Seeded random permutation cut into `k` chunks whose sizes differ by at most one.
    pub fn new(n: usize, k: usize, cfg: &PartitionConfig, seed: u64) -> Result<Self> {
        let mut perm: Vec<VertexId> = (0..n as VertexId).collect();
        perm.shuffle(&mut rng_for(seed, 0));
        let parts = (0..k).map(|p| perm[n * p / k..n * (p + 1) / k].to_vec()).collect();
        Self::from_parts(n, parts, cfg)
    }

    /// Plan with caller-chosen parts, which must cover `0..n` exactly once.
    pub fn from_parts(n: usize, parts: Vec<Vec<VertexId>>, cfg: &PartitionConfig) -> Result<Self> {
        cfg.validate()?;
        if parts.len() < cfg.sub_bins {
            return Err(Error::Config(format!(
                "{} parts is fewer than {} submatrix bins",
                parts.len(),
                cfg.sub_bins
            )));
        }
        let mut part_of = vec![u32::MAX; n];
        let mut local = vec![0u32; n];
        for (p, chunk) in parts.iter().enumerate() {
            for (i, &v) in chunk.iter().enumerate() {
                let slot = part_of
                    .get_mut(v as usize)
                    .ok_or_else(|| Error::Index(format!("vertex {v} outside 0..{n}")))?;
                if *slot != u32::MAX {
                    return Err(Error::Config(format!("vertex {v} is in two parts")));
                }
                *slot = p as u32;
                local[v as usize] = i as u32;
            }
        }
        if let Some(v) = part_of.iter().position(|&p| p == u32::MAX) {
            return Err(Error::Config(format!("vertex {v} is in no part")));
        }
        Ok(Self {
            part_of,
            local,
            parts,
            config: *cfg,
        })
    }

    /// Plan for a budget: the part count comes from `cfg.parts` or [`choose_part_count`].
    pub fn for_budget(n: usize, dim: usize, budget: u64, cfg: &PartitionConfig, seed: u64) -> Result<Self> {
        let k = match cfg.parts {
            Some(k) => k,
            None => choose_part_count(n, dim, budget, cfg)?,
        };
        Self::new(n, k, cfg, seed)
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    #[inline]
    pub fn part_of(&self, v: VertexId) -> u32 {
        self.part_of[v as usize]
    }

    /// Row of `v` inside its part's submatrix.
    #[inline]
    pub fn local_index(&self, v: VertexId) -> usize {
        self.local[v as usize] as usize
    }

    pub fn part(&self, p: u32) -> &[VertexId] {
        &self.parts[p as usize]
    }

    pub fn largest_part(&self) -> usize {
        self.parts.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn config(&self) -> &PartitionConfig {
        &self.config
    }

    pub fn sub_bins(&self) -> usize {
        self.config.sub_bins
    }

    pub fn pool_bins(&self) -> usize {
        self.config.pool_bins
    }

    pub fn pool_b(&self) -> usize {
        self.config.pool_b
    }
}

/// Lower-triangular row-major pair order: `(0,0), (1,0), (1,1), (2,0), …`.
pub fn kernel_order(k: usize) -> Vec<(u32, u32)> {
    let mut order = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k as u32 {
        for b in 0..=a {
            order.push((a, b));
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_budget_example() {
        let cfg = PartitionConfig::default();
        // K=8: part 125 -> 3*125*128 + 2*5*2*125*8 = 48000 + 20000 > 65536
        // K=9: part 112 -> 43008 + 17920 = 60928 <= 65536
        assert_eq!(arena_bytes(1000, 8, 32, &cfg), 68_000);
        assert_eq!(arena_bytes(1000, 9, 32, &cfg), 60_928);
        assert_eq!(choose_part_count(1000, 32, 64 * 1024, &cfg).unwrap(), 9);
    }

    #[test]
    fn generous_budget_gives_minimum_k() {
        let cfg = PartitionConfig::default();
        assert_eq!(choose_part_count(1000, 32, 1 << 30, &cfg).unwrap(), 3);
        assert!(choose_part_count(1000, 32, 100, &cfg).is_err());
    }

    #[test]
    fn parts_are_balanced_and_cover() {
        let cfg = PartitionConfig::default();
        for k in [3, 4, 7, 10] {
            let plan = PartitionPlan::new(103, k, &cfg, 5).unwrap();
            let sizes: Vec<_> = (0..k as u32).map(|p| plan.part(p).len()).collect();
            assert_eq!(sizes.iter().sum::<usize>(), 103);
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for v in 0..103 {
                assert_eq!(plan.part(plan.part_of(v))[plan.local_index(v)], v);
            }
        }
    }

    #[test]
    fn config_checks() {
        let bad = PartitionConfig {
            sub_bins: 1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(PartitionPlan::new(10, 2, &PartitionConfig::default(), 0).is_err());
    }

    #[test]
    fn small_orders() {
        assert_eq!(kernel_order(1), [(0, 0)]);
        assert_eq!(kernel_order(3), [(0, 0), (1, 0), (1, 1), (2, 0), (2, 1), (2, 2)]);
    }
}
