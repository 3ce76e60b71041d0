//! Coarsen, train from the coarsest level down, expand between levels.

use std::time::{Duration, Instant};

use serde::Serialize;

use crate::coarsening::{coarsen, CoarseningConfig, CoarseningResult};
use crate::embedding::EmbeddingMatrix;
use crate::error::Result;
use crate::graph::Graph;
use crate::partition::{embed_partitioned, ExecOptions, PartitionConfig, PartitionPlan, PartitionedReport};
use crate::rng::{derive_seed, rng_for, stream};
use crate::trainer::{calculate_epochs, train_level, LevelSchedule, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbedConfig {
    pub coarsening: CoarseningConfig,
    pub train: TrainConfig,
    /// When false the input graph is trained as the only level.
    pub coarsen: bool,
    /// Bytes available for one level's graph plus matrix; levels above it
    /// are trained part by part.
    pub memory_budget: Option<u64>,
    pub partition: PartitionConfig,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            coarsening: CoarseningConfig::default(),
            train: TrainConfig::default(),
            coarsen: true,
            memory_budget: None,
            partition: PartitionConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub vertices: usize,
    pub edge_slots: usize,
    pub epochs: usize,
    pub coarsen_time: Duration,
    pub train_time: Duration,
    pub partitioned: Option<PartitionedReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbedReport {
    pub depth: usize,
    pub schedule: LevelSchedule,
    pub levels: Vec<LevelReport>,
    pub total_time: Duration,
}

/// Bytes of a level held in memory: CSR arrays plus the `f32` matrix.
pub fn level_footprint(g: &Graph, dim: usize) -> u64 {
    g.memory_bytes() + g.vertex_count() as u64 * dim as u64 * 4
}

pub fn embed_multilevel(g: &Graph, cfg: &EmbedConfig) -> Result<(EmbeddingMatrix, EmbedReport)> {
    cfg.train.validate()?;
    let started = Instant::now();
    let hierarchy = if cfg.coarsen {
        coarsen(g, &cfg.coarsening)?
    } else {
        CoarseningResult::trivial(g.clone())
    };
    let depth = hierarchy.depth();
    let schedule = calculate_epochs(cfg.train.epochs, cfg.train.smoothing, depth);
    let seed = cfg.train.seed;
    let coarsest = &hierarchy.levels[depth - 1];
    let mut m = EmbeddingMatrix::random(coarsest.vertex_count(), cfg.train.dim, &mut rng_for(seed, stream::INIT));
    let mut levels = Vec::with_capacity(depth);

    for i in (0..depth).rev() {
        let level = &hierarchy.levels[i];
        let e_i = schedule.epochs_per_level[i];
        let level_stream = derive_seed(stream::TRAIN, i as u64);
        let t0 = Instant::now();
        let partitioned = match cfg.memory_budget {
            Some(budget) if level_footprint(level, cfg.train.dim) > budget => {
                let plan = PartitionPlan::for_budget(
                    level.vertex_count(),
                    cfg.train.dim,
                    budget,
                    &cfg.partition,
                    derive_seed(derive_seed(seed, stream::PARTITION), i as u64),
                )?;
                let opts = ExecOptions {
                    workers: cfg.train.threads,
                    ..Default::default()
                };
                log::info!("level {i}: {} parts", plan.part_count());
                Some(embed_partitioned(level, &mut m, &cfg.train, e_i, &plan, &opts, level_stream)?)
            }
            _ => {
                train_level(level, &mut m, &cfg.train, e_i, level_stream)?;
                None
            }
        };
        levels.push(LevelReport {
            level: i,
            vertices: level.vertex_count(),
            edge_slots: level.edge_slots(),
            epochs: e_i,
            coarsen_time: hierarchy.level_times[i],
            train_time: t0.elapsed(),
            partitioned,
        });
        if i > 0 {
            m = m.expand(&hierarchy.mappings[i - 1])?;
        }
    }
    levels.reverse();
    Ok((
        m,
        EmbedReport {
            depth,
            schedule,
            levels,
            total_time: started.elapsed(),
        },
    ))
}
