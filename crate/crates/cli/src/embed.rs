use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mlembed::partition::PartitionConfig;
use mlembed::pipeline::level_footprint;
use mlembed::rng::{derive_seed, stream};
use mlembed::sampling::WalkConfig;
use mlembed::{
    embed_multilevel, split_link_pred, CoarseningConfig, EmbedConfig, EmbedReport, Execution, GraphScale, Heuristics,
    Preset, SamplerKind, TrainConfig,
};
use serde::Serialize;

use crate::{input, parse_bytes, parse_heuristics, parse_preset, sidecar, CoarsenArgs, GraphFormat};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Adjacency,
    Walk,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Large when the finest level does not fit the memory budget.
    Auto,
    Medium,
    Large,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Binary,
    Text,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Edge list (`u v` per line) or binary CSR cache.
    pub input: PathBuf,
    /// Embedding output path; the run record and id table are written next to it.
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = OutputFormat::Binary)]
    pub output_format: OutputFormat,
    #[arg(long, value_enum, default_value_t = GraphFormat::Auto)]
    pub format: GraphFormat,
    #[arg(long)]
    pub directed: bool,
    /// Hold out this fraction of edges for link prediction and embed the rest.
    #[arg(long)]
    pub link_split: Option<f64>,

    #[arg(long, value_parser = parse_preset, default_value = "normal")]
    pub preset: Preset,
    /// Picks the preset's epoch count.
    #[arg(long, value_enum, default_value_t = Scale::Auto)]
    pub scale: Scale,
    #[arg(long, default_value_t = 128)]
    pub dim: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f32>,
    #[arg(long)]
    pub smoothing: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub negatives: usize,
    /// Worker threads; defaults to the hardware parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Emulate a device running this many source updates in lockstep.
    #[arg(long)]
    pub lanes: Option<usize>,
    /// Epochs between synchronization points.
    #[arg(long, default_value_t = 1)]
    pub sync_period: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_enum, default_value_t = Sampler::Adjacency)]
    pub sampler: Sampler,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,

    /// Bytes for one level's graph and matrix, e.g. `64M`; larger levels are partitioned.
    #[arg(long, value_parser = parse_bytes)]
    pub memory_budget: Option<u64>,
    #[arg(long)]
    pub parts: Option<usize>,
    #[arg(long)]
    pub pool_b: Option<usize>,
    #[arg(long)]
    pub sub_bins: Option<usize>,
    #[arg(long)]
    pub pool_bins: Option<usize>,

    #[command(flatten)]
    pub coarsen: CoarsenArgs,
    #[arg(long, value_parser = parse_heuristics)]
    pub heuristics: Option<Heuristics>,
}

#[derive(Serialize)]
struct Seeds {
    master: u64,
    split: u64,
    init: u64,
    /// Per level, finest first.
    train: Vec<u64>,
    partition: Vec<u64>,
}

#[derive(Serialize)]
struct PartitionedLevel {
    level: usize,
    parts: usize,
    pool_b: usize,
    sub_bins: usize,
    pool_bins: usize,
    positive_updates: u64,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    input: &'a Path,
    directed: bool,
    preset: &'a str,
    scale: GraphScale,
    link_split: Option<f64>,
    seeds: Seeds,
    vertices: usize,
    edges: usize,
    embedded_vertices: usize,
    config: &'a EmbedConfig,
    partitioned_levels: Vec<PartitionedLevel>,
    report: &'a EmbedReport,
    wall_seconds: f64,
}

fn check_combinations(a: &EmbedArgs) -> Result<()> {
    if a.sampler == Sampler::Adjacency && (a.walk_length.is_some() || a.window.is_some()) {
        bail!("--walk-length and --window need --sampler walk");
    }
    let partition_flags = a.parts.is_some() || a.pool_b.is_some() || a.sub_bins.is_some() || a.pool_bins.is_some();
    if partition_flags && a.memory_budget.is_none() {
        bail!("--parts, --pool-b, --sub-bins and --pool-bins need --memory-budget");
    }
    let coarsen_flags = a.coarsen.coarsen_threshold.is_some()
        || a.coarsen.shrink_limit.is_some()
        || a.coarsen.max_levels.is_some()
        || a.heuristics.is_some()
        || a.smoothing.is_some();
    if !a.preset.coarsens() && coarsen_flags {
        bail!("coarsening and smoothing flags have no effect with --preset nocoarse");
    }
    if a.lanes.is_some() && a.threads.is_some() {
        bail!("--lanes replaces the worker threads; drop --threads");
    }
    if a.lanes.is_some() && a.memory_budget.is_some() {
        bail!("--lanes only applies to in-memory training");
    }
    Ok(())
}

fn embed_config(a: &EmbedArgs, scale: GraphScale) -> EmbedConfig {
    let defaults = EmbedConfig::default();
    let mut coarsening = CoarseningConfig {
        thread_count: a.threads.unwrap_or_else(crate::default_threads),
        max_levels: a.coarsen.max_levels,
        ..defaults.coarsening
    };
    if let Some(t) = a.coarsen.coarsen_threshold {
        coarsening.threshold = t;
    }
    if let Some(s) = a.coarsen.shrink_limit {
        coarsening.shrink_limit = s;
    }
    if let Some(h) = a.heuristics {
        coarsening.heuristics = h;
    }

    let sampler = match a.sampler {
        Sampler::Adjacency => SamplerKind::Adjacency,
        Sampler::Walk => {
            let mut w = WalkConfig::default();
            if let Some(l) = a.walk_length {
                w.walk_length = l;
            }
            if let Some(g) = a.window {
                w.window = g;
            }
            SamplerKind::Walk(w)
        }
    };
    let train = TrainConfig {
        dim: a.dim,
        negatives: a.negatives,
        epochs: a.epochs.unwrap_or(a.preset.epochs(scale)),
        learning_rate: a.lr.unwrap_or(a.preset.learning_rate()),
        smoothing: a.smoothing.or(a.preset.smoothing()).unwrap_or(defaults.train.smoothing),
        epochs_per_sync: a.sync_period,
        threads: a.threads.unwrap_or_else(crate::default_threads),
        seed: a.seed,
        sampler,
        execution: match a.lanes {
            Some(lanes) => Execution::Lockstep { lanes },
            None => Execution::Threads,
        },
    };

    let mut partition = PartitionConfig {
        parts: a.parts,
        ..defaults.partition
    };
    if let Some(b) = a.pool_b {
        partition.pool_b = b;
    }
    if let Some(p) = a.sub_bins {
        partition.sub_bins = p;
    }
    if let Some(s) = a.pool_bins {
        partition.pool_bins = s;
    }

    EmbedConfig {
        coarsening,
        train,
        coarsen: a.preset.coarsens(),
        memory_budget: a.memory_budget,
        partition,
    }
}

pub fn run(a: &EmbedArgs) -> Result<()> {
    check_combinations(a)?;
    let started = Instant::now();
    let loaded = input::load_graph(&a.input, a.format, a.directed)?;
    log::info!(
        "loaded {} vertices, {} edges",
        loaded.graph.vertex_count(),
        loaded.graph.edge_count()
    );

    let split_seed = derive_seed(a.seed, stream::SPLIT);
    let (train_graph, ids) = match a.link_split {
        Some(fraction) => {
            let split = split_link_pred(&loaded.graph, fraction, split_seed)?;
            let ids: Vec<u64> = split
                .train_to_original
                .iter()
                .map(|&v| loaded.original_ids[v as usize])
                .collect();
            (split.train, ids)
        }
        None => (loaded.graph.clone(), loaded.original_ids.clone()),
    };

    let scale = match a.scale {
        Scale::Medium => GraphScale::Medium,
        Scale::Large => GraphScale::Large,
        Scale::Auto => match a.memory_budget {
            Some(b) if level_footprint(&train_graph, a.dim) > b => GraphScale::Large,
            _ => GraphScale::Medium,
        },
    };
    let cfg = embed_config(a, scale);
    cfg.coarsening.validate()?;
    cfg.partition.validate()?;

    let (m, report) = embed_multilevel(&train_graph, &cfg)?;
    if !m.is_finite() {
        bail!("training diverged: the embedding holds non-finite values");
    }

    let out = BufWriter::new(File::create(&a.output).with_context(|| format!("cannot create {}", a.output.display()))?);
    match a.output_format {
        OutputFormat::Binary => m.write_binary(out)?,
        OutputFormat::Text => m.write_text(out)?,
    }
    input::write_ids(&sidecar(&a.output, ".ids"), &ids)?;

    let partitioned_levels = report
        .levels
        .iter()
        .filter_map(|l| {
            l.partitioned.as_ref().map(|p| PartitionedLevel {
                level: l.level,
                parts: p.parts,
                pool_b: cfg.partition.pool_b,
                sub_bins: cfg.partition.sub_bins,
                pool_bins: cfg.partition.pool_bins,
                positive_updates: p.positive_updates,
            })
        })
        .collect();
    let record = RunRecord {
        input: &a.input,
        directed: a.directed,
        preset: a.preset.name(),
        scale,
        link_split: a.link_split,
        seeds: Seeds {
            master: a.seed,
            split: split_seed,
            init: derive_seed(a.seed, stream::INIT),
            train: (0..report.depth as u64)
                .map(|i| derive_seed(a.seed, derive_seed(stream::TRAIN, i)))
                .collect(),
            partition: (0..report.depth as u64)
                .map(|i| derive_seed(derive_seed(a.seed, stream::PARTITION), i))
                .collect(),
        },
        vertices: loaded.graph.vertex_count(),
        edges: loaded.graph.edge_count(),
        embedded_vertices: m.rows(),
        config: &cfg,
        partitioned_levels,
        report: &report,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let record_path = sidecar(&a.output, ".run.json");
    let f = File::create(&record_path).with_context(|| format!("cannot create {}", record_path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), &record)?;
    log::info!("depth {}, {:.2}s", report.depth, record.wall_seconds);
    Ok(())
}
