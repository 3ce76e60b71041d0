use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use mlembed::eval::{
    eval_link_prediction, eval_node_classification, LogRegConfig, MetricsRecord, NodeClassConfig, NodeLabels,
};
use mlembed::rng::{derive_seed, stream};
use mlembed::{split_link_pred, VertexId};
use serde_json::Value;

use crate::{input, sidecar, GraphFormat};

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Task {
    /// Link prediction on the held-out edges.
    Lp,
    /// Multi-label node classification.
    Nc,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelFormat {
    /// `vertex label` per line.
    Pairs,
    /// Line `k` lists the members of label `k`.
    Communities,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// The graph the embedding was trained from.
    pub input: PathBuf,
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long, value_enum, default_value_t = GraphFormat::Auto)]
    pub format: GraphFormat,
    #[arg(long)]
    pub directed: bool,
    /// Run record of the embedding; defaults to the one written next to it.
    #[arg(long)]
    pub run_record: Option<PathBuf>,
    /// Overrides the recorded master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the recorded held-out fraction.
    #[arg(long)]
    pub link_split: Option<f64>,
    /// Expected embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, required_if_eq("task", "nc"))]
    pub labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LabelFormat::Pairs)]
    pub label_format: LabelFormat,
    /// Fraction of labeled vertices used for training.
    #[arg(long, default_value_t = 0.1)]
    pub labeled: f64,
    #[arg(long, default_value_t = 100)]
    pub top_labels: usize,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Append the metrics record to this file as one JSON line.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

struct Recorded {
    seed: u64,
    link_split: Option<f64>,
    preset: String,
}

fn recorded(a: &EvalArgs) -> Result<Option<Recorded>> {
    let path = match &a.run_record {
        Some(p) => p.clone(),
        None => {
            let p = sidecar(&a.embedding, ".run.json");
            if !p.exists() {
                return Ok(None);
            }
            p
        }
    };
    let f = File::open(&path).with_context(|| format!("cannot open {}", path.display()))?;
    let v: Value = serde_json::from_reader(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))?;
    let seed = v["seeds"]["master"]
        .as_u64()
        .with_context(|| format!("{} has no master seed", path.display()))?;
    Ok(Some(Recorded {
        seed,
        link_split: v["link_split"].as_f64(),
        preset: v["preset"].as_str().unwrap_or("unknown").to_owned(),
    }))
}

pub fn run(a: &EvalArgs) -> Result<()> {
    if a.task == Task::Lp && a.labels.is_some() {
        bail!("--labels only applies to --task nc");
    }
    let started = Instant::now();
    let rec = recorded(a)?;
    let seed = a.seed.or(rec.as_ref().map(|r| r.seed)).unwrap_or(0);
    let m = input::read_embedding(&a.embedding)?;
    if let Some(d) = a.dim {
        if d != m.dim() {
            bail!("embedding has dimension {} but {d} was requested", m.dim());
        }
    }
    let loaded = input::load_graph(&a.input, a.format, a.directed)?;
    let logreg = LogRegConfig {
        seed: derive_seed(seed, stream::EVAL),
        ..LogRegConfig::default()
    };

    let mut record = MetricsRecord {
        task: match a.task {
            Task::Lp => "link_prediction",
            Task::Nc => "node_classification",
        }
        .to_owned(),
        graph: a.input.display().to_string(),
        preset: rec.as_ref().map_or_else(|| "unknown".to_owned(), |r| r.preset.clone()),
        seed,
        auc: None,
        micro_f1: None,
        macro_f1: None,
        wall_seconds: 0.0,
    };

    match a.task {
        Task::Lp => {
            let fraction = match (a.link_split, &rec) {
                (Some(f), _) => f,
                (None, Some(Recorded { link_split: Some(f), .. })) => *f,
                (None, Some(_)) => bail!("the embedding was trained on the whole graph; embed with --link-split"),
                (None, None) => 0.2,
            };
            let split = split_link_pred(&loaded.graph, fraction, derive_seed(seed, stream::SPLIT))?;
            if split.train.vertex_count() != m.rows() {
                bail!(
                    "embedding has {} rows but the train graph has {} vertices",
                    m.rows(),
                    split.train.vertex_count()
                );
            }
            record.auc = Some(eval_link_prediction(&m, &split, &logreg)?);
        }
        Task::Nc => {
            let ids_path = sidecar(&a.embedding, ".ids");
            let ids = if ids_path.exists() {
                input::read_ids(&ids_path)?
            } else {
                loaded.original_ids.clone()
            };
            if ids.len() != m.rows() {
                bail!("{} ids for {} embedding rows", ids.len(), m.rows());
            }
            let index: HashMap<u64, VertexId> = ids.iter().enumerate().map(|(r, &id)| (id, r as VertexId)).collect();
            let path = a.labels.as_ref().expect("required by clap");
            let src = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
            let labels = match a.label_format {
                LabelFormat::Pairs => NodeLabels::read_pairs(src, &index, m.rows()),
                LabelFormat::Communities => NodeLabels::read_communities(src, &index, m.rows()),
            }?;
            let cfg = NodeClassConfig {
                labeled_fraction: a.labeled,
                top_labels: a.top_labels,
                threads: a.threads.unwrap_or_else(crate::default_threads),
                logreg,
            };
            let report = eval_node_classification(&m, &labels, &cfg)?;
            record.micro_f1 = Some(report.micro_f1);
            record.macro_f1 = Some(report.macro_f1);
        }
    }

    record.wall_seconds = started.elapsed().as_secs_f64();
    let line = serde_json::to_string(&record)?;
    println!("{line}");
    if let Some(path) = &a.metrics {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .with_context(|| format!("cannot open {}", path.display()))?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}
