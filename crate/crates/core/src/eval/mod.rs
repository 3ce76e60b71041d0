//! Downstream evaluation of embeddings: link prediction scored by AUCROC and
//! multi-label node classification scored by Micro/Macro-F1.

mod logreg;
mod metrics;

pub use logreg::{train_logreg, LogRegConfig, LogRegModel};
pub use metrics::{auc_roc, micro_macro_f1, Counts};

use std::collections::HashMap;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::graph::VertexId;
use crate::rng::rng_for;
use crate::split::LinkPredSplit;

/// Componentwise product of rows `u` and `v`.
pub fn hadamard_features(m: &EmbeddingMatrix, u: VertexId, v: VertexId) -> Vec<f32> {
    let mut out = vec![0f32; m.dim()];
    hadamard_into(m, u, v, &mut out);
    out
}

fn hadamard_into(m: &EmbeddingMatrix, u: VertexId, v: VertexId, out: &mut [f32]) {
    for ((o, a), b) in out.iter_mut().zip(m.row(u as usize)).zip(m.row(v as usize)) {
        *o = a * b;
    }
}

fn pair_features(m: &EmbeddingMatrix, pairs: &[(VertexId, VertexId)]) -> Vec<f32> {
    let d = m.dim();
    let mut out = vec![0f32; pairs.len() * d];
    for (row, &(u, v)) in out.chunks_exact_mut(d).zip(pairs) {
        hadamard_into(m, u, v, row);
    }
    out
}

/// AUCROC of a classifier trained on `|E_train|` train edges and as many
/// uniform non-edges of the train graph, scored on the held-out pairs.
pub fn eval_link_prediction(m: &EmbeddingMatrix, split: &LinkPredSplit, cfg: &LogRegConfig) -> Result<f64> {
    let g = &split.train;
    if m.rows() != g.vertex_count() {
        return Err(Error::Index(format!(
            "embedding has {} rows but the train graph has {} vertices",
            m.rows(),
            g.vertex_count()
        )));
    }
    if split.test_pos.is_empty() || split.test_neg.is_empty() {
        return Err(Error::Domain("no test pairs to score".into()));
    }
    let positives: Vec<(VertexId, VertexId)> = g.edges().collect();
    let n = g.vertex_count() as VertexId;
    let mut rng = rng_for(cfg.seed, 1);
    let mut pairs = positives.clone();
    let mut drawn = 0;
    while drawn < positives.len() {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if !g.has_edge(a, b) {
            pairs.push((a, b));
            drawn += 1;
        }
    }
    let mut labels = vec![true; positives.len()];
    labels.resize(pairs.len(), false);
    let model = train_logreg(&pair_features(m, &pairs), m.dim(), &labels, cfg)?;

    let test: Vec<(VertexId, VertexId)> = split.test_pos.iter().chain(&split.test_neg).copied().collect();
    let mut truth = vec![true; split.test_pos.len()];
    truth.resize(test.len(), false);
    let feats = pair_features(m, &test);
    let scores: Vec<f64> = feats.chunks_exact(m.dim()).map(|x| model.decision(x)).collect();
    auc_roc(&scores, &truth)
}

/// Label sets per vertex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeLabels {
    pub labels: Vec<Vec<u32>>,
}

impl NodeLabels {
    /// Reads `vertex label` lines (a vertex may appear on several lines).
    /// `vertex_ids` translates file ids to dense ids; unknown vertices are skipped.
    pub fn read_pairs<R: BufRead>(src: R, vertex_ids: &HashMap<u64, VertexId>, n: usize) -> Result<Self> {
        let mut labels = vec![Vec::new(); n];
        for (i, line) in src.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |t: Option<&str>| -> Result<u64> {
                t.ok_or_else(|| Error::Parse {
                    line: i + 1,
                    msg: "expected `vertex label`".into(),
                })?
                .parse()
                .map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("{e}"),
                })
            };
            let mut tokens = line.split_whitespace();
            let v = parse(tokens.next())?;
            let l = parse(tokens.next())?;
            let l = u32::try_from(l).map_err(|_| Error::Capacity(format!("label {l} exceeds u32")))?;
            if let Some(&dense) = vertex_ids.get(&v) {
                labels[dense as usize].push(l);
            }
        }
        Ok(Self::finish(labels))
    }

    /// Reads community lists: line `k` holds the members of label `k`.
    pub fn read_communities<R: BufRead>(src: R, vertex_ids: &HashMap<u64, VertexId>, n: usize) -> Result<Self> {
        let mut labels = vec![Vec::new(); n];
        let mut community = 0u32;
        for (i, line) in src.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            for t in line.split_whitespace() {
                let v: u64 = t.parse().map_err(|e| Error::Parse {
                    line: i + 1,
                    msg: format!("{t:?}: {e}"),
                })?;
                if let Some(&dense) = vertex_ids.get(&v) {
                    labels[dense as usize].push(community);
                }
            }
            community += 1;
        }
        Ok(Self::finish(labels))
    }

    fn finish(mut labels: Vec<Vec<u32>>) -> Self {
        for l in labels.iter_mut() {
            l.sort_unstable();
            l.dedup();
        }
        Self { labels }
    }

    /// Keeps only the `top` most frequent labels (ties by smaller label).
    pub fn truncate_to_top(&self, top: usize) -> Self {
        let mut freq: HashMap<u32, usize> = HashMap::new();
        for l in self.labels.iter().flatten() {
            *freq.entry(*l).or_default() += 1;
        }
        let mut ranked: Vec<(u32, usize)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        ranked.truncate(top);
        let keep: HashMap<u32, ()> = ranked.into_iter().map(|(l, _)| (l, ())).collect();
        Self {
            labels: self
                .labels
                .iter()
                .map(|ls| ls.iter().copied().filter(|l| keep.contains_key(l)).collect())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeClassConfig {
    pub labeled_fraction: f64,
    pub top_labels: usize,
    pub threads: usize,
    pub logreg: LogRegConfig,
}

impl Default for NodeClassConfig {
    fn default() -> Self {
        Self {
            labeled_fraction: 0.1,
            top_labels: 100,
            threads: 1,
            logreg: LogRegConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeClassReport {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub labels_scored: usize,
    /// Labels left out of the Macro average for lack of labeled positives.
    pub labels_excluded: Vec<u32>,
    pub train_vertices: usize,
    pub test_vertices: usize,
}

/// One-vs-rest classification on the vertices carrying at least one of the
/// `top_labels` most frequent labels. A `labeled_fraction` of them trains
/// one classifier per label; each test vertex is assigned its `k`
/// highest-scoring labels, `k` being its true label count.
pub fn eval_node_classification(m: &EmbeddingMatrix, labels: &NodeLabels, cfg: &NodeClassConfig) -> Result<NodeClassReport> {
    if labels.labels.len() != m.rows() {
        return Err(Error::Index(format!(
            "{} labeled vertices for {} embedding rows",
            labels.labels.len(),
            m.rows()
        )));
    }
    if !(cfg.labeled_fraction > 0.0 && cfg.labeled_fraction < 1.0) {
        return Err(Error::Config("labeled fraction must lie in (0, 1)".into()));
    }
    let labels = labels.truncate_to_top(cfg.top_labels);
    let mut universe: Vec<u32> = labels.labels.iter().flatten().copied().collect();
    universe.sort_unstable();
    universe.dedup();
    let mut vertices: Vec<VertexId> = (0..m.rows() as VertexId)
        .filter(|&v| !labels.labels[v as usize].is_empty())
        .collect();
    vertices.shuffle(&mut rng_for(cfg.logreg.seed, 2));
    let n_train = ((cfg.labeled_fraction * vertices.len() as f64).round() as usize).clamp(1, vertices.len().max(1));
    if vertices.len() < 2 || n_train >= vertices.len() {
        return Err(Error::Domain("too few labeled vertices to split".into()));
    }
    let (train, test) = vertices.split_at(n_train);
    let d = m.dim();
    let train_x: Vec<f32> = train.iter().flat_map(|&v| m.row(v as usize).iter().copied()).collect();

    // per label: None when the training set lacks one of the classes
    let fit = |label: u32| -> Result<Option<LogRegModel>> {
        let y: Vec<bool> = train
            .iter()
            .map(|&v| labels.labels[v as usize].binary_search(&label).is_ok())
            .collect();
        let pos = y.iter().filter(|&&b| b).count();
        if pos == 0 || pos == y.len() {
            return Ok(None);
        }
        train_logreg(&train_x, d, &y, &cfg.logreg).map(Some)
    };
    let threads = cfg.threads.clamp(1, universe.len().max(1));
    let models: Vec<Option<LogRegModel>> = if threads == 1 {
        universe.iter().map(|&l| fit(l)).collect::<Result<_>>()?
    } else {
        let chunk = universe.len().div_ceil(threads);
        std::thread::scope(|s| {
            let handles: Vec<_> = universe
                .chunks(chunk)
                .map(|ls| s.spawn(|| ls.iter().map(|&l| fit(l)).collect::<Result<Vec<_>>>()))
                .collect();
            let mut all = Vec::with_capacity(universe.len());
            for h in handles {
                all.extend(h.join().expect("classifier thread panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };

    let excluded: Vec<u32> = universe
        .iter()
        .zip(&models)
        .filter(|(_, m)| m.is_none())
        .map(|(&l, _)| l)
        .collect();
    if !excluded.is_empty() {
        log::warn!(
            "{} labels lack labeled positives or negatives and are left out of Macro-F1",
            excluded.len()
        );
    }
    let mut counts = vec![Counts::default(); universe.len()];
    let mut scored: Vec<(f64, usize)> = Vec::with_capacity(universe.len());
    for &v in test {
        let x = m.row(v as usize);
        scored.clear();
        for (i, model) in models.iter().enumerate() {
            if let Some(model) = model {
                scored.push((model.decision(x), i));
            }
        }
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let truth = &labels.labels[v as usize];
        let k = truth.len();
        let mut predicted = vec![false; universe.len()];
        for &(_, i) in scored.iter().take(k) {
            predicted[i] = true;
        }
        for (i, &label) in universe.iter().enumerate() {
            let actual = truth.binary_search(&label).is_ok();
            match (predicted[i], actual) {
                (true, true) => counts[i].tp += 1,
                (true, false) => counts[i].fp += 1,
                (false, true) => counts[i].fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let (micro_f1, _) = micro_macro_f1(&counts);
    let kept: Vec<Counts> = counts
        .iter()
        .zip(&models)
        .filter(|(_, m)| m.is_some())
        .map(|(c, _)| *c)
        .collect();
    let (_, macro_f1) = micro_macro_f1(&kept);
    Ok(NodeClassReport {
        micro_f1,
        macro_f1,
        labels_scored: kept.len(),
        labels_excluded: excluded,
        train_vertices: train.len(),
        test_vertices: test.len(),
    })
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub task: String,
    pub graph: String,
    pub preset: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub micro_f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    pub wall_seconds: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hadamard_examples() {
        let m = EmbeddingMatrix::from_vec(3, 2, vec![2.0, 3.0, 1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(hadamard_features(&m, 0, 0), [4.0, 9.0]);
        assert_eq!(hadamard_features(&m, 1, 2), [3.0, -8.0]);
        let z = EmbeddingMatrix::from_vec(2, 2, vec![5.0, 6.0, 0.0, 0.0]).unwrap();
        assert_eq!(hadamard_features(&z, 0, 1), [0.0, 0.0]);
    }

    #[test]
    fn top_label_truncation() {
        let labels = NodeLabels {
            labels: vec![vec![1, 2], vec![2], vec![3], vec![2, 3]],
        };
        let top = labels.truncate_to_top(2);
        assert_eq!(top.labels, vec![vec![2], vec![2], vec![3], vec![2, 3]]);
    }

    #[test]
    fn one_hot_labels_are_perfect() {
        let n = 200;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for v in 0..n {
            let l = v % 4;
            for k in 0..4 {
                data.push(if k == l { 1.0 } else { 0.0 });
            }
            labels.push(vec![l as u32]);
        }
        let m = EmbeddingMatrix::from_vec(n, 4, data).unwrap();
        let cfg = NodeClassConfig {
            labeled_fraction: 0.3,
            threads: 2,
            ..Default::default()
        };
        let r = eval_node_classification(&m, &NodeLabels { labels }, &cfg).unwrap();
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.macro_f1, 1.0);
    }

    #[test]
    fn community_reader() {
        let ids: HashMap<u64, VertexId> = [(10, 0), (20, 1), (30, 2)].into_iter().collect();
        let l = NodeLabels::read_communities("10 20\n# c\n20 30 99\n".as_bytes(), &ids, 3).unwrap();
        assert_eq!(l.labels, vec![vec![0], vec![0, 1], vec![1]]);
        let p = NodeLabels::read_pairs("10 5\n10 5\n30 7\n".as_bytes(), &ids, 3).unwrap();
        assert_eq!(p.labels, vec![vec![5], vec![], vec![7]]);
    }

    #[test]
    fn metrics_record_json() {
        let r = MetricsRecord {
            task: "lp".into(),
            graph: "g".into(),
            preset: "fast".into(),
            seed: 1,
            auc: Some(0.9),
            micro_f1: None,
            macro_f1: None,
            wall_seconds: 1.5,
        };
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"task":"lp","graph":"g","preset":"fast","seed":1,"auc":0.9,"wall_seconds":1.5}"#
        );
    }
}
