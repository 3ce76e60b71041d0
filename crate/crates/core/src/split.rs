//! Train/test preparation for link prediction.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::rng::Rng;

/// A link-prediction split. All vertex ids in `test_pos` / `test_neg` refer
/// to `train`, which has isolated vertices removed.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkPredSplit {
    pub train: Graph,
    /// `train_to_original[t]` is the id of train vertex `t` in the input graph.
    pub train_to_original: Vec<VertexId>,
    pub test_pos: Vec<(VertexId, VertexId)>,
    pub test_neg: Vec<(VertexId, VertexId)>,
    /// Test edges drawn before the endpoint filter.
    pub test_drawn: usize,
}

/// Holds out `test_fraction` of the edges (uniformly, seeded), drops the
/// vertices isolated in the remaining train graph and the test edges that
/// touch them, then draws one uniform non-edge per surviving test edge.
///
/// Non-edges are taken from `V_train × V_train` minus the input edge set;
/// the diagonal is included since the graph has no self-loops.
pub fn split_link_pred(g: &Graph, test_fraction: f64, seed: u64) -> Result<LinkPredSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let mut edges: Vec<(VertexId, VertexId)> = g.edges().collect();
    edges.shuffle(&mut rng);
    let test_count = (test_fraction * edges.len() as f64).round() as usize;
    let (test, train) = edges.split_at(test_count.min(edges.len()));
    if train.is_empty() {
        return Err(Error::Split(format!(
            "no train edges left out of {} edges",
            edges.len()
        )));
    }

    let n = g.vertex_count();
    let mut present = vec![false; n];
    for &(u, v) in train {
        present[u as usize] = true;
        present[v as usize] = true;
    }
    let mut to_train = vec![VertexId::MAX; n];
    let mut train_to_original = Vec::new();
    for v in 0..n {
        if present[v] {
            to_train[v] = train_to_original.len() as VertexId;
            train_to_original.push(v as VertexId);
        }
    }
    let train_graph = Graph::from_edges(
        train_to_original.len(),
        train
            .iter()
            .map(|&(u, v)| (to_train[u as usize], to_train[v as usize])),
        g.is_directed(),
    )?;

    let test_pos: Vec<(VertexId, VertexId)> = test
        .iter()
        .filter(|&&(u, v)| present[u as usize] && present[v as usize])
        .map(|&(u, v)| (to_train[u as usize], to_train[v as usize]))
        .collect();

    let nt = train_to_original.len() as VertexId;
    let mut test_neg = Vec::with_capacity(test_pos.len());
    while test_neg.len() < test_pos.len() {
        let a = rng.gen_range(0..nt);
        let b = rng.gen_range(0..nt);
        let (oa, ob) = (train_to_original[a as usize], train_to_original[b as usize]);
        if !g.has_edge(oa, ob) {
            test_neg.push((a, b));
        }
    }

    Ok(LinkPredSplit {
        train: train_graph,
        train_to_original,
        test_pos,
        test_neg,
        test_drawn: test.len(),
    })
}
