//! Synthetic graphs for tests, benchmarks and desk-scale experiments.

use rand::Rng as _;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::graph::{Graph, VertexId};
use crate::rng::Rng;

/// Block of vertex `v` in [`planted_partition`]: contiguous equal blocks.
pub fn planted_block(v: usize, n: usize, blocks: usize) -> usize {
    v * blocks / n
}

/// Undirected planted-partition graph. Each vertex draws `avg_degree / 2`
/// edge endpoints; each lands inside its own block with probability
/// `intra_fraction` and anywhere otherwise.
pub fn planted_partition(
    n: usize,
    blocks: usize,
    avg_degree: f64,
    intra_fraction: f64,
    seed: u64,
) -> Result<Graph> {
    if n < 2 || blocks == 0 || blocks > n {
        return Err(Error::Config(format!(
            "planted partition needs n >= 2 and 1 <= blocks <= n (n={n}, blocks={blocks})"
        )));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let per_vertex = avg_degree / 2.0;
    let mut edges = Vec::with_capacity((n as f64 * per_vertex) as usize + n);
    let block_range = |b: usize| {
        let lo = (b * n).div_ceil(blocks);
        let hi = ((b + 1) * n).div_ceil(blocks);
        (lo, hi)
    };
    for v in 0..n {
        let whole = per_vertex.floor() as usize;
        let extra = usize::from(rng.gen_bool(per_vertex.fract()));
        for _ in 0..whole + extra {
            let u = if rng.gen_bool(intra_fraction) {
                let (lo, hi) = block_range(planted_block(v, n, blocks));
                rng.gen_range(lo..hi)
            } else {
                rng.gen_range(0..n)
            };
            edges.push((v as VertexId, u as VertexId));
        }
    }
    Graph::from_edges(n, edges, false)
}

/// Undirected Chung–Lu style graph with power-law expected degrees and
/// planted communities. `mixing` is the fraction of edges whose second
/// endpoint ignores the community structure.
pub fn community_power_law(
    n: usize,
    edges: usize,
    communities: usize,
    exponent: f64,
    mixing: f64,
    seed: u64,
) -> Result<(Graph, Vec<u32>)> {
    if n < 2 || communities == 0 || communities > n || exponent <= 1.0 {
        return Err(Error::Config("invalid community power-law parameters".into()));
    }
    let mut rng = Rng::seed_from_u64(seed);
    let community: Vec<u32> = (0..n).map(|_| rng.gen_range(0..communities as u32)).collect();
    let weight = |v: usize| ((v + 1) as f64).powf(-1.0 / (exponent - 1.0));

    // global and per-community cumulative weights
    let mut global = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in 0..n {
        acc += weight(v);
        global.push(acc);
    }
    let mut members: Vec<Vec<u32>> = vec![Vec::new(); communities];
    for v in 0..n {
        members[community[v] as usize].push(v as u32);
    }
    let cumulative: Vec<Vec<f64>> = members
        .iter()
        .map(|m| {
            let mut acc = 0.0;
            m.iter()
                .map(|&v| {
                    acc += weight(v as usize);
                    acc
                })
                .collect()
        })
        .collect();
    let draw = |cum: &[f64], rng: &mut Rng| {
        let x = rng.gen::<f64>() * cum[cum.len() - 1];
        cum.partition_point(|&c| c < x).min(cum.len() - 1)
    };

    let mut list = Vec::with_capacity(edges);
    for _ in 0..edges {
        let u = draw(&global, &mut rng);
        let v = if rng.gen_bool(mixing) {
            draw(&global, &mut rng)
        } else {
            let c = community[u] as usize;
            members[c][draw(&cumulative[c], &mut rng)] as usize
        };
        list.push((u as VertexId, v as VertexId));
    }
    // relabel randomly so ids carry no degree information
    let mut perm: Vec<VertexId> = (0..n as VertexId).collect();
    use rand::seq::SliceRandom;
    perm.shuffle(&mut rng);
    let g = Graph::from_edges(
        n,
        list.into_iter().map(|(u, v)| (perm[u as usize], perm[v as usize])),
        false,
    )?;
    let mut labels = vec![0u32; n];
    for v in 0..n {
        labels[perm[v] as usize] = community[v];
    }
    Ok((g, labels))
}

/// Star `K_{1,leaves}` with the hub at id 0.
pub fn star(leaves: usize) -> Graph {
    Graph::from_edges(leaves + 1, (1..=leaves as VertexId).map(|l| (0, l)), false)
        .expect("valid star")
}

/// Cycle over `n` vertices.
pub fn ring(n: usize) -> Graph {
    Graph::from_edges(
        n,
        (0..n as VertexId).map(|v| (v, ((v as usize + 1) % n) as VertexId)),
        false,
    )
    .expect("valid ring")
}

/// Complete bipartite graph; the left side is `0..left`.
pub fn complete_bipartite(left: usize, right: usize) -> Graph {
    let edges = (0..left as VertexId)
        .flat_map(|u| (0..right as VertexId).map(move |v| (u, left as VertexId + v)));
    Graph::from_edges(left + right, edges, false).expect("valid bipartite graph")
}
