//! CSR adjacency storage, edge-list ingestion and the binary CSR cache.
//!
//! Undirected graphs keep every edge in both directions, so degrees and
//! densities are always computed over directed edge slots.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};

pub type VertexId = u32;

const CSR_MAGIC: &[u8; 4] = b"GCSR";
const CSR_VERSION: u32 = 1;

/// Compressed sparse row adjacency of one graph (or one coarsening level).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<VertexId>,
    directed: bool,
}

impl Graph {
    /// Builds a graph from raw CSR arrays, checking every structural invariant.
    /// Neighbor slices must be strictly ascending (canonical CSR form).
    pub fn from_csr(offsets: Vec<usize>, neighbors: Vec<VertexId>, directed: bool) -> Result<Self> {
        validate_csr(&offsets, &neighbors)?;
        Ok(Self {
            offsets,
            neighbors,
            directed,
        })
    }

    /// Caller guarantees strictly ascending, loop-free neighbor slices.
    pub(crate) fn from_csr_unchecked(
        offsets: Vec<usize>,
        neighbors: Vec<VertexId>,
        directed: bool,
    ) -> Self {
        debug_assert!(validate_csr(&offsets, &neighbors).is_ok());
        Self {
            offsets,
            neighbors,
            directed,
        }
    }

    /// Builds a graph over `vertex_count` vertices. Self-loops are dropped,
    /// duplicates removed and undirected edges mirrored.
    pub fn from_edges<I>(vertex_count: usize, edges: I, directed: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (VertexId, VertexId)>,
    {
        if vertex_count > VertexId::MAX as usize {
            return Err(Error::Capacity(format!(
                "{vertex_count} vertices do not fit 32-bit ids"
            )));
        }
        let edges: Vec<(VertexId, VertexId)> = edges.into_iter().filter(|(u, v)| u != v).collect();
        let mut degree = vec![0usize; vertex_count + 1];
        for &(u, v) in &edges {
            if u as usize >= vertex_count || v as usize >= vertex_count {
                return Err(Error::Index(format!(
                    "edge ({u}, {v}) outside {vertex_count} vertices"
                )));
            }
            degree[u as usize] += 1;
            if !directed {
                degree[v as usize] += 1;
            }
        }
        let mut offsets = vec![0usize; vertex_count + 1];
        for v in 0..vertex_count {
            offsets[v + 1] = offsets[v] + degree[v];
        }
        let mut cursor = offsets.clone();
        let mut neighbors = vec![0 as VertexId; offsets[vertex_count]];
        for &(u, v) in &edges {
            neighbors[cursor[u as usize]] = v;
            cursor[u as usize] += 1;
            if !directed {
                neighbors[cursor[v as usize]] = u;
                cursor[v as usize] += 1;
            }
        }
        drop(edges);

        // sort + dedup each slice, compacting in place
        let mut write = 0usize;
        let mut start = 0usize;
        for v in 0..vertex_count {
            let end = offsets[v + 1];
            let slice = &mut neighbors[start..end];
            slice.sort_unstable();
            let mut last: Option<VertexId> = None;
            let begin = write;
            for i in start..end {
                let x = neighbors[i];
                if last != Some(x) {
                    neighbors[write] = x;
                    write += 1;
                    last = Some(x);
                }
            }
            start = end;
            offsets[v] = begin;
        }
        offsets[vertex_count] = write;
        neighbors.truncate(write);
        neighbors.shrink_to_fit();
        Ok(Self::from_csr_unchecked(offsets, neighbors, directed))
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of directed edge slots (twice the edge count for undirected graphs).
    #[inline]
    pub fn edge_slots(&self) -> usize {
        self.neighbors.len()
    }

    /// Number of logical edges: slots for directed graphs, slots / 2 otherwise.
    pub fn edge_count(&self) -> usize {
        if self.directed {
            self.neighbors.len()
        } else {
            self.neighbors.len() / 2
        }
    }

    #[inline]
    pub fn is_directed(&self) -> bool {
        self.directed
    }

    #[inline]
    pub fn degree(&self, v: VertexId) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    #[inline]
    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        let v = v as usize;
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn neighbor_array(&self) -> &[VertexId] {
        &self.neighbors
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Logical edges; undirected edges are reported once as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        let directed = self.directed;
        (0..self.vertex_count() as VertexId).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| directed || u < v)
                .map(move |v| (u, v))
        })
    }

    /// Bytes held by the CSR arrays.
    pub fn memory_bytes(&self) -> u64 {
        (self.offsets.len() * std::mem::size_of::<u64>()
            + self.neighbors.len() * std::mem::size_of::<VertexId>()) as u64
    }

    fn is_symmetric(&self) -> bool {
        (0..self.vertex_count() as VertexId)
            .all(|u| self.neighbors(u).iter().all(|&v| self.has_edge(v, u)))
    }
}

fn validate_csr(offsets: &[usize], neighbors: &[VertexId]) -> Result<()> {
    let bad = |m: String| Err(Error::Format(m));
    if offsets.is_empty() {
        return bad("offsets must have length |V|+1".into());
    }
    if offsets[0] != 0 {
        return bad("offsets[0] != 0".into());
    }
    if *offsets.last().unwrap() != neighbors.len() {
        return bad("offsets[|V|] != |E|".into());
    }
    let n = offsets.len() - 1;
    if n > VertexId::MAX as usize {
        return Err(Error::Capacity("vertex count exceeds 32-bit ids".into()));
    }
    for v in 0..n {
        if offsets[v] > offsets[v + 1] {
            return bad(format!("offsets decrease at vertex {v}"));
        }
        let slice = &neighbors[offsets[v]..offsets[v + 1]];
        for (i, &u) in slice.iter().enumerate() {
            if u as usize >= n {
                return bad(format!("neighbor {u} of {v} out of range"));
            }
            if u as usize == v {
                return bad(format!("self-loop at {v}"));
            }
            if i > 0 && slice[i - 1] >= u {
                return bad(format!("neighbors of {v} not strictly ascending (duplicate or unsorted)"));
            }
        }
    }
    Ok(())
}

/// Edge-slot density `|E| / |V|`.
pub fn density(g: &Graph) -> Result<f64> {
    if g.vertex_count() == 0 {
        return Err(Error::Domain("density of an empty graph".into()));
    }
    Ok(g.edge_slots() as f64 / g.vertex_count() as f64)
}

/// A graph read from text together with its dense-id → input-id table.
#[derive(Clone, Debug)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// `original_ids[v]` is the id vertex `v` carried in the input.
    pub original_ids: Vec<u64>,
}

/// Reads whitespace separated `u v` pairs; `#` starts a comment line.
///
/// Input ids are remapped to dense 0-based ids by ascending value, so inputs
/// that already use `0..n` keep their ids.
pub fn load_edge_list<R: BufRead>(source: R, directed: bool) -> Result<LoadedGraph> {
    let mut raw: Vec<(u64, u64)> = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected two vertex ids, got {trimmed:?}"),
            });
        };
        raw.push((parse_id(a, lineno)?, parse_id(b, lineno)?));
    }

    let mut ids: Vec<u64> = raw.iter().flat_map(|&(u, v)| [u, v]).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() > VertexId::MAX as usize {
        return Err(Error::Capacity(format!(
            "{} distinct vertices do not fit 32-bit ids",
            ids.len()
        )));
    }
    let dense = |x: u64| ids.binary_search(&x).expect("id collected above") as VertexId;
    let edges: Vec<(VertexId, VertexId)> = raw.iter().map(|&(u, v)| (dense(u), dense(v))).collect();
    drop(raw);
    let graph = Graph::from_edges(ids.len(), edges, directed)?;
    Ok(LoadedGraph {
        graph,
        original_ids: ids,
    })
}

fn parse_id(token: &str, line: usize) -> Result<u64> {
    use std::num::IntErrorKind;
    token.parse::<u64>().map_err(|e| match e.kind() {
        IntErrorKind::PosOverflow => {
            Error::Capacity(format!("line {line}: vertex id {token} overflows the id width"))
        }
        _ => Error::Parse {
            line,
            msg: format!("malformed vertex id {token:?}"),
        },
    })
}

/// Writes logical edges as `u v` lines.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    for (u, v) in g.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

/// Writes the dense-id → input-id table, one input id per line.
pub fn write_id_map<W: Write>(ids: &[u64], mut out: W) -> Result<()> {
    for id in ids {
        writeln!(out, "{id}")?;
    }
    Ok(())
}

/// Binary CSR cache: `GCSR`, version u32, |V| u64, |E| u64, offsets u64 × (|V|+1),
/// neighbors u32 × |E|, all little-endian.
pub fn write_csr<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    out.write_all(CSR_MAGIC)?;
    out.write_all(&CSR_VERSION.to_le_bytes())?;
    out.write_all(&(g.vertex_count() as u64).to_le_bytes())?;
    out.write_all(&(g.edge_slots() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(g.offsets.len() * 8 + g.neighbors.len() * 4);
    for &o in &g.offsets {
        buf.extend_from_slice(&(o as u64).to_le_bytes());
    }
    for &x in &g.neighbors {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads a `GCSR` cache. The format carries no direction flag; a symmetric
/// adjacency is reported as undirected.
pub fn read_csr<R: Read>(mut input: R) -> Result<Graph> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CSR_MAGIC {
        return Err(Error::Format("bad CSR magic".into()));
    }
    let version = read_u32(&mut input)?;
    if version != CSR_VERSION {
        return Err(Error::Format(format!("unsupported CSR version {version}")));
    }
    let n = read_u64(&mut input)? as usize;
    let m = read_u64(&mut input)? as usize;
    let mut bytes = vec![0u8; (n + 1) * 8];
    input.read_exact(&mut bytes)?;
    let offsets: Vec<usize> = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let mut bytes = vec![0u8; m * 4];
    input.read_exact(&mut bytes)?;
    let neighbors: Vec<VertexId> = bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut g = Graph::from_csr(offsets, neighbors, true)?;
    g.directed = !g.is_symmetric();
    Ok(g)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}
