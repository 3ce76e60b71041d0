use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use anyhow::{bail, Context, Result};
use mlembed::graph::{read_csr, write_id_map};
use mlembed::{load_edge_list, EmbeddingMatrix, LoadedGraph};

use crate::GraphFormat;

const CSR_MAGIC: &[u8; 4] = b"GCSR";
const GEMB_MAGIC: &[u8; 4] = b"GEMB";

fn starts_with(path: &Path, magic: &[u8; 4]) -> Result<bool> {
    let mut head = [0u8; 4];
    let mut f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut filled = 0;
    while filled < 4 {
        match f.read(&mut head[filled..])? {
            0 => break,
            k => filled += k,
        }
    }
    Ok(filled == 4 && &head == magic)
}

/// Loads a graph as an edge list or a CSR cache. CSR files carry dense ids,
/// which are reported as their own input ids.
pub fn load_graph(path: &Path, format: GraphFormat, directed: bool) -> Result<LoadedGraph> {
    let csr = match format {
        GraphFormat::Auto => starts_with(path, CSR_MAGIC)?,
        GraphFormat::Csr => true,
        GraphFormat::EdgeList => false,
    };
    let reader = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    if csr {
        let graph = read_csr(reader).with_context(|| format!("reading {}", path.display()))?;
        if directed && !graph.is_directed() {
            bail!("--directed given but {} holds a symmetric adjacency", path.display());
        }
        let original_ids = (0..graph.vertex_count() as u64).collect();
        Ok(LoadedGraph { graph, original_ids })
    } else {
        load_edge_list(reader, directed).with_context(|| format!("reading {}", path.display()))
    }
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix> {
    let binary = starts_with(path, GEMB_MAGIC)?;
    let reader = BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?);
    let m = if binary {
        EmbeddingMatrix::read_binary(reader)
    } else {
        EmbeddingMatrix::read_text(reader)
    };
    m.with_context(|| format!("reading embedding {}", path.display()))
}

pub fn write_ids(path: &Path, ids: &[u64]) -> Result<()> {
    let out = std::io::BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?);
    write_id_map(ids, out)?;
    Ok(())
}

pub fn read_ids(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse()
                .with_context(|| format!("{}:{}: malformed id", path.display(), i + 1))
        })
        .collect()
}
