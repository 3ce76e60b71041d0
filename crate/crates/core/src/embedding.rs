//! Dense row-major embedding matrices and their on-disk formats.
//!
//! The binary format is a 20-byte little-endian header (`GEMB`, version
//! `u32`, row count `u64`, dimension `u32`) followed by the rows as `f32`.

use std::io::{BufRead, Read, Write};
use std::sync::atomic::{AtomicU32, Ordering};

use rand::Rng;

use crate::coarsening::LevelMapping;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GEMB";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            rows,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn from_vec(rows: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * dim {
            return Err(Error::Format(format!(
                "{} values for a {rows} x {dim} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, dim, data })
    }

    /// Entries drawn uniformly from `[-0.5/d, 0.5/d]`.
    pub fn random<R: Rng + ?Sized>(rows: usize, dim: usize, rng: &mut R) -> Self {
        let half = 0.5 / dim as f32;
        let data = (0..rows * dim).map(|_| rng.gen_range(-half..=half)).collect();
        Self { rows, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f32] {
        &mut self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Fine row `v` becomes a copy of coarse row `mapping[v]`.
    pub fn expand(&self, mapping: &LevelMapping) -> Result<Self> {
        if mapping.coarse_count() != self.rows {
            return Err(Error::Index(format!(
                "mapping targets {} super vertices but the matrix has {} rows",
                mapping.coarse_count(),
                self.rows
            )));
        }
        let mut data = Vec::with_capacity(mapping.fine_count() * self.dim);
        for &c in mapping.map() {
            if c as usize >= self.rows {
                return Err(Error::Index(format!("mapping entry {c} out of range")));
            }
            data.extend_from_slice(self.row(c as usize));
        }
        Ok(Self {
            rows: mapping.fine_count(),
            dim: self.dim,
            data,
        })
    }

    /// Lock-free shared view for concurrent training.
    pub(crate) fn shared(&mut self) -> SharedRows<'_> {
        SharedRows::new(&mut self.data, self.dim)
    }

    pub fn write_binary<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&(self.rows as u64).to_le_bytes())?;
        let dim = u32::try_from(self.dim).map_err(|_| Error::Capacity("dimension exceeds u32".into()))?;
        out.write_all(&dim.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.dim * 4);
        for r in 0..self.rows {
            buf.clear();
            buf.extend(self.row(r).iter().flat_map(|x| x.to_le_bytes()));
            out.write_all(&buf)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut src: R) -> Result<Self> {
        let mut head = [0u8; 20];
        src.read_exact(&mut head)?;
        if &head[0..4] != MAGIC {
            return Err(Error::Format("not an embedding file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported embedding version {version}")));
        }
        let rows = u64::from_le_bytes(head[8..16].try_into().unwrap());
        let dim = u32::from_le_bytes(head[16..20].try_into().unwrap()) as usize;
        let rows = usize::try_from(rows).map_err(|_| Error::Capacity("row count exceeds usize".into()))?;
        let count = rows
            .checked_mul(dim)
            .ok_or_else(|| Error::Capacity("embedding too large".into()))?;
        let mut bytes = Vec::new();
        src.read_to_end(&mut bytes)?;
        if bytes.len() != count * 4 {
            return Err(Error::Format(format!(
                "expected {} payload bytes, found {}",
                count * 4,
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { rows, dim, data })
    }

    /// One line per row: `v f_0 … f_{d-1}`.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.rows {
            write!(out, "{r}")?;
            for x in self.row(r) {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(src: R) -> Result<Self> {
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::new();
        for (i, line) in src.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse { line: i + 1, msg };
            let mut tokens = line.split_whitespace();
            let id: usize = tokens
                .next()
                .unwrap()
                .parse()
                .map_err(|e| parse_err(format!("row id: {e}")))?;
            let values = tokens
                .map(|t| t.parse::<f32>().map_err(|e| parse_err(format!("{t:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            rows.push((id, values));
        }
        rows.sort_by_key(|r| r.0);
        let dim = rows.first().map_or(0, |r| r.1.len());
        let mut data = Vec::with_capacity(rows.len() * dim);
        for (expect, (id, values)) in rows.into_iter().enumerate() {
            if id != expect || values.len() != dim {
                return Err(Error::Format(format!("row {id} is missing, duplicated or ragged")));
            }
            data.extend(values);
        }
        Self::from_vec(data.len() / dim.max(1), dim, data)
    }
}

/// Row view whose entries may be read and written from several threads
/// without locks. Every access is a relaxed atomic load or store, so racing
/// updates lose writes but never tear a value.
#[derive(Clone, Copy)]
pub(crate) struct SharedRows<'a> {
    cells: &'a [AtomicU32],
    dim: usize,
}

impl<'a> SharedRows<'a> {
    pub(crate) fn new(data: &'a mut [f32], dim: usize) -> Self {
        // SAFETY: AtomicU32 has the size and alignment of u32 and f32, and
        // the exclusive borrow guarantees no other non-atomic access while
        // the view is alive.
        let cells = unsafe { &*(data as *mut [f32] as *const [AtomicU32]) };
        Self { cells, dim }
    }

    pub(crate) fn from_cells(cells: &'a [AtomicU32], dim: usize) -> Self {
        Self { cells, dim }
    }

    #[inline]
    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub(crate) fn rows(&self) -> usize {
        self.cells.len() / self.dim.max(1)
    }

    #[inline]
    fn cells(&self, r: usize) -> &'a [AtomicU32] {
        &self.cells[r * self.dim..(r + 1) * self.dim]
    }

    pub(crate) fn load_row(&self, r: usize, out: &mut [f32]) {
        for (o, c) in out.iter_mut().zip(self.cells(r)) {
            *o = f32::from_bits(c.load(Ordering::Relaxed));
        }
    }

    pub(crate) fn store_row(&self, r: usize, src: &[f32]) {
        for (x, c) in src.iter().zip(self.cells(r)) {
            c.store(x.to_bits(), Ordering::Relaxed);
        }
    }

    /// One logistic update of `row` against the local source vector `v`.
    /// `v` is advanced with the pre-update sample row; the sample row with
    /// the pre-update `v`.
    #[inline]
    pub(crate) fn update_against(&self, v: &mut [f32], row: usize, label: f32, lr: f32) {
        let cells = self.cells(row);
        let mut dot = 0f32;
        for (x, c) in v.iter().zip(cells) {
            dot += x * f32::from_bits(c.load(Ordering::Relaxed));
        }
        let score = (label - sigmoid(dot)) * lr;
        for (x, c) in v.iter_mut().zip(cells) {
            let s = f32::from_bits(c.load(Ordering::Relaxed));
            c.store((s + *x * score).to_bits(), Ordering::Relaxed);
            *x += s * score;
        }
    }
}

#[inline]
pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}
