//! Vector datasets and result sets, with their bit-exact on-disk formats.
//!
//! A vector file is a 16-byte header (magic `HFVC`, version, dim, count)
//! followed by `count * dim` little-endian f32 values in row-major order.
//! A result file uses the same shape (magic `HFRS`, version, k, query_count)
//! with u32 ids as payload. Loading validates everything up front: a malformed
//! file never yields a partially constructed value.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::binfmt;
use crate::error::{Error, Result};

/// Immutable collection of `count` vectors of `dim` f32 coordinates each,
/// stored row-major. Every coordinate is finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorDataset {
    dim: usize,
    data: Vec<f32>,
}

impl VectorDataset {
    /// Wraps row-major data, validating shape and finiteness.
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                reason: format!("data length {} is not a multiple of dim {}", data.len(), dim),
            });
        }
        for (i, v) in data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: i / dim,
                    dim: i % dim,
                });
            }
        }
        Ok(VectorDataset { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(1);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::ShapeMismatch {
                    reason: format!("row {i} has {} coordinates, expected {dim}", r.len()),
                });
            }
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Splits off the rows from `row` onward into a second dataset.
    pub fn split_off(&mut self, row: usize) -> VectorDataset {
        let tail = self.data.split_off(row * self.dim);
        VectorDataset {
            dim: self.dim,
            data: tail,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_header(
            w,
            binfmt::MAGIC_VECTORS,
            self.dim as u32,
            self.count() as u32,
        )?;
        binfmt::write_f32_slice(w, &self.data)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let ds = Self::read_from(&mut r, path)?;
        binfmt::expect_eof(&mut r, path)?;
        Ok(ds)
    }

    pub(crate) fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let (dim, count) = binfmt::read_header(r, binfmt::MAGIC_VECTORS, path)?;
        if dim == 0 {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "dim must be positive".to_string(),
            });
        }
        let data = binfmt::read_f32_vec(r, dim as usize * count as usize, path)?;
        Self::new(dim as usize, data)
    }
}

/// Per-query neighbor ids, `query_count` rows of `k` ids each.
///
/// Producers sort each row by ascending distance with ascending-id tie-break;
/// rows never contain duplicate ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResultSet {
    k: usize,
    ids: Vec<u32>,
}

impl ResultSet {
    pub fn new(k: usize, ids: Vec<u32>) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k", "must be positive"));
        }
        if !ids.len().is_multiple_of(k) {
            return Err(Error::ShapeMismatch {
                reason: format!("id count {} is not a multiple of k {}", ids.len(), k),
            });
        }
        let rs = ResultSet { k, ids };
        rs.check_no_duplicates()?;
        Ok(rs)
    }

    fn check_no_duplicates(&self) -> Result<()> {
        let mut seen = Vec::with_capacity(self.k);
        for (row, chunk) in self.ids.chunks_exact(self.k).enumerate() {
            seen.clear();
            seen.extend_from_slice(chunk);
            seen.sort_unstable();
            for pair in seen.windows(2) {
                if pair[0] == pair[1] {
                    return Err(Error::DuplicateId { row, id: pair[0] });
                }
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn query_count(&self) -> usize {
        self.ids.len() / self.k
    }

    pub fn row(&self, q: usize) -> &[u32] {
        &self.ids[q * self.k..(q + 1) * self.k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.ids.chunks_exact(self.k)
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    /// Checks that every id refers into a dataset of `count` points.
    pub fn validate_ids(&self, count: usize) -> Result<()> {
        for &id in &self.ids {
            if id as usize >= count {
                return Err(Error::IdOutOfRange { id, count });
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_header(
            w,
            binfmt::MAGIC_RESULTS,
            self.k as u32,
            self.query_count() as u32,
        )?;
        binfmt::write_u32_slice(w, &self.ids)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let rs = Self::read_from(&mut r, path)?;
        binfmt::expect_eof(&mut r, path)?;
        Ok(rs)
    }

    pub(crate) fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let (k, query_count) = binfmt::read_header(r, binfmt::MAGIC_RESULTS, path)?;
        if k == 0 {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "k must be positive".to_string(),
            });
        }
        let ids = binfmt::read_u32_vec(r, k as usize * query_count as usize, path)?;
        Self::new(k as usize, ids)
    }
}
