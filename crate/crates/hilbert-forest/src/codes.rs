//! 4-bit scalar quantization with binary sketches that share their storage.
//!
//! Each dimension is quantized to 16 uniform levels between the per-dimension
//! min and max. The sketch bit for a dimension is the top bit of its 4-bit
//! code, so a [`CodeTable`] stores sketches and codes in the same
//! `count * dim / 2` bytes: the sketch adds nothing. Hamming distances between
//! sketches are computed directly on the packed code rows by masking the
//! top-bit positions, which makes drift between "the sketch" and "the codes"
//! impossible.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::binfmt;
use crate::dataset::VectorDataset;
use crate::error::{Error, Result};

/// Number of quantization levels (4 bits).
pub const LEVELS: u32 = 16;

/// Mask selecting the top bit of both nibbles in a packed code byte.
const SKETCH_MASK_BYTE: u8 = 0x88;
const SKETCH_MASK_WORD: u64 = 0x8888_8888_8888_8888;

/// Per-dimension quantization range. Degenerate dimensions (min == max) are
/// flagged and always code to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerParams {
    min: Vec<f32>,
    max: Vec<f32>,
}

impl QuantizerParams {
    /// Fits per-dimension min/max over the dataset.
    pub fn fit(ds: &VectorDataset) -> Result<Self> {
        if ds.count() == 0 {
            return Err(Error::EmptyDataset {
                context: "quantizer fit needs at least one vector",
            });
        }
        let dim = ds.dim();
        let mut min = ds.row(0).to_vec();
        let mut max = ds.row(0).to_vec();
        for row in ds.rows().skip(1) {
            for j in 0..dim {
                if row[j].total_cmp(&min[j]).is_lt() {
                    min[j] = row[j];
                }
                if row[j].total_cmp(&max[j]).is_gt() {
                    max[j] = row[j];
                }
            }
        }
        Ok(QuantizerParams { min, max })
    }

    pub fn new(min: Vec<f32>, max: Vec<f32>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::DimensionMismatch {
                expected: min.len(),
                actual: max.len(),
            });
        }
        for (j, (&lo, &hi)) in min.iter().zip(&max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite { row: 0, dim: j });
            }
            if lo > hi {
                return Err(Error::invalid("params", format!("min > max at dimension {j}")));
            }
        }
        Ok(QuantizerParams { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f32] {
        &self.min
    }

    pub fn max(&self) -> &[f32] {
        &self.max
    }

    /// True when the dimension carries no information (min == max).
    pub fn is_degenerate(&self, j: usize) -> bool {
        self.max[j] <= self.min[j]
    }

    /// Quantization step of dimension `j`.
    #[inline]
    pub fn step(&self, j: usize) -> f64 {
        (self.max[j] as f64 - self.min[j] as f64) / (LEVELS - 1) as f64
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_f32_slice(w, &self.min)?;
        binfmt::write_f32_slice(w, &self.max)
    }

    pub(crate) fn read_from(r: &mut impl Read, dim: usize, path: &Path) -> Result<Self> {
        let min = binfmt::read_f32_vec(r, dim, path)?;
        let max = binfmt::read_f32_vec(r, dim, path)?;
        QuantizerParams::new(min, max)
    }
}

/// Quantizes one vector to 4-bit codes: `round((v - min) / (max - min) * 15)`,
/// clamped to `[0, 15]`, rounding half up. Degenerate dimensions code to 0.
pub fn quantize(v: &[f32], params: &QuantizerParams) -> Result<Vec<u8>> {
    if v.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: v.len(),
        });
    }
    let mut out = vec![0u8; v.len()];
    quantize_into(v, params, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn quantize_into(v: &[f32], params: &QuantizerParams, out: &mut [u8]) {
    let top = (LEVELS - 1) as f64;
    for j in 0..v.len() {
        if params.is_degenerate(j) {
            out[j] = 0;
            continue;
        }
        let span = params.max[j] as f64 - params.min[j] as f64;
        let t = ((v[j] as f64 - params.min[j] as f64) / span * top).round();
        out[j] = t.clamp(0.0, top) as u8;
    }
}

/// Reconstructs the level midpoints: `min + code * (max - min) / 15`.
pub fn dequantize(codes: &[u8], params: &QuantizerParams) -> Result<Vec<f32>> {
    if codes.len() != params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: codes.len(),
        });
    }
    Ok((0..codes.len())
        .map(|j| dequantize_dim(codes[j], j, params))
        .collect())
}

#[inline]
fn dequantize_dim(code: u8, j: usize, params: &QuantizerParams) -> f32 {
    (params.min[j] as f64 + code as f64 * params.step(j)) as f32
}

/// Fixed-width bit string; bit `j` lives in word `j / 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    width: usize,
    words: Vec<u64>,
}

impl Sketch {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, j: usize) -> bool {
        (self.words[j / 64] >> (j % 64)) & 1 != 0
    }
}

/// Sketch of a code vector: bit `j` is set when `code[j] >= 8`, i.e. the top
/// bit of the 4-bit code.
pub fn sketch_of(codes: &[u8]) -> Sketch {
    let width = codes.len();
    let mut words = vec![0u64; width.div_ceil(64)];
    for (j, &c) in codes.iter().enumerate() {
        if c >= 8 {
            words[j / 64] |= 1u64 << (j % 64);
        }
    }
    Sketch { width, words }
}

/// Hamming distance: population count of the XOR of two equal-width sketches.
pub fn hamming(a: &Sketch, b: &Sketch) -> Result<u32> {
    if a.width != b.width {
        return Err(Error::ShapeMismatch {
            reason: format!("sketch widths differ: {} vs {}", a.width, b.width),
        });
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(&x, &y)| (x ^ y).count_ones())
        .sum())
}

/// Packed 4-bit codes for a whole dataset, one row per point. Dimension `j`
/// of a row occupies the low nibble of byte `j / 2` when `j` is even and the
/// high nibble when odd.
#[derive(Debug, Clone, PartialEq)]
pub struct CodeTable {
    dim: usize,
    row_bytes: usize,
    data: Vec<u8>,
    params: QuantizerParams,
}

impl CodeTable {
    /// Quantizes every row of the dataset under `params`.
    pub fn build(ds: &VectorDataset, params: QuantizerParams) -> Result<Self> {
        if ds.dim() != params.dim() {
            return Err(Error::DimensionMismatch {
                expected: params.dim(),
                actual: ds.dim(),
            });
        }
        let dim = ds.dim();
        let row_bytes = dim.div_ceil(2);
        let mut data = vec![0u8; ds.count() * row_bytes];
        data.par_chunks_mut(row_bytes).enumerate().for_each_init(
            || vec![0u8; dim],
            |codes, (i, out)| {
                quantize_into(ds.row(i), &params, codes);
                pack_row(codes, out);
            },
        );
        Ok(CodeTable {
            dim,
            row_bytes,
            data,
            params,
        })
    }

    /// Fits the quantizer on the dataset and builds the table.
    pub fn fit(ds: &VectorDataset) -> Result<Self> {
        let params = QuantizerParams::fit(ds)?;
        Self::build(ds, params)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.data.len().checked_div(self.row_bytes).unwrap_or(0)
    }

    pub fn params(&self) -> &QuantizerParams {
        &self.params
    }

    pub fn row_bytes(&self) -> usize {
        self.row_bytes
    }

    /// Packed nibbles of row `i`.
    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.row_bytes..(i + 1) * self.row_bytes]
    }

    /// Unpacked 4-bit code of dimension `j` in row `i`.
    pub fn code(&self, i: usize, j: usize) -> u8 {
        let b = self.row(i)[j / 2];
        if j.is_multiple_of(2) {
            b & 0x0F
        } else {
            b >> 4
        }
    }

    /// Extracts the sketch view of row `i`.
    pub fn sketch(&self, i: usize) -> Sketch {
        let mut codes = vec![0u8; self.dim];
        for (j, c) in codes.iter_mut().enumerate() {
            *c = self.code(i, j);
        }
        sketch_of(&codes)
    }

    /// Exact payload size: `count * dim / 2` bytes for even dimensions.
    pub fn storage_bytes(&self) -> usize {
        self.data.len()
    }

    /// Hamming distance between the sketches of rows `i` and `j`, computed on
    /// the packed codes.
    #[inline]
    pub fn sketch_hamming_rows(&self, i: usize, j: usize) -> u32 {
        masked_hamming(self.row(i), self.row(j))
    }

    /// Hamming distance between row `i`'s sketch and a query's packed codes.
    #[inline]
    pub fn sketch_hamming(&self, i: usize, query_row: &[u8]) -> u32 {
        masked_hamming(self.row(i), query_row)
    }

    /// Packs an unpacked code vector into this table's row layout.
    pub fn pack(&self, codes: &[u8]) -> Result<Vec<u8>> {
        if codes.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: codes.len(),
            });
        }
        let mut out = vec![0u8; self.row_bytes];
        pack_row(codes, &mut out);
        Ok(out)
    }

    /// New table whose row `p` is this table's row `perm[p]`; used to lay the
    /// codes out in master order.
    pub fn reordered(&self, perm: &[u32]) -> Result<Self> {
        if perm.len() != self.count() {
            return Err(Error::ShapeMismatch {
                reason: format!(
                    "permutation length {} does not match {} rows",
                    perm.len(),
                    self.count()
                ),
            });
        }
        let mut data = vec![0u8; self.data.len()];
        data.par_chunks_mut(self.row_bytes)
            .enumerate()
            .for_each(|(p, out)| out.copy_from_slice(self.row(perm[p] as usize)));
        Ok(CodeTable {
            dim: self.dim,
            row_bytes: self.row_bytes,
            data,
            params: self.params.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_header(w, binfmt::MAGIC_CODES, self.dim as u32, self.count() as u32)?;
        self.params.write_to(w)?;
        w.write_all(&self.data)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let table = Self::read_from(&mut r, path)?;
        binfmt::expect_eof(&mut r, path)?;
        Ok(table)
    }

    pub(crate) fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let (dim, count) = binfmt::read_header(r, binfmt::MAGIC_CODES, path)?;
        if dim == 0 {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "dim must be positive".to_string(),
            });
        }
        let dim = dim as usize;
        let params = QuantizerParams::read_from(r, dim, path)?;
        let row_bytes = dim.div_ceil(2);
        let mut data = vec![0u8; count as usize * row_bytes];
        r.read_exact(&mut data)
            .map_err(|e| binfmt::map_read_err(e, path))?;
        Ok(CodeTable {
            dim,
            row_bytes,
            data,
            params,
        })
    }
}

#[inline]
fn pack_row(codes: &[u8], out: &mut [u8]) {
    out.iter_mut().for_each(|b| *b = 0);
    for (j, &c) in codes.iter().enumerate() {
        if j % 2 == 0 {
            out[j / 2] |= c & 0x0F;
        } else {
            out[j / 2] |= (c & 0x0F) << 4;
        }
    }
}

/// Popcount of the XOR of two packed code rows restricted to the nibble top
/// bits — exactly the Hamming distance of the two sketch views.
#[inline]
pub(crate) fn masked_hamming(a: &[u8], b: &[u8]) -> u32 {
    debug_assert_eq!(a.len(), b.len());
    let mut total = 0u32;
    let split = a.len() / 8 * 8;
    let (a8, a_tail) = a.split_at(split);
    let (b8, b_tail) = b.split_at(split);
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        let wa = u64::from_le_bytes(ca.try_into().unwrap());
        let wb = u64::from_le_bytes(cb.try_into().unwrap());
        total += ((wa ^ wb) & SKETCH_MASK_WORD).count_ones();
    }
    for (&x, &y) in a_tail.iter().zip(b_tail) {
        total += ((x ^ y) & SKETCH_MASK_BYTE).count_ones();
    }
    total
}

/// Selects the `k2` unique candidate ids with the smallest Hamming distance to
/// the query sketch, ties broken by ascending id. Candidates index rows of
/// `table`; duplicates are collapsed first.
pub fn sketch_topk(
    candidates: &[u32],
    query_sketch: &Sketch,
    table: &CodeTable,
    k2: usize,
) -> Result<Vec<u32>> {
    if k2 == 0 {
        return Err(Error::invalid("k2", "must be positive"));
    }
    if query_sketch.width() != table.dim() {
        return Err(Error::ShapeMismatch {
            reason: format!(
                "query sketch width {} does not match table dim {}",
                query_sketch.width(),
                table.dim()
            ),
        });
    }
    let query_row = spread_sketch(query_sketch, table.row_bytes());
    let mut unique = candidates.to_vec();
    unique.sort_unstable();
    unique.dedup();
    let mut ranked: Vec<u64> = unique
        .iter()
        .map(|&id| pack_dist_id(table.sketch_hamming(id as usize, &query_row), id))
        .collect();
    let keep = k2.min(ranked.len());
    if keep > 0 && keep < ranked.len() {
        ranked.select_nth_unstable(keep - 1);
        ranked.truncate(keep);
    }
    ranked.sort_unstable();
    Ok(ranked.into_iter().map(unpack_id).collect())
}

/// Lays sketch bits out at the nibble-top-bit positions of a packed code row,
/// so `masked_hamming` can compare it against table rows directly.
pub(crate) fn spread_sketch(sketch: &Sketch, row_bytes: usize) -> Vec<u8> {
    let mut row = vec![0u8; row_bytes];
    for j in 0..sketch.width() {
        if sketch.bit(j) {
            row[j / 2] |= if j % 2 == 0 { 0x08 } else { 0x80 };
        }
    }
    row
}

/// `(distance, id)` packed so that u64 ordering equals lexicographic ordering.
#[inline]
pub(crate) fn pack_dist_id(dist: u32, id: u32) -> u64 {
    ((dist as u64) << 32) | id as u64
}

#[inline]
pub(crate) fn unpack_id(packed: u64) -> u32 {
    packed as u32
}

/// Squared Euclidean distance between an unquantized query and a stored code
/// row, reconstructing each stored coordinate on the fly. Degenerate
/// dimensions contribute nothing: every stored point shares their value, so
/// skipping them shifts all distances by the same amount and preserves
/// ranking.
pub fn asymmetric_distance(
    query: &[f32],
    point_code: &[u8],
    params: &QuantizerParams,
) -> Result<f64> {
    let dim = params.dim();
    if query.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: query.len(),
        });
    }
    if point_code.len() != dim.div_ceil(2) {
        return Err(Error::DimensionMismatch {
            expected: dim.div_ceil(2),
            actual: point_code.len(),
        });
    }
    Ok(asymmetric_distance_packed(query, point_code, params))
}

#[inline]
pub(crate) fn asymmetric_distance_packed(
    query: &[f32],
    point_code: &[u8],
    params: &QuantizerParams,
) -> f64 {
    let mut acc = 0.0f64;
    for j in 0..params.dim() {
        if params.is_degenerate(j) {
            continue;
        }
        let b = point_code[j / 2];
        let code = if j % 2 == 0 { b & 0x0F } else { b >> 4 };
        let rec = dequantize_dim(code, j, params);
        let d = query[j] as f64 - rec as f64;
        acc += d * d;
    }
    acc
}
