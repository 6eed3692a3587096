//! Leaf-compressed binary search over Hilbert-ordered sequences, and forests
//! of such trees under distinct axis permutations.
//!
//! A tree keeps the order permutation plus one Hilbert key per leaf (the key
//! of the leaf's first element); the full per-point tree is never
//! materialized. Lookups binary-search the leaf keys and then refine to an
//! exact in-order position by re-encoding at most `leaf_size` candidate
//! elements, so positions agree exactly with [`crate::curve::position_search`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::binfmt;
use crate::curve::{self, Bounds, CurveConfig};
use crate::dataset::VectorDataset;
use crate::error::{Error, Result};

pub const DEFAULT_LEAF_SIZE: usize = 100;

/// One Hilbert order with its leaf index. Leaves partition the order into
/// contiguous runs of at most `leaf_size` ids; in-order concatenation of the
/// leaves is the full Hilbert-sorted id sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertTree {
    cfg: CurveConfig,
    perm: Vec<u32>,
    leaf_size: usize,
    // leaf l covers positions [leaf_starts[l], leaf_starts[l+1]) with an
    // implicit final end at perm.len().
    leaf_starts: Vec<u32>,
    // Hilbert key of each leaf's first element, flat big-endian limbs.
    leaf_keys: Vec<u64>,
}

impl HilbertTree {
    /// Sorts the dataset under `cfg` and compresses runs of `leaf_size`
    /// elements into leaves. An empty dataset yields an empty tree.
    pub fn build(
        ds: &VectorDataset,
        bounds: &Bounds,
        cfg: CurveConfig,
        leaf_size: usize,
    ) -> Result<Self> {
        if leaf_size == 0 {
            return Err(Error::invalid("leaf_size", "must be positive"));
        }
        let (perm, keys) = curve::sort_keys(ds, bounds, &cfg)?;
        let limbs = cfg.key_limbs();
        let count = perm.len();
        let leaf_count = count.div_ceil(leaf_size);
        let mut leaf_starts = Vec::with_capacity(leaf_count);
        let mut leaf_keys = Vec::with_capacity(leaf_count * limbs);
        for l in 0..leaf_count {
            let start = l * leaf_size;
            leaf_starts.push(start as u32);
            let id = perm[start] as usize;
            leaf_keys.extend_from_slice(&keys[id * limbs..(id + 1) * limbs]);
        }
        Ok(HilbertTree {
            cfg,
            perm,
            leaf_size,
            leaf_starts,
            leaf_keys,
        })
    }

    pub fn cfg(&self) -> &CurveConfig {
        &self.cfg
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// Ids in Hilbert order.
    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_starts.len()
    }

    /// Positions covered by leaf `l`.
    pub fn leaf_range(&self, l: usize) -> std::ops::Range<usize> {
        let start = self.leaf_starts[l] as usize;
        let end = self
            .leaf_starts
            .get(l + 1)
            .map(|&s| s as usize)
            .unwrap_or(self.perm.len());
        start..end
    }

    fn leaf_key(&self, l: usize) -> &[u64] {
        let limbs = self.cfg.key_limbs();
        &self.leaf_keys[l * limbs..(l + 1) * limbs]
    }

    /// Exact insertion position of `q` (first-of-equals): binary search over
    /// leaf keys, then a linear refinement inside the candidate leaf.
    pub fn position(&self, ds: &VectorDataset, bounds: &Bounds, q: &[f32]) -> Result<usize> {
        if q.len() != self.cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim(),
                actual: q.len(),
            });
        }
        if self.perm.is_empty() {
            return Ok(0);
        }
        let limbs = self.cfg.key_limbs();
        let bits = self.cfg.bits_per_axis();
        let mut scratch = vec![0u32; self.cfg.dim()];
        let mut qkey = vec![0u64; limbs];
        curve::grid_into(q, bounds, &self.cfg, &mut scratch);
        curve::encode_coords_into(&mut scratch, bits, &mut qkey);
        Ok(self.position_for_key(ds, bounds, &qkey, &mut scratch))
    }

    fn position_for_key(
        &self,
        ds: &VectorDataset,
        bounds: &Bounds,
        qkey: &[u64],
        scratch: &mut [u32],
    ) -> usize {
        // First leaf whose first element is >= the query key.
        let mut lo = 0usize;
        let mut hi = self.leaf_count();
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if self.leaf_key(mid) < qkey {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == 0 {
            // Even the first element is >= the query.
            return 0;
        }
        // The insertion point lies inside leaf lo-1 or right at its end.
        let range = self.leaf_range(lo - 1);
        let mut elem_key = vec![0u64; qkey.len()];
        let bits = self.cfg.bits_per_axis();
        for pos in range.clone() {
            let id = self.perm[pos] as usize;
            curve::grid_into(ds.row(id), bounds, &self.cfg, scratch);
            curve::encode_coords_into(scratch, bits, &mut elem_key);
            if elem_key.as_slice() >= qkey {
                return pos;
            }
        }
        range.end
    }

    /// Positions for a whole query set; answers equal per-query
    /// [`HilbertTree::position`] calls regardless of batching.
    pub fn batch_positions(
        &self,
        ds: &VectorDataset,
        bounds: &Bounds,
        queries: &VectorDataset,
    ) -> Result<Vec<u32>> {
        if queries.dim() != self.cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.dim(),
                actual: queries.dim(),
            });
        }
        let limbs = self.cfg.key_limbs();
        let bits = self.cfg.bits_per_axis();
        let mut out = vec![0u32; queries.count()];
        out.par_iter_mut().enumerate().for_each_init(
            || (vec![0u32; self.cfg.dim()], vec![0u64; limbs]),
            |(scratch, qkey), (qi, slot)| {
                curve::grid_into(queries.row(qi), bounds, &self.cfg, scratch);
                curve::encode_coords_into(scratch, bits, qkey);
                if !self.perm.is_empty() {
                    *slot = self.position_for_key(ds, bounds, qkey, scratch) as u32;
                }
            },
        );
        Ok(out)
    }

    /// The `k1` ids whose positions are nearest to `position`: a window
    /// centered on it, clamped at the boundaries, preferring the lower side
    /// on ties. Returns the whole sequence when `k1 >= len`.
    pub fn candidate_window(&self, position: usize, k1: usize) -> &[u32] {
        window(&self.perm, position, k1)
    }

    /// Analytic size of this tree's retained state: permutation, leaf starts,
    /// and one key per leaf.
    pub fn estimated_bytes(&self) -> usize {
        self.perm.len() * 4 + self.leaf_starts.len() * 4 + self.leaf_keys.len() * 8
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_u64(w, self.cfg.seed())?;
        binfmt::write_u32_slice(w, self.cfg.axis_perm())?;
        binfmt::write_u32_slice(w, &self.perm)?;
        binfmt::write_u32(w, self.leaf_starts.len() as u32)?;
        binfmt::write_u32_slice(w, &self.leaf_starts)?;
        binfmt::write_u64_slice(w, &self.leaf_keys)
    }

    fn read_from(
        r: &mut impl Read,
        dim: usize,
        bits: u32,
        count: usize,
        leaf_size: usize,
        path: &Path,
    ) -> Result<Self> {
        let seed = binfmt::read_u64(r, path)?;
        let axis_perm = binfmt::read_u32_vec(r, dim, path)?;
        let cfg = CurveConfig::new(dim, bits, axis_perm, seed)?;
        let perm = binfmt::read_u32_vec(r, count, path)?;
        let leaf_count = binfmt::read_u32(r, path)? as usize;
        let leaf_starts = binfmt::read_u32_vec(r, leaf_count, path)?;
        let leaf_keys = binfmt::read_u64_vec(r, leaf_count * cfg.key_limbs(), path)?;
        Ok(HilbertTree {
            cfg,
            perm,
            leaf_size,
            leaf_starts,
            leaf_keys,
        })
    }
}

/// Window of the `k1` positions nearest to `position` in a sequence of ids.
pub(crate) fn window(seq: &[u32], position: usize, k1: usize) -> &[u32] {
    let count = seq.len();
    if k1 >= count {
        return seq;
    }
    let half = k1 / 2;
    let start = position.saturating_sub(half).min(count - k1);
    &seq[start..start + k1]
}

/// A set of Hilbert trees over the same dataset whose axis permutations are
/// derived deterministically from `(global_seed, tree_index)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HilbertForest {
    trees: Vec<HilbertTree>,
    bounds: Bounds,
    dim: usize,
    count: usize,
    bits_per_axis: u32,
    leaf_size: usize,
    global_seed: u64,
}

impl HilbertForest {
    pub fn build(ds: &VectorDataset, n: usize, leaf_size: usize, global_seed: u64) -> Result<Self> {
        Self::build_with_bits(ds, n, leaf_size, global_seed, curve::DEFAULT_BITS_PER_AXIS)
    }

    pub fn build_with_bits(
        ds: &VectorDataset,
        n: usize,
        leaf_size: usize,
        global_seed: u64,
        bits_per_axis: u32,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "forest needs at least one tree"));
        }
        if leaf_size == 0 {
            return Err(Error::invalid("leaf_size", "must be positive"));
        }
        // Validate the curve width once up front.
        CurveConfig::derived(ds.dim(), bits_per_axis, global_seed, 0)?;
        let bounds = Bounds::of(ds);
        let trees: Vec<HilbertTree> = (0..n as u64)
            .into_par_iter()
            .map(|t| {
                let cfg = CurveConfig::derived(ds.dim(), bits_per_axis, global_seed, t)?;
                HilbertTree::build(ds, &bounds, cfg, leaf_size)
            })
            .collect::<Result<_>>()?;
        Ok(HilbertForest {
            trees,
            bounds,
            dim: ds.dim(),
            count: ds.count(),
            bits_per_axis,
            leaf_size,
            global_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn tree(&self, t: usize) -> &HilbertTree {
        &self.trees[t]
    }

    pub fn trees(&self) -> &[HilbertTree] {
        &self.trees
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn bits_per_axis(&self) -> u32 {
        self.bits_per_axis
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn global_seed(&self) -> u64 {
        self.global_seed
    }

    pub fn estimated_bytes(&self) -> usize {
        self.trees.iter().map(|t| t.estimated_bytes()).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_header(w, binfmt::MAGIC_FOREST, self.dim as u32, self.count as u32)?;
        binfmt::write_u32(w, self.bits_per_axis)?;
        binfmt::write_u32(w, self.leaf_size as u32)?;
        binfmt::write_u32(w, self.trees.len() as u32)?;
        binfmt::write_u64(w, self.global_seed)?;
        self.bounds.write_to(w)?;
        for tree in &self.trees {
            tree.write_to(w)?;
        }
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let forest = Self::read_from(&mut r, path)?;
        binfmt::expect_eof(&mut r, path)?;
        Ok(forest)
    }

    pub(crate) fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let (dim, count) = binfmt::read_header(r, binfmt::MAGIC_FOREST, path)?;
        let dim = dim as usize;
        let count = count as usize;
        let bits_per_axis = binfmt::read_u32(r, path)?;
        let leaf_size = binfmt::read_u32(r, path)? as usize;
        let n_trees = binfmt::read_u32(r, path)? as usize;
        let global_seed = binfmt::read_u64(r, path)?;
        if dim == 0 || leaf_size == 0 || n_trees == 0 {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "dim, leaf_size and tree count must be positive".to_string(),
            });
        }
        let bounds = Bounds::read_from(r, dim, path)?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            trees.push(HilbertTree::read_from(
                r, dim, bits_per_axis, count, leaf_size, path,
            )?);
        }
        Ok(HilbertForest {
            trees,
            bounds,
            dim,
            count,
            bits_per_axis,
            leaf_size,
            global_seed,
        })
    }
}

/// Bytes needed to store one `bits`-wide sketch per point.
pub fn sketch_bytes(count: u64, sketch_bits: u64) -> u64 {
    count * sketch_bits / 8
}

/// Bytes needed for the combined sketch + 4-bit code storage when one bit per
/// dimension is shared between them: `4 * dim + dim - dim` bits per point,
/// i.e. half a byte per dimension.
pub fn combined_code_bytes(count: u64, dim: u64) -> u64 {
    count * dim / 2
}
