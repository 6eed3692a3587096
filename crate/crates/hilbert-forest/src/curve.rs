//! d-dimensional Hilbert curve: grid quantization, index encode/decode, a
//! total-order comparator, Hilbert sort, and positional lookup.
//!
//! The encode/decode pair is the bit-transform (Gray-code/rotation) algorithm
//! operating on `m`-bit coordinates: axes are converted to the transposed
//! Hilbert form in place and then interleaved into a `d*m`-bit key. The map is
//! a bijection between the grid and `[0, 2^(d*m))`, consecutive keys always
//! land on grid cells at L1 distance 1, and the origin encodes to key 0 when
//! the axis permutation is the identity.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::VectorDataset;
use crate::error::{Error, Result};

/// Hard cap on key width; `dim * bits_per_axis` must stay at or below this.
pub const MAX_KEY_BITS: usize = 4096;

/// Grid resolution used by the search pipeline and graph builder; 8 bits per
/// axis discriminates typical normalized embeddings.
pub const DEFAULT_BITS_PER_AXIS: u32 = 8;

/// One Hilbert ordering of a `dim`-dimensional space: grid resolution plus the
/// axis permutation that randomizes the curve between trees.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CurveConfig {
    dim: usize,
    bits_per_axis: u32,
    axis_perm: Vec<u32>,
    seed: u64,
}

impl CurveConfig {
    pub fn new(dim: usize, bits_per_axis: u32, axis_perm: Vec<u32>, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dim", "must be positive"));
        }
        if bits_per_axis == 0 || bits_per_axis > 32 {
            return Err(Error::invalid("bits_per_axis", "must be in 1..=32"));
        }
        let bits = dim * bits_per_axis as usize;
        if bits > MAX_KEY_BITS {
            return Err(Error::KeyWidthExceeded {
                bits,
                limit: MAX_KEY_BITS,
            });
        }
        if axis_perm.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: axis_perm.len(),
            });
        }
        let mut seen = vec![false; dim];
        for &a in &axis_perm {
            if a as usize >= dim || seen[a as usize] {
                return Err(Error::invalid("axis_perm", "must be a bijection on [0, dim)"));
            }
            seen[a as usize] = true;
        }
        Ok(CurveConfig {
            dim,
            bits_per_axis,
            axis_perm,
            seed,
        })
    }

    /// Identity axis order; fixes the orientation convention used in tests.
    pub fn identity(dim: usize, bits_per_axis: u32) -> Result<Self> {
        Self::new(dim, bits_per_axis, (0..dim as u32).collect(), 0)
    }

    /// Deterministically derives the config for tree `index` of a forest: the
    /// axis permutation is a Fisher-Yates shuffle driven by a counter-based
    /// generator keyed on `(global_seed, index)`.
    pub fn derived(dim: usize, bits_per_axis: u32, global_seed: u64, index: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
        rng.set_stream(index);
        let mut perm: Vec<u32> = (0..dim as u32).collect();
        perm.shuffle(&mut rng);
        Self::new(dim, bits_per_axis, perm, global_seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits_per_axis(&self) -> u32 {
        self.bits_per_axis
    }

    pub fn axis_perm(&self) -> &[u32] {
        &self.axis_perm
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Total key width in bits.
    pub fn key_bits(&self) -> usize {
        self.dim * self.bits_per_axis as usize
    }

    /// Number of u64 limbs needed to hold one key.
    pub fn key_limbs(&self) -> usize {
        self.key_bits().div_ceil(64)
    }

    fn max_coord(&self) -> u32 {
        (((1u64 << self.bits_per_axis) - 1) & 0xFFFF_FFFF) as u32
    }
}

/// Per-dimension envelope of a dataset; queries are clamped into it so points
/// outside the data still receive a valid order position.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    min: Vec<f32>,
    max: Vec<f32>,
}

impl Bounds {
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
                return Err(Error::invalid("bounds", format!("min > max at dimension {j}")));
            }
        }
        Ok(Bounds { min, max })
    }

    /// Column min/max of the dataset. An empty dataset gets a degenerate
    /// all-zero envelope.
    pub fn of(ds: &VectorDataset) -> Self {
        let dim = ds.dim();
        let mut min = vec![0.0f32; dim];
        let mut max = vec![0.0f32; dim];
        if ds.count() > 0 {
            min.copy_from_slice(ds.row(0));
            max.copy_from_slice(ds.row(0));
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
        }
        Bounds { min, max }
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

    pub(crate) fn write_to(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        crate::binfmt::write_f32_slice(w, &self.min)?;
        crate::binfmt::write_f32_slice(w, &self.max)
    }

    pub(crate) fn read_from(
        r: &mut impl std::io::Read,
        dim: usize,
        path: &std::path::Path,
    ) -> Result<Self> {
        let min = crate::binfmt::read_f32_vec(r, dim, path)?;
        let max = crate::binfmt::read_f32_vec(r, dim, path)?;
        Bounds::new(min, max)
    }
}

/// A point on the discrete grid: `dim` coordinates of `bits_per_axis` bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridPoint {
    coords: Vec<u32>,
}

impl GridPoint {
    pub fn new(coords: Vec<u32>, cfg: &CurveConfig) -> Result<Self> {
        if coords.len() != cfg.dim() {
            return Err(Error::DimensionMismatch {
                expected: cfg.dim(),
                actual: coords.len(),
            });
        }
        let max = cfg.max_coord();
        for &c in &coords {
            if c > max {
                return Err(Error::invalid(
                    "coords",
                    format!("coordinate {c} does not fit in {} bits", cfg.bits_per_axis()),
                ));
            }
        }
        Ok(GridPoint { coords })
    }

    pub fn coords(&self) -> &[u32] {
        &self.coords
    }
}

/// Hilbert index of a grid cell: an unsigned integer of `dim * bits_per_axis`
/// bits, stored as big-endian u64 limbs so the derived ordering is numeric.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HilbertKey {
    limbs: Vec<u64>,
}

impl HilbertKey {
    /// Builds a key from big-endian limbs, validating it fits the curve.
    pub fn from_limbs(limbs: Vec<u64>, cfg: &CurveConfig) -> Result<Self> {
        if limbs.len() != cfg.key_limbs() {
            return Err(Error::KeyOutOfRange {
                bits: cfg.key_bits(),
            });
        }
        let excess = cfg.key_limbs() * 64 - cfg.key_bits();
        if excess > 0 && limbs[0] >> (64 - excess) != 0 {
            return Err(Error::KeyOutOfRange {
                bits: cfg.key_bits(),
            });
        }
        Ok(HilbertKey { limbs })
    }

    /// Most-significant-first limbs.
    pub fn limbs(&self) -> &[u64] {
        &self.limbs
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }
}

/// Maps one float coordinate affinely from `[min, max]` onto `[0, 2^m - 1]`,
/// clamping and rounding half up. Degenerate dimensions map to 0.
#[inline]
fn grid_coord(v: f32, min: f32, max: f32, bits: u32) -> u32 {
    if max <= min {
        return 0;
    }
    let span = max as f64 - min as f64;
    let top = ((1u64 << bits) - 1) as f64;
    let t = ((v as f64 - min as f64) / span).clamp(0.0, 1.0);
    (t * top).round() as u32
}

/// Quantizes a float vector onto the grid, reordering axes by the config's
/// permutation: output axis `i` holds input dimension `axis_perm[i]`.
pub fn to_grid(v: &[f32], bounds: &Bounds, cfg: &CurveConfig) -> Result<GridPoint> {
    check_dims(v.len(), bounds, cfg)?;
    let mut coords = vec![0u32; cfg.dim()];
    grid_into(v, bounds, cfg, &mut coords);
    Ok(GridPoint { coords })
}

#[inline]
pub(crate) fn grid_into(v: &[f32], bounds: &Bounds, cfg: &CurveConfig, out: &mut [u32]) {
    let bits = cfg.bits_per_axis();
    for (i, &src) in cfg.axis_perm().iter().enumerate() {
        let j = src as usize;
        out[i] = grid_coord(v[j], bounds.min()[j], bounds.max()[j], bits);
    }
}

fn check_dims(len: usize, bounds: &Bounds, cfg: &CurveConfig) -> Result<()> {
    if len != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            actual: len,
        });
    }
    if bounds.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            actual: bounds.dim(),
        });
    }
    Ok(())
}

// In-place conversion of m-bit axis coordinates to the transposed Hilbert
// form. The transposed form holds the key's bits distributed across the
// axis words; interleaving them MSB-first yields the integer key.
fn axes_to_transpose(x: &mut [u32], bits: u32) {
    let n = x.len();
    // Inverse undo.
    for shift in (1..bits).rev() {
        let q: u32 = 1 << shift;
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
    }
    // Gray encode.
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0u32;
    for shift in (1..bits).rev() {
        let q: u32 = 1 << shift;
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
    }
    for xi in x.iter_mut() {
        *xi ^= t;
    }
}

// Inverse of `axes_to_transpose`.
fn transpose_to_axes(x: &mut [u32], bits: u32) {
    let n = x.len();
    // Gray decode.
    let mut t = x[n - 1] >> 1;
    for i in (1..n).rev() {
        x[i] ^= x[i - 1];
    }
    x[0] ^= t;
    // Undo excess work.
    for shift in 1..bits {
        let q: u32 = 1 << shift;
        let p = q - 1;
        for i in (0..n).rev() {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
    }
}

// Interleaves the transposed form into big-endian key limbs: bit plane
// `bits-1` of axis 0 is the key's most significant bit.
fn pack_transposed(x: &[u32], bits: u32, out: &mut [u64]) {
    out.iter_mut().for_each(|l| *l = 0);
    let d = x.len();
    let total = d * bits as usize;
    let limbs = out.len();
    let mut k = 0usize;
    for j in (0..bits).rev() {
        for xi in x.iter().take(d) {
            if (xi >> j) & 1 != 0 {
                let pos = total - 1 - k;
                out[limbs - 1 - pos / 64] |= 1u64 << (pos % 64);
            }
            k += 1;
        }
    }
}

fn unpack_transposed(limbs: &[u64], bits: u32, x: &mut [u32]) {
    x.iter_mut().for_each(|c| *c = 0);
    let d = x.len();
    let total = d * bits as usize;
    let nlimbs = limbs.len();
    let mut k = 0usize;
    for j in (0..bits).rev() {
        for xi in x.iter_mut().take(d) {
            let pos = total - 1 - k;
            if (limbs[nlimbs - 1 - pos / 64] >> (pos % 64)) & 1 != 0 {
                *xi |= 1 << j;
            }
            k += 1;
        }
    }
}

/// Encodes a grid point to its Hilbert key.
pub fn hilbert_encode(p: &GridPoint, cfg: &CurveConfig) -> Result<HilbertKey> {
    if p.coords().len() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            actual: p.coords().len(),
        });
    }
    let mut x = p.coords().to_vec();
    let mut limbs = vec![0u64; cfg.key_limbs()];
    encode_coords_into(&mut x, cfg.bits_per_axis(), &mut limbs);
    Ok(HilbertKey { limbs })
}

/// Hot-path encode: consumes the grid coordinates in `x` and writes the key
/// limbs into `out`.
#[inline]
pub(crate) fn encode_coords_into(x: &mut [u32], bits: u32, out: &mut [u64]) {
    axes_to_transpose(x, bits);
    pack_transposed(x, bits, out);
}

/// Decodes a Hilbert key back to its grid point; inverse of [`hilbert_encode`].
pub fn hilbert_decode(key: &HilbertKey, cfg: &CurveConfig) -> Result<GridPoint> {
    let limbs = key.limbs();
    if limbs.len() != cfg.key_limbs() {
        return Err(Error::KeyOutOfRange {
            bits: cfg.key_bits(),
        });
    }
    // Bits above the key width must be clear.
    let excess = cfg.key_limbs() * 64 - cfg.key_bits();
    if excess > 0 && limbs[0] >> (64 - excess) != 0 {
        return Err(Error::KeyOutOfRange {
            bits: cfg.key_bits(),
        });
    }
    let mut x = vec![0u32; cfg.dim()];
    unpack_transposed(limbs, cfg.bits_per_axis(), &mut x);
    transpose_to_axes(&mut x, cfg.bits_per_axis());
    Ok(GridPoint { coords: x })
}

/// Total-order comparison of two float vectors along the curve. Vectors in the
/// same grid cell compare equal.
pub fn hilbert_compare(
    a: &[f32],
    b: &[f32],
    bounds: &Bounds,
    cfg: &CurveConfig,
) -> Result<std::cmp::Ordering> {
    check_dims(a.len(), bounds, cfg)?;
    if b.len() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            actual: b.len(),
        });
    }
    let mut ga = vec![0u32; cfg.dim()];
    let mut gb = vec![0u32; cfg.dim()];
    grid_into(a, bounds, cfg, &mut ga);
    grid_into(b, bounds, cfg, &mut gb);
    if ga == gb {
        return Ok(std::cmp::Ordering::Equal);
    }
    let limbs = cfg.key_limbs();
    let mut ka = vec![0u64; limbs];
    let mut kb = vec![0u64; limbs];
    encode_coords_into(&mut ga, cfg.bits_per_axis(), &mut ka);
    encode_coords_into(&mut gb, cfg.bits_per_axis(), &mut kb);
    Ok(ka.cmp(&kb))
}

/// A dataset's ids sorted along the curve, with the inverse lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertOrder {
    perm: Vec<u32>,
    inverse: Vec<u32>,
}

impl HilbertOrder {
    pub(crate) fn from_perm(perm: Vec<u32>) -> Self {
        let mut inverse = vec![0u32; perm.len()];
        for (pos, &id) in perm.iter().enumerate() {
            inverse[id as usize] = pos as u32;
        }
        HilbertOrder { perm, inverse }
    }

    /// `perm[pos]` is the id at curve position `pos`.
    pub fn perm(&self) -> &[u32] {
        &self.perm
    }

    /// `inverse[id]` is the curve position of `id`.
    pub fn inverse(&self) -> &[u32] {
        &self.inverse
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }
}

/// Computes all keys of a dataset (flat big-endian limbs) and the permutation
/// sorting ids by `(key, id)`. The sort is parallel but its output does not
/// depend on thread count.
pub(crate) fn sort_keys(
    ds: &VectorDataset,
    bounds: &Bounds,
    cfg: &CurveConfig,
) -> Result<(Vec<u32>, Vec<u64>)> {
    if ds.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            actual: ds.dim(),
        });
    }
    let count = ds.count();
    let limbs = cfg.key_limbs();
    let bits = cfg.bits_per_axis();
    let mut keys = vec![0u64; count * limbs];
    keys.par_chunks_mut(limbs).enumerate().for_each_init(
        || vec![0u32; cfg.dim()],
        |scratch, (i, out)| {
            grid_into(ds.row(i), bounds, cfg, scratch);
            encode_coords_into(scratch, bits, out);
        },
    );
    let mut perm: Vec<u32> = (0..count as u32).collect();
    let key_of = |id: u32| &keys[id as usize * limbs..(id as usize + 1) * limbs];
    perm.par_sort_unstable_by(|&a, &b| key_of(a).cmp(key_of(b)).then(a.cmp(&b)));
    Ok((perm, keys))
}

/// Sorts the dataset along the curve; ties between identical grid cells break
/// by ascending id, so the result is deterministic.
pub fn hilbert_sort(ds: &VectorDataset, bounds: &Bounds, cfg: &CurveConfig) -> Result<HilbertOrder> {
    let (perm, _) = sort_keys(ds, bounds, cfg)?;
    Ok(HilbertOrder::from_perm(perm))
}

/// Insertion position of `q` in the sorted sequence (first-of-equals), found
/// by binary search; identical to what a linear scan under
/// [`hilbert_compare`] would return.
pub fn position_search(
    order: &HilbertOrder,
    ds: &VectorDataset,
    q: &[f32],
    bounds: &Bounds,
    cfg: &CurveConfig,
) -> Result<usize> {
    check_dims(q.len(), bounds, cfg)?;
    if ds.dim() != cfg.dim() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dim(),
            actual: ds.dim(),
        });
    }
    let limbs = cfg.key_limbs();
    let bits = cfg.bits_per_axis();
    let mut scratch = vec![0u32; cfg.dim()];
    let mut qkey = vec![0u64; limbs];
    grid_into(q, bounds, cfg, &mut scratch);
    encode_coords_into(&mut scratch, bits, &mut qkey);

    let mut elem_key = vec![0u64; limbs];
    let mut lo = 0usize;
    let mut hi = order.len();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let id = order.perm()[mid] as usize;
        grid_into(ds.row(id), bounds, cfg, &mut scratch);
        encode_coords_into(&mut scratch, bits, &mut elem_key);
        if elem_key < qkey {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn l1(a: &[u32], b: &[u32]) -> u64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
            .sum()
    }

    /// Decodes every key of a (dim, bits) curve, checking bijectivity and
    /// that consecutive cells are L1-adjacent.
    fn check_curve(dim: usize, bits: u32) {
        let cfg = CurveConfig::identity(dim, bits).unwrap();
        let cells = 1u64 << (dim as u32 * bits);
        let mut seen = vec![false; cells as usize];
        let mut prev: Option<Vec<u32>> = None;
        for k in 0..cells {
            let mut limbs = vec![0u64; cfg.key_limbs()];
            let nl = limbs.len();
            limbs[nl - 1] = k;
            let key = HilbertKey { limbs };
            let p = hilbert_decode(&key, &cfg).unwrap();
            let mut cell = 0u64;
            for &c in p.coords() {
                cell = cell * (1 << bits) + c as u64;
            }
            assert!(!seen[cell as usize], "cell visited twice (d={dim}, m={bits})");
            seen[cell as usize] = true;
            if let Some(prev) = &prev {
                assert_eq!(l1(prev, p.coords()), 1, "non-adjacent step (d={dim}, m={bits})");
            }
            // Round trip.
            assert_eq!(hilbert_encode(&p, &cfg).unwrap(), key);
            prev = Some(p.coords().to_vec());
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn small_curves_are_bijective_and_adjacent() {
        check_curve(1, 1);
        check_curve(1, 4);
        check_curve(2, 1);
        check_curve(2, 3);
        check_curve(3, 2);
        check_curve(4, 2);
    }

    #[test]
    fn origin_encodes_to_zero() {
        let cfg = CurveConfig::identity(5, 7).unwrap();
        let p = GridPoint::new(vec![0; 5], &cfg).unwrap();
        assert!(hilbert_encode(&p, &cfg).unwrap().is_zero());
    }

    #[test]
    fn d2_m1_keys_cover_all_four_cells() {
        let cfg = CurveConfig::identity(2, 1).unwrap();
        let mut keys = Vec::new();
        for x in 0..2u32 {
            for y in 0..2u32 {
                let p = GridPoint::new(vec![x, y], &cfg).unwrap();
                keys.push(hilbert_encode(&p, &cfg).unwrap().limbs()[0]);
            }
        }
        keys.sort_unstable();
        assert_eq!(keys, vec![0, 1, 2, 3]);
    }

    #[test]
    fn random_keys_round_trip_high_dim() {
        let cfg = CurveConfig::identity(8, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let coords: Vec<u32> = (0..8).map(|_| rng.gen_range(0..256)).collect();
            let p = GridPoint::new(coords, &cfg).unwrap();
            let key = hilbert_encode(&p, &cfg).unwrap();
            assert_eq!(hilbert_decode(&key, &cfg).unwrap(), p);
        }
    }

    #[test]
    fn exhaustive_round_trip_d2_m4() {
        let cfg = CurveConfig::identity(2, 4).unwrap();
        for x in 0..16u32 {
            for y in 0..16u32 {
                let p = GridPoint::new(vec![x, y], &cfg).unwrap();
                let key = hilbert_encode(&p, &cfg).unwrap();
                assert_eq!(hilbert_decode(&key, &cfg).unwrap(), p);
            }
        }
    }

    #[test]
    fn decode_rejects_out_of_range_key() {
        let cfg = CurveConfig::identity(3, 2).unwrap(); // 6-bit key in one limb
        let key = HilbertKey { limbs: vec![1 << 6] };
        assert!(matches!(
            hilbert_decode(&key, &cfg),
            Err(Error::KeyOutOfRange { .. })
        ));
    }

    #[test]
    fn key_width_limit_enforced() {
        let err = CurveConfig::new(513, 8, (0..513).collect(), 0).unwrap_err();
        assert!(matches!(err, Error::KeyWidthExceeded { bits: 4104, .. }));
    }

    #[test]
    fn grid_mapping_boundaries() {
        let cfg = CurveConfig::identity(3, 4).unwrap();
        let bounds = Bounds::new(vec![-1.0, 0.0, 2.0], vec![1.0, 10.0, 4.0]).unwrap();
        let lo = to_grid(&[-1.0, 0.0, 2.0], &bounds, &cfg).unwrap();
        assert_eq!(lo.coords(), &[0, 0, 0]);
        let hi = to_grid(&[1.0, 10.0, 4.0], &bounds, &cfg).unwrap();
        assert_eq!(hi.coords(), &[15, 15, 15]);
    }

    #[test]
    fn grid_mapping_rounds_half_up() {
        // m=2 over [0,3]: 1.6 maps to 1.6 on the 0..3 scale, which rounds to 2.
        let cfg = CurveConfig::identity(1, 2).unwrap();
        let bounds = Bounds::new(vec![0.0], vec![3.0]).unwrap();
        assert_eq!(to_grid(&[1.6], &bounds, &cfg).unwrap().coords(), &[2]);
        // Exact half: 0.5 rounds up to 1.
        assert_eq!(to_grid(&[0.5], &bounds, &cfg).unwrap().coords(), &[1]);
    }

    #[test]
    fn grid_clamps_out_of_range_queries() {
        let cfg = CurveConfig::identity(1, 3).unwrap();
        let bounds = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        assert_eq!(to_grid(&[-5.0], &bounds, &cfg).unwrap().coords(), &[0]);
        assert_eq!(to_grid(&[9.0], &bounds, &cfg).unwrap().coords(), &[7]);
    }

    #[test]
    fn axis_permutation_reorders_grid_axes() {
        let cfg = CurveConfig::new(2, 4, vec![1, 0], 0).unwrap();
        let bounds = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let g = to_grid(&[0.0, 1.0], &bounds, &cfg).unwrap();
        // Output axis 0 carries input dimension 1.
        assert_eq!(g.coords(), &[15, 0]);
    }

    #[test]
    fn compare_is_lawful_and_matches_encode() {
        let cfg = CurveConfig::identity(6, 5).unwrap();
        let bounds = Bounds::new(vec![0.0; 6], vec![1.0; 6]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f32> {
            (0..6).map(|_| rng.gen_range(0.0..1.0)).collect()
        };
        for _ in 0..10_000 {
            let a = random_vec(&mut rng);
            let b = random_vec(&mut rng);
            let ab = hilbert_compare(&a, &b, &bounds, &cfg).unwrap();
            let ba = hilbert_compare(&b, &a, &bounds, &cfg).unwrap();
            assert_eq!(ab, ba.reverse());
            let ka = hilbert_encode(&to_grid(&a, &bounds, &cfg).unwrap(), &cfg).unwrap();
            let kb = hilbert_encode(&to_grid(&b, &bounds, &cfg).unwrap(), &cfg).unwrap();
            assert_eq!(ab, ka.cmp(&kb));
            assert_eq!(
                hilbert_compare(&a, &a, &bounds, &cfg).unwrap(),
                std::cmp::Ordering::Equal
            );
        }
    }

    #[test]
    fn compare_transitive_on_random_triples() {
        let cfg = CurveConfig::identity(4, 4).unwrap();
        let bounds = Bounds::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10_000 {
            let mut vs: Vec<Vec<f32>> = (0..3)
                .map(|_| (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
                .collect();
            vs.sort_by(|a, b| hilbert_compare(a, b, &bounds, &cfg).unwrap());
            let ab = hilbert_compare(&vs[0], &vs[1], &bounds, &cfg).unwrap();
            let bc = hilbert_compare(&vs[1], &vs[2], &bounds, &cfg).unwrap();
            let ac = hilbert_compare(&vs[0], &vs[2], &bounds, &cfg).unwrap();
            assert!(ab != std::cmp::Ordering::Greater);
            assert!(bc != std::cmp::Ordering::Greater);
            assert!(ac != std::cmp::Ordering::Greater);
        }
    }

    #[test]
    fn sort_empty_and_single() {
        let cfg = CurveConfig::identity(2, 4).unwrap();
        let empty = VectorDataset::new(2, vec![]).unwrap();
        let order = hilbert_sort(&empty, &Bounds::of(&empty), &cfg).unwrap();
        assert!(order.is_empty());

        let single = VectorDataset::new(2, vec![0.3, 0.7]).unwrap();
        let order = hilbert_sort(&single, &Bounds::of(&single), &cfg).unwrap();
        assert_eq!(order.perm(), &[0]);
        assert_eq!(order.inverse(), &[0]);
    }

    #[test]
    fn sort_matches_key_sort_oracle() {
        // 16-point 2-D grid.
        let mut rows = Vec::new();
        for x in 0..4 {
            for y in 0..4 {
                rows.push(vec![x as f32, y as f32]);
            }
        }
        let ds = VectorDataset::from_rows(&rows).unwrap();
        let bounds = Bounds::of(&ds);
        let cfg = CurveConfig::identity(2, 2).unwrap();
        let order = hilbert_sort(&ds, &bounds, &cfg).unwrap();

        let mut oracle: Vec<u32> = (0..16).collect();
        let keys: Vec<HilbertKey> = rows
            .iter()
            .map(|r| hilbert_encode(&to_grid(r, &bounds, &cfg).unwrap(), &cfg).unwrap())
            .collect();
        oracle.sort_by(|&a, &b| keys[a as usize].cmp(&keys[b as usize]).then(a.cmp(&b)));
        assert_eq!(order.perm(), &oracle[..]);

        // perm and inverse are mutually inverse.
        for pos in 0..order.len() {
            assert_eq!(order.inverse()[order.perm()[pos] as usize] as usize, pos);
        }
    }

    #[test]
    fn different_axis_perms_generally_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f32>> = (0..200)
            .map(|_| (0..8).map(|_| rng.gen_range(0.0f32..1.0)).collect())
            .collect();
        let ds = VectorDataset::from_rows(&rows).unwrap();
        let bounds = Bounds::of(&ds);
        let a = CurveConfig::derived(8, 8, 42, 0).unwrap();
        let b = CurveConfig::derived(8, 8, 42, 1).unwrap();
        assert_ne!(a.axis_perm(), b.axis_perm());
        let oa = hilbert_sort(&ds, &bounds, &a).unwrap();
        let ob = hilbert_sort(&ds, &bounds, &b).unwrap();
        assert_ne!(oa.perm(), ob.perm());
    }

    #[test]
    fn derived_configs_are_reproducible() {
        let a = CurveConfig::derived(16, 8, 9, 4).unwrap();
        let b = CurveConfig::derived(16, 8, 9, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn position_search_boundaries_and_equals() {
        let rows: Vec<Vec<f32>> = (0..8).map(|i| vec![i as f32, i as f32]).collect();
        let ds = VectorDataset::from_rows(&rows).unwrap();
        let bounds = Bounds::of(&ds);
        let cfg = CurveConfig::identity(2, 4).unwrap();
        let order = hilbert_sort(&ds, &bounds, &cfg).unwrap();

        // Below everything in Hilbert order: the first element's own vector is
        // position 0, and anything in the same cell shares it (first-of-equals).
        let first = ds.row(order.perm()[0] as usize);
        assert_eq!(position_search(&order, &ds, first, &bounds, &cfg).unwrap(), 0);

        // The element at position 5 finds position 5.
        let fifth = ds.row(order.perm()[5] as usize);
        assert_eq!(position_search(&order, &ds, fifth, &bounds, &cfg).unwrap(), 5);
    }

    #[test]
    fn position_search_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f32>> = (0..500)
            .map(|_| (0..3).map(|_| rng.gen_range(0.0f32..1.0)).collect())
            .collect();
        let ds = VectorDataset::from_rows(&rows).unwrap();
        let bounds = Bounds::of(&ds);
        let cfg = CurveConfig::derived(3, 6, 5, 0).unwrap();
        let order = hilbert_sort(&ds, &bounds, &cfg).unwrap();

        for _ in 0..1000 {
            let q: Vec<f32> = (0..3).map(|_| rng.gen_range(-0.2f32..1.2)).collect();
            let got = position_search(&order, &ds, &q, &bounds, &cfg).unwrap();
            let linear = order
                .perm()
                .iter()
                .position(|&id| {
                    hilbert_compare(ds.row(id as usize), &q, &bounds, &cfg).unwrap()
                        != std::cmp::Ordering::Less
                })
                .unwrap_or(order.len());
            assert_eq!(got, linear);
        }
    }
}
