//! Approximate k-NN graph construction from successive Hilbert sorts.
//!
//! Every point is also a query here, so no trees are kept: each pass sorts
//! the whole dataset along one randomized curve, harvests a `k1` window
//! around every point's own position (self excluded), and discards the sorted
//! sequence before the next pass. Candidates stream through a bounded
//! per-node pool that keeps the `k2` best by sketch Hamming distance, which
//! is why transient memory does not grow with the number of sorts: the pool
//! holds exactly what a batch top-`k2` over all passes would keep, because
//! the `(distance, id)` order is total and a candidate evicted now would also
//! lose the batch comparison later.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::codes::{self, CodeTable};
use crate::curve::{self, Bounds, CurveConfig};
use crate::dataset::VectorDataset;
use crate::dist::squared_l2;
use crate::error::{Error, Result};
use crate::forest;

/// Graph-construction hyperparameters: `n` Hilbert sorts, a `k1` window per
/// sort, `k2` sketch-stage survivors, and `k_out` final neighbors per node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphParams {
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    pub k_out: usize,
    pub seed: u64,
    /// Re-rank with exact float distances (the default); switch off to rank
    /// against dequantized codes instead.
    #[serde(default = "default_exact_final")]
    pub exact_final: bool,
}

fn default_exact_final() -> bool {
    true
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "must be positive"));
        }
        if self.k1 < 2 {
            return Err(Error::invalid("k1", "must be at least 2"));
        }
        if self.k2 == 0 {
            return Err(Error::invalid("k2", "must be positive"));
        }
        if self.k_out == 0 {
            return Err(Error::invalid("k_out", "must be positive"));
        }
        if self.k_out > self.k1 || self.k_out > self.k2 {
            return Err(Error::invalid(
                "k_out",
                format!(
                    "k_out={} cannot exceed k1={} or k2={}; the pool could not fill a row",
                    self.k_out, self.k1, self.k2
                ),
            ));
        }
        Ok(())
    }
}

/// Directed k-NN graph: `count` rows of `k_out` neighbor ids, each row sorted
/// by ascending distance with ascending-id tie-break. No self-loops, no
/// duplicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnnGraph {
    k_out: usize,
    neighbors: Vec<u32>,
}

impl KnnGraph {
    pub fn new(k_out: usize, neighbors: Vec<u32>) -> Result<Self> {
        if k_out == 0 {
            return Err(Error::invalid("k_out", "must be positive"));
        }
        if !neighbors.len().is_multiple_of(k_out) {
            return Err(Error::ShapeMismatch {
                reason: format!(
                    "neighbor count {} is not a multiple of k_out {}",
                    neighbors.len(),
                    k_out
                ),
            });
        }
        let g = KnnGraph { k_out, neighbors };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        let count = self.count();
        let mut row_ids = Vec::with_capacity(self.k_out);
        for (i, row) in self.neighbors.chunks_exact(self.k_out).enumerate() {
            row_ids.clear();
            row_ids.extend_from_slice(row);
            row_ids.sort_unstable();
            for pair in row_ids.windows(2) {
                if pair[0] == pair[1] {
                    return Err(Error::DuplicateId {
                        row: i,
                        id: pair[0],
                    });
                }
            }
            for &id in row {
                if id as usize >= count {
                    return Err(Error::IdOutOfRange { id, count });
                }
                if id as usize == i {
                    return Err(Error::ShapeMismatch {
                        reason: format!("self-loop at node {i}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn k_out(&self) -> usize {
        self.k_out
    }

    pub fn count(&self) -> usize {
        self.neighbors.len() / self.k_out
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k_out..(i + 1) * self.k_out]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> {
        self.neighbors.chunks_exact(self.k_out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_header(
            w,
            binfmt::MAGIC_GRAPH,
            self.k_out as u32,
            self.count() as u32,
        )?;
        binfmt::write_u32_slice(w, &self.neighbors)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let g = Self::read_from(&mut r, path)?;
        binfmt::expect_eof(&mut r, path)?;
        Ok(g)
    }

    pub(crate) fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let (k_out, count) = binfmt::read_header(r, binfmt::MAGIC_GRAPH, path)?;
        if k_out == 0 {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "k_out must be positive".to_string(),
            });
        }
        let neighbors = binfmt::read_u32_vec(r, k_out as usize * count as usize, path)?;
        Self::new(k_out as usize, neighbors)
    }
}

/// Work counters for one graph build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub nodes: usize,
    /// Sketch Hamming evaluations across all passes (window candidates).
    pub hamming_evals: u64,
    /// Final distance evaluations (pool survivors re-ranked per node).
    pub distance_evals: u64,
}

/// Graph plus the counters of the build that produced it.
#[derive(Debug, Clone)]
pub struct GraphOutput {
    pub graph: KnnGraph,
    pub stats: GraphStats,
}

// Bounded per-node candidate pool of packed (hamming << 32 | id) entries,
// kept sorted ascending. Holds the k2 smallest unique entries seen so far;
// identical ids always carry identical packed values, so a duplicate is an
// exact match at its insertion point.
#[inline]
fn pool_insert(pool: &mut [u64], len: &mut u32, cap: usize, entry: u64) {
    let n = *len as usize;
    if n == cap && entry >= pool[n - 1] {
        return;
    }
    match pool[..n].binary_search(&entry) {
        Ok(_) => {}
        Err(at) => {
            if n < cap {
                pool.copy_within(at..n, at + 1);
                pool[at] = entry;
                *len += 1;
            } else {
                pool.copy_within(at..n - 1, at + 1);
                pool[at] = entry;
            }
        }
    }
}

/// Builds the approximate k-NN graph. Per-pass scratch (keys, permutation,
/// inverse) is reused across passes; the candidate pool is `count * k2`
/// entries regardless of how many sorts run.
pub fn build_graph(ds: &VectorDataset, params: &GraphParams) -> Result<GraphOutput> {
    build_graph_with_bits(ds, params, curve::DEFAULT_BITS_PER_AXIS)
}

pub fn build_graph_with_bits(
    ds: &VectorDataset,
    params: &GraphParams,
    bits_per_axis: u32,
) -> Result<GraphOutput> {
    params.validate()?;
    let count = ds.count();
    if count <= params.k_out {
        return Err(Error::invalid(
            "k_out",
            format!("needs more than k_out={} points, got {count}", params.k_out),
        ));
    }
    let codes = CodeTable::fit(ds)?;
    let bounds = Bounds::of(ds);
    let k2 = params.k2;

    let mut pool = vec![0u64; count * k2];
    let mut pool_len = vec![0u32; count];
    let mut inverse = vec![0u32; count];
    let mut hamming_evals = 0u64;

    for t in 0..params.n as u64 {
        let cfg = CurveConfig::derived(ds.dim(), bits_per_axis, params.seed, t)?;
        let (perm, keys) = curve::sort_keys(ds, &bounds, &cfg)?;
        drop(keys);
        for (pos, &id) in perm.iter().enumerate() {
            inverse[id as usize] = pos as u32;
        }

        pool.par_chunks_mut(k2)
            .zip(pool_len.par_iter_mut())
            .enumerate()
            .for_each(|(node, (node_pool, len))| {
                let p = inverse[node] as usize;
                // Window of k1 + 1 centered on the node's own position; the
                // node itself is skipped, leaving its k1 nearest positions.
                let win = forest::window(&perm, p, params.k1 + 1);
                let node_row = codes.row(node);
                for &cand in win {
                    if cand as usize == node {
                        continue;
                    }
                    let dist = codes::masked_hamming(node_row, codes.row(cand as usize));
                    pool_insert(node_pool, len, k2, codes::pack_dist_id(dist, cand));
                }
            });
        hamming_evals += perm.len().min(params.k1 + 1).saturating_sub(1) as u64 * count as u64;
    }

    // Final selection: exact (or asymmetric) distances over each node's pool.
    let distance_evals: u64 = pool_len.iter().map(|&l| l as u64).sum();
    let mut neighbors = vec![0u32; count * params.k_out];
    neighbors
        .par_chunks_mut(params.k_out)
        .enumerate()
        .for_each(|(node, out)| {
            let len = pool_len[node] as usize;
            let entries = &pool[node * k2..node * k2 + len];
            let mut scored: Vec<(f64, u32)> = entries
                .iter()
                .map(|&packed| {
                    let id = codes::unpack_id(packed);
                    let d = if params.exact_final {
                        squared_l2(ds.row(node), ds.row(id as usize))
                    } else {
                        codes::asymmetric_distance_packed(
                            ds.row(node),
                            codes.row(id as usize),
                            codes.params(),
                        )
                    };
                    (d, id)
                })
                .collect();
            let take = params.k_out.min(scored.len());
            if take < scored.len() {
                scored.select_nth_unstable_by(take - 1, |a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                });
                scored.truncate(take);
            }
            scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (slot, (_, id)) in out.iter_mut().zip(scored) {
                *slot = id;
            }
        });

    let graph = KnnGraph::new(params.k_out, neighbors)?;
    Ok(GraphOutput {
        graph,
        stats: GraphStats {
            nodes: count,
            hamming_evals,
            distance_evals,
        },
    })
}

/// Analytic bound in bytes on the transient memory a graph build needs beyond
/// the dataset itself, independent of the number of sorts `n`: the code
/// table, the candidate pool, and the larger of the per-pass scratch
/// (keys + permutation + inverse) and the output graph.
pub fn peak_transient_memory(params: &GraphParams, count: usize, dim: usize) -> u64 {
    if count == 0 {
        return 0;
    }
    let codes_bytes = (count * dim.div_ceil(2) + 2 * dim * 4) as u64;
    let pool_bytes = (count * params.k2 * 8 + count * 4) as u64;
    let key_limbs = (dim * curve::DEFAULT_BITS_PER_AXIS as usize).div_ceil(64);
    let per_pass = (count * key_limbs * 8 + count * 4 + count * 4) as u64;
    let output = (count * params.k_out * 4) as u64;
    codes_bytes + pool_bytes + per_pass.max(output)
}

/// Mean over nodes of the fraction of true neighbors recovered:
/// `|g.row(i) ∩ truth.row(i)| / k_out`.
pub fn graph_recall(g: &KnnGraph, truth: &KnnGraph) -> Result<f64> {
    if g.count() != truth.count() || g.k_out() != truth.k_out() {
        return Err(Error::ShapeMismatch {
            reason: format!(
                "graphs disagree: {}x{} vs {}x{}",
                g.count(),
                g.k_out(),
                truth.count(),
                truth.k_out()
            ),
        });
    }
    if g.count() == 0 {
        return Ok(1.0);
    }
    let hits: u64 = g
        .rows()
        .zip(truth.rows())
        .map(|(a, b)| {
            let mut sa = a.to_vec();
            sa.sort_unstable();
            b.iter().filter(|id| sa.binary_search(id).is_ok()).count() as u64
        })
        .sum();
    Ok(hits as f64 / (g.count() * g.k_out()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_ds(count: usize, dim: usize, seed: u64) -> VectorDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f32>> = (0..count)
            .map(|_| (0..dim).map(|_| rng.gen_range(0.0f32..1.0)).collect())
            .collect();
        VectorDataset::from_rows(&rows).unwrap()
    }

    fn exact_graph(ds: &VectorDataset, k_out: usize) -> KnnGraph {
        let count = ds.count();
        let mut neighbors = Vec::with_capacity(count * k_out);
        for i in 0..count {
            let mut scored: Vec<(f64, u32)> = (0..count)
                .filter(|&j| j != i)
                .map(|j| (squared_l2(ds.row(i), ds.row(j)), j as u32))
                .collect();
            scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            neighbors.extend(scored.into_iter().take(k_out).map(|(_, id)| id));
        }
        KnnGraph::new(k_out, neighbors).unwrap()
    }

    #[test]
    fn pool_insert_keeps_k_smallest_unique() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..200 {
            let cap = rng.gen_range(1..12usize);
            let mut pool = vec![0u64; cap];
            let mut len = 0u32;
            let stream: Vec<u64> = (0..60).map(|_| rng.gen_range(0..40u64)).collect();
            for &e in &stream {
                pool_insert(&mut pool, &mut len, cap, e);
            }
            let mut want: Vec<u64> = stream.clone();
            want.sort_unstable();
            want.dedup();
            want.truncate(cap);
            assert_eq!(&pool[..len as usize], &want[..]);
        }
    }

    #[test]
    fn exhaustive_build_equals_brute_force_graph() {
        for seed in 0..4u64 {
            let count = 80 + 31 * seed as usize;
            let ds = random_ds(count, 5, 400 + seed);
            let params = GraphParams {
                n: 2,
                k1: count,
                k2: count,
                k_out: 8,
                seed,
                exact_final: true,
            };
            let out = build_graph(&ds, &params).unwrap();
            let truth = exact_graph(&ds, 8);
            assert_eq!(out.graph, truth, "seed={seed}");
        }
    }

    #[test]
    fn duplicate_points_list_each_other_first() {
        let mut rows: Vec<Vec<f32>> = (0..30)
            .map(|i| vec![i as f32, (i * 7 % 30) as f32])
            .collect();
        rows[10] = vec![100.0, 100.0];
        rows[20] = vec![100.0, 100.0];
        let ds = VectorDataset::from_rows(&rows).unwrap();
        let params = GraphParams {
            n: 2,
            k1: 30,
            k2: 30,
            k_out: 3,
            seed: 1,
            exact_final: true,
        };
        let g = build_graph(&ds, &params).unwrap().graph;
        assert_eq!(g.row(10)[0], 20);
        assert_eq!(g.row(20)[0], 10);
    }

    #[test]
    fn no_self_loops_and_no_duplicates() {
        let ds = random_ds(300, 6, 77);
        let params = GraphParams {
            n: 4,
            k1: 20,
            k2: 15,
            k_out: 10,
            seed: 5,
            exact_final: true,
        };
        let g = build_graph(&ds, &params).unwrap().graph;
        for i in 0..g.count() {
            let row = g.row(i);
            assert!(!row.contains(&(i as u32)));
            let mut sorted = row.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), row.len());
        }
    }

    #[test]
    fn streaming_pool_equals_batch_sketch_topk() {
        // The pool applied per pass must select exactly what a batch top-k2
        // over the union of all windows would.
        let ds = random_ds(150, 4, 88);
        let codes = CodeTable::fit(&ds).unwrap();
        let bounds = Bounds::of(&ds);
        let params = GraphParams {
            n: 3,
            k1: 12,
            k2: 9,
            k_out: 5,
            seed: 42,
            exact_final: true,
        };

        // Collect each node's full candidate stream the slow way.
        let count = ds.count();
        let mut streams: Vec<Vec<u32>> = vec![Vec::new(); count];
        for t in 0..params.n as u64 {
            let cfg = CurveConfig::derived(4, 8, params.seed, t).unwrap();
            let order = curve::hilbert_sort(&ds, &bounds, &cfg).unwrap();
            for (node, stream) in streams.iter_mut().enumerate() {
                let p = order.inverse()[node] as usize;
                for &cand in forest::window(order.perm(), p, params.k1 + 1) {
                    if cand as usize != node {
                        stream.push(cand);
                    }
                }
            }
        }

        // Batch oracle via the public sketch_topk on each node's stream.
        let mut pool = vec![0u64; count * params.k2];
        let mut pool_len = vec![0u32; count];
        for node in 0..count {
            let node_pool = &mut pool[node * params.k2..(node + 1) * params.k2];
            for &cand in &streams[node] {
                let dist = codes.sketch_hamming_rows(node, cand as usize);
                pool_insert(
                    node_pool,
                    &mut pool_len[node],
                    params.k2,
                    codes::pack_dist_id(dist, cand),
                );
            }
            let got: Vec<u32> = node_pool[..pool_len[node] as usize]
                .iter()
                .map(|&p| codes::unpack_id(p))
                .collect();
            let want = codes::sketch_topk(
                &streams[node],
                &codes.sketch(node),
                &codes,
                params.k2,
            )
            .unwrap();
            assert_eq!(got, want, "node={node}");
        }
    }

    #[test]
    fn build_is_deterministic() {
        let ds = random_ds(400, 8, 99);
        let params = GraphParams {
            n: 6,
            k1: 16,
            k2: 12,
            k_out: 8,
            seed: 7,
            exact_final: true,
        };
        let a = build_graph(&ds, &params).unwrap();
        let b = build_graph(&ds, &params).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.stats, b.stats);
    }

    #[test]
    fn rejects_too_few_points() {
        let ds = random_ds(10, 3, 101);
        let params = GraphParams {
            n: 1,
            k1: 5,
            k2: 5,
            k_out: 10,
            seed: 0,
            exact_final: true,
        };
        assert!(build_graph(&ds, &params).is_err());
    }

    #[test]
    fn transient_bound_is_n_independent() {
        let a = GraphParams {
            n: 1,
            k1: 96,
            k2: 60,
            k_out: 15,
            seed: 0,
            exact_final: true,
        };
        let mut b = a.clone();
        b.n = 720;
        assert_eq!(
            peak_transient_memory(&a, 100_000, 64),
            peak_transient_memory(&b, 100_000, 64)
        );
        assert_eq!(peak_transient_memory(&a, 0, 64), 0);
    }

    #[test]
    fn graph_recall_examples() {
        let ds = random_ds(60, 4, 103);
        let truth = exact_graph(&ds, 4);
        assert_eq!(graph_recall(&truth, &truth).unwrap(), 1.0);

        // Disjoint rows score zero.
        let count = truth.count();
        let mut rotated = Vec::with_capacity(count * 4);
        for i in 0..count {
            // Four ids guaranteed different from the true row and from i.
            let mut picked = Vec::new();
            let mut cand = 0u32;
            while picked.len() < 4 {
                if cand as usize != i && !truth.row(i).contains(&cand) {
                    picked.push(cand);
                }
                cand += 1;
            }
            rotated.extend(picked);
        }
        let disjoint = KnnGraph::new(4, rotated).unwrap();
        assert_eq!(graph_recall(&disjoint, &truth).unwrap(), 0.0);
    }

    #[test]
    fn graph_recall_half_overlap() {
        // Two rows half-overlapping, two equal: 6 hits of 8 slots -> 0.75.
        let truth = KnnGraph::new(2, vec![1, 2, 0, 2, 1, 3, 1, 2]).unwrap();
        let g = KnnGraph::new(2, vec![1, 3, 0, 3, 1, 3, 1, 2]).unwrap();
        assert_eq!(graph_recall(&g, &truth).unwrap(), 0.75);
    }

    #[test]
    fn graph_recall_shape_mismatch() {
        let a = KnnGraph::new(1, vec![1, 0]).unwrap();
        let b = KnnGraph::new(2, vec![1, 2, 0, 2, 0, 1]).unwrap();
        assert!(matches!(
            graph_recall(&a, &b),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn graph_file_round_trips() {
        let ds = random_ds(50, 3, 107);
        let g = exact_graph(&ds, 5);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("g.hfgr");
        g.save(&p1).unwrap();
        let back = KnnGraph::load(&p1).unwrap();
        assert_eq!(back, g);
        let p2 = dir.path().join("g2.hfgr");
        back.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn graph_file_rejects_self_loop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.hfgr");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"HFGR");
        bytes.extend_from_slice(&1u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes()); // k_out
        bytes.extend_from_slice(&2u32.to_le_bytes()); // count
        bytes.extend_from_slice(&0u32.to_le_bytes()); // node 0 -> 0 (self)
        bytes.extend_from_slice(&0u32.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(KnnGraph::load(&path).is_err());
    }
}
