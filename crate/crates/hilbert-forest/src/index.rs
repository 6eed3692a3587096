//! End-to-end approximate k-NN search: preprocessing (quantize, sketch,
//! master order, forest) and the batched three-stage query pipeline.
//!
//! Stage 1 walks every tree once for the whole query batch and harvests a
//! window of `k1` ids around each query's position. Stage 2 keeps the `k2`
//! candidates with the smallest sketch Hamming distance. Stage 3 optionally
//! expands each survivor with its `h` neighbors on each side of the master
//! order, then re-ranks by vector distance — asymmetric against the stored
//! codes by default, exact against the float vectors when `exact_final` is
//! set. One Hilbert order (tree 0's) is the master order: code rows are
//! physically rearranged into it, so the expansion step touches consecutive
//! rows.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binfmt;
use crate::codes::{self, CodeTable};
use crate::curve::HilbertOrder;
use crate::dataset::{ResultSet, VectorDataset};
use crate::dist::squared_l2;
use crate::error::{Error, Result};
use crate::forest::HilbertForest;

/// The master order: positions <-> original ids for the Hilbert order that
/// codes and sketches are physically laid out in.
pub type MasterOrder = HilbertOrder;

/// Search-time hyperparameters.
///
/// `n` trees contribute `k1` candidates each; `k2` survive the sketch filter;
/// each survivor drags in `h` master-order neighbors per side; the best `k`
/// by vector distance are returned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchParams {
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    pub h: usize,
    pub k: usize,
    /// Re-rank with exact float distances instead of asymmetric distances
    /// against the stored codes. Exists for oracle testing.
    #[serde(default)]
    pub exact_final: bool,
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("n", self.n),
            ("k1", self.k1),
            ("k2", self.k2),
            ("k", self.k),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.k > self.k1 || self.k > self.k2 {
            return Err(Error::invalid(
                "k",
                format!(
                    "k={} cannot exceed k1={} or k2={}; later stages could not fill k rows",
                    self.k, self.k1, self.k2
                ),
            ));
        }
        Ok(())
    }
}

/// Per-stage work counters for one search run. All totals are integer sums
/// over queries, so re-running the same search reproduces them exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub queries: usize,
    /// Candidate slots harvested from the forest, duplicates included
    /// (`n * min(k1, count)` per query).
    pub candidate_slots: u64,
    /// Sketch Hamming evaluations: unique stage-1 candidates per query.
    pub hamming_evals: u64,
    /// Full (asymmetric or exact) distance evaluations: expanded candidates
    /// per query.
    pub distance_evals: u64,
}

impl SearchStats {
    pub fn hamming_per_query(&self) -> f64 {
        self.hamming_evals as f64 / self.queries.max(1) as f64
    }

    pub fn distance_per_query(&self) -> f64 {
        self.distance_evals as f64 / self.queries.max(1) as f64
    }
}

/// Results plus the counters of the run that produced them.
#[derive(Debug, Clone)]
pub struct SearchOutput {
    pub results: ResultSet,
    pub stats: SearchStats,
}

/// Immutable search index: forest, master order, and master-ordered codes.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnIndex {
    forest: HilbertForest,
    master: MasterOrder,
    codes: CodeTable,
}

impl AnnIndex {
    /// Builds the full index: fits the quantizer, builds `n` trees with
    /// derived axis permutations, selects tree 0's order as the master order,
    /// and rearranges the code rows into it. Deterministic for fixed inputs.
    pub fn build(ds: &VectorDataset, n: usize, leaf_size: usize, seed: u64) -> Result<Self> {
        if ds.count() == 0 {
            return Err(Error::EmptyDataset {
                context: "index build needs at least one vector",
            });
        }
        let forest = HilbertForest::build(ds, n, leaf_size, seed)?;
        let master = HilbertOrder::from_perm(forest.tree(0).perm().to_vec());
        let codes = CodeTable::fit(ds)?.reordered(master.perm())?;
        Ok(AnnIndex {
            forest,
            master,
            codes,
        })
    }

    pub fn forest(&self) -> &HilbertForest {
        &self.forest
    }

    pub fn master(&self) -> &MasterOrder {
        &self.master
    }

    /// Code rows are stored in master order: row `p` belongs to original id
    /// `master().perm()[p]`.
    pub fn codes(&self) -> &CodeTable {
        &self.codes
    }

    pub fn count(&self) -> usize {
        self.forest.count()
    }

    pub fn dim(&self) -> usize {
        self.forest.dim()
    }

    fn check_dataset(&self, ds: &VectorDataset) -> Result<()> {
        if ds.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: ds.dim(),
            });
        }
        if ds.count() != self.count() {
            return Err(Error::ShapeMismatch {
                reason: format!(
                    "dataset has {} points but the index was built over {}",
                    ds.count(),
                    self.count()
                ),
            });
        }
        Ok(())
    }

    /// Stage 1 alone: the per-query candidate multiset harvested from the
    /// first `n` trees, `min(k1, count)` slots per tree, duplicates retained.
    pub fn collect_candidates(
        &self,
        ds: &VectorDataset,
        queries: &VectorDataset,
        n: usize,
        k1: usize,
    ) -> Result<Vec<Vec<u32>>> {
        self.check_dataset(ds)?;
        if n == 0 || n > self.forest.len() {
            return Err(Error::invalid(
                "n",
                format!("must be in 1..={} (forest size)", self.forest.len()),
            ));
        }
        if k1 == 0 {
            return Err(Error::invalid("k1", "must be positive"));
        }
        if queries.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: queries.dim(),
            });
        }
        let win = k1.min(self.count());
        let mut c1: Vec<Vec<u32>> = vec![Vec::with_capacity(n * win); queries.count()];
        let bounds = self.forest.bounds();
        for t in 0..n {
            let tree = self.forest.tree(t);
            let positions = tree.batch_positions(ds, bounds, queries)?;
            c1.par_iter_mut()
                .zip(positions.par_iter())
                .for_each(|(slots, &pos)| {
                    slots.extend_from_slice(tree.candidate_window(pos as usize, k1));
                });
        }
        Ok(c1)
    }

    /// Adds the `h` master-order neighbors on each side of every id, clamped
    /// at the sequence boundaries, and deduplicates. The result is returned
    /// in master-order position order.
    pub fn expand_master(&self, ids: &[u32], h: usize) -> Result<Vec<u32>> {
        let count = self.count();
        let mut positions = Vec::with_capacity(ids.len() * (2 * h + 1));
        for &id in ids {
            if id as usize >= count {
                return Err(Error::IdOutOfRange { id, count });
            }
            let p = self.master.inverse()[id as usize] as usize;
            let lo = p.saturating_sub(h);
            let hi = (p + h).min(count - 1);
            positions.extend(lo as u32..=hi as u32);
        }
        positions.sort_unstable();
        positions.dedup();
        Ok(positions
            .into_iter()
            .map(|p| self.master.perm()[p as usize])
            .collect())
    }

    /// Batched three-stage search. `ds` must be the dataset the index was
    /// built from; it anchors in-leaf position refinement and, when
    /// `exact_final` is set, the final re-ranking distances.
    ///
    /// Returns `min(k, count)` ids per query, sorted by ascending distance
    /// with ascending-id tie-break.
    pub fn search(
        &self,
        ds: &VectorDataset,
        queries: &VectorDataset,
        params: &SearchParams,
    ) -> Result<SearchOutput> {
        params.validate()?;
        self.check_dataset(ds)?;
        if queries.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: queries.dim(),
            });
        }
        if params.n > self.forest.len() {
            return Err(Error::invalid(
                "n",
                format!("must be in 1..={} (forest size)", self.forest.len()),
            ));
        }

        let count = self.count();
        let k_eff = params.k.min(count);
        let c1 = self.collect_candidates(ds, queries, params.n, params.k1)?;

        let quant = self.codes.params();
        let inverse = self.master.inverse();
        let perm = self.master.perm();

        struct QueryRow {
            ids: Vec<u32>,
            hamming: u64,
            distances: u64,
        }

        let rows: Vec<QueryRow> = (0..queries.count())
            .into_par_iter()
            .map(|qi| {
                let q = queries.row(qi);

                // Stage 2: sketch filter over unique candidates.
                let mut unique = c1[qi].clone();
                unique.sort_unstable();
                unique.dedup();
                let q_codes = codes::quantize(q, quant).expect("dims already checked");
                let q_row = self.codes.pack(&q_codes).expect("dims already checked");
                let mut ranked: Vec<u64> = unique
                    .iter()
                    .map(|&id| {
                        let pos = inverse[id as usize] as usize;
                        codes::pack_dist_id(self.codes.sketch_hamming(pos, &q_row), id)
                    })
                    .collect();
                let keep = params.k2.min(ranked.len());
                if keep < ranked.len() {
                    ranked.select_nth_unstable(keep - 1);
                    ranked.truncate(keep);
                }

                // Stage 3: master-order expansion, then re-rank.
                let mut positions: Vec<u32> = Vec::with_capacity(ranked.len() * (2 * params.h + 1));
                for &packed in &ranked {
                    let id = codes::unpack_id(packed);
                    let p = inverse[id as usize] as usize;
                    let lo = p.saturating_sub(params.h);
                    let hi = (p + params.h).min(count - 1);
                    positions.extend(lo as u32..=hi as u32);
                }
                positions.sort_unstable();
                positions.dedup();

                let mut scored: Vec<(f64, u32)> = positions
                    .iter()
                    .map(|&p| {
                        let id = perm[p as usize];
                        let d = if params.exact_final {
                            squared_l2(q, ds.row(id as usize))
                        } else {
                            codes::asymmetric_distance_packed(q, self.codes.row(p as usize), quant)
                        };
                        (d, id)
                    })
                    .collect();
                let take = k_eff.min(scored.len());
                if take < scored.len() {
                    scored.select_nth_unstable_by(take - 1, |a, b| {
                        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
                    });
                    scored.truncate(take);
                }
                scored.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

                QueryRow {
                    ids: scored.into_iter().map(|(_, id)| id).collect(),
                    hamming: unique.len() as u64,
                    distances: positions.len() as u64,
                }
            })
            .collect();

        let mut ids = Vec::with_capacity(queries.count() * k_eff);
        let mut stats = SearchStats {
            queries: queries.count(),
            candidate_slots: c1.iter().map(|s| s.len() as u64).sum(),
            hamming_evals: 0,
            distance_evals: 0,
        };
        for row in rows {
            debug_assert_eq!(row.ids.len(), k_eff);
            ids.extend_from_slice(&row.ids);
            stats.hamming_evals += row.hamming;
            stats.distance_evals += row.distances;
        }
        let results = ResultSet::new(k_eff.max(1), ids)?;
        Ok(SearchOutput { results, stats })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))
    }

    pub(crate) fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        binfmt::write_header(
            w,
            binfmt::MAGIC_INDEX,
            self.dim() as u32,
            self.count() as u32,
        )?;
        self.forest.write_to(w)?;
        binfmt::write_u32_slice(w, self.master.perm())?;
        self.codes.write_to(w)?;
        w.flush()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
        let index = Self::read_from(&mut r, path)?;
        binfmt::expect_eof(&mut r, path)?;
        Ok(index)
    }

    pub(crate) fn read_from(r: &mut impl Read, path: &Path) -> Result<Self> {
        let (dim, count) = binfmt::read_header(r, binfmt::MAGIC_INDEX, path)?;
        let forest = HilbertForest::read_from(r, path)?;
        if forest.dim() != dim as usize || forest.count() != count as usize {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "index and forest headers disagree".to_string(),
            });
        }
        let perm = binfmt::read_u32_vec(r, count as usize, path)?;
        let master = HilbertOrder::from_perm(perm);
        let codes = CodeTable::read_from(r, path)?;
        if codes.count() != count as usize || codes.dim() != dim as usize {
            return Err(Error::MalformedHeader {
                path: path.display().to_string(),
                reason: "index and code-table headers disagree".to_string(),
            });
        }
        Ok(AnnIndex {
            forest,
            master,
            codes,
        })
    }
}
