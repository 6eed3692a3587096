//! Ground-truth generation, recall scoring, synthetic datasets, and
//! parameter sweeps with line-delimited run reports.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ResultSet, VectorDataset};
use crate::dist::{squared_l2_bounded, TopK};
use crate::error::{Error, Result};
use crate::graph::{self, GraphParams, KnnGraph};
use crate::index::{AnnIndex, SearchParams};

/// Exact k-NN results used as the reference when scoring recall.
pub type GroundTruth = ResultSet;

/// Exact k-NN by squared Euclidean distance, ties broken by ascending id.
pub fn brute_force_knn(
    ds: &VectorDataset,
    queries: &VectorDataset,
    k: usize,
) -> Result<GroundTruth> {
    if k == 0 {
        return Err(Error::invalid("k", "must be positive"));
    }
    if k > ds.count() {
        return Err(Error::invalid(
            "k",
            format!("k={} exceeds dataset size {}", k, ds.count()),
        ));
    }
    if queries.dim() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            actual: queries.dim(),
        });
    }
    let rows: Vec<Vec<u32>> = (0..queries.count())
        .into_par_iter()
        .map(|qi| {
            let q = queries.row(qi);
            let mut top = TopK::new(k);
            for i in 0..ds.count() {
                if let Some(d) = squared_l2_bounded(q, ds.row(i), top.bound()) {
                    top.push(d, i as u32);
                }
            }
            top.into_ids()
        })
        .collect();
    ResultSet::new(k, rows.concat())
}

/// Exact k-NN graph (self excluded), the reference for graph recall.
pub fn brute_force_graph(ds: &VectorDataset, k_out: usize) -> Result<KnnGraph> {
    if k_out == 0 {
        return Err(Error::invalid("k_out", "must be positive"));
    }
    if ds.count() <= k_out {
        return Err(Error::invalid(
            "k_out",
            format!("needs more than k_out={} points, got {}", k_out, ds.count()),
        ));
    }
    let count = ds.count();
    // One symmetric pass: each pair is scored once and offered to both
    // endpoints' top-k sets, with the looser of the two admission bounds
    // driving the early abort.
    let mut tops: Vec<TopK> = (0..count).map(|_| TopK::new(k_out)).collect();
    for j in 1..count {
        let row_j = ds.row(j);
        for i in 0..j {
            let bound = tops[i].bound().max(tops[j].bound());
            if let Some(d) = squared_l2_bounded(ds.row(i), row_j, bound) {
                tops[i].push(d, j as u32);
                tops[j].push(d, i as u32);
            }
        }
    }
    let mut neighbors = Vec::with_capacity(count * k_out);
    for top in tops {
        neighbors.extend(top.into_ids());
    }
    KnnGraph::new(k_out, neighbors)
}

/// Mean over queries of `|result_row ∩ truth_row| / k`, taking the first `k`
/// ids of each row. Order within the first `k` does not matter.
pub fn recall_at_k(result: &ResultSet, truth: &GroundTruth, k: usize) -> Result<f64> {
    if result.query_count() != truth.query_count() {
        return Err(Error::ShapeMismatch {
            reason: format!(
                "query counts differ: {} vs {}",
                result.query_count(),
                truth.query_count()
            ),
        });
    }
    if k == 0 || k > result.k() || k > truth.k() {
        return Err(Error::invalid(
            "k",
            format!(
                "k={} must be in 1..=min(result width {}, truth width {})",
                k,
                result.k(),
                truth.k()
            ),
        ));
    }
    if result.query_count() == 0 {
        return Ok(1.0);
    }
    let hits: u64 = result
        .rows()
        .zip(truth.rows())
        .map(|(r, t)| {
            let mut sorted: Vec<u32> = r[..k].to_vec();
            sorted.sort_unstable();
            t[..k]
                .iter()
                .filter(|id| sorted.binary_search(id).is_ok())
                .count() as u64
        })
        .sum();
    Ok(hits as f64 / (result.query_count() * k) as f64)
}

/// Synthetic dataset family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SynthKind {
    /// Coordinates uniform in [0, 1).
    Uniform,
    /// Cluster centers uniform in [0, 1)^dim, points normal around a randomly
    /// assigned center.
    GaussianMixture { clusters: usize, spread: f64 },
}

impl SynthKind {
    pub fn gaussian(clusters: usize, spread: f64) -> Self {
        SynthKind::GaussianMixture { clusters, spread }
    }
}

/// Deterministic synthetic data; the same `(count, dim, kind, seed)` always
/// yields identical bytes.
pub fn synth_dataset(count: usize, dim: usize, kind: SynthKind, seed: u64) -> Result<VectorDataset> {
    if count == 0 {
        return Err(Error::invalid("count", "must be positive"));
    }
    if dim == 0 {
        return Err(Error::invalid("dim", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = match kind {
        SynthKind::Uniform => (0..count * dim)
            .map(|_| rng.gen_range(0.0f32..1.0))
            .collect(),
        SynthKind::GaussianMixture { clusters, spread } => {
            if clusters == 0 {
                return Err(Error::invalid("clusters", "must be positive"));
            }
            let centers: Vec<f32> = (0..clusters * dim)
                .map(|_| rng.gen_range(0.0f32..1.0))
                .collect();
            let normal = Normal::new(0.0f64, spread.max(0.0)).map_err(|e| {
                Error::invalid("spread", format!("invalid normal distribution: {e}"))
            })?;
            let mut data = Vec::with_capacity(count * dim);
            for _ in 0..count {
                let c = rng.gen_range(0..clusters);
                for j in 0..dim {
                    let v = centers[c * dim + j] as f64 + normal.sample(&mut rng);
                    data.push(v as f32);
                }
            }
            data
        }
    };
    VectorDataset::new(dim, data)
}

/// One measured run: parameters, recall against the reference, wall time,
/// and per-stage work counters. Serialized as one JSON line per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub dataset: String,
    pub count: usize,
    pub dim: usize,
    pub seed: u64,
    pub n: usize,
    pub k1: usize,
    pub k2: usize,
    /// Master-order expansion radius; zero for graph runs.
    pub h: usize,
    /// Neighbors evaluated for recall (`k` for search, `k_out` for graphs).
    pub k_eval: usize,
    pub exact_final: bool,
    pub recall: f64,
    pub wall_secs: f64,
    pub hamming_evals_per_query: f64,
    pub distance_evals_per_query: f64,
}

impl RunReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialization cannot fail")
    }

    /// Appends one JSON line to the report file, creating it if needed.
    pub fn append_to(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        writeln!(f, "{}", self.to_json_line()).map_err(|e| Error::io(path, e))
    }
}

/// Runs one search combination and scores it against the ground truth.
pub fn run_search_trial(
    index: &AnnIndex,
    ds: &VectorDataset,
    queries: &VectorDataset,
    truth: &GroundTruth,
    params: &SearchParams,
    dataset_name: &str,
) -> Result<RunReport> {
    let started = Instant::now();
    let out = index.search(ds, queries, params)?;
    let wall_secs = started.elapsed().as_secs_f64();
    let k_eval = params.k.min(truth.k()).min(out.results.k());
    let recall = recall_at_k(&out.results, truth, k_eval)?;
    Ok(RunReport {
        task: "search".to_string(),
        dataset: dataset_name.to_string(),
        count: ds.count(),
        dim: ds.dim(),
        seed: index.forest().global_seed(),
        n: params.n,
        k1: params.k1,
        k2: params.k2,
        h: params.h,
        k_eval,
        exact_final: params.exact_final,
        recall,
        wall_secs,
        hamming_evals_per_query: out.stats.hamming_per_query(),
        distance_evals_per_query: out.stats.distance_per_query(),
    })
}

/// Runs every combination in declared order against one prebuilt index.
pub fn sweep_search(
    index: &AnnIndex,
    ds: &VectorDataset,
    queries: &VectorDataset,
    truth: &GroundTruth,
    grid: &[SearchParams],
    dataset_name: &str,
) -> Result<Vec<RunReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must contain at least one combination"));
    }
    grid.iter()
        .map(|p| run_search_trial(index, ds, queries, truth, p, dataset_name))
        .collect()
}

/// Builds one graph per combination and scores it against the exact graph.
pub fn sweep_graph(
    ds: &VectorDataset,
    truth: &KnnGraph,
    grid: &[GraphParams],
    dataset_name: &str,
) -> Result<Vec<RunReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "must contain at least one combination"));
    }
    grid.iter()
        .map(|params| {
            let started = Instant::now();
            let out = graph::build_graph(ds, params)?;
            let wall_secs = started.elapsed().as_secs_f64();
            let recall = graph::graph_recall(&out.graph, truth)?;
            Ok(RunReport {
                task: "graph".to_string(),
                dataset: dataset_name.to_string(),
                count: ds.count(),
                dim: ds.dim(),
                seed: params.seed,
                n: params.n,
                k1: params.k1,
                k2: params.k2,
                h: 0,
                k_eval: params.k_out,
                exact_final: params.exact_final,
                recall,
                wall_secs,
                hamming_evals_per_query: out.stats.hamming_evals as f64
                    / out.stats.nodes.max(1) as f64,
                distance_evals_per_query: out.stats.distance_evals as f64
                    / out.stats.nodes.max(1) as f64,
            })
        })
        .collect()
}
