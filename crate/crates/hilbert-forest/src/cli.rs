//! File-based command-line interface. Parsing and dispatch only: every
//! operation is delegated to the library modules.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::dataset::{ResultSet, VectorDataset};
use crate::error::{Error, Result};
use crate::eval::{self, SynthKind};
use crate::graph::{self, GraphParams, KnnGraph};
use crate::index::{AnnIndex, SearchParams};

#[derive(Parser)]
#[command(
    name = "hilbert-forest",
    version,
    about = "Approximate nearest-neighbor search and k-NN graph construction over Hilbert curve orders"
)]
struct Cli {
    /// Worker threads (default: available cores, capped at 8).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic vector dataset (and optionally a query set drawn
    /// from the same distribution).
    GenData(GenDataArgs),
    /// Build a search index (forest + master order + codes) from a dataset.
    BuildIndex(BuildIndexArgs),
    /// Run batched approximate k-NN queries against a built index.
    Search(SearchArgs),
    /// Construct an approximate k-NN graph over a dataset.
    BuildGraph(BuildGraphArgs),
    /// Compute exact nearest neighbors (query ground truth or an exact graph).
    GroundTruth(GroundTruthArgs),
    /// Score a result file against ground truth (or a graph against an exact graph).
    Eval(EvalArgs),
    /// Run a list of parameter combinations and report recall/time/counters.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Uniform,
    GaussianMixture,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    count: usize,
    #[arg(long)]
    dim: usize,
    #[arg(long, value_enum, default_value = "gaussian-mixture")]
    kind: KindArg,
    /// Cluster count for gaussian-mixture data.
    #[arg(long, default_value_t = 10)]
    clusters: usize,
    /// Per-coordinate standard deviation around a cluster center.
    #[arg(long, default_value_t = 0.05)]
    spread: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also split off a query set drawn from the same distribution.
    #[arg(long, requires = "query_count")]
    queries_out: Option<PathBuf>,
    #[arg(long, requires = "queries_out")]
    query_count: Option<usize>,
}

#[derive(Args)]
struct BuildIndexArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    n_trees: usize,
    /// Points per compressed leaf.
    #[arg(long, default_value_t = 100)]
    leaf_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long)]
    index: PathBuf,
    /// The dataset the index was built from.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Trees to use (default: all trees in the index).
    #[arg(long)]
    n_trees: Option<usize>,
    #[arg(long)]
    k1: usize,
    #[arg(long)]
    k2: usize,
    #[arg(long, default_value_t = 0)]
    h: usize,
    #[arg(long, default_value_t = 30)]
    k: usize,
    /// Re-rank with exact float distances instead of asymmetric distances.
    #[arg(long, num_args = 0..=1, default_value_t = false, default_missing_value = "true", action = clap::ArgAction::Set)]
    exact_final: bool,
    #[arg(long)]
    out: PathBuf,
    /// Optional ground truth; when given, recall is printed and reported.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Append a JSON run report line to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    n_sorts: usize,
    #[arg(long)]
    k1: usize,
    #[arg(long)]
    k2: usize,
    #[arg(long, default_value_t = 15)]
    k_out: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Re-rank with exact float distances (default) or dequantized codes.
    #[arg(long, num_args = 0..=1, default_value_t = true, default_missing_value = "true", action = clap::ArgAction::Set)]
    exact_final: bool,
    #[arg(long)]
    out: PathBuf,
    /// Optional exact graph; when given, recall is printed and reported.
    #[arg(long)]
    truth_graph: Option<PathBuf>,
    /// Append a JSON run report line to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct GroundTruthArgs {
    #[arg(long)]
    data: PathBuf,
    /// Query vectors; produces a k-NN result file at --out.
    #[arg(long, requires = "out")]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Produce an exact k-NN graph (self excluded) instead.
    #[arg(long)]
    graph_out: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    k_out: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Result file to score.
    #[arg(long, requires = "truth")]
    results: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    /// First k ids to score (default: full row width).
    #[arg(long)]
    k: Option<usize>,
    /// Graph file to score.
    #[arg(long, requires = "truth_graph")]
    graph: Option<PathBuf>,
    #[arg(long)]
    truth_graph: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Search,
    Graph,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    #[arg(long)]
    data: PathBuf,
    /// Prebuilt index (search sweeps).
    #[arg(long)]
    index: Option<PathBuf>,
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    truth_graph: Option<PathBuf>,
    /// Comma-separated list; lists of length one broadcast across the sweep.
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    k1: Vec<usize>,
    #[arg(long, value_delimiter = ',', required = true)]
    k2: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [0usize])]
    h: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    k: usize,
    #[arg(long, default_value_t = 15)]
    k_out: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", action = clap::ArgAction::Set)]
    exact_final: Option<bool>,
    /// Append one JSON line per run to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Parses and runs one invocation; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    let threads = cli
        .threads
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
                .min(8)
        })
        .max(1);
    // Ignored if a global pool already exists (repeated in-process calls).
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global();
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::BuildIndex(a) => build_index(a),
        Cmd::Search(a) => search(a),
        Cmd::BuildGraph(a) => build_graph(a),
        Cmd::GroundTruth(a) => ground_truth(a),
        Cmd::Eval(a) => eval_cmd(a),
        Cmd::Sweep(a) => sweep(a),
    }
}

fn kind_of(a: &GenDataArgs) -> SynthKind {
    match a.kind {
        KindArg::Uniform => SynthKind::Uniform,
        KindArg::GaussianMixture => SynthKind::GaussianMixture {
            clusters: a.clusters,
            spread: a.spread,
        },
    }
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let kind = kind_of(&a);
    let extra = a.query_count.unwrap_or(0);
    let mut ds = eval::synth_dataset(a.count + extra, a.dim, kind, a.seed)?;
    if let Some(qpath) = &a.queries_out {
        let queries = ds.split_off(a.count);
        queries.save(qpath)?;
        println!(
            "wrote {} queries ({}-d) to {}",
            queries.count(),
            queries.dim(),
            qpath.display()
        );
    }
    ds.save(&a.out)?;
    println!("wrote {} vectors ({}-d) to {}", ds.count(), ds.dim(), a.out.display());
    Ok(())
}

fn build_index(a: BuildIndexArgs) -> Result<()> {
    let ds = VectorDataset::load(&a.data)?;
    let started = std::time::Instant::now();
    let index = AnnIndex::build(&ds, a.n_trees, a.leaf_size, a.seed)?;
    index.save(&a.out)?;
    println!(
        "built index: {} trees over {} points in {:.2}s (forest ~{} bytes), saved to {}",
        a.n_trees,
        ds.count(),
        started.elapsed().as_secs_f64(),
        index.forest().estimated_bytes(),
        a.out.display()
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let ds = VectorDataset::load(&a.data)?;
    let queries = VectorDataset::load(&a.queries)?;
    let index = AnnIndex::load(&a.index)?;
    let params = SearchParams {
        n: a.n_trees.unwrap_or_else(|| index.forest().len()),
        k1: a.k1,
        k2: a.k2,
        h: a.h,
        k: a.k,
        exact_final: a.exact_final,
    };
    let started = std::time::Instant::now();
    let out = index.search(&ds, &queries, &params)?;
    let wall = started.elapsed().as_secs_f64();
    out.results.save(&a.out)?;
    println!(
        "searched {} queries in {:.3}s: {:.1} hamming + {:.1} distance evals/query, results in {}",
        queries.count(),
        wall,
        out.stats.hamming_per_query(),
        out.stats.distance_per_query(),
        a.out.display()
    );
    if let Some(tpath) = &a.truth {
        let truth = ResultSet::load(tpath)?;
        let k_eval = params.k.min(truth.k()).min(out.results.k());
        let recall = eval::recall_at_k(&out.results, &truth, k_eval)?;
        println!("recall@{k_eval}: {recall:.4}");
        if let Some(rpath) = &a.report {
            let mut report =
                eval::run_search_trial(&index, &ds, &queries, &truth, &params, &data_name(&a.data))?;
            report.wall_secs = wall;
            report.append_to(rpath)?;
        }
    } else if let Some(rpath) = &a.report {
        return Err(Error::invalid(
            "report",
            format!("writing {} requires --truth for the recall field", rpath.display()),
        ));
    }
    Ok(())
}

fn build_graph(a: BuildGraphArgs) -> Result<()> {
    let ds = VectorDataset::load(&a.data)?;
    let params = GraphParams {
        n: a.n_sorts,
        k1: a.k1,
        k2: a.k2,
        k_out: a.k_out,
        seed: a.seed,
        exact_final: a.exact_final,
    };
    let started = std::time::Instant::now();
    let out = graph::build_graph(&ds, &params)?;
    let wall = started.elapsed().as_secs_f64();
    out.graph.save(&a.out)?;
    println!(
        "built {}-NN graph over {} points with {} sorts in {:.2}s (transient bound ~{} bytes), saved to {}",
        a.k_out,
        ds.count(),
        a.n_sorts,
        wall,
        graph::peak_transient_memory(&params, ds.count(), ds.dim()),
        a.out.display()
    );
    if let Some(tpath) = &a.truth_graph {
        let truth = KnnGraph::load(tpath)?;
        let recall = graph::graph_recall(&out.graph, &truth)?;
        println!("graph recall@{}: {recall:.4}", a.k_out);
        if let Some(rpath) = &a.report {
            let reports = eval::sweep_graph(&ds, &truth, &[params], &data_name(&a.data))?;
            reports[0].append_to(rpath)?;
        }
    } else if let Some(rpath) = &a.report {
        return Err(Error::invalid(
            "report",
            format!(
                "writing {} requires --truth-graph for the recall field",
                rpath.display()
            ),
        ));
    }
    Ok(())
}

fn ground_truth(a: GroundTruthArgs) -> Result<()> {
    let ds = VectorDataset::load(&a.data)?;
    let mut did_something = false;
    if let Some(qpath) = &a.queries {
        let queries = VectorDataset::load(qpath)?;
        let out_path = a.out.as_ref().expect("clap enforces --out with --queries");
        let truth = eval::brute_force_knn(&ds, &queries, a.k)?;
        truth.save(out_path)?;
        println!(
            "wrote exact {}-NN of {} queries to {}",
            a.k,
            queries.count(),
            out_path.display()
        );
        did_something = true;
    }
    if let Some(gpath) = &a.graph_out {
        let truth = eval::brute_force_graph(&ds, a.k_out)?;
        truth.save(gpath)?;
        println!(
            "wrote exact {}-NN graph over {} points to {}",
            a.k_out,
            ds.count(),
            gpath.display()
        );
        did_something = true;
    }
    if !did_something {
        return Err(Error::invalid(
            "ground-truth",
            "nothing to do: pass --queries/--out and/or --graph-out",
        ));
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let mut did_something = false;
    if let Some(rpath) = &a.results {
        let results = ResultSet::load(rpath)?;
        let truth = ResultSet::load(a.truth.as_ref().expect("clap enforces --truth"))?;
        let k = a.k.unwrap_or_else(|| results.k().min(truth.k()));
        let recall = eval::recall_at_k(&results, &truth, k)?;
        println!("recall@{k}: {recall:.4}");
        did_something = true;
    }
    if let Some(gpath) = &a.graph {
        let g = KnnGraph::load(gpath)?;
        let truth = KnnGraph::load(a.truth_graph.as_ref().expect("clap enforces --truth-graph"))?;
        let recall = graph::graph_recall(&g, &truth)?;
        println!("graph recall@{}: {recall:.4}", g.k_out());
        did_something = true;
    }
    if !did_something {
        return Err(Error::invalid(
            "eval",
            "nothing to do: pass --results/--truth and/or --graph/--truth-graph",
        ));
    }
    Ok(())
}

/// Broadcasts length-1 lists across the sweep and checks the rest agree.
fn broadcast(lists: &mut [&mut Vec<usize>]) -> Result<usize> {
    let len = lists.iter().map(|l| l.len()).max().unwrap_or(1);
    for list in lists {
        if list.len() == 1 && len > 1 {
            let v = list[0];
            list.resize(len, v);
        }
        if list.len() != len {
            return Err(Error::invalid(
                "sweep",
                format!("parameter lists must have equal length (or length 1); got {} vs {len}", list.len()),
            ));
        }
    }
    Ok(len)
}

fn sweep(mut a: SweepArgs) -> Result<()> {
    let runs = broadcast(&mut [&mut a.n, &mut a.k1, &mut a.k2, &mut a.h])?;
    let ds = VectorDataset::load(&a.data)?;
    let name = data_name(&a.data);
    let reports = match a.task {
        TaskArg::Search => {
            let index_path = a
                .index
                .as_ref()
                .ok_or_else(|| Error::invalid("index", "search sweeps need --index"))?;
            let queries_path = a
                .queries
                .as_ref()
                .ok_or_else(|| Error::invalid("queries", "search sweeps need --queries"))?;
            let truth_path = a
                .truth
                .as_ref()
                .ok_or_else(|| Error::invalid("truth", "search sweeps need --truth"))?;
            let index = AnnIndex::load(index_path)?;
            let queries = VectorDataset::load(queries_path)?;
            let truth = ResultSet::load(truth_path)?;
            let grid: Vec<SearchParams> = (0..runs)
                .map(|i| SearchParams {
                    n: a.n[i],
                    k1: a.k1[i],
                    k2: a.k2[i],
                    h: a.h[i],
                    k: a.k,
                    exact_final: a.exact_final.unwrap_or(false),
                })
                .collect();
            eval::sweep_search(&index, &ds, &queries, &truth, &grid, &name)?
        }
        TaskArg::Graph => {
            let truth_path = a
                .truth_graph
                .as_ref()
                .ok_or_else(|| Error::invalid("truth-graph", "graph sweeps need --truth-graph"))?;
            let truth = KnnGraph::load(truth_path)?;
            let grid: Vec<GraphParams> = (0..runs)
                .map(|i| GraphParams {
                    n: a.n[i],
                    k1: a.k1[i],
                    k2: a.k2[i],
                    k_out: a.k_out,
                    seed: a.seed,
                    exact_final: a.exact_final.unwrap_or(true),
                })
                .collect();
            eval::sweep_graph(&ds, &truth, &grid, &name)?
        }
    };
    for report in &reports {
        println!(
            "n={} k1={} k2={} h={} recall@{}={:.4} wall={:.2}s hamming/q={:.0} dist/q={:.0}",
            report.n,
            report.k1,
            report.k2,
            report.h,
            report.k_eval,
            report.recall,
            report.wall_secs,
            report.hamming_evals_per_query,
            report.distance_evals_per_query
        );
        if let Some(rpath) = &a.report {
            report.append_to(rpath)?;
        }
    }
    Ok(())
}

fn data_name(path: &std::path::Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
