//! Build a search index and trade recall against work with the three-stage
//! pipeline: forest windows -> sketch filter -> (expanded) re-rank.
//!
//! ```sh
//! cargo run --release --example search_pipeline
//! ```

use hilbert_forest::eval::{brute_force_knn, recall_at_k, synth_dataset, SynthKind};
use hilbert_forest::index::{AnnIndex, SearchParams};

fn main() {
    let kind = SynthKind::gaussian(600, 0.01);
    let mut ds = synth_dataset(20_200, 32, kind, 5).unwrap();
    let queries = ds.split_off(20_000);
    println!(
        "dataset: {} points, {} queries, {} dims",
        ds.count(),
        queries.count(),
        ds.dim()
    );

    let truth = brute_force_knn(&ds, &queries, 30).unwrap();

    let t0 = std::time::Instant::now();
    let index = AnnIndex::build(&ds, 16, 100, 5).unwrap();
    println!(
        "index: 16 trees in {:.2}s, forest ~{:.1} MB, codes {:.1} KB\n",
        t0.elapsed().as_secs_f64(),
        index.forest().estimated_bytes() as f64 / 1e6,
        index.codes().storage_bytes() as f64 / 1e3,
    );

    println!("{:>3} {:>5} {:>5} {:>2} {:>10} {:>9} {:>8} {:>8}", "n", "k1", "k2", "h", "recall@30", "wall", "ham/q", "dist/q");
    for (n, k1, k2, h) in [
        (4, 50, 100, 0),
        (4, 100, 200, 1),
        (8, 100, 200, 1),
        (16, 100, 200, 1),
        (16, 200, 400, 2),
    ] {
        let params = SearchParams { n, k1, k2, h, k: 30, exact_final: false };
        let t0 = std::time::Instant::now();
        let out = index.search(&ds, &queries, &params).unwrap();
        let wall = t0.elapsed().as_secs_f64();
        let recall = recall_at_k(&out.results, &truth, 30).unwrap();
        println!(
            "{n:>3} {k1:>5} {k2:>5} {h:>2} {recall:>10.4} {wall:>8.2}s {:>8.0} {:>8.0}",
            out.stats.hamming_per_query(),
            out.stats.distance_per_query()
        );
    }

    // With saturating budgets and exact re-ranking the pipeline reproduces
    // the ground truth bit for bit.
    let exhaustive = SearchParams {
        n: 2,
        k1: ds.count(),
        k2: ds.count(),
        h: 0,
        k: 30,
        exact_final: true,
    };
    let out = index.search(&ds, &queries, &exhaustive).unwrap();
    println!(
        "\nexhaustive + exact re-rank equals brute force: {}",
        out.results == truth
    );
}
