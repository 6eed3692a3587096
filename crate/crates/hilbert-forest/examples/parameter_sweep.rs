//! Sweep search parameters against one prebuilt index and emit one JSON
//! report line per combination, the same records the CLI `sweep` command
//! appends to a file.
//!
//! ```sh
//! cargo run --release --example parameter_sweep
//! ```

use hilbert_forest::eval::{brute_force_knn, sweep_search, synth_dataset, SynthKind};
use hilbert_forest::index::{AnnIndex, SearchParams};

fn main() {
    let mut ds = synth_dataset(15_100, 24, SynthKind::gaussian(500, 0.02), 4).unwrap();
    let queries = ds.split_off(15_000);
    let truth = brute_force_knn(&ds, &queries, 30).unwrap();
    let index = AnnIndex::build(&ds, 8, 100, 4).unwrap();

    let grid: Vec<SearchParams> = [
        (4usize, 60usize, 120usize, 0usize),
        (4, 60, 120, 2),
        (8, 60, 120, 2),
        (8, 120, 240, 2),
        (8, 240, 480, 2),
    ]
    .into_iter()
    .map(|(n, k1, k2, h)| SearchParams {
        n,
        k1,
        k2,
        h,
        k: 30,
        exact_final: false,
    })
    .collect();

    let reports = sweep_search(&index, &ds, &queries, &truth, &grid, "mixture-15k").unwrap();
    for report in &reports {
        println!("{}", report.to_json_line());
    }

    println!("\nrecall / work summary:");
    for r in &reports {
        println!(
            "  n={:<2} k1={:<4} k2={:<4} h={} -> recall@30 {:.4} with {:>6.0} dist evals/query",
            r.n, r.k1, r.k2, r.h, r.recall, r.distance_evals_per_query
        );
    }
}
