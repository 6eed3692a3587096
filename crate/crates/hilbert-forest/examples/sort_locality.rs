//! Measure how much spatial locality a Hilbert sort preserves, and how
//! different axis permutations give different orders over the same data.
//!
//! ```sh
//! cargo run --release --example sort_locality
//! ```

use hilbert_forest::curve::{hilbert_sort, Bounds, CurveConfig};
use hilbert_forest::dist::squared_l2;
use hilbert_forest::eval::{synth_dataset, SynthKind};

fn main() {
    let ds = synth_dataset(20_000, 16, SynthKind::gaussian(200, 0.03), 1).unwrap();
    let bounds = Bounds::of(&ds);

    // Mean distance between curve-adjacent points, for a few random curves.
    println!("mean distance between neighbors in different orders:\n");
    for tree in 0..4u64 {
        let cfg = CurveConfig::derived(ds.dim(), 8, 42, tree).unwrap();
        let order = hilbert_sort(&ds, &bounds, &cfg).unwrap();
        let mean = mean_adjacent_distance(&ds, order.perm());
        println!("  curve {tree} (axis perm {:?}...): {mean:.4}", &cfg.axis_perm()[..4]);
    }

    // Baseline: adjacent ids in the original (arbitrary) order.
    let identity: Vec<u32> = (0..ds.count() as u32).collect();
    println!(
        "  unsorted id order:               {:.4}",
        mean_adjacent_distance(&ds, &identity)
    );
}

fn mean_adjacent_distance(ds: &hilbert_forest::VectorDataset, perm: &[u32]) -> f64 {
    let total: f64 = perm
        .windows(2)
        .map(|w| squared_l2(ds.row(w[0] as usize), ds.row(w[1] as usize)).sqrt())
        .sum();
    total / (perm.len() - 1) as f64
}
