//! Quantization, shared-storage sketches, and the memory arithmetic that
//! motivates them.
//!
//! ```sh
//! cargo run --release --example codes_and_sketches
//! ```

use hilbert_forest::codes::{
    asymmetric_distance, dequantize, hamming, quantize, sketch_of, CodeTable,
};
use hilbert_forest::dist::squared_l2;
use hilbert_forest::eval::{synth_dataset, SynthKind};
use hilbert_forest::forest::{combined_code_bytes, sketch_bytes};

fn main() {
    let ds = synth_dataset(10_000, 16, SynthKind::gaussian(300, 0.03), 2).unwrap();
    let table = CodeTable::fit(&ds).unwrap();

    // Reconstruction error stays below half a quantization step per dimension.
    let params = table.params();
    let mut worst_ratio = 0.0f64;
    for i in 0..ds.count() {
        let codes: Vec<u8> = (0..ds.dim()).map(|j| table.code(i, j)).collect();
        let rec = dequantize(&codes, params).unwrap();
        for j in 0..ds.dim() {
            let err = (ds.row(i)[j] as f64 - rec[j] as f64).abs();
            worst_ratio = worst_ratio.max(err / (params.step(j) / 2.0));
        }
    }
    println!("worst reconstruction error / (step/2): {worst_ratio:.4} (<= 1 expected)");

    // The sketch is the top bit of each 4-bit code; it lives inside the
    // packed code bytes, so the table costs exactly dim/2 bytes per point.
    println!(
        "code table: {} points x {} dims -> {} bytes ({} per point)",
        table.count(),
        table.dim(),
        table.storage_bytes(),
        table.storage_bytes() / table.count()
    );

    // Sketch Hamming distance correlates with true distance: compare the two
    // on a few candidate pairs.
    let q = ds.row(0);
    let q_sketch = sketch_of(&quantize(q, params).unwrap());
    let mut pairs: Vec<(u32, f64)> = (1..200)
        .map(|i| {
            let ham = hamming(&q_sketch, &table.sketch(i)).unwrap();
            (ham, squared_l2(q, ds.row(i)).sqrt())
        })
        .collect();
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    println!("\nsketch hamming vs true distance (sampled):");
    for chunk in pairs.chunks(40) {
        let mean_ham = chunk.iter().map(|&(h, _)| h as f64).sum::<f64>() / chunk.len() as f64;
        let mean_dist = chunk.iter().map(|&(_, d)| d).sum::<f64>() / chunk.len() as f64;
        println!("  mean hamming {mean_ham:>5.1} -> mean distance {mean_dist:.3}");
    }

    // Queries stay unquantized: the asymmetric distance compares a float
    // query against reconstructed points and preserves ranking.
    let d_exact = squared_l2(q, ds.row(7));
    let d_asym = asymmetric_distance(q, table.row(7), params).unwrap();
    println!("\nexact distance^2 {d_exact:.5} vs asymmetric {d_asym:.5}");

    // The arithmetic behind the shared bit at production scale: for 23M
    // points in 384 dimensions, sketches alone cost ~1.1 GB, and sharing one
    // bit per dimension folds sketches plus 4-bit codes into ~4.42 GB.
    println!(
        "\n23M x 384-bit sketches: {:.3} GB",
        sketch_bytes(23_000_000, 384) as f64 / 1e9
    );
    println!(
        "23M x (4-bit codes + sketch, 1 bit shared): {:.3} GB",
        combined_code_bytes(23_000_000, 384) as f64 / 1e9
    );
}
