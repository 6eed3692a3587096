//! Walk a small Hilbert curve and show what the encoding does.
//!
//! Prints the visit order of an 8x8 grid, then demonstrates the
//! encode/decode round trip in a higher dimension.
//!
//! ```sh
//! cargo run --release --example hilbert_curve
//! ```

use hilbert_forest::curve::{hilbert_decode, hilbert_encode, CurveConfig, GridPoint, HilbertKey};

fn main() {
    // 2-D, 3 bits per axis: 64 cells. Decode every key in order and record
    // when each cell is visited.
    let cfg = CurveConfig::identity(2, 3).unwrap();
    let mut visit = [[0u64; 8]; 8];
    for k in 0..64u64 {
        let key = HilbertKey::from_limbs(vec![k], &cfg).unwrap();
        let p = hilbert_decode(&key, &cfg).unwrap();
        visit[p.coords()[1] as usize][p.coords()[0] as usize] = k;
    }
    println!("visit order of an 8x8 grid (x right, y down):\n");
    for row in &visit {
        for v in row {
            print!("{v:>4}");
        }
        println!();
    }

    // Every step along the curve moves to an L1-adjacent cell.
    let mut prev = hilbert_decode(&HilbertKey::from_limbs(vec![0], &cfg).unwrap(), &cfg).unwrap();
    let mut all_adjacent = true;
    for k in 1..64u64 {
        let p = hilbert_decode(&HilbertKey::from_limbs(vec![k], &cfg).unwrap(), &cfg).unwrap();
        let l1: i64 = prev
            .coords()
            .iter()
            .zip(p.coords())
            .map(|(&a, &b)| (a as i64 - b as i64).abs())
            .sum();
        all_adjacent &= l1 == 1;
        prev = p;
    }
    println!("\nall 63 consecutive steps L1-adjacent: {all_adjacent}");

    // The same machinery works in high dimensions with wide keys.
    let cfg = CurveConfig::identity(48, 8).unwrap();
    println!(
        "\n48-d curve at 8 bits/axis: {}-bit keys in {} limbs",
        cfg.key_bits(),
        cfg.key_limbs()
    );
    let point = GridPoint::new((0..48).map(|i| (i * 5) % 256).collect(), &cfg).unwrap();
    let key = hilbert_encode(&point, &cfg).unwrap();
    let back = hilbert_decode(&key, &cfg).unwrap();
    println!("round trip over a 48-d grid point: {}", back == point);
}
