//! Distance kernels shared by every module that ranks candidates.
//!
//! All ranking in this crate goes through [`squared_l2`] so that exact search,
//! brute-force oracles, and graph construction agree bit-for-bit on distances
//! (and therefore on tie-breaks).

/// Squared Euclidean distance with f64 accumulation.
///
/// Uses a fixed four-lane accumulation pattern: the association order never
/// depends on thread count or call site, so two calls on the same inputs give
/// the same bits.
#[inline]
pub fn squared_l2(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        for lane in 0..4 {
            let d = a[i + lane] as f64 - b[i + lane] as f64;
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0f64;
    for i in chunks * 4..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// [`squared_l2`] with an early abort: returns `None` as soon as the partial
/// sum provably exceeds `bound`, otherwise the exact same bits as
/// [`squared_l2`].
///
/// Partial sums of non-negative terms are monotone under round-to-nearest, so
/// a partial already above `bound` guarantees the full distance is too; pairs
/// that survive run the identical accumulation sequence to the end.
#[inline]
pub fn squared_l2_bounded(a: &[f32], b: &[f32], bound: f64) -> Option<f64> {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        for lane in 0..4 {
            let d = a[i + lane] as f64 - b[i + lane] as f64;
            acc[lane] += d * d;
        }
        if (acc[0] + acc[1]) + (acc[2] + acc[3]) > bound {
            return None;
        }
    }
    let mut tail = 0.0f64;
    for i in chunks * 4..a.len() {
        let d = a[i] as f64 - b[i] as f64;
        tail += d * d;
    }
    let total = (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
    (total <= bound).then_some(total)
}

/// Bounded best-k accumulator ordered by `(distance, id)`, kept sorted.
/// Insertion is by binary search; the worst entry's distance doubles as the
/// early-abort bound for candidate scoring.
#[derive(Debug, Clone)]
pub struct TopK {
    cap: usize,
    entries: Vec<(f64, u32)>,
}

impl TopK {
    pub fn new(cap: usize) -> Self {
        TopK {
            cap,
            entries: Vec::with_capacity(cap + 1),
        }
    }

    /// Current admission bound: distances strictly above it cannot enter.
    #[inline]
    pub fn bound(&self) -> f64 {
        if self.entries.len() == self.cap {
            self.entries[self.cap - 1].0
        } else {
            f64::INFINITY
        }
    }

    #[inline]
    pub fn push(&mut self, dist: f64, id: u32) {
        if self.entries.len() == self.cap {
            let worst = self.entries[self.cap - 1];
            if dist.total_cmp(&worst.0).then(id.cmp(&worst.1)) != std::cmp::Ordering::Less {
                return;
            }
        }
        let at = self
            .entries
            .partition_point(|&(d, i)| d.total_cmp(&dist).then(i.cmp(&id)) == std::cmp::Ordering::Less);
        self.entries.insert(at, (dist, id));
        self.entries.truncate(self.cap);
    }

    pub fn into_ids(self) -> Vec<u32> {
        self.entries.into_iter().map(|(_, id)| id).collect()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|&(_, id)| id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_for_identical() {
        let v = [1.5f32, -2.0, 0.25, 7.0, 3.0];
        assert_eq!(squared_l2(&v, &v), 0.0);
    }

    #[test]
    fn matches_naive_sum() {
        let a: Vec<f32> = (0..13).map(|i| i as f32 * 0.5).collect();
        let b: Vec<f32> = (0..13).map(|i| (12 - i) as f32 * 0.25).collect();
        let naive: f64 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum();
        let got = squared_l2(&a, &b);
        assert!((got - naive).abs() <= naive * 1e-12);
    }

    #[test]
    fn deterministic_across_calls() {
        let a: Vec<f32> = (0..67).map(|i| (i as f32).sin()).collect();
        let b: Vec<f32> = (0..67).map(|i| (i as f32).cos()).collect();
        assert_eq!(squared_l2(&a, &b).to_bits(), squared_l2(&a, &b).to_bits());
    }

    #[test]
    fn bounded_agrees_bit_for_bit_when_admitted() {
        for dim in [1usize, 3, 4, 16, 64, 65] {
            let a: Vec<f32> = (0..dim).map(|i| (i as f32 * 0.7).sin()).collect();
            let b: Vec<f32> = (0..dim).map(|i| (i as f32 * 1.3).cos()).collect();
            let full = squared_l2(&a, &b);
            let bounded = squared_l2_bounded(&a, &b, full).expect("bound == value admits");
            assert_eq!(full.to_bits(), bounded.to_bits());
            assert_eq!(squared_l2_bounded(&a, &b, full * 0.999), None);
            assert_eq!(squared_l2_bounded(&a, &b, f64::INFINITY).unwrap().to_bits(), full.to_bits());
        }
    }

    #[test]
    fn topk_keeps_k_smallest_with_id_ties() {
        let mut top = TopK::new(3);
        for (d, id) in [(5.0, 1), (2.0, 9), (2.0, 4), (7.0, 0), (2.0, 7), (1.0, 8)] {
            top.push(d, id);
        }
        assert_eq!(top.into_ids(), vec![8, 4, 7]);
    }
}
