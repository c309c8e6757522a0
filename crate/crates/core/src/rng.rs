//! Seeded, splittable random streams.
//!
//! Every randomized routine takes a `&mut SeededRng`. Sub-algorithms that
//! need their own stream call [`SeededRng::derive`] with a label, so adding
//! draws in one component never shifts the stream seen by another.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    forks: u64,
    inner: ChaCha12Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            forks: 0,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent named stream. Depends only on this stream's seed and the
    /// label, not on how many values have been drawn so far.
    pub fn derive(&self, label: &str) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(fnv1a(label))))
    }

    /// Fresh child stream; successive calls yield distinct children.
    pub fn split(&mut self) -> SeededRng {
        self.forks += 1;
        SeededRng::new(splitmix64(
            self.seed ^ splitmix64(self.forks.wrapping_mul(0xa076_1d64_78bd_642f)),
        ))
    }

    /// Uniform in the open interval (0, 1).
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = self.inner.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal via Box–Muller.
    pub fn gaussian(&mut self) -> f64 {
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn exponential(&mut self) -> f64 {
        -self.uniform_open().ln()
    }

    /// Uniformly random `m`-subset of `items`, returned sorted.
    pub fn choose_subset(&mut self, items: &[usize], m: usize) -> Vec<usize> {
        let mut pool = items.to_vec();
        let m = m.min(pool.len());
        for i in 0..m {
            let j = i + self.below(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(m);
        pool.sort_unstable();
        pool
    }

    /// Index drawn with probability proportional to `weights[i]`, given the
    /// cumulative sums `cumulative` (last entry is the total).
    pub fn draw_cumulative(&mut self, cumulative: &[f64]) -> usize {
        let total = *cumulative.last().expect("nonempty distribution");
        let u = self.uniform_open() * total;
        let idx = cumulative.partition_point(|&c| c <= u);
        idx.min(cumulative.len() - 1)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(7);
        let mut b = SeededRng::new(7);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derive_ignores_consumption() {
        let a = SeededRng::new(3);
        let mut b = SeededRng::new(3);
        b.gaussian();
        assert_eq!(a.derive("x").next_u64(), b.derive("x").next_u64());
        assert_ne!(a.derive("x").next_u64(), a.derive("y").next_u64());
    }

    #[test]
    fn subset_is_sorted_and_distinct() {
        let mut rng = SeededRng::new(11);
        let items: Vec<usize> = (0..50).collect();
        let s = rng.choose_subset(&items, 20);
        assert_eq!(s.len(), 20);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = SeededRng::new(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| rng.gaussian()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01);
        assert!((var - 1.0).abs() < 0.02);
    }
}
