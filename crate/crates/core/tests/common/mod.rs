//! Independent reference computations for the statistical suites.
//!
//! The brute-force simulator here shares no code with the crate: it uses a
//! different generator (`StdRng`), a different draw order, and scores every
//! trajectory directly with floating-point per-session sums instead of the
//! crate's integer tallies.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[derive(Debug, Clone, Copy)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct BruteForceLimits {
    pub naive: MeanSe,
    pub diff_in_qs: MeanSe,
    pub mean_length: MeanSe,
}

#[derive(Default)]
struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean_se(&self) -> MeanSe {
        let mean = self.sum / self.n;
        let var = (self.sum_sq - self.n * mean * mean) / (self.n - 1.0);
        MeanSe {
            mean,
            se: (var / self.n).sqrt(),
        }
    }
}

/// Samples `n` production-policy chains and averages the per-trajectory
/// Naïve and Differences-in-Qs scores for pair `(i, j)`.
pub fn brute_force_limits(probs: &[f64], gammas: &[f64], i: usize, j: usize, n: u64, seed: u64) -> BruteForceLimits {
    let mut rng = StdRng::seed_from_u64(seed);
    let (mut naive, mut qs, mut len) = (Moments::default(), Moments::default(), Moments::default());
    let mut chain: Vec<(usize, f64)> = Vec::new();
    for _ in 0..n {
        chain.clear();
        loop {
            // Share decision is drawn *after* the variant via inverse CDF on
            // a fresh uniform; the crate uses a linear CDF scan.
            let u: f64 = rng.random();
            let mut a = probs.len() - 1;
            let mut acc = 0.0;
            for (k, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    a = k;
                    break;
                }
            }
            let shared = rng.random_bool(gammas[a]);
            chain.push((a, if shared { 1.0 } else { 0.0 }));
            if !shared {
                break;
            }
        }
        let weight = |a: usize| {
            (if a == i { 1.0 / probs[i] } else { 0.0 }) - (if a == j { 1.0 / probs[j] } else { 0.0 })
        };
        let mut naive_score = 0.0;
        let mut qs_score = 0.0;
        for t in 0..chain.len() {
            let (a, r) = chain[t];
            let tail: f64 = chain[t..].iter().map(|&(_, r)| r).sum();
            naive_score += weight(a) * r;
            qs_score += weight(a) * tail;
        }
        naive.push(naive_score);
        qs.push(qs_score);
        len.push(chain.len() as f64);
    }
    BruteForceLimits {
        naive: naive.mean_se(),
        diff_in_qs: qs.mean_se(),
        mean_length: len.mean_se(),
    }
}

/// Direct evaluation of the per-trajectory estimator definitions on a list
/// of chains given as `(variant, reward)` pairs.
pub fn direct_scores(chains: &[Vec<(usize, u8)>], probs: &[f64], i: usize, j: usize) -> (f64, f64, Vec<f64>) {
    let weight = |a: usize| {
        (if a == i { 1.0 / probs[i] } else { 0.0 }) - (if a == j { 1.0 / probs[j] } else { 0.0 })
    };
    let n = chains.len() as f64;
    let mut naive = 0.0;
    let mut qs = 0.0;
    let mut gamma = vec![0.0; probs.len()];
    let mut sessions = 0usize;
    for chain in chains {
        for t in 0..chain.len() {
            let (a, r) = chain[t];
            let tail: f64 = chain[t..].iter().map(|&(_, r)| f64::from(r)).sum();
            naive += weight(a) * f64::from(r);
            qs += weight(a) * tail;
            gamma[a] += f64::from(r) / probs[a];
            sessions += 1;
        }
    }
    for g in &mut gamma {
        *g /= sessions as f64;
    }
    (naive / n, qs / n, gamma)
}

pub fn geometric_truth(gamma: f64) -> f64 {
    let (mut sum, mut power) = (0.0, 1.0);
    for k in 1..=10_000u32 {
        sum += f64::from(k) * power * (1.0 - gamma);
        power *= gamma;
    }
    sum
}
