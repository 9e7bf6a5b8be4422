#![allow(dead_code)]

use dqcomp_core::classifier::{SoftmaxModel, TrainConfig};
use dqcomp_core::data::FeatureDataset;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum()
}

/// Greedy GraphCut recomputing both gain sums from scratch for every
/// candidate at every step: O(n³) overall.
pub fn brute_force_bins(data: &FeatureDataset, n_bins: usize) -> Vec<Vec<usize>> {
    let n = data.n_samples();
    let mut taken = vec![false; n];
    let mut bins = Vec::new();
    for b in 0..n_bins {
        let size = n / n_bins + usize::from(b < n % n_bins);
        let mut bin: Vec<usize> = Vec::new();
        for _ in 0..size {
            let mut best: Option<(f64, usize)> = None;
            for x in (0..n).filter(|&x| !taken[x]) {
                let near: f64 = bin.iter().map(|&p| sq(data.row(p), data.row(x))).sum();
                let far: f64 = (0..n).filter(|&p| !taken[p] && p != x).map(|p| sq(data.row(p), data.row(x))).sum();
                let gain = near - far;
                if best.is_none_or(|(g, _)| gain > g) {
                    best = Some((gain, x));
                }
            }
            let (_, x) = best.unwrap();
            taken[x] = true;
            bin.push(x);
        }
        bins.push(bin);
    }
    bins
}

/// Random features on a dyadic grid (multiples of 1/64 in [-4, 4]), so every
/// distance sum is exact in f64 and the incremental and brute-force gains
/// agree bit for bit.
pub fn dyadic_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_classes: usize) -> FeatureDataset {
    let features = (0..n * dim).map(|_| rng.random_range(-256i32..=256) as f32 / 64.0).collect();
    labelled(features, n, dim, n_classes)
}

/// Small-integer features: plenty of exactly tied gains.
pub fn integer_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_classes: usize) -> FeatureDataset {
    let features = (0..n * dim).map(|_| rng.random_range(0i32..3) as f32).collect();
    labelled(features, n, dim, n_classes)
}

fn labelled(features: Vec<f32>, n: usize, dim: usize, n_classes: usize) -> FeatureDataset {
    let n_classes = n_classes.min(n).max(1);
    let labels = (0..n).map(|i| (i % n_classes) as u32).collect();
    FeatureDataset::new(features, dim, labels, n_classes).unwrap()
}

/// Gaussian-ish features with random labels covering every class.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, n_classes: usize) -> FeatureDataset {
    let features = (0..n * dim).map(|_| rng.random_range(-2.0f32..2.0)).collect();
    let mut labels: Vec<u32> = (0..n).map(|i| (i % n_classes) as u32).collect();
    for i in (1..n).rev() {
        labels.swap(i, rng.random_range(0..=i));
    }
    FeatureDataset::new(features, dim, labels, n_classes).unwrap()
}

/// Per-point cross-entropy against the true label, averaged.
pub fn naive_pool_loss(model: &SoftmaxModel, pool: &[usize], data: &FeatureDataset) -> f64 {
    let total: f64 = pool
        .iter()
        .map(|&i| -model.predict_proba(data.row(i)).unwrap()[data.label(i)].max(1e-12).ln())
        .sum();
    total / pool.len() as f64
}

/// Classifier settings for the heteroscedastic fixture experiments: enough
/// SGD steps that a 5-per-class subset is trained to convergence.
pub fn fixture_train_config(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 100, seed, ..TrainConfig::default() }
}
