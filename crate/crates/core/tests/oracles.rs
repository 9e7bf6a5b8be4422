//! Library results against slow, independent reference implementations.

mod common;

use dqcomp_core::adaptive::{active_select, ActiveParams, Views};
use dqcomp_core::bins::{generate_bins, FeatureSource, GainContext};
use dqcomp_core::classifier::{train, TrainConfig};
use dqcomp_core::data::{FeatureDataset, SubsetSelection};
use dqcomp_core::exec::Exec;
use dqcomp_core::rng::RngState;
use dqcomp_core::samplers::{sample_herding, sample_k_center, sample_random};
use rand::Rng;

fn sq(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2)).sum()
}

#[test]
fn every_greedy_pick_is_the_exhaustive_argmax() {
    let mut rng = common::rng(12);
    for _ in 0..10 {
        let data = common::dyadic_dataset(&mut rng, 12, 2, 2);
        let mut ctx = GainContext::for_dataset(&data, Exec::Serial);
        let mut taken = [false; 12];
        for bin in 0..3 {
            let mut current: Vec<usize> = Vec::new();
            for _ in 0..4 {
                let mut best: Option<(f64, usize)> = None;
                for x in (0..12).filter(|&x| !taken[x]) {
                    let near: f64 = current.iter().map(|&p| sq(data.row(p), data.row(x))).sum();
                    let far: f64 =
                        (0..12).filter(|&p| !taken[p] && p != x).map(|p| sq(data.row(p), data.row(x))).sum();
                    assert_eq!(ctx.gain(x).unwrap(), near - far, "bin {bin}, candidate {x}");
                    if best.is_none_or(|(g, _)| near - far > g) {
                        best = Some((near - far, x));
                    }
                }
                let pick = ctx.best_candidate().unwrap();
                assert_eq!(pick, best.unwrap().1);
                ctx.select(pick).unwrap();
                taken[pick] = true;
                current.push(pick);
            }
            assert_eq!(ctx.finish_bin(), current);
        }
        let bins = generate_bins(&data, 3, FeatureSource::Original).unwrap();
        assert_eq!(bins.bins, common::brute_force_bins(&data, 3));
    }
}

#[test]
fn random_sampler_matches_class_priors() {
    // Priors 0.6 / 0.3 / 0.1 over 50 samples, 10 drawn per seed.
    let labels: Vec<u32> = (0..50).map(|i| if i < 30 { 0 } else if i < 45 { 1 } else { 2 }).collect();
    let data = FeatureDataset::new(vec![0.0; 50], 1, labels, 3).unwrap();
    let seeds = 1000;
    let mut totals = [0usize; 3];
    for seed in 0..seeds {
        let s = sample_random(&data, 0.2, &RngState::new(seed)).unwrap();
        assert_eq!(s.len(), 10);
        for (t, &c) in totals.iter_mut().zip(s.per_class_counts()) {
            *t += c;
        }
    }
    let draws = (seeds * 10) as f64;
    for (c, prior) in [0.6, 0.3, 0.1].into_iter().enumerate() {
        let sigma = (draws * prior * (1.0 - prior)).sqrt();
        let dev = (totals[c] as f64 - draws * prior).abs();
        assert!(dev <= 3.0 * sigma, "class {c}: {} vs {}", totals[c], draws * prior);
    }
}

fn k_center_reference(data: &FeatureDataset, start: usize, amount: usize) -> Vec<usize> {
    let n = data.n_samples();
    let mut picked = vec![start];
    while picked.len() < amount {
        let mut best: Option<(f64, usize)> = None;
        for i in (0..n).filter(|i| !picked.contains(i)) {
            let nearest = picked.iter().map(|&p| sq(data.row(p), data.row(i))).fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(d, _)| nearest > d) {
                best = Some((nearest, i));
            }
        }
        picked.push(best.unwrap().1);
    }
    picked.sort_unstable();
    picked
}

#[test]
fn k_center_matches_farthest_point_reference() {
    let mut rng = common::rng(203);
    for case in 0..30u64 {
        let n = rng.random_range(1..=15);
        let data = if case % 2 == 0 {
            common::dyadic_dataset(&mut rng, n, 2, 2)
        } else {
            common::integer_dataset(&mut rng, n, 2, 2)
        };
        let ratio = rng.random_range(0.05..=1.0);
        let seed = RngState::new(case).derive("k_center");
        let got = sample_k_center(&data, ratio, &seed).unwrap();
        let amount = got.len();
        if amount == 0 {
            continue;
        }
        // The library draws its seed point from the same stream.
        let start = seed.rng().random_range(0..n);
        assert_eq!(got.indices(), k_center_reference(&data, start, amount).as_slice(), "case {case}");
    }
}

fn herding_reference(data: &FeatureDataset, ratio: f64) -> Vec<usize> {
    let mut out = Vec::new();
    for members in data.class_index() {
        let amount = dqcomp_core::data::round_count(ratio * members.len() as f64);
        let dim = data.dim();
        let mean: Vec<f64> = (0..dim)
            .map(|j| members.iter().map(|&i| f64::from(data.row(i)[j])).sum::<f64>() / members.len() as f64)
            .collect();
        let mut chosen: Vec<usize> = Vec::new();
        for _ in 0..amount {
            let mut best: Option<(f64, usize)> = None;
            for &i in members.iter().filter(|i| !chosen.contains(i)) {
                let t = (chosen.len() + 1) as f64;
                let residual: f64 = (0..dim)
                    .map(|j| {
                        let s: f64 = chosen.iter().map(|&p| f64::from(data.row(p)[j])).sum::<f64>()
                            + f64::from(data.row(i)[j]);
                        (mean[j] - s / t).powi(2)
                    })
                    .sum();
                if best.is_none_or(|(r, _)| residual < r) {
                    best = Some((residual, i));
                }
            }
            chosen.push(best.unwrap().1);
        }
        out.extend(chosen);
    }
    out.sort_unstable();
    out
}

#[test]
fn herding_matches_greedy_reference() {
    let mut rng = common::rng(211);
    for case in 0..30 {
        let n = rng.random_range(2..=30);
        let data = common::dyadic_dataset(&mut rng, n, 3, 2);
        let ratio = rng.random_range(0.05..=1.0);
        let got = sample_herding(&data, ratio).unwrap();
        assert_eq!(got.indices(), herding_reference(&data, ratio).as_slice(), "case {case}");
    }
}

#[test]
fn six_candidate_pair_matches_enumeration() {
    let mut rng = common::rng(353);
    for seed in 0..5 {
        let data = common::random_dataset(&mut rng, 10, 2, 2);
        let init = SubsetSelection::new(&data, vec![0, 1, 2, 3]).unwrap();
        let cfg = TrainConfig { epochs: 15, batch_size: 4, seed, ..TrainConfig::default() };
        let params = ActiveParams { k: 2, rounds: 1, candidate_subsample: 6, full_retrain: true, ..ActiveParams::default() };
        let out = active_select(Views::same(&data), &init, &params, &cfg, &RngState::new(seed), Exec::Serial).unwrap();

        let pool: Vec<usize> = (4..10).collect();
        let mut scored: Vec<(f64, usize)> = pool
            .iter()
            .map(|&x| {
                let model = train(&data, &[0, 1, 2, 3, x], &cfg, None).unwrap();
                (common::naive_pool_loss(&model, &pool, &data), x)
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want = vec![scored[0].1, scored[1].1];
        assert_eq!(out.trace[0].chosen, want);
        for (got, (loss, _)) in out.trace[0].chosen_losses.iter().zip(&scored) {
            assert!((got - loss).abs() < 1e-10);
        }
    }
}
