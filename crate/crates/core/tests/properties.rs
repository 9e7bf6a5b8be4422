//! Invariants over randomly generated inputs.

mod common;

use dqcomp_core::adaptive::{
    active_select, allocate_counts, classwise_init_with, normalize_fractions, AccuracyOracle, ActiveParams,
    InitParams, PoolSource, ScriptedUniform, Views,
};
use dqcomp_core::bins::{generate_bins, BinSet, FeatureSource};
use dqcomp_core::classifier::{train, TrainConfig};
use dqcomp_core::data::{aipc, round_count, FeatureDataset, SubsetSelection};
use dqcomp_core::error::Result;
use dqcomp_core::exec::Exec;
use dqcomp_core::quantize::{drop_and_fill, patch_ranges, FillPolicy, PatchMetric};
use dqcomp_core::rng::RngState;
use dqcomp_core::samplers::{sample_bins, SamplerConfig, SamplerMethod};
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = FeatureDataset> {
    (1usize..30, 1usize..5, 1usize..4, any::<u64>()).prop_map(|(n, dim, c, seed)| {
        let mut rng = common::rng(seed);
        common::dyadic_dataset(&mut rng, n, dim, c)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bins_partition_with_balanced_sizes(data in dataset(), frac in 0.0f64..1.0) {
        let n = data.n_samples();
        let n_bins = 1 + ((n - 1) as f64 * frac) as usize;
        let bins = generate_bins(&data, n_bins, FeatureSource::Original).unwrap();
        bins.check_partition(n).unwrap();
        let sizes: Vec<usize> = bins.bins.iter().map(Vec::len).collect();
        prop_assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(sizes[0] - sizes[n_bins - 1] <= 1);
        prop_assert_eq!(BinSet::from_json(&bins.to_json().unwrap(), n).unwrap(), bins);
    }

    #[test]
    fn bin_sampling_is_stratified(data in dataset(), ratio in 0.01f64..=1.0, seed in any::<u64>()) {
        let n_bins = data.n_samples().min(4);
        let bins = generate_bins(&data, n_bins, FeatureSource::Original).unwrap();
        let s = sample_bins(&data, &bins, ratio, &RngState::new(seed)).unwrap();
        for bin in &bins.bins {
            let taken = bin.iter().filter(|&&i| s.contains(i)).count();
            prop_assert!((taken as f64 - ratio * bin.len() as f64).abs() <= 0.5 + 1e-9);
        }
        prop_assert_eq!(sample_bins(&data, &bins, ratio, &RngState::new(seed)).unwrap(), s);
    }

    #[test]
    fn samplers_return_distinct_in_range_indices(
        data in dataset(),
        ratio in 0.01f64..=1.0,
        seed in any::<u64>(),
        method in prop::sample::select(vec![
            SamplerMethod::UniformBins,
            SamplerMethod::Random,
            SamplerMethod::KCenterGreedy,
            SamplerMethod::Herding,
        ]),
    ) {
        let bins = generate_bins(&data, data.n_samples().min(3), FeatureSource::Original).unwrap();
        let s = SamplerConfig { ratio, method, seed: RngState::new(seed) }.sample(&data, Some(&bins)).unwrap();
        prop_assert!(s.indices().windows(2).all(|w| w[0] < w[1]));
        prop_assert!(s.indices().iter().all(|&i| i < data.n_samples()));
        let target = ratio * data.n_samples() as f64;
        // ±1 per bin or class from rounding.
        let slack = bins.n_bins.max(data.n_classes()) as f64 * 0.5 + 1e-9;
        prop_assert!((s.len() as f64 - target).abs() <= slack, "{} vs {}", s.len(), target);
        let json = s.to_json().unwrap();
        prop_assert_eq!(SubsetSelection::from_json(&json, &data).unwrap(), s.clone());
        prop_assert_eq!(aipc(&s, data.n_classes()).unwrap(), s.len() as f64 / data.n_classes() as f64);
    }

    #[test]
    fn binary_and_csv_round_trip(data in dataset()) {
        prop_assert_eq!(FeatureDataset::from_bytes(&data.to_bytes()).unwrap(), data.clone());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        data.save_csv(&path).unwrap();
        let back = FeatureDataset::from_csv_reader(std::fs::File::open(&path).unwrap(), Some(data.n_classes())).unwrap();
        prop_assert_eq!(back, data);
    }

    #[test]
    fn patch_dropping_masks_exactly_the_lowest_patches(
        data in dataset(),
        rate in 0.0f64..0.95,
        zero in any::<bool>(),
    ) {
        let p = data.dim().min(4);
        let fill = if zero { FillPolicy::Zero } else { FillPolicy::Mean };
        let rec = drop_and_fill(&data, rate, p, PatchMetric::Variance, fill).unwrap();
        let ranges = patch_ranges(data.dim(), p).unwrap();
        let dropped = round_count(rate * p as f64);
        if dropped == 0 {
            prop_assert_eq!(rec.features(), data.features());
            return Ok(());
        }
        for i in 0..data.n_samples() {
            let mask = rec.mask(i);
            prop_assert_eq!(mask.iter().filter(|&&m| m).count(), dropped);
            for (k, r) in ranges.iter().enumerate() {
                if !mask[k] {
                    prop_assert_eq!(&rec.row(i)[r.clone()], &data.row(i)[r.clone()]);
                } else if zero {
                    prop_assert!(rec.row(i)[r.clone()].iter().all(|&v| v == 0.0));
                }
            }
        }
    }

    #[test]
    fn fractions_normalize_to_budget(
        raw in prop::collection::vec(0.0f64..2.0, 1..6),
        sizes_seed in any::<u64>(),
        budget_frac in 0.01f64..=1.0,
    ) {
        let mut rng = common::rng(sizes_seed);
        let sizes: Vec<usize> = raw.iter().map(|_| rand::Rng::random_range(&mut rng, 1..50)).collect();
        let total: usize = sizes.iter().sum();
        let budget = ((total as f64 * budget_frac) as usize).max(1);
        let f = normalize_fractions(&raw, &sizes, budget).unwrap();
        prop_assert!(f.iter().all(|r| (0.0..=1.0 + 1e-12).contains(r)));
        let mass: f64 = f.iter().zip(&sizes).map(|(r, &m)| r * m as f64).sum();
        prop_assert!((mass - budget as f64).abs() < 1e-6);
        let counts = allocate_counts(&f, &sizes, budget);
        prop_assert_eq!(counts.iter().sum::<usize>(), budget);
        prop_assert!(counts.iter().zip(&sizes).all(|(c, s)| c <= s));
    }

    #[test]
    fn training_ignores_subset_order(seed in any::<u64>(), n in 3usize..20) {
        let mut rng = common::rng(seed);
        let data = common::random_dataset(&mut rng, n, 3, 2);
        let mut subset: Vec<usize> = (0..n).collect();
        let cfg = TrainConfig { epochs: 3, batch_size: 4, ..TrainConfig::default() };
        let a = train(&data, &subset, &cfg, None).unwrap();
        subset.reverse();
        prop_assert_eq!(train(&data, &subset, &cfg, None).unwrap(), a);
    }
}

/// Accuracy vectors drawn from a fixed list, repeated as needed.
struct Cycle(Vec<Vec<f64>>, usize);

impl AccuracyOracle for Cycle {
    fn class_accuracies(&mut self, _subset: &[usize]) -> Result<Vec<f64>> {
        let out = self.0[self.1 % self.0.len()].clone();
        self.1 += 1;
        Ok(out)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn init_trace_obeys_update_rule(
        accs in prop::collection::vec(prop::collection::vec(0.5f64..=1.0, 3), 2..8),
        draws in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let features: Vec<f32> = (0..90).map(|i| i as f32).collect();
        let labels: Vec<u32> = (0..90).map(|i| (i / 30) as u32).collect();
        let data = FeatureDataset::new(features, 1, labels, 3).unwrap();
        let baseline = SubsetSelection::new(&data, vec![0, 30, 60]).unwrap();
        let params = InitParams { budget: 45, lb: 0.5, max_iter: accs.len() - 1, pool: PoolSource::Raw };
        let mut oracle = Cycle(accs.clone(), 0);
        // Every accuracy is ≥ lb, so only the three initial draws are used.
        let mut uniform = ScriptedUniform::new(draws);
        let out = classwise_init_with(&mut oracle, &mut uniform, &data, &baseline, &params, &RngState::new(1)).unwrap();
        let mut best = accs[0].clone();
        for rec in &out.trace {
            for c in 0..3 {
                best[c] = best[c].max(rec.accuracies[c]);
                prop_assert_eq!(rec.best_accuracies[c], best[c]);
                prop_assert!(!rec.fresh_draw[c]);
                let factor = 1.0 + (best[c] - rec.accuracies[c]);
                prop_assert!((rec.fractions_raw[c] - rec.fractions_before[c] * factor).abs() <= 1e-12);
                if rec.accuracies[c] == best[c] {
                    prop_assert_eq!(rec.fractions_raw[c], rec.fractions_before[c]);
                } else {
                    prop_assert!(rec.fractions_raw[c] >= rec.fractions_before[c]);
                }
            }
            prop_assert_eq!(rec.counts.iter().sum::<usize>(), 45);
        }
        prop_assert_eq!(out.selection.len(), 45);
    }

    #[test]
    fn active_rounds_grow_by_k_and_stay_disjoint(seed in any::<u64>(), k in 1usize..4, rounds in 1usize..4) {
        let mut rng = common::rng(seed);
        let data = common::random_dataset(&mut rng, 20, 2, 2);
        let init = SubsetSelection::new(&data, vec![0, 1, 2, 3]).unwrap();
        let params = ActiveParams { k, rounds, candidate_subsample: 5, refine_epochs: 1, ..ActiveParams::default() };
        let cfg = TrainConfig { epochs: 2, ..TrainConfig::default() };
        let out = active_select(Views::same(&data), &init, &params, &cfg, &RngState::new(seed), Exec::Serial).unwrap();
        let mut size = init.len();
        for rec in &out.trace {
            prop_assert_eq!(rec.chosen.len(), k);
            prop_assert_eq!(rec.pool_size, data.n_samples() - size);
            size += k;
        }
        prop_assert_eq!(out.selection.len(), size);
        prop_assert!(init.indices().iter().all(|&i| out.selection.contains(i)));
    }
}
