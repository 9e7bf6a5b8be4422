//! Bin sampling and reference coreset samplers.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bins::{sq_dist, BinSet};
use crate::data::{round_count, FeatureDataset, SubsetSelection};
use crate::error::{Error, Result};
use crate::rng::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerMethod {
    UniformBins,
    Random,
    KCenterGreedy,
    Herding,
}

impl SamplerMethod {
    pub fn name(self) -> &'static str {
        match self {
            SamplerMethod::UniformBins => "uniform_bins",
            SamplerMethod::Random => "random",
            SamplerMethod::KCenterGreedy => "k_center_greedy",
            SamplerMethod::Herding => "herding",
        }
    }
}

impl std::str::FromStr for SamplerMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_bins" | "bins" => Ok(SamplerMethod::UniformBins),
            "random" => Ok(SamplerMethod::Random),
            "k_center_greedy" | "k_center" | "kcg" => Ok(SamplerMethod::KCenterGreedy),
            "herding" => Ok(SamplerMethod::Herding),
            other => Err(Error::Config(format!("unknown sampler `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub ratio: f64,
    pub method: SamplerMethod,
    pub seed: RngState,
}

impl SamplerConfig {
    /// Runs the configured sampler; `uniform_bins` needs `bins`.
    pub fn sample(&self, data: &FeatureDataset, bins: Option<&BinSet>) -> Result<SubsetSelection> {
        match self.method {
            SamplerMethod::UniformBins => {
                let bins = bins.ok_or_else(|| Error::Config("uniform_bins sampling needs a bin set".into()))?;
                sample_bins(data, bins, self.ratio, &self.seed)
            }
            SamplerMethod::Random => sample_random(data, self.ratio, &self.seed),
            SamplerMethod::KCenterGreedy => sample_k_center(data, self.ratio, &self.seed),
            SamplerMethod::Herding => sample_herding(data, self.ratio),
        }
    }
}

fn check_ratio(ratio: f64) -> Result<()> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("ratio {ratio} outside (0, 1]")))
    }
}

/// Draws `amount` distinct items of `pool` uniformly; result keeps pool order.
pub(crate) fn draw_from(pool: &[usize], amount: usize, rng: &mut impl rand::Rng) -> Vec<usize> {
    let mut picked: Vec<usize> = index::sample(rng, pool.len(), amount)
        .into_iter()
        .collect();
    picked.sort_unstable();
    picked.into_iter().map(|k| pool[k]).collect()
}

/// Uniform sampling of `round(ratio · |bin|)` indices from every bin.
pub fn sample_bins(data: &FeatureDataset, bins: &BinSet, ratio: f64, seed: &RngState) -> Result<SubsetSelection> {
    check_ratio(ratio)?;
    if bins.bins.is_empty() || bins.parent_size() == 0 {
        return Err(Error::domain("empty bin set"));
    }
    if bins.parent_size() != data.n_samples() {
        return Err(Error::DimensionMismatch {
            expected: data.n_samples(),
            got: bins.parent_size(),
        });
    }
    let mut rng = seed.rng();
    let mut out = Vec::new();
    for bin in &bins.bins {
        let amount = round_count(ratio * bin.len() as f64).min(bin.len());
        out.extend(draw_from(bin, amount, &mut rng));
    }
    SubsetSelection::new(data, out)
}

pub fn sample_random(data: &FeatureDataset, ratio: f64, seed: &RngState) -> Result<SubsetSelection> {
    check_ratio(ratio)?;
    let n = data.n_samples();
    let amount = round_count(ratio * n as f64).min(n);
    let picked = index::sample(&mut seed.rng(), n, amount).into_vec();
    SubsetSelection::new(data, picked)
}

/// Farthest-point traversal from a uniformly drawn seed point.
pub fn sample_k_center(data: &FeatureDataset, ratio: f64, seed: &RngState) -> Result<SubsetSelection> {
    check_ratio(ratio)?;
    let n = data.n_samples();
    let amount = round_count(ratio * n as f64).min(n);
    if amount == 0 {
        return SubsetSelection::new(data, Vec::new());
    }
    let first = rand::Rng::random_range(&mut seed.rng(), 0..n);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut picked = Vec::with_capacity(amount);
    let mut next = first;
    loop {
        taken[next] = true;
        picked.push(next);
        if picked.len() == amount {
            break;
        }
        let centre = data.row(next);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = sq_dist(data.row(i), centre);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if best.is_none_or(|(_, bd)| nearest[i] > bd) {
                best = Some((i, nearest[i]));
            }
        }
        next = best.expect("amount <= n").0;
    }
    SubsetSelection::new(data, picked)
}

/// Greedy per-class mean matching.
pub fn sample_herding(data: &FeatureDataset, ratio: f64) -> Result<SubsetSelection> {
    check_ratio(ratio)?;
    let dim = data.dim();
    let mut out = Vec::new();
    for members in data.class_index() {
        let amount = round_count(ratio * members.len() as f64).min(members.len());
        let mut mean = vec![0.0f64; dim];
        for &i in members {
            for (m, &v) in mean.iter_mut().zip(data.row(i)) {
                *m += f64::from(v);
            }
        }
        mean.iter_mut().for_each(|m| *m /= members.len() as f64);

        let mut running = vec![0.0f64; dim];
        let mut taken = vec![false; members.len()];
        for step in 1..=amount {
            let t = step as f64;
            let mut best: Option<(usize, f64)> = None;
            for (k, &i) in members.iter().enumerate() {
                if taken[k] {
                    continue;
                }
                let residual: f64 = data
                    .row(i)
                    .iter()
                    .zip(&running)
                    .zip(&mean)
                    .map(|((&x, &s), &mu)| {
                        let d = mu - (s + f64::from(x)) / t;
                        d * d
                    })
                    .sum();
                if best.is_none_or(|(_, br)| residual < br) {
                    best = Some((k, residual));
                }
            }
            let (k, _) = best.expect("amount <= class size");
            taken[k] = true;
            for (s, &x) in running.iter_mut().zip(data.row(members[k])) {
                *s += f64::from(x);
            }
            out.push(members[k]);
        }
    }
    SubsetSelection::new(data, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labelled(points: &[[f32; 2]], labels: Vec<u32>, n_classes: usize) -> FeatureDataset {
        FeatureDataset::new(points.iter().flatten().copied().collect(), 2, labels, n_classes).unwrap()
    }

    fn line(n: usize) -> FeatureDataset {
        let f = (0..n).map(|i| i as f32).collect();
        FeatureDataset::new(f, 1, vec![0; n], 1).unwrap()
    }

    #[test]
    fn bins_ratio_one_is_everything() {
        let ds = line(7);
        let bins = BinSet { n_bins: 2, bins: vec![vec![3, 0, 5, 1], vec![2, 6, 4]] };
        let sel = sample_bins(&ds, &bins, 1.0, &RngState::new(0)).unwrap();
        assert_eq!(sel.indices(), &[0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn bins_ten_by_fifty() {
        let ds = line(500);
        let bins = BinSet {
            n_bins: 10,
            bins: (0..10).map(|b| (b * 50..(b + 1) * 50).collect()).collect(),
        };
        let sel = sample_bins(&ds, &bins, 0.1, &RngState::new(4)).unwrap();
        assert_eq!(sel.len(), 50);
        for b in 0..10 {
            assert_eq!(sel.indices().iter().filter(|&&i| i / 50 == b).count(), 5);
        }
        let again = sample_bins(&ds, &bins, 0.1, &RngState::new(4)).unwrap();
        assert_eq!(sel, again);
    }

    #[test]
    fn bins_errors() {
        let ds = line(3);
        let empty = BinSet { n_bins: 0, bins: vec![] };
        assert!(sample_bins(&ds, &empty, 0.5, &RngState::new(0)).is_err());
        let bins = BinSet { n_bins: 1, bins: vec![vec![0, 1, 2]] };
        assert!(sample_bins(&ds, &bins, 0.0, &RngState::new(0)).is_err());
        assert!(sample_bins(&ds, &bins, 1.5, &RngState::new(0)).is_err());
    }

    #[test]
    fn random_sizes() {
        let ds = line(20);
        assert_eq!(sample_random(&ds, 1.0, &RngState::new(1)).unwrap().len(), 20);
        let half = sample_random(&ds, 0.5, &RngState::new(1)).unwrap();
        assert_eq!(half.len(), 10);
    }

    #[test]
    fn k_center_square_corners() {
        let ds = labelled(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], vec![0; 4], 1);
        for seed in 0..10 {
            let sel = sample_k_center(&ds, 0.75, &RngState::new(seed)).unwrap();
            assert_eq!(sel.len(), 3);
            let pts: Vec<&[f32]> = sel.indices().iter().map(|&i| ds.row(i)).collect();
            let max_min = pts
                .iter()
                .map(|a| pts.iter().filter(|b| *b != a).map(|b| sq_dist(a, b)).fold(f64::INFINITY, f64::min))
                .fold(0.0, f64::max)
                .sqrt();
            assert!(max_min >= 1.0);
        }
    }

    #[test]
    fn k_center_skips_duplicates() {
        let ds = labelled(&[[0.0, 0.0], [0.0, 0.0], [3.0, 0.0], [3.0, 0.0], [0.0, 4.0]], vec![0; 5], 1);
        for seed in 0..10 {
            let sel = sample_k_center(&ds, 0.6, &RngState::new(seed)).unwrap();
            let rows: Vec<&[f32]> = sel.indices().iter().map(|&i| ds.row(i)).collect();
            for a in 0..rows.len() {
                for b in a + 1..rows.len() {
                    assert_ne!(rows[a], rows[b], "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn herding_two_identical_points() {
        let ds = labelled(&[[1.0, 1.0], [1.0, 1.0]], vec![0, 0], 1);
        assert_eq!(sample_herding(&ds, 0.5).unwrap().indices(), &[0]);
    }

    #[test]
    fn herding_mean_point_first() {
        let ds = labelled(&[[0.0, 0.0], [2.0, 2.0], [1.0, 1.0]], vec![0; 3], 1);
        assert_eq!(sample_herding(&ds, 0.34).unwrap().indices(), &[2]);
    }

    #[test]
    fn method_names_parse() {
        for m in [
            SamplerMethod::UniformBins,
            SamplerMethod::Random,
            SamplerMethod::KCenterGreedy,
            SamplerMethod::Herding,
        ] {
            assert_eq!(m.name().parse::<SamplerMethod>().unwrap(), m);
        }
        assert!("grand".parse::<SamplerMethod>().is_err());
    }
}
