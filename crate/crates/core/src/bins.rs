//! GraphCut dataset bin generation.
//!
//! Bins are filled one after another. The k-th pick of bin n maximizes
//!
//! ```text
//! G(x) = Σ_{p ∈ S_n} ‖f(p) − f(x)‖² − Σ_{p ∈ pool, p ≠ x} ‖f(p) − f(x)‖²
//! ```
//!
//! where `S_n` holds the picks of the current bin so far and the pool is
//! every sample not yet assigned to any bin (including the current one).

use serde::{Deserialize, Serialize};

use crate::data::FeatureDataset;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::quantize::ReconstructedFeatures;

/// Ordered partition of `0..parent_size` into `n_bins` bins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSet {
    pub n_bins: usize,
    pub bins: Vec<Vec<usize>>,
}

impl BinSet {
    pub fn parent_size(&self) -> usize {
        self.bins.iter().map(Vec::len).sum()
    }

    /// Checks disjointness, full coverage of `0..n`, and balanced sizes.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        if self.bins.len() != self.n_bins {
            return Err(Error::domain(format!(
                "n_bins is {} but {} bins are present",
                self.n_bins,
                self.bins.len()
            )));
        }
        let mut seen = vec![false; n];
        for bin in &self.bins {
            for &i in bin {
                if i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::domain(format!("index {i} repeated or out of range")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::domain(format!("index {missing} not covered by any bin")));
        }
        let sizes = self.bins.iter().map(Vec::len);
        let (lo, hi) = sizes.fold((usize::MAX, 0), |(lo, hi), s| (lo.min(s), hi.max(s)));
        if hi - lo > 1 {
            return Err(Error::domain("bin sizes differ by more than one"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(json: &str, n_samples: usize) -> Result<Self> {
        let bins: BinSet = serde_json::from_str(json)?;
        bins.check_partition(n_samples)?;
        Ok(bins)
    }
}

/// Which feature matrix the gains are computed on.
#[derive(Debug, Clone, Copy)]
pub enum FeatureSource<'a> {
    Original,
    Reconstructed(&'a ReconstructedFeatures),
}

/// Capacity of each bin: `n / n_bins`, remainder spread over the first bins.
pub fn bin_capacities(n: usize, n_bins: usize) -> Vec<usize> {
    let base = n / n_bins;
    let extra = n % n_bins;
    (0..n_bins).map(|b| base + usize::from(b < extra)).collect()
}

pub(crate) fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum()
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    /// Σ over the current bin's picks.
    selected: f64,
    /// Σ over the remaining pool, candidate excluded.
    pool: f64,
}

/// Running GraphCut state with O(n) gain updates per pick.
pub struct GainContext<'a> {
    features: &'a [f32],
    dim: usize,
    taken: Vec<bool>,
    current: Vec<usize>,
    acc: Vec<Accumulator>,
    exec: Exec,
}

impl<'a> GainContext<'a> {
    /// `features` is row-major with `dim` columns.
    pub fn new(features: &'a [f32], dim: usize, exec: Exec) -> Self {
        let n = features.len() / dim;
        let row = |i: usize| &features[i * dim..(i + 1) * dim];
        let acc = exec.map_range(n, |x| {
            let xr = row(x);
            let pool = (0..n).filter(|&p| p != x).map(|p| sq_dist(row(p), xr)).sum();
            Accumulator { selected: 0.0, pool }
        });
        GainContext {
            features,
            dim,
            taken: vec![false; n],
            current: Vec::new(),
            acc,
            exec,
        }
    }

    pub fn for_dataset(data: &'a FeatureDataset, exec: Exec) -> Self {
        GainContext::new(data.features(), data.dim(), exec)
    }

    pub fn n_samples(&self) -> usize {
        self.taken.len()
    }

    /// Picks of the bin currently being filled.
    pub fn current_bin(&self) -> &[usize] {
        &self.current
    }

    pub fn is_taken(&self, i: usize) -> bool {
        self.taken[i]
    }

    fn check_candidate(&self, candidate: usize) -> Result<()> {
        if candidate >= self.taken.len() {
            return Err(Error::domain(format!("candidate {candidate} out of range")));
        }
        if self.taken[candidate] {
            return Err(Error::domain(format!("candidate {candidate} already selected")));
        }
        Ok(())
    }

    pub fn gain(&self, candidate: usize) -> Result<f64> {
        self.check_candidate(candidate)?;
        let a = self.acc[candidate];
        Ok(a.selected - a.pool)
    }

    /// Highest-gain untaken sample, lowest index on ties.
    pub fn best_candidate(&self) -> Option<usize> {
        let gains = self.exec.map_range(self.taken.len(), |i| {
            (!self.taken[i]).then(|| self.acc[i].selected - self.acc[i].pool)
        });
        let mut best: Option<(usize, f64)> = None;
        for (i, g) in gains.into_iter().enumerate() {
            if let Some(g) = g {
                if best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((i, g));
                }
            }
        }
        best.map(|(i, _)| i)
    }

    /// Adds `candidate` to the current bin and removes it from the pool.
    pub fn select(&mut self, candidate: usize) -> Result<()> {
        self.check_candidate(candidate)?;
        self.taken[candidate] = true;
        self.current.push(candidate);
        let dim = self.dim;
        let features = self.features;
        let picked = &features[candidate * dim..(candidate + 1) * dim];
        let taken = &self.taken;
        self.exec.for_each_mut(&mut self.acc, |x, a| {
            if !taken[x] {
                let d = sq_dist(&features[x * dim..(x + 1) * dim], picked);
                a.selected += d;
                a.pool -= d;
            }
        });
        Ok(())
    }

    /// Closes the current bin; the next pick starts a new one.
    pub fn finish_bin(&mut self) -> Vec<usize> {
        for a in &mut self.acc {
            a.selected = 0.0;
        }
        std::mem::take(&mut self.current)
    }
}

pub fn generate_bins(data: &FeatureDataset, n_bins: usize, source: FeatureSource<'_>) -> Result<BinSet> {
    generate_bins_with(data, n_bins, source, Exec::default())
}

pub fn generate_bins_with(
    data: &FeatureDataset,
    n_bins: usize,
    source: FeatureSource<'_>,
    exec: Exec,
) -> Result<BinSet> {
    let n = data.n_samples();
    if n_bins == 0 {
        return Err(Error::domain("n_bins must be at least 1"));
    }
    if n_bins > n {
        return Err(Error::domain(format!("n_bins {n_bins} exceeds {n} samples")));
    }
    let features = match source {
        FeatureSource::Original => data.features(),
        FeatureSource::Reconstructed(rec) => {
            if rec.n_samples() != n || rec.dim() != data.dim() {
                return Err(Error::DimensionMismatch {
                    expected: n * data.dim(),
                    got: rec.features().len(),
                });
            }
            rec.features()
        }
    };
    let mut ctx = GainContext::new(features, data.dim(), exec);
    let mut bins = Vec::with_capacity(n_bins);
    for cap in bin_capacities(n, n_bins) {
        for _ in 0..cap {
            let next = ctx.best_candidate().expect("pool cannot run dry before capacity");
            ctx.select(next)?;
        }
        bins.push(ctx.finish_bin());
    }
    Ok(BinSet { n_bins, bins })
}
