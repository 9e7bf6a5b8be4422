//! Patch scoring, dropping and fill.
//!
//! Each feature vector is cut into `n_patches` contiguous blocks of
//! `dim / n_patches` values (the last block absorbs the remainder). The
//! lowest-scoring blocks of every sample are masked and refilled, which
//! stands in for patch dropping plus reconstruction on images.

use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{round_count, FeatureDataset};
use crate::error::{Error, Result};
use crate::exec::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatchMetric {
    Variance,
    L2Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    Zero,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Identity,
    MeanFill,
    ZeroFill,
}

/// Column ranges of each patch.
pub fn patch_ranges(dim: usize, n_patches: usize) -> Result<Vec<Range<usize>>> {
    if n_patches == 0 {
        return Err(Error::domain("n_patches must be positive"));
    }
    if n_patches > dim {
        return Err(Error::domain(format!("n_patches {n_patches} exceeds feature dim {dim}")));
    }
    let width = dim / n_patches;
    Ok((0..n_patches)
        .map(|p| {
            let end = if p + 1 == n_patches { dim } else { (p + 1) * width };
            p * width..end
        })
        .collect())
}

/// Per-sample patch scores, row-major `n_samples × n_patches`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchScores {
    pub n_patches: usize,
    pub scores: Vec<f64>,
}

impl PatchScores {
    pub fn sample(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_patches..(i + 1) * self.n_patches]
    }
}

fn score_block(block: &[f32], metric: PatchMetric) -> f64 {
    match metric {
        PatchMetric::L2Norm => block.iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt(),
        PatchMetric::Variance => {
            let n = block.len() as f64;
            let mean = block.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            block.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n
        }
    }
}

/// Higher score means more informative.
pub fn score_patches(data: &FeatureDataset, n_patches: usize, metric: PatchMetric) -> Result<PatchScores> {
    let ranges = patch_ranges(data.dim(), n_patches)?;
    let per_sample = Exec::default().map_range(data.n_samples(), |i| {
        let row = data.row(i);
        ranges.iter().map(|r| score_block(&row[r.clone()], metric)).collect::<Vec<_>>()
    });
    Ok(PatchScores {
        n_patches,
        scores: per_sample.into_iter().flatten().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropParams {
    pub drop_rate: f64,
    pub n_patches: usize,
    pub metric: PatchMetric,
    pub fill: FillPolicy,
}

/// Features after patch dropping and fill; same shape as the source.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedFeatures {
    features: Vec<f32>,
    dim: usize,
    /// Row-major `n_samples × n_patches`, true where a patch was dropped.
    mask: Vec<bool>,
    provenance: Provenance,
    params: DropParams,
}

#[derive(Serialize, Deserialize)]
struct Sidecar<'a> {
    provenance: Provenance,
    #[serde(flatten)]
    params: std::borrow::Cow<'a, DropParams>,
    dropped_per_sample: usize,
}

impl ReconstructedFeatures {
    /// Unmodified copy of the source features.
    pub fn identity(data: &FeatureDataset) -> Self {
        ReconstructedFeatures {
            features: data.features().to_vec(),
            dim: data.dim(),
            mask: Vec::new(),
            provenance: Provenance::Identity,
            params: DropParams {
                drop_rate: 0.0,
                n_patches: 1,
                metric: PatchMetric::Variance,
                fill: FillPolicy::Zero,
            },
        }
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_samples(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn params(&self) -> &DropParams {
        &self.params
    }

    /// Dropped-patch flags of sample `i` (empty for identity reconstructions).
    pub fn mask(&self, i: usize) -> &[bool] {
        if self.mask.is_empty() {
            return &[];
        }
        let p = self.params.n_patches;
        &self.mask[i * p..(i + 1) * p]
    }

    /// The reconstructed features paired with the source labels.
    pub fn to_dataset(&self, source: &FeatureDataset) -> Result<FeatureDataset> {
        source.with_features(self.features.clone())
    }

    /// Writes `path` in DQF1 and a provenance sidecar at `<path>.json`.
    pub fn save(&self, source: &FeatureDataset, path: &Path) -> Result<PathBuf> {
        self.to_dataset(source)?.save_binary(path)?;
        let mut sidecar_path = path.as_os_str().to_owned();
        sidecar_path.push(".json");
        let sidecar_path = PathBuf::from(sidecar_path);
        let sidecar = Sidecar {
            provenance: self.provenance,
            params: std::borrow::Cow::Borrowed(&self.params),
            dropped_per_sample: round_count(self.params.drop_rate * self.params.n_patches as f64),
        };
        fs::write(&sidecar_path, serde_json::to_string_pretty(&sidecar)?)
            .map_err(|e| Error::io(&sidecar_path, e))?;
        Ok(sidecar_path)
    }
}

/// Drops the `round(drop_rate · n_patches)` lowest-scoring patches of each
/// sample (lowest patch index on ties) and fills them per `fill`.
pub fn drop_and_fill(
    data: &FeatureDataset,
    drop_rate: f64,
    n_patches: usize,
    metric: PatchMetric,
    fill: FillPolicy,
) -> Result<ReconstructedFeatures> {
    if !(0.0..1.0).contains(&drop_rate) {
        return Err(Error::domain(format!("drop_rate {drop_rate} outside [0, 1)")));
    }
    let ranges = patch_ranges(data.dim(), n_patches)?;
    let params = DropParams {
        drop_rate,
        n_patches,
        metric,
        fill,
    };
    let n_drop = round_count(drop_rate * n_patches as f64);
    if n_drop == 0 {
        return Ok(ReconstructedFeatures {
            params,
            ..ReconstructedFeatures::identity(data)
        });
    }
    let scores = score_patches(data, n_patches, metric)?;
    let column_means: Vec<f32> = match fill {
        FillPolicy::Zero => vec![0.0; data.dim()],
        FillPolicy::Mean => {
            let n = data.n_samples() as f64;
            (0..data.dim())
                .map(|j| ((0..data.n_samples()).map(|i| f64::from(data.row(i)[j])).sum::<f64>() / n) as f32)
                .collect()
        }
    };

    let rows = Exec::default().map_range(data.n_samples(), |i| {
        let s = scores.sample(i);
        let mut order: Vec<usize> = (0..n_patches).collect();
        order.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
        let mut mask = vec![false; n_patches];
        for &p in &order[..n_drop] {
            mask[p] = true;
        }
        let mut row = data.row(i).to_vec();
        for (p, r) in ranges.iter().enumerate() {
            if mask[p] {
                row[r.clone()].copy_from_slice(&column_means[r.clone()]);
            }
        }
        (row, mask)
    });
    let mut features = Vec::with_capacity(data.features().len());
    let mut mask = Vec::with_capacity(data.n_samples() * n_patches);
    for (row, m) in rows {
        features.extend(row);
        mask.extend(m);
    }
    Ok(ReconstructedFeatures {
        features,
        dim: data.dim(),
        mask,
        provenance: match fill {
            FillPolicy::Zero => Provenance::ZeroFill,
            FillPolicy::Mean => Provenance::MeanFill,
        },
        params,
    })
}
