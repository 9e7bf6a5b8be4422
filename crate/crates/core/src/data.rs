//! Feature datasets, subset selections and the DQF1 file format.
//!
//! DQF1 layout (all little-endian):
//!
//! ```text
//! b"DQF1" | n_samples: u64 | dim: u32 | n_classes: u32
//! features: n_samples * dim f32, row-major
//! labels:   n_samples u32
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngState;

pub const MAGIC: &[u8; 4] = b"DQF1";
const HEADER_LEN: usize = 4 + 8 + 4 + 4;

/// Rounds half away from zero and clamps at zero.
pub fn round_count(x: f64) -> usize {
    if x <= 0.0 {
        0
    } else {
        x.round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    Binary,
    Csv,
}

impl FileFormat {
    /// Guesses the format from the file extension; anything but `.csv` is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => FileFormat::Csv,
            _ => FileFormat::Binary,
        }
    }
}

/// Dense feature matrix with integer labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Vec<f32>,
    labels: Vec<u32>,
    dim: usize,
    n_classes: usize,
    class_index: Vec<Vec<usize>>,
}

impl FeatureDataset {
    /// Builds and validates a dataset from a row-major feature buffer.
    pub fn new(features: Vec<f32>, dim: usize, labels: Vec<u32>, n_classes: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("feature dimension must be positive"));
        }
        if n_classes == 0 {
            return Err(Error::domain("n_classes must be positive"));
        }
        let n = labels.len();
        if n == 0 {
            return Err(Error::domain("dataset has no samples"));
        }
        if features.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: features.len(),
            });
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / dim,
                col: pos % dim,
            });
        }
        let mut class_index = vec![Vec::new(); n_classes];
        for (i, &y) in labels.iter().enumerate() {
            let y = y as usize;
            if y >= n_classes {
                return Err(Error::LabelOutOfRange {
                    index: i,
                    label: y as u64,
                    n_classes,
                });
            }
            class_index[y].push(i);
        }
        if let Some(c) = class_index.iter().position(Vec::is_empty) {
            return Err(Error::EmptyClass(c));
        }
        Ok(FeatureDataset {
            features,
            labels,
            dim,
            n_classes,
            class_index,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i] as usize
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Sample indices of each class, ascending.
    pub fn class_index(&self) -> &[Vec<usize>] {
        &self.class_index
    }

    /// Same labels, different features (e.g. a reconstructed copy).
    pub fn with_features(&self, features: Vec<f32>) -> Result<Self> {
        FeatureDataset::new(features, self.dim, self.labels.clone(), self.n_classes)
    }

    /// A new dataset made of the given rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.n_samples() {
                return Err(Error::domain(format!("row {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        FeatureDataset::new(features, self.dim, labels, self.n_classes)
    }

    /// Checks the class-index partition invariant. Always true for values
    /// built through [`FeatureDataset::new`]; exposed for tests and tools.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_samples();
        let mut seen = vec![false; n];
        for (c, members) in self.class_index.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyClass(c));
            }
            if members.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain(format!("class {c} index is not strictly ascending")));
            }
            for &i in members {
                if i >= n || seen[i] || self.label(i) != c {
                    return Err(Error::domain(format!("class index corrupt at sample {i}")));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::domain("class index does not cover every sample"));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.features.len() + self.labels.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.n_samples() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_classes as u32).to_le_bytes());
        for v in &self.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for y in &self.labels {
            out.extend_from_slice(&y.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "header needs {HEADER_LEN} bytes, file has {}",
                bytes.len()
            )));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected \"DQF1\"",
                String::from_utf8_lossy(&bytes[..4])
            )));
        }
        let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let n_classes = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let expected = n
            .checked_mul(dim)
            .and_then(|nd| nd.checked_add(n))
            .and_then(|words| words.checked_mul(4))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::Format("header sizes overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: bytes.len(),
            });
        }
        let body = &bytes[HEADER_LEN..];
        let (feat_bytes, label_bytes) = body.split_at(n * dim * 4);
        let features = feat_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let labels = label_bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        FeatureDataset::new(features, dim, labels, n_classes)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header: Vec<String> = (0..self.dim)
            .map(|j| format!("f{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        let io = |e| Error::io(path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for i in 0..self.n_samples() {
            let row: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{},{}", row.join(","), self.labels[i]).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Parses the CSV fixture format. `n_classes` defaults to `max(label) + 1`.
    pub fn from_csv_reader<R: std::io::Read>(reader: R, n_classes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Format(format!("csv header: {e}")))?
            .clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols.len() < 2 || cols[cols.len() - 1] != "label" {
            return Err(Error::Format("csv header must be f0,...,f{dim-1},label".into()));
        }
        let dim = cols.len() - 1;
        for (j, name) in cols[..dim].iter().enumerate() {
            if *name != format!("f{j}") {
                return Err(Error::Format(format!("csv column {j} is `{name}`, expected `f{j}`")));
            }
        }
        let mut features = Vec::new();
        let mut raw_labels: Vec<u64> = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Format(format!("csv row {row}: {e}")))?;
            if rec.len() != dim + 1 {
                return Err(Error::DimensionMismatch {
                    expected: dim + 1,
                    got: rec.len(),
                });
            }
            for (col, field) in rec.iter().take(dim).enumerate() {
                let v: f32 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Format(format!("csv row {row}, column {col}: `{field}`")))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite { row, col });
                }
                features.push(v);
            }
            let label: u64 = rec[dim]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("csv row {row}: bad label `{}`", &rec[dim])))?;
            raw_labels.push(label);
        }
        let n_classes = match n_classes {
            Some(c) => c,
            None => raw_labels.iter().max().map_or(0, |&m| m as usize + 1),
        };
        let mut labels = Vec::with_capacity(raw_labels.len());
        for (index, &label) in raw_labels.iter().enumerate() {
            if label >= n_classes as u64 {
                return Err(Error::LabelOutOfRange {
                    index,
                    label,
                    n_classes,
                });
            }
            labels.push(label as u32);
        }
        FeatureDataset::new(features, dim, labels, n_classes)
    }
}

pub fn load_features(path: &Path, format: FileFormat) -> Result<FeatureDataset> {
    match format {
        FileFormat::Binary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            FeatureDataset::from_bytes(&bytes)
        }
        FileFormat::Csv => {
            let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
            FeatureDataset::from_csv_reader(file, None)
        }
    }
}

/// Chosen sample indices into a parent dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSelection {
    indices: Vec<usize>,
    per_class_counts: Vec<usize>,
    parent_size: usize,
}

#[derive(Serialize, Deserialize)]
struct SelectionFile {
    indices: Vec<usize>,
    per_class_counts: Vec<usize>,
    aipc: f64,
}

impl SubsetSelection {
    /// Sorts `indices`; fails on duplicates or out-of-range entries.
    pub fn new(data: &FeatureDataset, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("selection contains duplicate indices"));
        }
        if let Some(&last) = indices.last() {
            if last >= data.n_samples() {
                return Err(Error::domain(format!(
                    "selected index {last} out of range for {} samples",
                    data.n_samples()
                )));
            }
        }
        let mut per_class_counts = vec![0; data.n_classes()];
        for &i in &indices {
            per_class_counts[data.label(i)] += 1;
        }
        Ok(SubsetSelection {
            indices,
            per_class_counts,
            parent_size: data.n_samples(),
        })
    }

    pub fn all(data: &FeatureDataset) -> Self {
        SubsetSelection::new(data, (0..data.n_samples()).collect()).expect("identity selection")
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn per_class_counts(&self) -> &[usize] {
        &self.per_class_counts
    }

    pub fn parent_size(&self) -> usize {
        self.parent_size
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    /// Indices of the parent not in this selection, ascending.
    pub fn complement(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.parent_size - self.indices.len());
        let mut it = self.indices.iter().peekable();
        for i in 0..self.parent_size {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        let aipc = aipc(self, self.per_class_counts.len())?;
        let file = SelectionFile {
            indices: self.indices.clone(),
            per_class_counts: self.per_class_counts.clone(),
            aipc,
        };
        Ok(serde_json::to_string(&file)?)
    }

    /// Parses a selection file and re-validates it against `data`.
    pub fn from_json(json: &str, data: &FeatureDataset) -> Result<Self> {
        let file: SelectionFile = serde_json::from_str(json)?;
        let sel = SubsetSelection::new(data, file.indices)?;
        if sel.per_class_counts != file.per_class_counts {
            return Err(Error::Format("per_class_counts disagree with indices".into()));
        }
        Ok(sel)
    }
}

/// Average samples per class: `|S| / n_classes`.
pub fn aipc(selection: &SubsetSelection, n_classes: usize) -> Result<f64> {
    if n_classes == 0 {
        return Err(Error::domain("aipc needs at least one class"));
    }
    Ok(selection.len() as f64 / n_classes as f64)
}

/// Per-class sampling fractions plus the total sample budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub fractions: Vec<f64>,
    pub budget: usize,
}

impl SamplingPlan {
    pub fn validate(&self) -> Result<()> {
        match self.fractions.iter().position(|f| !(0.0..=1.0).contains(f)) {
            Some(c) => Err(Error::domain(format!(
                "fraction {} of class {c} outside [0, 1]",
                self.fractions[c]
            ))),
            None => Ok(()),
        }
    }
}

/// One Gaussian cluster for [`make_blobs`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub center: Vec<f64>,
    /// Isotropic standard deviation.
    pub scale: f64,
    pub count: usize,
}

/// Gaussian clusters, one class per [`BlobSpec`], samples grouped by class.
pub fn make_blobs(specs: &[BlobSpec], seed: &RngState) -> Result<FeatureDataset> {
    let dim = specs
        .first()
        .map(|s| s.center.len())
        .ok_or_else(|| Error::domain("make_blobs needs at least one class"))?;
    if dim == 0 {
        return Err(Error::domain("blob centers must be non-empty"));
    }
    for (c, s) in specs.iter().enumerate() {
        if s.center.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.center.len(),
            });
        }
        if s.count == 0 {
            return Err(Error::domain(format!("class {c} has zero count")));
        }
        if !(s.scale.is_finite() && s.scale >= 0.0) {
            return Err(Error::domain(format!("class {c} has invalid scale {}", s.scale)));
        }
    }
    let mut rng = seed.derive("blobs").rng();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let total: usize = specs.iter().map(|s| s.count).sum();
    let mut features = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for (c, s) in specs.iter().enumerate() {
        for _ in 0..s.count {
            for &mu in &s.center {
                let z: f64 = normal.sample(&mut rng);
                features.push((mu + s.scale * z) as f32);
            }
            labels.push(c as u32);
        }
    }
    FeatureDataset::new(features, dim, labels, specs.len())
}

/// Benchmark fixture with alternating tight ("stable") and dispersed
/// ("sensitive") classes. Even classes are tight, odd classes dispersed.
pub fn heteroscedastic_blobs(
    n_classes: usize,
    per_class: usize,
    dim: usize,
    seed: &RngState,
) -> Result<FeatureDataset> {
    if dim < 2 {
        return Err(Error::domain("heteroscedastic fixture needs dim >= 2"));
    }
    let specs: Vec<BlobSpec> = (0..n_classes)
        .map(|c| {
            let angle = std::f64::consts::TAU * c as f64 / n_classes as f64;
            let mut center = vec![0.0; dim];
            center[0] = FIXTURE_RADIUS * angle.cos();
            center[1] = FIXTURE_RADIUS * angle.sin();
            // Spread the classes over the remaining axes too.
            if dim > 2 {
                center[2 + c % (dim - 2)] += FIXTURE_RADIUS * 0.5;
            }
            let scale = if c % 2 == 0 { TIGHT_SCALE } else { DISPERSED_SCALE };
            BlobSpec {
                center,
                scale,
                count: per_class,
            }
        })
        .collect();
    make_blobs(&specs, seed)
}

const FIXTURE_RADIUS: f64 = 6.0;
const TIGHT_SCALE: f64 = 0.5;
const DISPERSED_SCALE: f64 = 2.5;
