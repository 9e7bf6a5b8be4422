//! Adaptive sampling: class-wise dataset initialization followed by
//! expected-error-reduction active learning.
//!
//! Class-wise initialization keeps one fraction `ρ_c` per class. Each
//! iteration trains on the current subset, measures class accuracies
//! `a_c^i` on the evaluation set, folds them into the best-seen `a_c`, and
//! updates
//!
//! ```text
//! ρ_c ← U[0, 1]                      if a_c < lb
//! ρ_c ← ρ_c · (1 + (a_c − a_c^i))    otherwise
//! ```
//!
//! before renormalizing so that `Σ_c ρ_c · |pool_c| = budget` and
//! resampling every class from its pool.
//!
//! Active learning then grows the subset: every candidate from the pool
//! `R = T \ S` is scored by the mean cross-entropy over `R` of a model
//! retrained on `S ∪ {x}`, and the `k` lowest-loss candidates are added.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{evaluate, train, SoftmaxModel, TrainConfig};
use crate::data::{FeatureDataset, SamplingPlan, SubsetSelection};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::rng::RngState;
use crate::samplers::draw_from;

/// Log-probability floor used by [`expected_loss`].
pub const PROB_FLOOR: f64 = 1e-12;

/// Training features and evaluation features over the same samples.
///
/// The classifier is fit on `train` (e.g. patch-dropped features) while
/// accuracies and pool losses are measured on `eval` (the original data).
#[derive(Debug, Clone, Copy)]
pub struct Views<'a> {
    pub train: &'a FeatureDataset,
    pub eval: &'a FeatureDataset,
}

impl<'a> Views<'a> {
    pub fn same(data: &'a FeatureDataset) -> Self {
        Views { train: data, eval: data }
    }

    pub fn new(train: &'a FeatureDataset, eval: &'a FeatureDataset) -> Result<Self> {
        if train.labels() != eval.labels() || train.dim() != eval.dim() {
            return Err(Error::domain("train and eval views must share labels and shape"));
        }
        Ok(Views { train, eval })
    }
}

/// Source of class-wise accuracies for a candidate subset.
pub trait AccuracyOracle {
    fn class_accuracies(&mut self, subset: &[usize]) -> Result<Vec<f64>>;
}

/// Trains the softmax classifier on the subset and evaluates on the full set.
pub struct TrainedAccuracy<'a> {
    pub views: Views<'a>,
    pub config: TrainConfig,
}

impl AccuracyOracle for TrainedAccuracy<'_> {
    fn class_accuracies(&mut self, subset: &[usize]) -> Result<Vec<f64>> {
        let model = train(self.views.train, subset, &self.config, None)?;
        Ok(evaluate(&model, self.views.eval)?.per_class)
    }
}

/// Source of `U[0, 1]` draws.
pub trait UniformSource {
    fn next_uniform(&mut self) -> f64;
}

pub struct RngUniform(pub ChaCha8Rng);

impl UniformSource for RngUniform {
    fn next_uniform(&mut self) -> f64 {
        self.0.random::<f64>()
    }
}

/// Replays a fixed list of draws; panics when exhausted.
pub struct ScriptedUniform {
    draws: std::vec::IntoIter<f64>,
}

impl ScriptedUniform {
    pub fn new(draws: Vec<f64>) -> Self {
        ScriptedUniform {
            draws: draws.into_iter(),
        }
    }
}

impl UniformSource for ScriptedUniform {
    fn next_uniform(&mut self) -> f64 {
        self.draws.next().expect("scripted uniform draws exhausted")
    }
}

/// Where class `c` is resampled from each iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolSource {
    /// The bin-sampled baseline subset.
    #[default]
    Bins,
    /// Every sample of the class.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitParams {
    pub budget: usize,
    pub lb: f64,
    pub max_iter: usize,
    pub pool: PoolSource,
}

impl InitParams {
    pub fn new(budget: usize) -> Self {
        InitParams {
            budget,
            lb: 0.5,
            max_iter: 50,
            pool: PoolSource::Bins,
        }
    }
}

/// One class-wise initialization iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitTraceRecord {
    pub iteration: usize,
    /// `ρ^i` used to build the evaluated subset (normalized).
    pub fractions_before: Vec<f64>,
    /// Accuracies `a_c^i` of the model trained on `D^i`.
    pub accuracies: Vec<f64>,
    /// Running maxima `a_c` after folding in `a_c^i`.
    pub best_accuracies: Vec<f64>,
    /// Classes that received a fresh uniform draw.
    pub fresh_draw: Vec<bool>,
    /// `ρ^{i+1}` straight from the update rule, before clamping.
    pub fractions_raw: Vec<f64>,
    /// `ρ^{i+1}` after clamping and normalization.
    pub fractions: Vec<f64>,
    /// Per-class sizes of `D^{i+1}`.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitOutcome {
    pub selection: SubsetSelection,
    pub plan: SamplingPlan,
    /// Accuracies of the baseline subset.
    pub baseline_accuracies: Vec<f64>,
    pub trace: Vec<InitTraceRecord>,
}

/// Scales fractions so that `Σ_c ρ_c · sizes[c] = budget` with every
/// `ρ_c ≤ 1`; overflow from saturated classes is redistributed
/// proportionally to the others.
pub fn normalize_fractions(raw: &[f64], sizes: &[usize], budget: usize) -> Result<Vec<f64>> {
    let capacity: usize = sizes.iter().sum();
    if budget > capacity {
        return Err(Error::domain(format!("budget {budget} exceeds pool capacity {capacity}")));
    }
    let mut weight: Vec<f64> = raw.iter().map(|&r| if r.is_finite() { r.clamp(0.0, 1.0) } else { 0.0 }).collect();
    let mut saturated = vec![false; raw.len()];
    loop {
        let remaining = budget as f64
            - sizes
                .iter()
                .zip(&saturated)
                .filter(|(_, &s)| s)
                .map(|(&m, _)| m as f64)
                .sum::<f64>();
        let mut denom: f64 = (0..raw.len()).filter(|&c| !saturated[c]).map(|c| weight[c] * sizes[c] as f64).sum();
        if denom <= 0.0 {
            // Nothing left to scale: spread evenly over the unsaturated classes.
            for c in (0..raw.len()).filter(|&c| !saturated[c]) {
                weight[c] = 1.0;
            }
            denom = (0..raw.len()).filter(|&c| !saturated[c]).map(|c| sizes[c] as f64).sum();
        }
        let scale = if denom > 0.0 { remaining.max(0.0) / denom } else { 0.0 };
        let mut changed = false;
        for c in 0..raw.len() {
            if !saturated[c] && scale * weight[c] >= 1.0 {
                saturated[c] = true;
                changed = true;
            }
        }
        if !changed {
            return Ok((0..raw.len())
                .map(|c| if saturated[c] { 1.0 } else { scale * weight[c] })
                .collect());
        }
    }
}

/// Integer per-class counts summing exactly to `budget` (largest remainder,
/// lowest class on ties), each capped at the pool size.
pub fn allocate_counts(fractions: &[f64], sizes: &[usize], budget: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().zip(sizes).map(|(&f, &m)| f * m as f64).collect();
    let mut counts: Vec<usize> = exact
        .iter()
        .zip(sizes)
        .map(|(&e, &m)| (e.floor().max(0.0) as usize).min(m))
        .collect();
    let mut assigned: usize = counts.iter().sum();
    while assigned > budget {
        // Only reachable through rounding noise; trim the smallest remainder.
        let c = (0..counts.len())
            .filter(|&c| counts[c] > 0)
            .min_by(|&a, &b| (exact[a] - counts[a] as f64).total_cmp(&(exact[b] - counts[b] as f64)))
            .expect("positive count exists");
        counts[c] -= 1;
        assigned -= 1;
    }
    while assigned < budget {
        let c = (0..counts.len())
            .filter(|&c| counts[c] < sizes[c])
            .max_by(|&a, &b| {
                let ra = exact[a] - counts[a] as f64;
                let rb = exact[b] - counts[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            });
        match c {
            Some(c) => {
                counts[c] += 1;
                assigned += 1;
            }
            None => break,
        }
    }
    counts
}

/// Class-wise dataset initialization with the trained classifier.
pub fn classwise_init(
    views: Views<'_>,
    baseline: &SubsetSelection,
    params: &InitParams,
    train_config: &TrainConfig,
    seed: &RngState,
) -> Result<InitOutcome> {
    let mut oracle = TrainedAccuracy {
        views,
        config: train_config.clone(),
    };
    let mut uniform = RngUniform(seed.derive("fractions").rng());
    classwise_init_with(&mut oracle, &mut uniform, views.eval, baseline, params, seed)
}

/// Class-wise initialization with pluggable accuracy and uniform sources.
pub fn classwise_init_with(
    oracle: &mut dyn AccuracyOracle,
    uniform: &mut dyn UniformSource,
    data: &FeatureDataset,
    baseline: &SubsetSelection,
    params: &InitParams,
    seed: &RngState,
) -> Result<InitOutcome> {
    let n = data.n_samples();
    let n_classes = data.n_classes();
    if params.budget == 0 || params.budget > n {
        return Err(Error::domain(format!("budget {} outside 1..={n}", params.budget)));
    }
    if !(params.lb > 0.0 && params.lb < 1.0) {
        return Err(Error::domain(format!("lower bound {} outside (0, 1)", params.lb)));
    }
    if params.max_iter == 0 {
        return Err(Error::domain("max_iter must be at least 1"));
    }
    if baseline.parent_size() != n {
        return Err(Error::domain("baseline selection belongs to a different dataset"));
    }
    if baseline.is_empty() {
        return Err(Error::domain("baseline selection is empty"));
    }

    let pools: Vec<Vec<usize>> = match params.pool {
        PoolSource::Raw => data.class_index().to_vec(),
        PoolSource::Bins => {
            let mut pools = vec![Vec::new(); n_classes];
            for &i in baseline.indices() {
                pools[data.label(i)].push(i);
            }
            pools
        }
    };
    let sizes: Vec<usize> = pools.iter().map(Vec::len).collect();

    let resample = |fractions: &[f64], iteration: usize| -> Result<(SubsetSelection, Vec<usize>)> {
        let counts = allocate_counts(fractions, &sizes, params.budget);
        let mut rng = seed.derive_index("resample", iteration as u64).rng();
        let mut picked = Vec::with_capacity(params.budget);
        for (pool, &k) in pools.iter().zip(&counts) {
            picked.extend(draw_from(pool, k, &mut rng));
        }
        Ok((SubsetSelection::new(data, picked)?, counts))
    };

    let baseline_accuracies = checked_accuracies(oracle, baseline.indices(), n_classes)?;
    let mut best = baseline_accuracies.clone();
    let initial: Vec<f64> = (0..n_classes).map(|_| uniform.next_uniform()).collect();
    let mut fractions = normalize_fractions(&initial, &sizes, params.budget)?;
    let (mut current, _) = resample(&fractions, 0)?;

    let mut trace = Vec::with_capacity(params.max_iter);
    for iteration in 0..params.max_iter {
        let accuracies = checked_accuracies(oracle, current.indices(), n_classes)?;
        let mut fresh_draw = vec![false; n_classes];
        let mut raw = vec![0.0; n_classes];
        for c in 0..n_classes {
            best[c] = best[c].max(accuracies[c]);
            if best[c] < params.lb {
                fresh_draw[c] = true;
                raw[c] = uniform.next_uniform();
            } else {
                raw[c] = fractions[c] * (1.0 + (best[c] - accuracies[c]));
            }
        }
        let next = normalize_fractions(&raw, &sizes, params.budget)?;
        let (selection, counts) = resample(&next, iteration + 1)?;
        trace.push(InitTraceRecord {
            iteration,
            fractions_before: fractions.clone(),
            accuracies,
            best_accuracies: best.clone(),
            fresh_draw,
            fractions_raw: raw,
            fractions: next.clone(),
            counts,
        });
        fractions = next;
        current = selection;
    }

    Ok(InitOutcome {
        selection: current,
        plan: SamplingPlan {
            fractions,
            budget: params.budget,
        },
        baseline_accuracies,
        trace,
    })
}

fn checked_accuracies(oracle: &mut dyn AccuracyOracle, subset: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let acc = oracle.class_accuracies(subset)?;
    if acc.len() != n_classes {
        return Err(Error::DimensionMismatch {
            expected: n_classes,
            got: acc.len(),
        });
    }
    if acc.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::domain("class accuracy outside [0, 1]"));
    }
    Ok(acc)
}

/// Mean cross-entropy of `model` over `pool`, with one-hot targets from the
/// known labels and probabilities floored at [`PROB_FLOOR`]. Lower is better.
pub fn expected_loss(model: &SoftmaxModel, pool: &[usize], data: &FeatureDataset) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::domain("expected loss over an empty pool"));
    }
    if model.dim != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            got: data.dim(),
        });
    }
    let mut p = vec![0.0; model.n_classes];
    let mut total = 0.0;
    for &i in pool {
        model.proba_into(data.row(i), &mut p);
        total -= p[data.label(i)].max(PROB_FLOOR).ln();
    }
    Ok(total / pool.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveParams {
    pub k: usize,
    pub rounds: usize,
    pub candidate_subsample: usize,
    /// Warm-start epochs per candidate retrain.
    pub refine_epochs: usize,
    /// Retrain every candidate from scratch with the full config instead.
    pub full_retrain: bool,
}

impl Default for ActiveParams {
    fn default() -> Self {
        ActiveParams {
            k: 1,
            rounds: 5,
            candidate_subsample: 256,
            refine_epochs: 3,
            full_retrain: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveTraceRecord {
    pub round: usize,
    pub pool_size: usize,
    pub candidates: usize,
    /// Loss of the round's base model over the pool.
    pub base_loss: f64,
    pub chosen: Vec<usize>,
    pub chosen_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveOutcome {
    pub selection: SubsetSelection,
    pub trace: Vec<ActiveTraceRecord>,
}

/// Grows `init` by `k` samples per round for `rounds` rounds.
pub fn active_select(
    views: Views<'_>,
    init: &SubsetSelection,
    params: &ActiveParams,
    train_config: &TrainConfig,
    seed: &RngState,
    exec: Exec,
) -> Result<ActiveOutcome> {
    let schedule = vec![params.k; params.rounds];
    active_select_schedule(views, init, &schedule, params, train_config, seed, exec)
}

/// Like [`active_select`] but with a per-round batch size.
pub fn active_select_schedule(
    views: Views<'_>,
    init: &SubsetSelection,
    schedule: &[usize],
    params: &ActiveParams,
    train_config: &TrainConfig,
    seed: &RngState,
    exec: Exec,
) -> Result<ActiveOutcome> {
    let data = views.eval;
    if init.is_empty() {
        return Err(Error::domain("active learning needs a non-empty initial set"));
    }
    if init.parent_size() != data.n_samples() {
        return Err(Error::domain("initial selection belongs to a different dataset"));
    }
    if schedule.contains(&0) {
        return Err(Error::domain("k must be at least 1"));
    }
    if params.candidate_subsample == 0 {
        return Err(Error::domain("candidate_subsample must be at least 1"));
    }
    let needed: usize = schedule.iter().sum();
    let available = data.n_samples() - init.len();
    if needed > available {
        return Err(Error::domain(format!(
            "candidate pool exhausted: {needed} additions requested, {available} available"
        )));
    }

    let refine = TrainConfig {
        epochs: params.refine_epochs,
        ..train_config.clone()
    };
    let mut selection = init.clone();
    let mut trace = Vec::with_capacity(schedule.len());
    for (round, &k) in schedule.iter().enumerate() {
        let pool = selection.complement();
        let current = selection.indices();
        let base = train(views.train, current, train_config, None)?;
        let base_loss = expected_loss(&base, &pool, data)?;

        let candidates = if params.candidate_subsample >= pool.len() {
            pool.clone()
        } else {
            let mut rng = seed.derive_index("candidates", round as u64).rng();
            draw_from(&pool, params.candidate_subsample, &mut rng)
        };

        let scored = exec.map_slice(&candidates, |&x| -> Result<f64> {
            let mut set = Vec::with_capacity(current.len() + 1);
            set.extend_from_slice(current);
            set.push(x);
            let model = if params.full_retrain {
                train(views.train, &set, train_config, None)?
            } else {
                train(views.train, &set, &refine, Some(&base))?
            };
            expected_loss(&model, &pool, data)
        });
        let mut ranked = Vec::with_capacity(candidates.len());
        for (&x, loss) in candidates.iter().zip(scored) {
            ranked.push((loss?, x));
        }
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        ranked.truncate(k);

        let mut grown = current.to_vec();
        grown.extend(ranked.iter().map(|&(_, x)| x));
        selection = SubsetSelection::new(data, grown)?;
        trace.push(ActiveTraceRecord {
            round,
            pool_size: pool.len(),
            candidates: candidates.len(),
            base_loss,
            chosen: ranked.iter().map(|&(_, x)| x).collect(),
            chosen_losses: ranked.iter().map(|&(l, _)| l).collect(),
        });
    }
    Ok(ActiveOutcome { selection, trace })
}
