//! DQ and DQAS pipelines, the benchmark sweep, and artifact output.
//!
//! DQ: bins on original features → uniform bin sampling → patch drop.
//! DQAS: patch drop → bins on the reconstructed features → class-wise
//! initialization → active learning up to the budget.
//!
//! Either way the evaluation classifier is trained on the (patch-dropped)
//! selection and evaluated on the original features.

use std::borrow::Cow;
use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::adaptive::{active_select_schedule, classwise_init, ActiveOutcome, InitOutcome, Views};
use crate::bins::{generate_bins, BinSet, FeatureSource};
use crate::classifier::{evaluate, train, ClassAccuracyReport, SoftmaxModel};
use crate::config::{PipelineConfig, PipelineKind};
use crate::data::{aipc, round_count, FeatureDataset, SubsetSelection};
use crate::error::{Error, Result, StageExt};
use crate::exec::Exec;
use crate::quantize::{drop_and_fill, ReconstructedFeatures};
use crate::report::{BenchmarkReport, ReportRow};
use crate::rng::RngState;
use crate::samplers::{sample_bins, SamplerConfig, SamplerMethod};

/// A compression method as it appears in sweep reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Dq,
    Dqas,
    Random,
    KCenterGreedy,
    Herding,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dq => "dq",
            Method::Dqas => "dqas",
            Method::Random => "random",
            Method::KCenterGreedy => "k_center_greedy",
            Method::Herding => "herding",
        }
    }

    /// The config that runs this method.
    pub fn configure(self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        let (pipeline, sampler) = match self {
            Method::Dq => (PipelineKind::Dq, SamplerMethod::UniformBins),
            Method::Dqas => (PipelineKind::Dqas, SamplerMethod::UniformBins),
            Method::Random => (PipelineKind::Dq, SamplerMethod::Random),
            Method::KCenterGreedy => (PipelineKind::Dq, SamplerMethod::KCenterGreedy),
            Method::Herding => (PipelineKind::Dq, SamplerMethod::Herding),
        };
        cfg.pipeline = pipeline;
        cfg.sampler = sampler;
        cfg
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dq" => Ok(Method::Dq),
            "dqas" => Ok(Method::Dqas),
            "random" => Ok(Method::Random),
            "k_center_greedy" | "k_center" | "kcg" => Ok(Method::KCenterGreedy),
            "herding" => Ok(Method::Herding),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: PipelineConfig,
    pub selection: SubsetSelection,
    pub row: ReportRow,
    pub evaluation: ClassAccuracyReport,
    pub bins: Option<BinSet>,
    pub reconstructed: Option<ReconstructedFeatures>,
    pub init: Option<InitOutcome>,
    pub active: Option<ActiveOutcome>,
    pub model: SoftmaxModel,
    /// Indices into the input dataset of the rows compression ran on
    /// (`None` means all of them).
    pub work_rows: Option<Vec<usize>>,
}

/// Deterministic stratified split: `(kept, held_out)` index lists.
pub fn holdout_split(data: &FeatureDataset, fraction: f64, seed: &RngState) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut kept = Vec::new();
    let mut held = Vec::new();
    let mut rng = seed.rng();
    for (c, members) in data.class_index().iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::domain(format!("class {c} has too few samples to hold out")));
        }
        let n_held = round_count(fraction * members.len() as f64).clamp(1, members.len() - 1);
        let picked = crate::samplers::draw_from(members, n_held, &mut rng);
        let mut p = picked.iter().peekable();
        for &i in members {
            if p.peek() == Some(&&i) {
                p.next();
                held.push(i);
            } else {
                kept.push(i);
            }
        }
    }
    kept.sort_unstable();
    held.sort_unstable();
    Ok((kept, held))
}

struct Prepared<'a> {
    work: Cow<'a, FeatureDataset>,
    eval: Cow<'a, FeatureDataset>,
    work_rows: Option<Vec<usize>>,
}

fn prepare<'a>(config: &PipelineConfig, data: &'a FeatureDataset) -> Result<Prepared<'a>> {
    config.validate()?;
    match config.holdout_fraction {
        None => Ok(Prepared {
            work: Cow::Borrowed(data),
            eval: Cow::Borrowed(data),
            work_rows: None,
        }),
        Some(fraction) => {
            let seed = RngState::new(config.seed).derive("holdout");
            let (kept, held) = holdout_split(data, fraction, &seed)?;
            Ok(Prepared {
                work: Cow::Owned(data.select_rows(&kept)?),
                eval: Cow::Owned(data.select_rows(&held)?),
                work_rows: Some(kept),
            })
        }
    }
}

/// Sample budget implied by the config on `n` samples split into `bins`.
pub fn resolve_budget(config: &PipelineConfig, n: usize, bins: Option<&BinSet>) -> Result<(f64, usize)> {
    match (config.effective_ratio(), config.budget) {
        (Some(ratio), _) => {
            let budget = match bins {
                Some(b) => b.bins.iter().map(|bin| round_count(ratio * bin.len() as f64).min(bin.len())).sum(),
                None => round_count(ratio * n as f64).min(n),
            };
            Ok((ratio, budget))
        }
        (None, Some(budget)) => {
            if budget > n {
                return Err(Error::Config(format!("budget {budget} exceeds {n} samples")));
            }
            Ok((budget as f64 / n as f64, budget))
        }
        (None, None) => unreachable!("effective_ratio covers the unset case"),
    }
}

fn finish(
    config: &PipelineConfig,
    method: &str,
    prepared: &Prepared<'_>,
    train_view: &FeatureDataset,
    selection: SubsetSelection,
    ratio: f64,
    started: Instant,
) -> Result<(SubsetSelection, ReportRow, ClassAccuracyReport, SoftmaxModel)> {
    let model = train(train_view, selection.indices(), &config.classifier, None).stage("evaluate")?;
    let evaluation = evaluate(&model, &prepared.eval).stage("evaluate")?;
    let n_classes = prepared.work.n_classes();
    let row = ReportRow {
        method: method.to_string(),
        ratio,
        seed: config.seed,
        n_selected: selection.len(),
        n_classes,
        aipc: aipc(&selection, n_classes)?,
        overall: evaluation.overall,
        loss: evaluation.loss,
        per_class: evaluation.per_class.clone(),
        per_class_counts: selection.per_class_counts().to_vec(),
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    Ok((selection, row, evaluation, model))
}

fn quantize(config: &PipelineConfig, data: &FeatureDataset) -> Result<ReconstructedFeatures> {
    drop_and_fill(data, config.drop_rate, config.n_patches.min(data.dim()), config.patch_metric, config.fill)
        .stage("quantize")
}

pub fn run_pipeline(config: &PipelineConfig, data: &FeatureDataset) -> Result<RunOutput> {
    match config.pipeline {
        PipelineKind::Dq => run_dq(config, data),
        PipelineKind::Dqas => run_dqas(config, data),
    }
}

/// Bins on original features, bin sampling, then patch dropping.
/// Non-bin samplers replace the first two stages.
pub fn run_dq(config: &PipelineConfig, data: &FeatureDataset) -> Result<RunOutput> {
    let started = Instant::now();
    let prepared = prepare(config, data).stage("config")?;
    let work = prepared.work.as_ref();
    let root = RngState::new(config.seed);

    let bins = match config.sampler {
        SamplerMethod::UniformBins => {
            Some(generate_bins(work, config.n_bins.min(work.n_samples()), FeatureSource::Original).stage("bins")?)
        }
        _ => None,
    };
    let (ratio, _) = resolve_budget(config, work.n_samples(), bins.as_ref()).stage("config")?;
    let sampler = SamplerConfig {
        ratio,
        method: config.sampler,
        seed: root.derive(sampler_stream(config.sampler)),
    };
    let selection = sampler.sample(work, bins.as_ref()).stage("sample")?;

    let reconstructed = quantize(config, work)?;
    let train_view = reconstructed.to_dataset(work).stage("quantize")?;
    let method = match config.sampler {
        SamplerMethod::UniformBins => "dq",
        other => other.name(),
    };
    let (selection, row, evaluation, model) =
        finish(config, method, &prepared, &train_view, selection, ratio, started)?;
    Ok(RunOutput {
        config: config.clone(),
        selection,
        row,
        evaluation,
        bins,
        reconstructed: Some(reconstructed),
        init: None,
        active: None,
        model,
        work_rows: prepared.work_rows.clone(),
    })
}

fn sampler_stream(method: SamplerMethod) -> &'static str {
    match method {
        // Shared with DQAS so that both pipelines draw the same baseline.
        SamplerMethod::UniformBins => "bin_sampling",
        SamplerMethod::Random => "random",
        SamplerMethod::KCenterGreedy => "k_center",
        SamplerMethod::Herding => "herding",
    }
}

/// Active-learning additions for a final budget: `(init_budget, schedule)`.
pub fn split_budget(budget: usize, k: Option<usize>, rounds: usize) -> (usize, Vec<usize>) {
    let k = k.unwrap_or(budget / 20).max(1);
    let additions = (k * rounds).min(budget.saturating_sub(1));
    let mut schedule = Vec::with_capacity(rounds);
    if rounds > 0 {
        for r in 0..rounds {
            let share = additions / rounds + usize::from(r < additions % rounds);
            if share > 0 {
                schedule.push(share);
            }
        }
    }
    (budget - additions, schedule)
}

/// Patch dropping first, bins on the reconstructed features, then
/// class-wise initialization and active learning.
pub fn run_dqas(config: &PipelineConfig, data: &FeatureDataset) -> Result<RunOutput> {
    let started = Instant::now();
    let prepared = prepare(config, data).stage("config")?;
    let work = prepared.work.as_ref();
    let root = RngState::new(config.seed);

    let reconstructed = quantize(config, work)?;
    let train_view = reconstructed.to_dataset(work).stage("quantize")?;
    let bins = generate_bins(
        work,
        config.n_bins.min(work.n_samples()),
        FeatureSource::Reconstructed(&reconstructed),
    )
    .stage("bins")?;
    let (ratio, budget) = resolve_budget(config, work.n_samples(), Some(&bins)).stage("config")?;
    let baseline = sample_bins(work, &bins, ratio, &root.derive("bin_sampling")).stage("sample")?;

    let (selection, init, active) = if !config.adaptive.enabled {
        (baseline, None, None)
    } else {
        let (init, active) = run_adaptive(config, &train_view, work, &baseline, budget)?;
        (active.selection.clone(), Some(init), Some(active))
    };

    let (selection, row, evaluation, model) =
        finish(config, "dqas", &prepared, &train_view, selection, ratio, started)?;
    Ok(RunOutput {
        config: config.clone(),
        selection,
        row,
        evaluation,
        bins: Some(bins),
        reconstructed: Some(reconstructed),
        init,
        active,
        model,
        work_rows: prepared.work_rows.clone(),
    })
}

/// Class-wise initialization from `baseline` followed by active learning up
/// to `budget` samples.
pub fn run_adaptive(
    config: &PipelineConfig,
    train_view: &FeatureDataset,
    work: &FeatureDataset,
    baseline: &SubsetSelection,
    budget: usize,
) -> Result<(InitOutcome, ActiveOutcome)> {
    config.adaptive.validate().stage("config")?;
    let root = RngState::new(config.seed);
    let views = Views::new(train_view, work).stage("adaptive")?;
    let (init_budget, schedule) = split_budget(budget, config.adaptive.k, config.adaptive.rounds);
    let init_budget = init_budget.min(baseline.len()).max(1);
    let init = classwise_init(
        views,
        baseline,
        &config.adaptive.init_params(init_budget),
        &config.classifier,
        &root.derive("classwise_init"),
    )
    .stage("classwise_init")?;
    let active = active_select_schedule(
        views,
        &init.selection,
        &schedule,
        &config.adaptive.active_params(schedule.first().copied().unwrap_or(1)),
        &config.classifier,
        &root.derive("active"),
        Exec::default(),
    )
    .stage("active_select")?;
    Ok((init, active))
}

#[derive(Serialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
enum TraceLine<'a> {
    Init(&'a crate::adaptive::InitTraceRecord),
    Active(&'a crate::adaptive::ActiveTraceRecord),
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One JSON line per initialization iteration, then one per active round.
pub fn trace_jsonl(init: Option<&InitOutcome>, active: Option<&ActiveOutcome>) -> Result<String> {
    let mut out = String::new();
    for rec in init.map_or(&[][..], |i| &i.trace[..]) {
        out.push_str(&serde_json::to_string(&TraceLine::Init(rec))?);
        out.push('\n');
    }
    for rec in active.map_or(&[][..], |a| &a.trace[..]) {
        out.push_str(&serde_json::to_string(&TraceLine::Active(rec))?);
        out.push('\n');
    }
    Ok(out)
}

impl RunOutput {
    pub fn trace_jsonl(&self) -> Result<String> {
        trace_jsonl(self.init.as_ref(), self.active.as_ref())
    }

    /// Writes every stage artifact into `dir`.
    pub fn write_artifacts(&self, dir: &Path, data: &FeatureDataset) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join("config.toml"), self.config.to_toml()?)?;
        write_file(&dir.join("selection.json"), self.selection.to_json()?)?;
        write_file(&dir.join("model.json"), self.model.to_json()?)?;
        if let Some(bins) = &self.bins {
            write_file(&dir.join("bins.json"), bins.to_json()?)?;
        }
        if self.init.is_some() || self.active.is_some() {
            write_file(&dir.join("trace.jsonl"), self.trace_jsonl()?)?;
        }
        if let Some(rows) = &self.work_rows {
            write_file(&dir.join("work_rows.json"), serde_json::to_string(rows)?)?;
        }
        if let Some(rec) = &self.reconstructed {
            let work = match &self.work_rows {
                Some(rows) => Cow::Owned(data.select_rows(rows)?),
                None => Cow::Borrowed(data),
            };
            rec.save(&work, &dir.join("reconstructed.dqf1"))?;
        }
        let report = BenchmarkReport {
            rows: vec![self.row.clone()],
        };
        write_report(&report, dir)
    }
}

/// `report.csv`, `report.md` and one `plot_<method>.svg` per method.
pub fn write_report(report: &BenchmarkReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_file(&dir.join("report.csv"), report.to_csv())?;
    write_file(&dir.join("report.md"), report.to_markdown())?;
    for method in report.methods() {
        write_file(&dir.join(format!("plot_{method}.svg")), report.class_plot_svg(&method))?;
    }
    Ok(())
}

/// Directory of one sweep cell below the sweep output root.
pub fn cell_dir(method: Method, ratio: f64, seed: u64) -> String {
    format!("{}/ratio_{ratio}/seed_{seed}", method.name())
}

pub struct SweepOutput {
    pub report: BenchmarkReport,
    pub runs: Vec<RunOutput>,
}

/// Runs every (method, ratio, seed) cell. Cells run in parallel; the report
/// is sorted canonically.
pub fn sweep(
    config: &PipelineConfig,
    data: &FeatureDataset,
    ratios: &[f64],
    methods: &[Method],
    seeds: &[u64],
) -> Result<SweepOutput> {
    if ratios.is_empty() || methods.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one ratio, method and seed".into()));
    }
    if ratios.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::Config("sweep ratios must lie in (0, 1]".into()));
    }
    if ratios.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("sweep ratios must be strictly increasing".into()));
    }
    let mut cells = Vec::new();
    for &method in methods {
        for &ratio in ratios {
            for &seed in seeds {
                let mut cfg = method.configure(config);
                cfg.ratio = Some(ratio);
                cfg.budget = None;
                cfg.seed = seed;
                cfg.classifier.seed = seed;
                cells.push(cfg);
            }
        }
    }
    let results = Exec::default().map_slice(&cells, |cfg| run_pipeline(cfg, data));
    let mut runs = Vec::with_capacity(results.len());
    for r in results {
        runs.push(r?);
    }
    runs.sort_by(|a, b| {
        a.row
            .method
            .cmp(&b.row.method)
            .then(a.row.ratio.total_cmp(&b.row.ratio))
            .then(a.row.seed.cmp(&b.row.seed))
    });
    let mut report = BenchmarkReport {
        rows: runs.iter().map(|r| r.row.clone()).collect(),
    };
    report.sort();
    Ok(SweepOutput { report, runs })
}

impl SweepOutput {
    pub fn write(&self, dir: &Path, data: &FeatureDataset) -> Result<()> {
        for run in &self.runs {
            let method: Method = run.row.method.parse()?;
            run.write_artifacts(&dir.join(cell_dir(method, run.row.ratio, run.row.seed)), data)?;
        }
        write_report(&self.report, dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::heteroscedastic_blobs;

    fn fixture() -> FeatureDataset {
        heteroscedastic_blobs(4, 30, 8, &RngState::new(1)).unwrap()
    }

    #[test]
    fn budget_split() {
        assert_eq!(split_budget(100, None, 5), (75, vec![5; 5]));
        assert_eq!(split_budget(10, None, 5), (5, vec![1; 5]));
        assert_eq!(split_budget(3, Some(4), 5), (1, vec![1, 1]));
        assert_eq!(split_budget(23, Some(2), 3), (17, vec![2, 2, 2]));
    }

    #[test]
    fn holdout_is_stratified_and_disjoint() {
        let ds = fixture();
        let (kept, held) = holdout_split(&ds, 0.2, &RngState::new(3)).unwrap();
        assert_eq!(kept.len() + held.len(), ds.n_samples());
        assert!(kept.iter().all(|i| held.binary_search(i).is_err()));
        assert_eq!(held.len(), 4 * 6);
    }

    #[test]
    fn holdout_mode_runs() {
        let ds = fixture();
        let cfg = PipelineConfig { holdout_fraction: Some(0.25), ratio: Some(0.5), ..PipelineConfig::default() };
        let out = run_dq(&cfg, &ds).unwrap();
        assert_eq!(out.evaluation.class_counts.iter().sum::<usize>(), 32);
        assert_eq!(out.selection.parent_size(), 88);
    }

    #[test]
    fn stage_names_on_errors() {
        let ds = fixture();
        let cfg = PipelineConfig { budget: Some(1000), ..PipelineConfig::default() };
        let err = run_dq(&cfg, &ds).unwrap_err();
        assert!(err.to_string().contains("config"), "{err}");
    }

    #[test]
    fn other_samplers_run() {
        let ds = fixture();
        for m in [Method::Random, Method::KCenterGreedy, Method::Herding] {
            let cfg = m.configure(&PipelineConfig { ratio: Some(0.25), ..PipelineConfig::default() });
            let out = run_pipeline(&cfg, &ds).unwrap();
            assert_eq!(out.row.method, m.name());
            // Herding rounds per class: 4 × round(7.5).
            let expected = if m == Method::Herding { 32 } else { 30 };
            assert_eq!(out.selection.len(), expected);
        }
    }

    #[test]
    fn dqas_hits_budget() {
        let ds = fixture();
        let mut cfg = PipelineConfig { pipeline: PipelineKind::Dqas, ratio: Some(0.25), ..PipelineConfig::default() };
        cfg.adaptive.max_iter = 3;
        cfg.adaptive.candidate_subsample = 16;
        let out = run_dqas(&cfg, &ds).unwrap();
        let dq = run_dq(&PipelineConfig { pipeline: PipelineKind::Dq, ..cfg.clone() }, &ds).unwrap();
        assert_eq!(out.selection.len(), dq.selection.len());
        assert!(out.trace_jsonl().unwrap().lines().count() == 3 + 5);
    }
}
