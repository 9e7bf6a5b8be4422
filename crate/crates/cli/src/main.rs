//! `dqcomp`: run the compression stages or whole pipelines from the shell.
//!
//! Every subcommand takes the pipeline flags below; `--config` loads a TOML
//! file first and explicit flags override it. `DQCOMP_THREADS` caps the
//! worker pool.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dqcomp_core::adaptive::PoolSource;
use dqcomp_core::bins::{generate_bins, BinSet, FeatureSource};
use dqcomp_core::classifier::{evaluate, train};
use dqcomp_core::config::{PipelineConfig, PipelineKind};
use dqcomp_core::data::{heteroscedastic_blobs, load_features, FeatureDataset, FileFormat, SubsetSelection};
use dqcomp_core::error::{Error, Result, StageExt};
use dqcomp_core::exec::init_thread_pool_from_env;
use dqcomp_core::pipeline::{resolve_budget, run_adaptive, run_pipeline, sweep, trace_jsonl, Method};
use dqcomp_core::quantize::{drop_and_fill, FillPolicy, PatchMetric, ReconstructedFeatures};
use dqcomp_core::report::BenchmarkReport;
use dqcomp_core::rng::RngState;
use dqcomp_core::samplers::{sample_bins, SamplerConfig, SamplerMethod};

#[derive(Parser)]
#[command(name = "dqcomp", version, about = "Dataset quantization with adaptive sampling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition the dataset into GraphCut bins.
    Bins {
        #[command(flatten)]
        common: Common,
        /// Build bins on the patch-dropped features instead of the originals.
        #[arg(long)]
        reconstructed: bool,
    },
    /// Draw a subset with the configured sampler.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Reuse bins from a previous `bins` run.
        #[arg(long)]
        bins: Option<PathBuf>,
    },
    /// Class-wise initialization plus active learning from a baseline subset.
    Adaptive {
        #[command(flatten)]
        common: Common,
        /// Baseline selection; bin-sampled on the reconstructed features if absent.
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Run the full DQ or DQAS pipeline.
    Pipeline {
        #[command(flatten)]
        common: Common,
    },
    /// Run every method × ratio × seed cell and write the benchmark report.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2")]
        ratios: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "dq,dqas,random,k_center_greedy,herding")]
        methods: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0")]
        seeds: Vec<u64>,
    },
    /// Train on a saved selection and report per-class accuracy.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        selection: PathBuf,
        /// Train on these (e.g. reconstructed) features instead of the input's.
        #[arg(long)]
        train_features: Option<PathBuf>,
    },
    /// Write the heteroscedastic blob fixture.
    Synth {
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 100)]
        per_class: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `.csv` writes CSV, anything else DQF1.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    Dq,
    Dqas,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Variance,
    L2Norm,
}

#[derive(Clone, Copy, ValueEnum)]
enum FillArg {
    Zero,
    Mean,
}

#[derive(Clone, Copy, ValueEnum)]
enum PoolArg {
    Bins,
    Raw,
}

#[derive(Args)]
struct Common {
    /// Feature file (DQF1 or CSV); overrides `input` in the config.
    #[arg(long, short)]
    input: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pipeline: Option<PipelineArg>,
    #[arg(long)]
    n_bins: Option<usize>,
    #[arg(long, conflicts_with = "budget")]
    ratio: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    drop_rate: Option<f64>,
    #[arg(long)]
    n_patches: Option<usize>,
    #[arg(long, value_enum)]
    patch_metric: Option<MetricArg>,
    #[arg(long, value_enum)]
    fill: Option<FillArg>,
    /// uniform_bins, random, k_center_greedy or herding.
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    no_adaptive: bool,
    #[arg(long)]
    lb: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Samples added per active-learning round.
    #[arg(long, short)]
    k: Option<usize>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    refine_epochs: Option<usize>,
    #[arg(long)]
    full_retrain: bool,
    #[arg(long, value_enum)]
    pool: Option<PoolArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    l2: Option<f64>,
    #[arg(long)]
    holdout: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        if self.input.is_some() {
            cfg.input = self.input.clone();
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.classifier.seed = seed;
        }
        if let Some(p) = self.pipeline {
            cfg.pipeline = match p {
                PipelineArg::Dq => PipelineKind::Dq,
                PipelineArg::Dqas => PipelineKind::Dqas,
            };
        }
        if let Some(r) = self.ratio {
            cfg.ratio = Some(r);
            cfg.budget = None;
        }
        if let Some(b) = self.budget {
            cfg.budget = Some(b);
            cfg.ratio = None;
        }
        set!(self.n_bins => cfg.n_bins);
        set!(self.drop_rate => cfg.drop_rate);
        set!(self.n_patches => cfg.n_patches);
        if let Some(m) = self.patch_metric {
            cfg.patch_metric = match m {
                MetricArg::Variance => PatchMetric::Variance,
                MetricArg::L2Norm => PatchMetric::L2Norm,
            };
        }
        if let Some(f) = self.fill {
            cfg.fill = match f {
                FillArg::Zero => FillPolicy::Zero,
                FillArg::Mean => FillPolicy::Mean,
            };
        }
        if let Some(s) = &self.sampler {
            cfg.sampler = s.parse::<SamplerMethod>()?;
        }
        if self.no_adaptive {
            cfg.adaptive.enabled = false;
        }
        if self.full_retrain {
            cfg.adaptive.full_retrain = true;
        }
        if let Some(p) = self.pool {
            cfg.adaptive.pool = match p {
                PoolArg::Bins => PoolSource::Bins,
                PoolArg::Raw => PoolSource::Raw,
            };
        }
        if self.k.is_some() {
            cfg.adaptive.k = self.k;
        }
        set!(self.lb => cfg.adaptive.lb);
        set!(self.max_iter => cfg.adaptive.max_iter);
        set!(self.rounds => cfg.adaptive.rounds);
        set!(self.subsample => cfg.adaptive.candidate_subsample);
        set!(self.refine_epochs => cfg.adaptive.refine_epochs);
        set!(self.epochs => cfg.classifier.epochs);
        set!(self.lr => cfg.classifier.learning_rate);
        set!(self.batch_size => cfg.classifier.batch_size);
        set!(self.l2 => cfg.classifier.l2);
        if self.holdout.is_some() {
            cfg.holdout_fraction = self.holdout;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_input(cfg: &PipelineConfig) -> Result<FeatureDataset> {
    let path = cfg
        .input
        .as_deref()
        .ok_or_else(|| Error::Config("no input file: pass --input or set `input` in the config".into()))?;
    load_features(path, FileFormat::from_path(path))
}

fn out_dir(cfg: &PipelineConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("dqcomp-out"))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::Domain(format!("creating {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Error::Domain(format!("writing {}: {e}", path.display())))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Domain(format!("reading {}: {e}", path.display())))
}

fn quantized(cfg: &PipelineConfig, data: &FeatureDataset) -> Result<ReconstructedFeatures> {
    drop_and_fill(data, cfg.drop_rate, cfg.n_patches.min(data.dim()), cfg.patch_metric, cfg.fill).stage("quantize")
}

fn cmd_bins(common: &Common, reconstructed: bool) -> Result<()> {
    let cfg = common.resolve().stage("config")?;
    let data = load_input(&cfg).stage("load")?;
    let dir = out_dir(&cfg);
    let n_bins = cfg.n_bins.min(data.n_samples());
    let bins = if reconstructed {
        let rec = quantized(&cfg, &data)?;
        rec.save(&data, &dir.join("reconstructed.dqf1")).stage("quantize")?;
        generate_bins(&data, n_bins, FeatureSource::Reconstructed(&rec))
    } else {
        generate_bins(&data, n_bins, FeatureSource::Original)
    }
    .stage("bins")?;
    write(&dir.join("bins.json"), bins.to_json()?)?;
    let sizes: Vec<usize> = bins.bins.iter().map(Vec::len).collect();
    println!("{} bins over {} samples, sizes {:?}", bins.n_bins, data.n_samples(), sizes);
    Ok(())
}

fn cmd_sample(common: &Common, bins_path: Option<&Path>) -> Result<()> {
    let cfg = common.resolve().stage("config")?;
    let data = load_input(&cfg).stage("load")?;
    let bins = match (cfg.sampler, bins_path) {
        (SamplerMethod::UniformBins, Some(p)) => Some(BinSet::from_json(&read(p)?, data.n_samples()).stage("bins")?),
        (SamplerMethod::UniformBins, None) => {
            Some(generate_bins(&data, cfg.n_bins.min(data.n_samples()), FeatureSource::Original).stage("bins")?)
        }
        _ => None,
    };
    let (ratio, _) = resolve_budget(&cfg, data.n_samples(), bins.as_ref()).stage("config")?;
    let stream = match cfg.sampler {
        SamplerMethod::UniformBins => "bin_sampling",
        SamplerMethod::Random => "random",
        SamplerMethod::KCenterGreedy => "k_center",
        SamplerMethod::Herding => "herding",
    };
    let sampler = SamplerConfig {
        ratio,
        method: cfg.sampler,
        seed: RngState::new(cfg.seed).derive(stream),
    };
    let selection = sampler.sample(&data, bins.as_ref()).stage("sample")?;
    write(&out_dir(&cfg).join("selection.json"), selection.to_json()?)?;
    println!("selected {} of {} samples, per class {:?}", selection.len(), data.n_samples(), selection.per_class_counts());
    Ok(())
}

fn cmd_adaptive(common: &Common, baseline_path: Option<&Path>) -> Result<()> {
    let cfg = common.resolve().stage("config")?;
    let data = load_input(&cfg).stage("load")?;
    let rec = quantized(&cfg, &data)?;
    let train_view = rec.to_dataset(&data).stage("quantize")?;
    let bins = generate_bins(&data, cfg.n_bins.min(data.n_samples()), FeatureSource::Reconstructed(&rec)).stage("bins")?;
    let (ratio, budget) = resolve_budget(&cfg, data.n_samples(), Some(&bins)).stage("config")?;
    let baseline = match baseline_path {
        Some(p) => SubsetSelection::from_json(&read(p)?, &data).stage("sample")?,
        None => sample_bins(&data, &bins, ratio, &RngState::new(cfg.seed).derive("bin_sampling")).stage("sample")?,
    };
    let (init, active) = run_adaptive(&cfg, &train_view, &data, &baseline, budget)?;
    let dir = out_dir(&cfg);
    write(&dir.join("bins.json"), bins.to_json()?)?;
    write(&dir.join("selection.json"), active.selection.to_json()?)?;
    write(&dir.join("trace.jsonl"), trace_jsonl(Some(&init), Some(&active))?)?;
    println!(
        "selected {} samples, per class {:?}",
        active.selection.len(),
        active.selection.per_class_counts()
    );
    Ok(())
}

fn print_rows(report: &BenchmarkReport) {
    for r in &report.rows {
        println!(
            "{:<16} ratio {:<6} seed {:<4} n {:<6} aipc {:<8.2} acc {:.4}",
            r.method, r.ratio, r.seed, r.n_selected, r.aipc, r.overall
        );
    }
}

fn cmd_pipeline(common: &Common) -> Result<()> {
    let cfg = common.resolve().stage("config")?;
    let data = load_input(&cfg).stage("load")?;
    let out = run_pipeline(&cfg, &data)?;
    out.write_artifacts(&out_dir(&cfg), &data).stage("write")?;
    print_rows(&BenchmarkReport { rows: vec![out.row.clone()] });
    Ok(())
}

fn cmd_sweep(common: &Common, ratios: &[f64], methods: &[String], seeds: &[u64]) -> Result<()> {
    let cfg = common.resolve().stage("config")?;
    let data = load_input(&cfg).stage("load")?;
    let methods = methods.iter().map(|m| m.parse::<Method>()).collect::<Result<Vec<_>>>().stage("config")?;
    let result = sweep(&cfg, &data, ratios, &methods, seeds)?;
    result.write(&out_dir(&cfg), &data).stage("write")?;
    print_rows(&result.report);
    Ok(())
}

fn cmd_evaluate(common: &Common, selection: &Path, train_features: Option<&Path>) -> Result<()> {
    let cfg = common.resolve().stage("config")?;
    let data = load_input(&cfg).stage("load")?;
    let selection = SubsetSelection::from_json(&read(selection)?, &data).stage("load")?;
    let train_view = match train_features {
        Some(p) => {
            let t = load_features(p, FileFormat::from_path(p)).stage("load")?;
            if t.labels() != data.labels() || t.dim() != data.dim() {
                return Err(Error::Stage {
                    stage: "load",
                    source: Box::new(Error::Domain("training features do not match the input dataset".into())),
                });
            }
            t
        }
        None => data.clone(),
    };
    let model = train(&train_view, selection.indices(), &cfg.classifier, None).stage("evaluate")?;
    let report = evaluate(&model, &data).stage("evaluate")?;
    let dir = out_dir(&cfg);
    write(&dir.join("model.json"), model.to_json()?)?;
    write(&dir.join("evaluation.json"), serde_json::to_string_pretty(&report)?)?;
    println!("overall {:.4}", report.overall);
    for (c, a) in report.per_class.iter().enumerate() {
        println!("class {c:<3} {a:.4} (n = {})", report.class_counts[c]);
    }
    Ok(())
}

fn cmd_synth(classes: usize, per_class: usize, dim: usize, seed: u64, out: &Path) -> Result<()> {
    let data = heteroscedastic_blobs(classes, per_class, dim, &RngState::new(seed))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Domain(format!("creating {}: {e}", parent.display())))?;
    }
    match FileFormat::from_path(out) {
        FileFormat::Csv => data.save_csv(out)?,
        FileFormat::Binary => data.save_binary(out)?,
    }
    println!("wrote {} samples × {} dims, {} classes to {}", data.n_samples(), dim, classes, out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Bins { common, reconstructed } => cmd_bins(common, *reconstructed),
        Command::Sample { common, bins } => cmd_sample(common, bins.as_deref()),
        Command::Adaptive { common, baseline } => cmd_adaptive(common, baseline.as_deref()),
        Command::Pipeline { common } => cmd_pipeline(common),
        Command::Sweep { common, ratios, methods, seeds } => cmd_sweep(common, ratios, methods, seeds),
        Command::Evaluate { common, selection, train_features } => {
            cmd_evaluate(common, selection, train_features.as_deref())
        }
        Command::Synth { classes, per_class, dim, seed, out } => cmd_synth(*classes, *per_class, *dim, *seed, out),
    }
}

fn main() -> ExitCode {
    init_thread_pool_from_env();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dqcomp: {e}");
            ExitCode::FAILURE
        }
    }
}
