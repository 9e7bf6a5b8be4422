//! Dataset compression in feature space.
//!
//! The crate implements dataset quantization (GraphCut bin generation,
//! bin sampling, patch dropping) together with adaptive sampling: a
//! class-wise fraction search followed by expected-error-reduction active
//! learning. A small softmax classifier provides class-wise accuracies and
//! posteriors, and the [`pipeline`] module wires everything into the DQ and
//! DQAS pipelines plus a benchmark sweep.

pub mod adaptive;
pub mod bins;
pub mod classifier;
pub mod config;
pub mod data;
pub mod error;
pub mod exec;
pub mod pipeline;
pub mod quantize;
pub mod report;
pub mod rng;
pub mod samplers;

pub use adaptive::{active_select, classwise_init, expected_loss};
pub use bins::{generate_bins, BinSet, FeatureSource, GainContext};
pub use classifier::{ClassAccuracyReport, SoftmaxModel, TrainConfig};
pub use config::PipelineConfig;
pub use data::{aipc, FeatureDataset, SamplingPlan, SubsetSelection};
pub use error::{Error, Result};
pub use exec::Exec;
pub use quantize::{drop_and_fill, score_patches, ReconstructedFeatures};
pub use rng::RngState;
