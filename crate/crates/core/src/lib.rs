//! Line-of-sight probability modelling for macrocells: ray tracing over
//! building and terrain data, environment classification, empirical curves,
//! model fitting, parameter distributions, ensemble sampling and a two-cell
//! outage simulation.

pub mod artifacts;
pub mod dist;
pub mod empirical;
pub mod env;
pub mod error;
pub mod extract;
pub mod fit;
pub mod geo;
pub mod model;
pub mod outage;
pub mod pipeline;
pub mod sampling;
pub mod synth;

pub use artifacts::{CellClass, CellFit};
pub use dist::{fit_environment, select_family, DistFitConfig, Distribution, EnvParamModel, Family};
pub use empirical::{bin_samples, pool_cells, BinConfig, LosBin, LosCurve};
pub use env::{cell_stats, classify, filter_reliable, CellStats, EnvClass};
pub use error::{Error, Result};
pub use extract::{extract_cell, trace_los, CellLosData, ExtractConfig, LosSample};
pub use fit::{fit_cell, fit_metric, FitConfig, FitResult, Metric};
pub use model::{D1D2Params, LosModelParams};
pub use outage::{simulate, LinkModel, OutageResult, SimConfig};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineSummary};
pub use sampling::TripletSampler;
pub use synth::{generate_city, SyntheticCitySpec};
