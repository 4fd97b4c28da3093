//! Batch pipeline: extract, classify, filter, bin, fit and fit parameter
//! distributions, writing each stage's artifact into one directory.
//!
//! Every stage is a plain function over in-memory values so the CLI
//! subcommands and [`run_pipeline`] share the same code path.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{self, CellClass, CellFit};
use crate::dist::{fit_environment_with, write_env_models, DistFitConfig, EnvParamModel};
use crate::empirical::{bin_samples, pool_cells, BinConfig, LosCurve};
use crate::env::{cell_stats, classify, filter_reliable, EnvClass, DEFAULT_RELIABILITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::extract::{extract_cell, CellLosData, ExtractConfig};
use crate::fit::{fit_cell, FitConfig};
use crate::geo::io::{load_scene, write_file, write_scene, ScenePaths};
use crate::geo::{Scene, SpatialIndex};
use crate::model::LosModelParams;
use crate::synth::{generate_city, SyntheticCitySpec};

pub const CONFIG_FILE: &str = "config.toml";
pub const LOS_FILE: &str = "los.csv";
pub const CLASSES_FILE: &str = "classes.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const POOLED_CURVES_FILE: &str = "pooled_curves.csv";
pub const FITS_FILE: &str = "fits.csv";
pub const AVERAGE_FITS_FILE: &str = "average_models.csv";
pub const ENV_MODELS_FILE: &str = "env_models.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const SCENE_DIR: &str = "scene";

/// Where the scene comes from: files on disk or the synthetic generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scene_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticCitySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub reliability_threshold: f64,
    /// Grid cell size of the spatial index, meters.
    pub index_cell_size: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { reliability_threshold: DEFAULT_RELIABILITY_THRESHOLD, index_cell_size: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Top-level seed; stages draw from named substreams of it.
    pub seed: u64,
    pub input: InputConfig,
    pub extract: ExtractConfig,
    pub classify: ClassifyConfig,
    pub bin: BinConfig,
    pub fit: FitConfig,
    pub distfit: DistFitConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str, source_name: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::toml(source_name, text, e))?;
        Ok(cfg)
    }

    /// Reads a config file; a relative `scene_dir` is resolved against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        if let Some(dir) = cfg.input.scene_dir.as_mut() {
            if dir.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                *dir = std::path::absolute(base.join(&*dir)).map_err(|e| Error::io(base, e))?;
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.input.scene_dir, &self.input.synthetic) {
            (Some(_), Some(_)) => return Err(Error::Config("input: set either scene_dir or synthetic, not both".into())),
            (None, None) => return Err(Error::Config("input: one of scene_dir or synthetic is required".into())),
            (None, Some(spec)) => spec.validate()?,
            _ => {}
        }
        self.extract.validate().map_err(|e| Error::Config(format!("extract: {e}")))?;
        let c = &self.classify;
        if !(0.0..=1.0).contains(&c.reliability_threshold) {
            return Err(Error::Config("classify.reliability_threshold must be in [0, 1]".into()));
        }
        if !(c.index_cell_size > 0.0) {
            return Err(Error::Config("classify.index_cell_size must be > 0".into()));
        }
        if !(self.bin.width > 0.0 && self.bin.max_radius > 0.0) {
            return Err(Error::Config("bin.width and bin.max_radius must be > 0".into()));
        }
        self.fit.validate()?;
        self.distfit.validate()
    }
}

/// Independent seed for a named stage, derived from the top-level seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    // FNV-1a of the name selects the ChaCha stream
    let stream = stage.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

fn in_stage<T>(stage: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(stage))
}

/// LOS labels for every station, in station order.
pub fn extract_all(scene: &Scene, index: &SpatialIndex, config: &ExtractConfig) -> Result<Vec<CellLosData>> {
    config.validate().map_err(Error::Config)?;
    if scene.stations.is_empty() {
        return Err(Error::Insufficient("scene has no base stations".into()));
    }
    let cells: Vec<CellLosData> = scene.stations.par_iter().map(|bs| extract_cell(scene, index, bs, config)).collect();
    if cells.iter().all(|c| !c.is_usable()) {
        return Err(Error::Insufficient("no street points within the radius of any station".into()));
    }
    Ok(cells)
}

/// Statistics, class and reliability flag of every station, in station order.
pub fn classify_all(scene: &Scene, index: &SpatialIndex, radius: f64, threshold: f64) -> Result<Vec<CellClass>> {
    if !(radius > 0.0) {
        return Err(Error::Config(format!("radius {radius} must be > 0")));
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("reliability threshold {threshold} must be in [0, 1]")));
    }
    let stats: Vec<_> = scene.stations.par_iter().map(|bs| (cell_stats(scene, index, bs, radius), bs.id.clone())).collect();
    let part = filter_reliable(stats.clone(), threshold);
    info!("reliability filter kept {} of {} cells", part.kept.len(), stats.len());
    Ok(stats
        .into_iter()
        .map(|(s, id)| CellClass {
            kept: s.height_to_footprint_ratio >= threshold,
            env: classify(&s),
            stats: s,
            bs_id: id,
        })
        .collect())
}

fn class_lookup(classes: &[CellClass]) -> BTreeMap<&str, &CellClass> {
    classes.iter().map(|c| (c.bs_id.as_str(), c)).collect()
}

/// Per-cell curves of the usable cells and, with classes, pooled curves per
/// environment. Cells that failed the reliability filter are left out.
pub fn bin_cells(
    los: &[CellLosData],
    classes: Option<&[CellClass]>,
    config: &BinConfig,
) -> Result<(Vec<LosCurve>, Vec<LosCurve>)> {
    if !(config.width > 0.0 && config.max_radius > 0.0) {
        return Err(Error::Config("bin width and max radius must be > 0".into()));
    }
    let lookup = classes.map(class_lookup);
    let mut selected: Vec<(&CellLosData, Option<EnvClass>)> = Vec::new();
    for cell in los {
        let env = match &lookup {
            Some(l) => {
                let c = l
                    .get(cell.bs_id.as_str())
                    .ok_or_else(|| Error::Config(format!("cell `{}` is missing from the classification", cell.bs_id)))?;
                if !c.kept {
                    continue;
                }
                Some(c.env)
            }
            None => None,
        };
        if cell.is_usable() {
            selected.push((cell, env));
        }
    }
    let curves = selected.iter().map(|(c, _)| bin_samples(c, config)).collect();
    let mut pooled = Vec::new();
    if classes.is_some() {
        for env in EnvClass::ALL {
            let members: Vec<&CellLosData> = selected.iter().filter(|(_, e)| *e == Some(env)).map(|(c, _)| *c).collect();
            if !members.is_empty() {
                pooled.push(pool_cells(&members, env, config)?);
            }
        }
    }
    Ok((curves, pooled))
}

/// Fits every curve with enough bins; shorter curves are skipped with a warning.
pub fn fit_curves(curves: &[LosCurve], classes: Option<&[CellClass]>, config: &FitConfig) -> Result<Vec<CellFit>> {
    config.validate()?;
    let lookup = classes.map(class_lookup);
    let results: Vec<Option<Result<CellFit>>> = curves
        .par_iter()
        .map(|c| {
            if c.bins.len() < 3 {
                return None;
            }
            let env = lookup.as_ref().and_then(|l| l.get(c.source.as_str()).map(|k| k.env));
            Some(
                fit_cell(c, config)
                    .map(|result| CellFit { bs_id: c.source.clone(), env, result })
                    .map_err(|e| Error::Fit(format!("curve `{}`: {e}", c.source))),
            )
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        warn!("{skipped} curves have fewer than 3 bins and were not fitted");
    }
    results.into_iter().flatten().collect()
}

/// Average model of each environment from its pooled curve.
pub fn fit_pooled(pooled: &[LosCurve], config: &FitConfig) -> Result<Vec<CellFit>> {
    pooled
        .par_iter()
        .map(|c| {
            let env: EnvClass = c.source.parse().map_err(Error::Config)?;
            let result = fit_cell(c, config).map_err(|e| Error::Fit(format!("pooled {env}: {e}")))?;
            Ok(CellFit { bs_id: c.source.clone(), env: Some(env), result })
        })
        .collect()
}

/// Environment models from the non-outlier fits. Environments with too few
/// cells are returned in the second list with the reason.
pub fn distfit_all(fits: &[CellFit], config: &DistFitConfig) -> Result<(Vec<EnvParamModel>, Vec<(EnvClass, String)>)> {
    config.validate()?;
    let mut models = Vec::new();
    let mut skipped = Vec::new();
    for env in EnvClass::ALL {
        let params: Vec<LosModelParams> =
            fits.iter().filter(|f| f.env == Some(env) && !f.result.is_outlier).map(|f| f.result.params).collect();
        if params.is_empty() {
            continue;
        }
        match fit_environment_with(env, &params, config) {
            Ok(m) => models.push(m),
            Err(Error::Insufficient(msg)) => {
                warn!("{env}: {msg}");
                skipped.push((env, msg));
            }
            Err(e) => return Err(e),
        }
    }
    Ok((models, skipped))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub env: EnvClass,
    /// Cells classified into this environment.
    pub cells: usize,
    /// Of those, cells that passed the reliability filter.
    pub kept: usize,
    pub fitted: usize,
    pub outliers: usize,
    pub average: Option<LosModelParams>,
    pub families: Option<[String; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl EnvSummary {
    pub fn outlier_fraction(&self) -> f64 {
        if self.fitted == 0 {
            0.0
        } else {
            self.outliers as f64 / self.fitted as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub rows: Vec<EnvSummary>,
}

impl PipelineSummary {
    fn build(classes: &[CellClass], fits: &[CellFit], averages: &[CellFit], models: &[EnvParamModel], skipped: &[(EnvClass, String)]) -> Self {
        let rows = EnvClass::ALL
            .into_iter()
            .filter(|&env| classes.iter().any(|c| c.env == env))
            .map(|env| {
                let in_env = |f: &&CellFit| f.env == Some(env);
                EnvSummary {
                    env,
                    cells: classes.iter().filter(|c| c.env == env).count(),
                    kept: classes.iter().filter(|c| c.env == env && c.kept).count(),
                    fitted: fits.iter().filter(in_env).count(),
                    outliers: fits.iter().filter(in_env).filter(|f| f.result.is_outlier).count(),
                    average: averages.iter().find(|f| f.env == Some(env)).map(|f| f.result.params),
                    families: models
                        .iter()
                        .find(|m| m.env == env)
                        .map(|m| [m.dist_u.dist.to_string(), m.dist_w.dist.to_string(), m.dist_f.dist.to_string()]),
                    note: skipped.iter().find(|(e, _)| *e == env).map(|(_, m)| m.clone()),
                }
            })
            .collect();
        PipelineSummary { rows }
    }
}

impl fmt::Display for PipelineSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>6} {:>6} {:>7} {:>8}  {:>8} {:>9} {:>6}  {:<30} {:<30} {:<26}",
            "env", "cells", "kept", "fitted", "outlier", "U", "W", "F", "U dist", "W dist", "F dist"
        )?;
        for r in &self.rows {
            let (u, w, fv) = r.average.map_or(("-".into(), "-".into(), "-".into()), |p| {
                (format!("{:.1}", p.u), format!("{:.1}", p.w), format!("{:.4}", p.f))
            });
            let [du, dw, df] = r.families.clone().unwrap_or_else(|| {
                let na = r.note.as_ref().map_or("-", |_| "insufficient").to_string();
                [na.clone(), na.clone(), na]
            });
            writeln!(
                f,
                "{:<6} {:>6} {:>6} {:>7} {:>7.1}%  {u:>8} {w:>9} {fv:>6}  {du:<30} {dw:<30} {df:<26}",
                r.env.as_str(),
                r.cells,
                r.kept,
                r.fitted,
                100.0 * r.outlier_fraction()
            )?;
        }
        Ok(())
    }
}

/// Runs every stage and writes the artifacts into `out_dir`.
pub fn run_pipeline(config: &PipelineConfig, out_dir: &Path) -> Result<PipelineSummary> {
    in_stage("config", config.validate())?;
    in_stage("config", write_file(&out_dir.join(CONFIG_FILE), &config.to_toml()))?;

    let scene = in_stage(
        "input",
        match (&config.input.scene_dir, &config.input.synthetic) {
            (Some(dir), _) => load_scene(&ScenePaths::in_dir(dir)),
            (None, Some(spec)) => generate_city(spec, stage_seed(config.seed, "synth")).and_then(|s| {
                write_scene(&s, &ScenePaths::in_dir(out_dir.join(SCENE_DIR)))?;
                Ok(s)
            }),
            (None, None) => unreachable!("validated"),
        },
    )?;
    let index = SpatialIndex::build(&scene.buildings, config.classify.index_cell_size);

    let los = in_stage("extract", extract_all(&scene, &index, &config.extract))?;
    in_stage("extract", write_file(&out_dir.join(LOS_FILE), &artifacts::write_los_samples(&los)))?;

    let classes = in_stage(
        "classify",
        classify_all(&scene, &index, config.extract.radius, config.classify.reliability_threshold),
    )?;
    in_stage("classify", write_file(&out_dir.join(CLASSES_FILE), &artifacts::write_cell_classes(&classes)))?;
    if !classes.iter().any(|c| c.kept) {
        return Err(Error::Insufficient("no cell passed the reliability filter".into()).in_stage("filter"));
    }

    let (curves, pooled) = in_stage("bin", bin_cells(&los, Some(&classes), &config.bin))?;
    in_stage("bin", write_file(&out_dir.join(CURVES_FILE), &artifacts::write_curves(&curves)))?;
    in_stage("bin", write_file(&out_dir.join(POOLED_CURVES_FILE), &artifacts::write_curves(&pooled)))?;

    let fits = in_stage("fit", fit_curves(&curves, Some(&classes), &config.fit))?;
    let averages = in_stage("fit", fit_pooled(&pooled, &config.fit))?;
    in_stage("fit", write_file(&out_dir.join(FITS_FILE), &artifacts::write_fits(&fits)))?;
    in_stage("fit", write_file(&out_dir.join(AVERAGE_FITS_FILE), &artifacts::write_fits(&averages)))?;

    let (models, skipped) = in_stage("distfit", distfit_all(&fits, &config.distfit))?;
    in_stage("distfit", write_file(&out_dir.join(ENV_MODELS_FILE), &write_env_models(&models)))?;

    let summary = PipelineSummary::build(&classes, &fits, &averages, &models, &skipped);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    in_stage("summary", write_file(&out_dir.join(SUMMARY_JSON_FILE), &json))?;
    in_stage("summary", write_file(&out_dir.join(SUMMARY_FILE), &summary.to_string()))?;
    Ok(summary)
}
