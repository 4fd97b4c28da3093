use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use loskit::artifacts::{self, CellClass};
use loskit::dist::{parse_env_models, write_env_models, EnvParamModel};
use loskit::geo::io::{load_scene, write_file, write_scene, ScenePaths};
use loskit::geo::SpatialIndex;
use loskit::pipeline::{self, PipelineConfig};
use loskit::synth::{HeightDistribution, SyntheticCitySpec};
use loskit::{
    D1D2Params, DistFitConfig, EnvClass, Error, ExtractConfig, FitConfig, LinkModel, LosModelParams, Metric, Result,
    SimConfig, TripletSampler,
};

/// Line-of-sight probability modelling toolkit.
#[derive(Parser)]
#[command(name = "loskit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic scene (buildings, terrain, streets, stations).
    GenerateCity(GenerateCity),
    /// Trace LOS labels for street points around every station.
    Extract(Extract),
    /// Compute cell statistics, environment classes and the reliability flag.
    Classify(Classify),
    /// Bin LOS samples into empirical curves.
    Bin(Bin),
    /// Fit (U, W, F) to empirical curves.
    Fit(Fit),
    /// Fit per-environment parameter distributions and correlations.
    Distfit(Distfit),
    /// Draw correlated (U, W, F) triplets from an environment model.
    Sample(Sample),
    /// Two-cell SIR outage simulation.
    Simulate(Simulate),
    /// Run extract, classify, filter, bin, fit and distfit from one config file.
    Pipeline(Pipeline),
}

#[derive(Args)]
struct GenerateCity {
    /// TOML file with a city spec; defaults are used for missing keys.
    #[arg(long, conflicts_with = "corpus")]
    spec: Option<PathBuf>,
    /// Use the built-in four-environment corpus with this many cells.
    #[arg(long)]
    corpus: Option<usize>,
    /// Override the coverage of every tile profile.
    #[arg(long)]
    coverage: Option<f64>,
    /// Use constant building heights of this value in every profile.
    #[arg(long)]
    height: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SceneArgs {
    /// Directory holding buildings.json, terrain.txt, streets.json and stations.csv.
    #[arg(long)]
    scene: PathBuf,
    /// Grid cell size of the spatial index, meters.
    #[arg(long, default_value_t = 50.0)]
    index_cell_size: f64,
}

#[derive(Args)]
struct Extract {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 1000.0)]
    radius: f64,
    #[arg(long, default_value_t = 5.0)]
    spacing: f64,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[arg(long, default_value_t = 0.0)]
    ue_height: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Classify {
    #[command(flatten)]
    scene: SceneArgs,
    #[arg(long, default_value_t = 1000.0)]
    radius: f64,
    /// Minimum share of footprints with a known height.
    #[arg(long, default_value_t = 0.9)]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Bin {
    #[arg(long)]
    los: PathBuf,
    /// Classification CSV; drops unreliable cells and enables pooled curves.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long, default_value_t = 5.0)]
    width: f64,
    #[arg(long, default_value_t = 1000.0)]
    max_radius: f64,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the per-environment pooled curves.
    #[arg(long, requires = "classes")]
    pooled_out: Option<PathBuf>,
}

#[derive(Args)]
struct Fit {
    #[arg(long)]
    curves: PathBuf,
    /// Classification CSV used to fill the env column.
    #[arg(long)]
    classes: Option<PathBuf>,
    /// Treat every curve as a pooled environment curve named by its env.
    #[arg(long, conflicts_with = "classes")]
    pooled: bool,
    #[arg(long, default_value = "msle", value_parser = parse_metric)]
    metric: Metric,
    #[arg(long, default_value_t = 10)]
    starts: usize,
    #[arg(long, default_value_t = 0.2)]
    nsse_threshold: f64,
    /// Fix F = 1.
    #[arg(long)]
    fix_scale: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Distfit {
    #[arg(long)]
    fits: PathBuf,
    #[arg(long, default_value_t = loskit::dist::BETA_CLIP)]
    beta_clip: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Sample {
    /// Environment model JSON; the published models are used when omitted.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, value_parser = parse_env)]
    env: EnvClass,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Ensemble,
    Average,
    #[value(name = "3gpp")]
    ThreeGpp,
}

#[derive(Args)]
struct Simulate {
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long, value_parser = parse_env, default_value = "uma")]
    env: EnvClass,
    /// Environment model JSON for the ensemble model; published models when omitted.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Fit report with pooled average models for the average model; published averages when omitted.
    #[arg(long)]
    averages: Option<PathBuf>,
    /// UE distances to the serving station, meters.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,500")]
    distances: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pairs: usize,
    #[arg(long, default_value_t = 1000)]
    realizations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for outage.csv and outage_cdf.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Pipeline {
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<Metric>,
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    nsse_threshold: Option<f64>,
    /// Extraction and classification radius; also sets the binning range.
    #[arg(long)]
    radius: Option<f64>,
}

fn parse_metric(s: &str) -> std::result::Result<Metric, String> {
    s.parse()
}

fn parse_env(s: &str) -> std::result::Result<EnvClass, String> {
    s.parse()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

fn load_classes(path: Option<&PathBuf>) -> Result<Option<Vec<CellClass>>> {
    path.map(|p| artifacts::parse_cell_classes(&read(p)?, &name(p))).transpose()
}

fn load_models(path: Option<&PathBuf>, env: EnvClass) -> Result<EnvParamModel> {
    match path {
        None => Ok(EnvParamModel::published(env)),
        Some(p) => parse_env_models(&read(p)?, &name(p))?
            .into_iter()
            .find(|m| m.env == env)
            .ok_or_else(|| Error::Config(format!("{} has no model for {env}", name(p)))),
    }
}

fn scene_and_index(args: &SceneArgs) -> Result<(loskit::geo::Scene, SpatialIndex)> {
    if !(args.index_cell_size > 0.0) {
        return Err(Error::Config("--index-cell-size must be > 0".into()));
    }
    let scene = load_scene(&ScenePaths::in_dir(&args.scene))?;
    let index = SpatialIndex::build(&scene.buildings, args.index_cell_size);
    Ok((scene, index))
}

fn generate_city(a: GenerateCity) -> Result<()> {
    let mut spec = match (&a.spec, a.corpus) {
        (Some(p), _) => SyntheticCitySpec::from_toml(&read(p)?, &name(p))?,
        (None, Some(n)) => SyntheticCitySpec::four_environment_corpus(n),
        (None, None) => SyntheticCitySpec::default(),
    };
    for p in &mut spec.profiles {
        if let Some(c) = a.coverage {
            p.coverage = c;
        }
        if let Some(h) = a.height {
            p.heights = HeightDistribution::Constant { height: h };
        }
    }
    let scene = loskit::generate_city(&spec, a.seed)?;
    write_scene(&scene, &ScenePaths::in_dir(&a.out))?;
    info!("wrote {} buildings and {} stations to {}", scene.buildings.len(), scene.stations.len(), a.out.display());
    Ok(())
}

fn extract(a: Extract) -> Result<()> {
    let (scene, index) = scene_and_index(&a.scene)?;
    let cfg = ExtractConfig { radius: a.radius, spacing: a.spacing, step: a.step, ue_height: a.ue_height };
    let cells = pipeline::extract_all(&scene, &index, &cfg).map_err(|e| e.in_stage("extract"))?;
    write_file(&a.out, &artifacts::write_los_samples(&cells))
}

fn classify(a: Classify) -> Result<()> {
    let (scene, index) = scene_and_index(&a.scene)?;
    let classes = pipeline::classify_all(&scene, &index, a.radius, a.threshold).map_err(|e| e.in_stage("classify"))?;
    write_file(&a.out, &artifacts::write_cell_classes(&classes))
}

fn bin(a: Bin) -> Result<()> {
    let los = artifacts::parse_los_samples(&read(&a.los)?, &name(&a.los))?;
    let classes = load_classes(a.classes.as_ref())?;
    let cfg = loskit::BinConfig { width: a.width, max_radius: a.max_radius };
    let (curves, pooled) = pipeline::bin_cells(&los, classes.as_deref(), &cfg).map_err(|e| e.in_stage("bin"))?;
    write_file(&a.out, &artifacts::write_curves(&curves))?;
    if let Some(p) = &a.pooled_out {
        write_file(p, &artifacts::write_curves(&pooled))?;
    }
    Ok(())
}

fn fit(a: Fit) -> Result<()> {
    let curves = artifacts::parse_curves(&read(&a.curves)?, &name(&a.curves))?;
    let classes = load_classes(a.classes.as_ref())?;
    let cfg = FitConfig {
        metric: a.metric,
        n_starts: a.starts,
        nsse_threshold: a.nsse_threshold,
        fix_scale: a.fix_scale,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let fits = if a.pooled {
        pipeline::fit_pooled(&curves, &cfg)
    } else {
        pipeline::fit_curves(&curves, classes.as_deref(), &cfg)
    }
    .map_err(|e| e.in_stage("fit"))?;
    write_file(&a.out, &artifacts::write_fits(&fits))
}

fn distfit(a: Distfit) -> Result<()> {
    let fits = artifacts::parse_fits(&read(&a.fits)?, &name(&a.fits))?;
    let cfg = DistFitConfig { beta_clip: a.beta_clip };
    cfg.validate()?;
    let (models, skipped) = pipeline::distfit_all(&fits, &cfg).map_err(|e| e.in_stage("distfit"))?;
    for (env, why) in skipped {
        eprintln!("{env}: skipped ({why})");
    }
    if models.is_empty() {
        return Err(Error::Insufficient("no environment had enough cells".into()).in_stage("distfit"));
    }
    write_file(&a.out, &write_env_models(&models))
}

fn sample(a: Sample) -> Result<()> {
    let model = load_models(a.models.as_ref(), a.env)?;
    let mut sampler = TripletSampler::new(model, a.seed)?;
    let text = artifacts::write_triplets(&sampler.sample_n(a.n));
    match &a.out {
        Some(p) => write_file(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io { path: "<stdout>".into(), source: e }),
    }
}

fn simulate(a: Simulate) -> Result<()> {
    let model = match a.model {
        ModelKind::Ensemble => LinkModel::Ensemble(load_models(a.models.as_ref(), a.env)?),
        ModelKind::Average => LinkModel::Average(match &a.averages {
            None => LosModelParams::published_average(a.env),
            Some(p) => artifacts::parse_fits(&read(p)?, &name(p))?
                .into_iter()
                .find(|f| f.env == Some(a.env))
                .map(|f| f.result.params)
                .ok_or_else(|| Error::Config(format!("{} has no average model for {}", name(p), a.env)))?,
        }),
        ModelKind::ThreeGpp => LinkModel::ThreeGpp(D1D2Params::UMA),
    };
    let cfg = SimConfig {
        d_bs1_values: a.distances,
        n_param_pairs: a.pairs,
        n_los_realizations: a.realizations,
        rng_seed: a.seed,
        ..SimConfig::default()
    };
    let results = loskit::simulate(&model, &model, &cfg).map_err(|e| e.in_stage("simulate"))?;
    write_file(&a.out.join("outage.csv"), &artifacts::write_outage(&results))?;
    write_file(&a.out.join("outage_cdf.csv"), &artifacts::write_outage_cdf(&results)?)?;
    println!("{:<10} {:>8} {:>12} {:>12}", "model", "d_bs1", "mean", "variance");
    for r in &results {
        println!("{:<10} {:>8.1} {:>12.6} {:>12.6}", r.model_tag, r.d_bs1, r.mean_outage, r.variance());
    }
    Ok(())
}

fn run_pipeline(a: Pipeline) -> Result<()> {
    let mut cfg = PipelineConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(m) = a.metric {
        cfg.fit.metric = m;
    }
    if let Some(n) = a.starts {
        cfg.fit.n_starts = n;
    }
    if let Some(t) = a.nsse_threshold {
        cfg.fit.nsse_threshold = t;
    }
    if let Some(r) = a.radius {
        cfg.extract.radius = r;
        cfg.bin.max_radius = r;
    }
    let summary = pipeline::run_pipeline(&cfg, &a.out)?;
    print!("{summary}");
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("LOSKIT_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("LOSKIT_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("cannot configure {n} worker threads: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::GenerateCity(a) => generate_city(a),
        Command::Extract(a) => extract(a),
        Command::Classify(a) => classify(a),
        Command::Bin(a) => bin(a),
        Command::Fit(a) => fit(a),
        Command::Distfit(a) => distfit(a),
        Command::Sample(a) => sample(a),
        Command::Simulate(a) => simulate(a),
        Command::Pipeline(a) => run_pipeline(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn pipeline_overrides_parse() {
        let cli = Cli::try_parse_from([
            "loskit", "pipeline", "--config", "c.toml", "--out", "o", "--metric", "mse", "--radius", "300",
        ])
        .unwrap();
        let Command::Pipeline(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.metric, Some(Metric::Mse));
        assert_eq!(a.radius, Some(300.0));
    }

    #[test]
    fn simulate_distance_list() {
        let cli = Cli::try_parse_from(["loskit", "simulate", "--model", "average", "--distances", "100,250.5", "--out", "o"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(a.distances, vec![100.0, 250.5]);
    }

    #[test]
    fn bad_enum_values_are_rejected() {
        assert!(parse_metric("rmse").is_err());
        assert_eq!(parse_env("UMa").unwrap(), EnvClass::UMa);
        assert!(parse_env("downtown").is_err());
    }

    #[test]
    fn missing_model_for_env() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        std::fs::write(&p, write_env_models(&[EnvParamModel::published(EnvClass::RMa)])).unwrap();
        assert_eq!(load_models(Some(&p), EnvClass::RMa).unwrap().env, EnvClass::RMa);
        let err = load_models(Some(&p), EnvClass::UMa).unwrap_err();
        assert!(err.to_string().contains("no model for UMa"), "{err}");
        assert!(load_models(None, EnvClass::SMa).is_ok());
    }
}
