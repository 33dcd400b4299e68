//! Subcommand definitions and dispatch.

use clap::{Args, Parser, Subcommand};
use pmme_lab::experiment::{
    load_dataset, log_spaced_times, probabilities_csv, save_dataset, simulate_dataset,
    PreparationSet, ReadoutModel, TomographyDataset, DEFAULT_SHOTS, SCHEMA_VERSION,
};
use pmme_lab::fit::{
    aic_rank, bootstrap_ci, fit_models_set, validate_predictions, FitConfig, FitResult, ModelId,
    PercentileReport, RankEntry,
};
use pmme_lab::model::ModelParams;
use pmme_lab::nonmark::{n_measure_data_with_ci, n_measure_model, DistanceSeries, NonMarkovReport};
use pmme_lab::qstate::BlochVector;
use pmme_lab::recon::{bayes_unfold, reconstruct_series, BlochSeries, ReconOptions};
use pmme_lab::solver::{choi_check, trajectory_csv, Propagator};
use pmme_lab::{substream, Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "pmme-lab",
    version,
    about = "Reconstructs single-qubit open-system dynamics from tomography counts"
)]
pub struct Cli {
    /// Flat JSON config file; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for randomized steps (falls back to PMME_LAB_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Omit timestamps so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic tomography dataset from a ground-truth model.
    Simulate(SimulateArgs),
    /// Apply iterative Bayesian readout mitigation to a dataset.
    Mitigate(MitigateArgs),
    /// Reconstruct Bloch-vector series from counts.
    Tomo(TomoArgs),
    /// Fit dynamical models to reconstructed series.
    Fit(FitArgs),
    /// Evaluate a fitted model's trajectory from an initial state.
    Predict(PredictArgs),
    /// Score fitted models against held-out preparations.
    Validate(ValidateArgs),
    /// Information-backflow measure from fitted models and, optionally, data.
    Nonmark(NonmarkArgs),
    /// Complete-positivity report over a time grid.
    Cpcheck(CpcheckArgs),
    /// Aggregate JSON + CSV bundle for a dataset and its fits.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Ground-truth parameters (JSON).
    #[arg(long)]
    theta: PathBuf,
    /// Preparation set: `tableI` or a JSON file.
    #[arg(long, default_value = "tableI")]
    preps: String,
    /// Time grid: `log:a:b:n`, `lin:a:b:n`, or comma-separated values.
    #[arg(long, default_value = "log:0.1:100:25")]
    times: String,
    /// Shots per combination; 0 stores exact probabilities.
    #[arg(long)]
    shots: Option<u64>,
    /// Readout response matrix (JSON); identity when omitted.
    #[arg(long)]
    readout: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write exact-mode probabilities as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct MitigateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Update iterations.
    #[arg(long)]
    iterations: Option<u32>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
pub struct TomoArgs {
    #[arg(long)]
    data: PathBuf,
    /// Preparation label(s), comma separated, or `all`.
    #[arg(long)]
    prep: String,
    /// Bootstrap resamples per point.
    #[arg(long)]
    resamples: Option<u32>,
    #[arg(short, long)]
    output: PathBuf,
    /// CSV export (single preparation only).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Preparation label(s) to fit on, comma separated, or `all`.
    #[arg(long)]
    prep: String,
    /// Models to fit, e.g. `M0,M1,M2`.
    #[arg(long, default_value = "M0,M1,M2")]
    models: String,
    #[arg(long)]
    multistart: Option<u32>,
    #[arg(long)]
    resamples: Option<u32>,
    /// Worker threads for the multistart pool.
    #[arg(long)]
    jobs: Option<usize>,
    /// Bootstrap refits for parameter confidence intervals (0 = off;
    /// single-preparation fits only).
    #[arg(long, default_value_t = 0)]
    ci_resamples: u32,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Fit bundle produced by `fit`.
    #[arg(long)]
    fits: PathBuf,
    /// Which fitted model to evaluate.
    #[arg(long)]
    model: String,
    /// Initial state as `vx,vy,vz`, or a label from `--preps`.
    #[arg(long)]
    bloch: Option<String>,
    #[arg(long)]
    prep: Option<String>,
    #[arg(long, default_value = "tableI")]
    preps: String,
    #[arg(long, default_value = "log:0.1:100:200")]
    times: String,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long)]
    fits: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Held-out preparation labels, comma separated.
    #[arg(long)]
    preps: String,
    /// Model filter: `all` or one of M0/M1/M2.
    #[arg(long, default_value = "all")]
    model: String,
    #[arg(long)]
    resamples: Option<u32>,
    /// CSV output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct NonmarkArgs {
    #[arg(long)]
    fits: PathBuf,
    /// Model filter: `all` or one of M0/M1/M2.
    #[arg(long, default_value = "all")]
    model: String,
    /// State pair: `plus,minus`, `plusi,minusi`, or two dataset labels
    /// when `--data` is given.
    #[arg(long, default_value = "plus,minus")]
    pair: String,
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
    /// Convergence tolerance of the model-path grid refinement.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Tomography dataset holding the pair's series for the data path.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    resamples: Option<u32>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
pub struct CpcheckArgs {
    /// Parameters (JSON file), or use `--fits` + `--model`.
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long)]
    fits: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = "lin:0:100:201")]
    times: String,
    /// CSV output path; stdout when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    fits: PathBuf,
    /// Output directory for the bundle.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    resamples: Option<u32>,
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
}

/// Fit bundle written by `fit` and consumed by the downstream commands.
#[derive(Serialize, Deserialize)]
pub struct FitBundle {
    pub schema_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub prep_labels: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub fits: Vec<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranking: Option<Vec<RankEntry>>,
}

struct Ctx {
    config: serde_json::Map<String, serde_json::Value>,
    seed: Option<u64>,
    no_timestamp: bool,
    verbose: u8,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let config = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                match serde_json::from_str::<serde_json::Value>(&text)? {
                    serde_json::Value::Object(map) => map,
                    _ => {
                        return Err(Error::Validation(
                            "config file must hold a flat JSON object".into(),
                        ))
                    }
                }
            }
            None => serde_json::Map::new(),
        };
        Ok(Self {
            config,
            seed: cli.seed,
            no_timestamp: cli.no_timestamp,
            verbose: cli.verbose,
        })
    }

    fn config_u64(&self, key: &str) -> Option<u64> {
        self.config.get(key).and_then(|v| v.as_u64())
    }

    /// Seed resolution: flag, then config, then environment.
    fn seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        if let Some(s) = self.config_u64("seed") {
            return Ok(s);
        }
        if let Ok(text) = std::env::var("PMME_LAB_SEED") {
            return text.parse().map_err(|_| {
                Error::Validation(format!("PMME_LAB_SEED {text:?} is not an integer"))
            });
        }
        Err(Error::Validation(
            "this command is randomized: pass --seed or set PMME_LAB_SEED".into(),
        ))
    }

    fn timestamp(&self) -> Option<String> {
        if self.no_timestamp {
            None
        } else {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            Some(format!("{secs}"))
        }
    }

    fn progress(&self, msg: &str) {
        if self.verbose > 0 {
            eprintln!("{msg}");
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(&ctx, args),
        Command::Mitigate(args) => cmd_mitigate(&ctx, args),
        Command::Tomo(args) => cmd_tomo(&ctx, args),
        Command::Fit(args) => cmd_fit(&ctx, args),
        Command::Predict(args) => cmd_predict(&ctx, args),
        Command::Validate(args) => cmd_validate(&ctx, args),
        Command::Nonmark(args) => cmd_nonmark(&ctx, args),
        Command::Cpcheck(args) => cmd_cpcheck(&ctx, args),
        Command::Report(args) => cmd_report(&ctx, args),
    }
}

// ---------------------------------------------------------------------------
// Shared parsing helpers

fn parse_times(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let parse_f = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::Validation(format!("bad number {s:?} in time spec")))
    };
    match parts.as_slice() {
        ["log", a, b, n] => {
            let n: usize = n
                .parse()
                .map_err(|_| Error::Validation(format!("bad count {n:?} in time spec")))?;
            log_spaced_times(parse_f(a)?, parse_f(b)?, n)
        }
        ["lin", a, b, n] => {
            let (a, b) = (parse_f(a)?, parse_f(b)?);
            let n: usize = n
                .parse()
                .map_err(|_| Error::Validation(format!("bad count {n:?} in time spec")))?;
            if n < 2 || b <= a {
                return Err(Error::Validation(
                    "linear grid requires n >= 2 and b > a".into(),
                ));
            }
            Ok((0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect())
        }
        [list] => list.split(',').map(parse_f).collect(),
        _ => Err(Error::Validation(format!(
            "unrecognized time spec {spec:?}"
        ))),
    }
}

fn parse_preps(spec: &str) -> Result<PreparationSet> {
    if spec == "tableI" {
        return Ok(PreparationSet::standard_five());
    }
    let text = std::fs::read_to_string(spec)?;
    let set: PreparationSet = serde_json::from_str(&text)?;
    set.validate()?;
    Ok(set)
}

fn load_theta(path: &Path) -> Result<ModelParams> {
    let theta: ModelParams = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    theta.validate()?;
    Ok(theta)
}

fn load_bundle(path: &Path) -> Result<FitBundle> {
    let bundle: FitBundle = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if bundle.schema_version != SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "unsupported fit bundle schema version {}",
            bundle.schema_version
        )));
    }
    Ok(bundle)
}

fn parse_models(spec: &str) -> Result<Vec<ModelId>> {
    spec.split(',').map(ModelId::parse).collect()
}

fn select_fits<'a>(bundle: &'a FitBundle, filter: &str) -> Result<Vec<&'a FitResult>> {
    if filter == "all" {
        return Ok(bundle.fits.iter().collect());
    }
    let id = ModelId::parse(filter)?;
    let selected: Vec<&FitResult> = bundle.fits.iter().filter(|f| f.model == id).collect();
    if selected.is_empty() {
        return Err(Error::Validation(format!(
            "fit bundle has no {} entry",
            id.name()
        )));
    }
    Ok(selected)
}

fn pair_state(name: &str) -> Option<BlochVector> {
    match name {
        "plus" => Some(BlochVector::new(1.0, 0.0, 0.0)),
        "minus" => Some(BlochVector::new(-1.0, 0.0, 0.0)),
        "plusi" => Some(BlochVector::new(0.0, 1.0, 0.0)),
        "minusi" => Some(BlochVector::new(0.0, -1.0, 0.0)),
        _ => None,
    }
}

fn parse_pair(spec: &str) -> Result<(String, String)> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Validation(format!(
            "pair spec {spec:?} needs two names"
        )));
    }
    Ok((parts[0].to_string(), parts[1].to_string()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn write_or_stdout(text: &str, path: &Option<PathBuf>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn labels_for(spec: &str, dataset: &TomographyDataset) -> Result<Vec<String>> {
    if spec == "all" {
        Ok(dataset.preparations.labels())
    } else {
        let labels: Vec<String> = spec.split(',').map(str::to_string).collect();
        for l in &labels {
            if dataset.preparations.get(l).is_none() {
                return Err(Error::Validation(format!(
                    "dataset has no preparation {l:?}"
                )));
            }
        }
        Ok(labels)
    }
}

fn reconstruct_set(
    ctx: &Ctx,
    dataset: &TomographyDataset,
    labels: &[String],
    resamples: u32,
    seed: u64,
) -> Result<Vec<BlochSeries>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            ctx.progress(&format!("reconstructing {label}"));
            reconstruct_series(
                dataset,
                label,
                &ReconOptions {
                    bootstrap_resamples: resamples,
                    unfold_iterations: 100,
                    seed: substream(seed, 1 + i as u64),
                },
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_simulate(ctx: &Ctx, args: &SimulateArgs) -> Result<()> {
    let theta = load_theta(&args.theta)?;
    let preps = parse_preps(&args.preps)?;
    let times = parse_times(&args.times)?;
    let shots = args
        .shots
        .or_else(|| ctx.config_u64("shots"))
        .unwrap_or(DEFAULT_SHOTS);
    let readout = match &args.readout {
        Some(path) => {
            let m: ReadoutModel = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            m.validate()?;
            m
        }
        None => ReadoutModel::identity(),
    };
    // Exact mode draws nothing; a seed is only demanded when sampling.
    let seed = if shots > 0 {
        ctx.seed()?
    } else {
        ctx.seed().unwrap_or(0)
    };
    let (mut dataset, warnings) = simulate_dataset(&theta, &preps, &times, shots, &readout, seed)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    dataset.metadata.timestamp = ctx.timestamp();
    save_dataset(&dataset, &args.output)?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, probabilities_csv(&dataset))?;
    }
    ctx.progress(&format!("{} records written", dataset.records.len()));
    Ok(())
}

fn cmd_mitigate(ctx: &Ctx, args: &MitigateArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let readout = dataset
        .readout
        .ok_or_else(|| Error::Validation("dataset carries no readout model to unfold".into()))?;
    let iterations = args
        .iterations
        .or_else(|| ctx.config_u64("iterations").map(|v| v as u32))
        .unwrap_or(100);
    let mut out = dataset.clone();
    out.readout = None;
    out.metadata.mitigated = true;
    out.metadata.timestamp = ctx.timestamp();
    for rec in out.records.iter_mut() {
        let f = rec.frequency();
        let t = bayes_unfold([1.0 - f, f], &readout, iterations)?;
        rec.freq_one = Some(t[1].clamp(0.0, 1.0));
        rec.count_one = 0;
        rec.shots = 0;
    }
    out.validate()?;
    write_json(&out, &args.output)?;
    Ok(())
}

fn cmd_tomo(ctx: &Ctx, args: &TomoArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let labels = labels_for(&args.prep, &dataset)?;
    let resamples = args
        .resamples
        .or_else(|| ctx.config_u64("resamples").map(|v| v as u32))
        .unwrap_or(250);
    let seed = ctx.seed()?;
    let set = reconstruct_set(ctx, &dataset, &labels, resamples, seed)?;
    if let Some(csv) = &args.csv {
        if set.len() != 1 {
            return Err(Error::Validation(
                "--csv applies to a single preparation; pick one with --prep".into(),
            ));
        }
        std::fs::write(csv, set[0].to_csv())?;
    }
    write_json(&set, &args.output)?;
    Ok(())
}

fn cmd_fit(ctx: &Ctx, args: &FitArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let labels = labels_for(&args.prep, &dataset)?;
    let models = parse_models(&args.models)?;
    let seed = ctx.seed()?;
    let resamples = args
        .resamples
        .or_else(|| ctx.config_u64("resamples").map(|v| v as u32))
        .unwrap_or(250);
    let multistart = args
        .multistart
        .or_else(|| ctx.config_u64("multistart").map(|v| v as u32))
        .unwrap_or(16);
    let jobs = args
        .jobs
        .or_else(|| ctx.config_u64("jobs").map(|v| v as usize))
        .unwrap_or(1);

    let set = reconstruct_set(ctx, &dataset, &labels, resamples, seed)?;
    let base = FitConfig {
        model: ModelId::M0,
        multistart,
        tolerance: 1e-10,
        seed: substream(seed, 0xf17),
        max_iterations: 20_000,
        jobs,
    };
    ctx.progress(&format!("fitting {} model(s)", models.len()));
    let mut fits = fit_models_set(&set, &base, &models)?;
    if args.ci_resamples > 0 {
        if set.len() != 1 {
            return Err(Error::Validation(
                "--ci-resamples requires fitting a single preparation".into(),
            ));
        }
        for fit in fits.iter_mut() {
            let config = FitConfig {
                model: fit.model,
                ..base
            };
            fit.ci = Some(bootstrap_ci(
                &set[0],
                &config,
                fit,
                args.ci_resamples,
                0.95,
            )?);
        }
    }
    let ranking = if fits.len() > 1 {
        Some(aic_rank(&fits)?)
    } else {
        None
    };
    let bundle = FitBundle {
        schema_version: SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        prep_labels: labels,
        timestamp: ctx.timestamp(),
        fits,
        ranking,
    };
    write_json(&bundle, &args.output)?;
    Ok(())
}

fn cmd_predict(ctx: &Ctx, args: &PredictArgs) -> Result<()> {
    let bundle = load_bundle(&args.fits)?;
    let fit = *select_fits(&bundle, &args.model)?
        .first()
        .expect("select_fits is nonempty");
    let times = parse_times(&args.times)?;
    let v0 = match (&args.bloch, &args.prep) {
        (Some(spec), None) => {
            let parts: Vec<f64> = spec
                .split(',')
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| Error::Validation(format!("bad Bloch component {s:?}")))
                })
                .collect::<Result<_>>()?;
            if parts.len() != 3 {
                return Err(Error::Validation("--bloch needs vx,vy,vz".into()));
            }
            let v = BlochVector::new(parts[0], parts[1], parts[2]);
            v.validate()?;
            v
        }
        (None, Some(label)) => parse_preps(&args.preps)?
            .get(label)
            .ok_or_else(|| Error::Validation(format!("unknown preparation {label:?}")))?,
        _ => {
            return Err(Error::Validation(
                "pass exactly one of --bloch or --prep".into(),
            ))
        }
    };
    let prop = Propagator::build(&fit.theta)?;
    let points: Vec<(f64, BlochVector)> = times
        .iter()
        .map(|&t| (t, prop.propagate_bloch(&v0, t)))
        .collect();
    std::fs::write(&args.output, trajectory_csv(&points))?;
    ctx.progress(&format!("{} trajectory points written", points.len()));
    Ok(())
}

fn cmd_validate(ctx: &Ctx, args: &ValidateArgs) -> Result<()> {
    let bundle = load_bundle(&args.fits)?;
    let dataset = load_dataset(&args.data)?;
    let labels = labels_for(&args.preps, &dataset)?;
    let resamples = args
        .resamples
        .or_else(|| ctx.config_u64("resamples").map(|v| v as u32))
        .unwrap_or(250);
    let seed = ctx.seed()?;
    let test = reconstruct_set(ctx, &dataset, &labels, resamples, substream(seed, 0x7e57))?;
    let mut csv = PercentileReport::csv_header().to_string();
    for fit in select_fits(&bundle, &args.model)? {
        let report = validate_predictions(fit, &test)?;
        csv.push_str(&report.csv_row());
    }
    write_or_stdout(&csv, &args.output)
}

#[derive(Serialize)]
struct NonmarkOutput {
    pair: (String, String),
    horizon: f64,
    model_reports: Vec<(String, NonMarkovReport)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    data_report: Option<NonMarkovReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
}

fn cmd_nonmark(ctx: &Ctx, args: &NonmarkArgs) -> Result<()> {
    let bundle = load_bundle(&args.fits)?;
    let (name1, name2) = parse_pair(&args.pair)?;
    let mut model_reports = Vec::new();
    let states = (pair_state(&name1), pair_state(&name2));
    if let (Some(a), Some(b)) = states {
        for fit in select_fits(&bundle, &args.model)? {
            ctx.progress(&format!("model path for {}", fit.model.name()));
            let report = n_measure_model(&fit.theta, (a, b), args.horizon, args.tol)?;
            model_reports.push((fit.model.name().to_string(), report));
        }
    } else if args.data.is_none() {
        return Err(Error::Validation(format!(
            "pair {:?} is not a built-in state pair; supply --data to use dataset labels",
            args.pair
        )));
    }

    let data_report = match &args.data {
        Some(path) => {
            let dataset = load_dataset(path)?;
            let resamples = args
                .resamples
                .or_else(|| ctx.config_u64("resamples").map(|v| v as u32))
                .unwrap_or(250);
            let seed = ctx.seed()?;
            let series = reconstruct_set(
                ctx,
                &dataset,
                &[name1.clone(), name2.clone()],
                resamples,
                seed,
            )?;
            Some(n_measure_data_with_ci(
                &series[0],
                &series[1],
                resamples.max(8),
                0.95,
                substream(seed, 0x00b5),
            )?)
        }
        None => None,
    };

    let out = NonmarkOutput {
        pair: (name1, name2),
        horizon: args.horizon,
        model_reports,
        data_report,
        timestamp: ctx.timestamp(),
    };
    write_json(&out, &args.output)
}

fn cmd_cpcheck(_ctx: &Ctx, args: &CpcheckArgs) -> Result<()> {
    let theta = match (&args.theta, &args.fits) {
        (Some(path), None) => load_theta(path)?,
        (None, Some(path)) => {
            let bundle = load_bundle(path)?;
            let filter = args.model.as_deref().unwrap_or("all");
            select_fits(&bundle, filter)?[0].theta
        }
        _ => {
            return Err(Error::Validation(
                "pass exactly one of --theta or --fits".into(),
            ))
        }
    };
    let times = parse_times(&args.times)?;
    let prop = Propagator::build(&theta)?;
    let mut csv = String::from("t,eig1,eig2,eig3,eig4,margin,cp_ok\n");
    for &t in &times {
        let r = choi_check(&prop, &theta, t);
        csv.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            t,
            r.eigenvalues[0].re,
            r.eigenvalues[1].re,
            r.eigenvalues[2].re,
            r.eigenvalues[3].re,
            r.margin,
            r.cp_ok
        ));
    }
    write_or_stdout(&csv, &args.output)
}

#[derive(Serialize)]
struct Manifest {
    tool_version: String,
    seed: u64,
    config: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<String>,
}

fn cmd_report(ctx: &Ctx, args: &ReportArgs) -> Result<()> {
    let dataset = load_dataset(&args.data)?;
    let bundle = load_bundle(&args.fits)?;
    let resamples = args
        .resamples
        .or_else(|| ctx.config_u64("resamples").map(|v| v as u32))
        .unwrap_or(250);
    let seed = ctx.seed()?;
    std::fs::create_dir_all(&args.out)?;

    let mut config = BTreeMap::new();
    config.insert("data".to_string(), args.data.display().to_string());
    config.insert("fits".to_string(), args.fits.display().to_string());
    config.insert("resamples".to_string(), resamples.to_string());
    config.insert("horizon".to_string(), format!("{}", args.horizon));
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        config,
        timestamp: ctx.timestamp(),
    };
    write_json(&manifest, &args.out.join("manifest.json"))?;

    // Reconstructed series, one CSV per preparation.
    let labels = dataset.preparations.labels();
    let set = reconstruct_set(ctx, &dataset, &labels, resamples, seed)?;
    for series in &set {
        std::fs::write(
            args.out.join(format!("series_{}.csv", series.prep_label)),
            series.to_csv(),
        )?;
    }

    // Fit summary plus held-out percentile scores per model.
    write_json(&bundle, &args.out.join("fits.json"))?;
    let held_out: Vec<BlochSeries> = set
        .iter()
        .filter(|s| !bundle.prep_labels.contains(&s.prep_label))
        .cloned()
        .collect();
    if !held_out.is_empty() {
        let mut csv = PercentileReport::csv_header().to_string();
        for fit in &bundle.fits {
            csv.push_str(&validate_predictions(fit, &held_out)?.csv_row());
        }
        std::fs::write(args.out.join("validate.csv"), csv)?;
    }

    // Predicted trajectories and distinguishability panels per model.
    for fit in &bundle.fits {
        let prop = Propagator::build(&fit.theta)?;
        for series in &set {
            let points: Vec<(f64, BlochVector)> = series
                .points
                .iter()
                .map(|p| (p.t, prop.propagate_bloch(&series.prep, p.t)))
                .collect();
            std::fs::write(
                args.out.join(format!(
                    "predicted_{}_{}.csv",
                    fit.model.name(),
                    series.prep_label
                )),
                trajectory_csv(&points),
            )?;
        }
        for (pair_name, pair) in pmme_lab::nonmark::default_pairs() {
            let n = 400;
            let points: Vec<(f64, f64)> = (0..=n)
                .map(|i| {
                    let t = args.horizon * i as f64 / n as f64;
                    let a = prop.propagate_bloch(&pair.0, t);
                    let b = prop.propagate_bloch(&pair.1, t);
                    (t, 0.5 * a.distance(&b))
                })
                .collect();
            let d = DistanceSeries {
                pair: (format!("{pair_name}+"), format!("{pair_name}-")),
                points,
            };
            std::fs::write(
                args.out
                    .join(format!("distance_{}_{}.csv", fit.model.name(), pair_name)),
                d.to_csv(),
            )?;
        }
    }

    // Backflow measures for the default pairs per model.
    let mut nm: Vec<(String, String, NonMarkovReport)> = Vec::new();
    for fit in &bundle.fits {
        for (pair_name, pair) in pmme_lab::nonmark::default_pairs() {
            let report = n_measure_model(&fit.theta, pair, args.horizon, 1e-4)?;
            nm.push((fit.model.name().to_string(), pair_name, report));
        }
    }
    write_json(&nm, &args.out.join("nonmark.json"))?;

    ctx.progress("report bundle complete");
    Ok(())
}
