//! Command-line front end. Exit codes: 0 success, 1 invalid input or usage,
//! 2 runtime or numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::engine::{calibrate_from, Calibration};
use crate::error::{Error, Result};
use crate::experiments::{self, Dataset, ExperimentKind, ExperimentPlan};
use crate::io::{self, LabelTable};
use crate::metrics::{evaluate, MetricsReport};
use crate::net::Mlp;
use crate::rng::{streams, sub_rng};
use crate::sos::{count_out_of_range, synthesize_sos, Protocol};
use crate::synthetic::{generate, SyntheticSpec};
use crate::types::{CalibrationConfig, LabelVector};

#[derive(Debug, Parser)]
#[command(name = "pc3", version, about = "Calibrate single opinion scores into MOS estimates")]
struct Cli {
    /// Maximum number of worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (features.csv, ratings.json).
    GenSynthetic(GenArgs),
    /// Draw one opinion score per item from a ratings file.
    SynthesizeSos(SosArgs),
    /// Calibrate single opinion scores.
    Calibrate(CalibrateArgs),
    /// Compare two label files (SRCC, PLCC, KROCC, MSE).
    Evaluate(EvaluateArgs),
    /// Run a repeated experiment and write its tables.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
struct SyntheticFlags {
    /// Number of items.
    #[arg(long, default_value_t = 500)]
    n_items: usize,
    /// Feature dimension.
    #[arg(long, default_value_t = 32)]
    dim: usize,
    /// Standard deviation of the feature noise.
    #[arg(long, default_value_t = 0.05)]
    feature_noise: f64,
    /// Standard deviation of each subject's rating noise.
    #[arg(long, default_value_t = 0.15)]
    sos_noise: f64,
    /// Raw opinion scores per item.
    #[arg(long, default_value_t = 8)]
    subjects: usize,
}

impl SyntheticFlags {
    fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_items: self.n_items,
            feature_dim: self.dim,
            feature_noise: self.feature_noise,
            sos_noise_std: self.sos_noise,
            subjects_per_item: self.subjects,
            seed,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    synthetic: SyntheticFlags,
    #[arg(long)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SosArgs {
    /// Ratings JSON.
    #[arg(long)]
    ratings: PathBuf,
    /// raw-sample, gaussian or empirical.
    #[arg(long)]
    protocol: String,
    #[arg(long)]
    seed: u64,
    /// Valid score range `LO,HI`; draws outside it are counted, never clipped.
    #[arg(long, value_parser = parse_range)]
    score_range: Option<(f64, f64)>,
    /// Output labels CSV (`item_id,sos[,ground_truth]`).
    #[arg(long)]
    out: PathBuf,
}

/// Hyperparameter overrides; each takes precedence over the config file.
#[derive(Debug, Args, Default)]
struct ConfigFlags {
    /// Flat JSON config; omitted keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Refresh rate of the MOS update.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the constancy residual.
    #[arg(long)]
    beta: Option<f64>,
    /// Learning rate of the head.
    #[arg(long)]
    lr: Option<f64>,
    /// Head epochs before MOS updates begin.
    #[arg(long)]
    warmup: Option<usize>,
    /// Total epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer widths `H1,H2`.
    #[arg(long, value_parser = parse_pair)]
    hidden: Option<(usize, usize)>,
}

impl ConfigFlags {
    fn resolve(&self, seed: Option<u64>) -> Result<CalibrationConfig> {
        let mut c = match &self.config {
            Some(p) => io::read_config(p)?,
            None => CalibrationConfig::default(),
        };
        if let Some(v) = self.alpha {
            c.alpha = v;
        }
        if let Some(v) = self.beta {
            c.beta = v;
        }
        if let Some(v) = self.lr {
            c.lambda = v;
        }
        if let Some(v) = self.warmup {
            c.warmup_epochs = v;
        }
        if let Some(v) = self.epochs {
            c.total_epochs = v;
        }
        if let Some(v) = self.batch_size {
            c.batch_size = v;
        }
        if let Some(v) = self.hidden {
            c.hidden_dims = v;
        }
        if let Some(s) = seed {
            c.seed = s;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Features CSV.
    #[arg(long)]
    features: PathBuf,
    /// Ratings JSON; SOS are drawn from it with --protocol.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    ratings: Option<PathBuf>,
    #[arg(long, requires = "ratings")]
    protocol: Option<String>,
    /// Labels CSV with precomputed single opinion scores.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Column of --labels holding the scores.
    #[arg(long, default_value = "sos")]
    column: String,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigFlags,
    /// Warm-start the head from a checkpoint.
    #[arg(long)]
    init_head: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Predicted labels CSV.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth labels CSV.
    #[arg(long)]
    truth: PathBuf,
    /// Column of --pred (default: `calibrated` if present, else the first).
    #[arg(long)]
    pred_col: Option<String>,
    /// Column of --truth (default: `ground_truth` if present, else the first).
    #[arg(long)]
    truth_col: Option<String>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// calibration, bias-rate, fos, alpha-sweep or downstream.
    #[arg(long)]
    kind: String,
    /// Base seed; repeat i uses seed + i.
    #[arg(long)]
    seed: u64,
    /// Features CSV (omit to use a synthetic dataset).
    #[arg(long, requires = "ratings")]
    features: Option<PathBuf>,
    /// Ratings JSON with ground_truth_mos.
    #[arg(long, requires = "features")]
    ratings: Option<PathBuf>,
    #[command(flatten)]
    synthetic: SyntheticFlags,
    /// SOS protocol.
    #[arg(long, default_value = "raw-sample")]
    protocol: String,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Bias rates for bias-rate.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.6, 0.8])]
    rates: Vec<f64>,
    /// Subject counts for fos.
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 4, 8])]
    ks: Vec<usize>,
    /// Refresh rates for alpha-sweep.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.1, 0.2, 0.6, 0.8])]
    alphas: Vec<f64>,
    #[command(flatten)]
    config: ConfigFlags,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected two comma-separated integers")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn parse_range(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected LO,HI")?;
    Ok((
        a.trim().parse().map_err(|e| format!("{e}"))?,
        b.trim().parse().map_err(|e| format!("{e}"))?,
    ))
}

fn progress(msg: impl AsRef<str>) {
    eprintln!("pc3: {}", msg.as_ref());
}

fn gen_synthetic(args: &GenArgs) -> Result<()> {
    let spec = args.synthetic.spec(args.seed);
    let ds = generate(&spec)?;
    io::write_features(&args.out.join("features.csv"), &ds.features)?;
    io::write_ratings(&args.out.join("ratings.json"), &ds.records)?;
    io::write_json(&args.out.join("synthetic_spec.json"), &spec)?;
    progress(format!(
        "wrote {} items (dim {}) to {}",
        spec.n_items,
        spec.feature_dim,
        args.out.display()
    ));
    Ok(())
}

fn synthesize(args: &SosArgs) -> Result<()> {
    let protocol: Protocol = args.protocol.parse()?;
    let records = io::read_ratings(&args.ratings)?;
    let mut rng = sub_rng(args.seed, streams::SOS);
    let sos = synthesize_sos(&records, protocol, &mut rng)?;
    if let Some((lo, hi)) = args.score_range {
        let outside = count_out_of_range(&sos, lo, hi);
        if outside > 0 {
            progress(format!("warning: {outside} draws fall outside [{lo}, {hi}]"));
        }
    }
    let mut table = LabelTable {
        item_ids: records.iter().map(|r| r.item_id.clone()).collect(),
        columns: vec![("sos".into(), sos)],
    };
    if let Some(gt) = records.iter().map(|r| r.ground_truth_mos).collect::<Option<Vec<_>>>() {
        table.columns.push(("ground_truth".into(), gt));
    }
    io::write_labels(&args.out, &table)
}

#[derive(Serialize)]
struct CalibrationMetrics {
    sos: MetricsReport,
    calibrated: MetricsReport,
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<()> {
    let config = args.config.resolve(args.seed)?;
    let features = io::read_features(&args.features)?;
    let ids = features.item_ids().to_vec();

    let (sos, truth) = if let Some(ratings) = &args.ratings {
        let protocol: Protocol = args
            .protocol
            .as_deref()
            .ok_or_else(|| Error::validation("--ratings needs --protocol"))?
            .parse()?;
        let data = Dataset::new(features.clone(), io::read_ratings(ratings)?)?;
        let mut rng = sub_rng(config.seed, streams::SOS);
        let sos = synthesize_sos(&data.records, protocol, &mut rng)?;
        let truth = data
            .records
            .iter()
            .map(|r| r.ground_truth_mos)
            .collect::<Option<Vec<_>>>();
        (sos, truth)
    } else {
        let path = args.labels.as_ref().expect("clap enforces one label source");
        let table = io::read_labels(path)?;
        let sos = table.aligned(&args.column, &ids)?;
        let truth = table.aligned("ground_truth", &ids).ok();
        (sos, truth)
    };

    let head = match &args.init_head {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            Some(Mlp::read_checkpoint(BufReader::new(f))?)
        }
        None => None,
    };

    progress(format!(
        "calibrating {} items for {} epochs",
        ids.len(),
        config.total_epochs
    ));
    let normalized = LabelVector::normalize(&sos)?;
    let result: Calibration = calibrate_from(&features, &normalized, &config, head, |state, report| {
        progress(format!(
            "epoch {:>3}  loss {:.6}  (fit {:.6}, constraint {:.6})",
            state.epoch, report.total_loss, report.data_fit_loss, report.constraint_loss
        ));
    })?;
    let span = normalized.scale().span();
    let calibrated: Vec<f64> = sos
        .iter()
        .zip(normalized.values())
        .zip(result.labels.values())
        .map(|((&r, &y), &mu)| r + (mu - y) * span)
        .collect();

    let mut table = LabelTable {
        item_ids: ids,
        columns: vec![("sos".into(), sos.clone()), ("calibrated".into(), calibrated.clone())],
    };
    let metrics = match truth {
        Some(gt) => {
            let m = CalibrationMetrics {
                sos: evaluate(&sos, &gt)?,
                calibrated: evaluate(&calibrated, &gt)?,
            };
            table.columns.push(("ground_truth".into(), gt));
            Some(m)
        }
        None => None,
    };
    io::write_results(&args.out, &table, metrics.as_ref(), &result.trace)?;
    io::write_config(&args.out.join("config.json"), &config)?;
    let ckpt = args.out.join("head.bin");
    let f = File::create(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
    let mut w = BufWriter::new(f);
    result
        .head
        .write_checkpoint(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&ckpt, e))?;
    progress(format!("results written to {}", args.out.display()));
    Ok(())
}

fn pick_column(table: &LabelTable, requested: Option<&str>, preferred: &str) -> Result<String> {
    match requested {
        Some(name) => table
            .column(name)
            .map(|_| name.to_string())
            .ok_or_else(|| Error::validation(format!("no column `{name}`"))),
        None if table.column(preferred).is_some() => Ok(preferred.to_string()),
        None => Ok(table.columns[0].0.clone()),
    }
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let pred = io::read_labels(&args.pred)?;
    let truth = io::read_labels(&args.truth)?;
    let pred_col = pick_column(&pred, args.pred_col.as_deref(), "calibrated")?;
    let truth_col = pick_column(&truth, args.truth_col.as_deref(), "ground_truth")?;
    let p = pred.aligned(&pred_col, &truth.item_ids)?;
    let t = truth.aligned(&truth_col, &truth.item_ids)?;
    let report = evaluate(&p, &t)?;
    let json = io::to_stable_json(&report);
    print!("{json}");
    if let Some(out) = &args.out {
        io::write_json(out, &report)?;
    }
    Ok(())
}

fn experiment_cmd(args: &ExperimentArgs) -> Result<()> {
    let kind: ExperimentKind = args.kind.parse()?;
    let mut plan = ExperimentPlan::new(kind, args.seed);
    plan.protocol = args.protocol.parse()?;
    plan.repeats = args.repeats;
    plan.rates = args.rates.clone();
    plan.subject_counts = args.ks.clone();
    plan.alphas = args.alphas.clone();
    plan.config = args.config.resolve(None)?;
    plan.validate()?;

    let data = match (&args.features, &args.ratings) {
        (Some(f), Some(r)) => Dataset::new(io::read_features(f)?, io::read_ratings(r)?)?,
        _ => {
            let spec = args.synthetic.spec(args.seed);
            let ds = generate(&spec)?;
            Dataset::new(ds.features, ds.records)?
        }
    };
    progress(format!(
        "running {kind} on {} items, {} repeats",
        data.features.len(),
        plan.repeats
    ));
    let result = experiments::run(&plan, &data)?;
    for row in &result.rows {
        progress(format!(
            "{:<12} {:<10} srcc {:>9.4}  plcc {:>9.4}  krocc {:>9.4}  mse {:>10.6}",
            row.group, row.method, row.metrics.srcc, row.metrics.plcc, row.metrics.krocc, row.metrics.mse
        ));
    }
    for path in result.write(&args.out)? {
        progress(format!("wrote {}", path.display()));
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::SynthesizeSos(a) => synthesize(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Experiment(a) => experiment_cmd(a),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("pc3: --threads must be at least 1");
            return 1;
        }
        // Fails only if a pool already exists, e.g. when called twice in-process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pc3: error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

