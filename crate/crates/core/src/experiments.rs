//! Desk-scale experiment designs: calibration, bias-rate mixing, few opinion
//! scores, refresh-rate sweep and a downstream regressor comparison.
//!
//! Repeat `i` of every experiment uses seed `base_seed + i`. All compared
//! variants of one repeat draw their labels, splits and network
//! initializations from that seed, so differences isolate the calibration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{calibrate_raw, EpochReport};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate, median_report, MetricsReport};
use crate::net::{GradientBundle, Mlp};
use crate::rng::{streams, sub_rng};
use crate::sos::{fos_mean, mix_bias_rate, synthesize_sos, Protocol, RatingRecord};
use crate::types::{CalibrationConfig, FeatureTable, LabelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Calibration,
    BiasRate,
    Fos,
    AlphaSweep,
    Downstream,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "calibration" => ExperimentKind::Calibration,
            "bias-rate" => ExperimentKind::BiasRate,
            "fos" => ExperimentKind::Fos,
            "alpha-sweep" => ExperimentKind::AlphaSweep,
            "downstream" => ExperimentKind::Downstream,
            other => {
                return Err(Error::validation(format!(
                    "unknown experiment kind `{other}` \
                     (expected calibration, bias-rate, fos, alpha-sweep or downstream)"
                )))
            }
        })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Calibration => "calibration",
            ExperimentKind::BiasRate => "bias-rate",
            ExperimentKind::Fos => "fos",
            ExperimentKind::AlphaSweep => "alpha-sweep",
            ExperimentKind::Downstream => "downstream",
        })
    }
}

/// Feed-forward regressor trained on each label variant in the downstream
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressorConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub train_fraction: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 50,
            lambda: 1e-3,
            batch_size: 32,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub kind: ExperimentKind,
    /// How single opinion scores are drawn from the ratings.
    pub protocol: Protocol,
    pub rates: Vec<f64>,
    pub subject_counts: Vec<usize>,
    pub alphas: Vec<f64>,
    pub repeats: usize,
    pub seed: u64,
    pub config: CalibrationConfig,
    pub regressor: RegressorConfig,
}

impl ExperimentPlan {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        Self {
            kind,
            protocol: Protocol::RawSample,
            rates: vec![0.6, 0.8],
            subject_counts: vec![1, 2, 4, 8],
            alphas: vec![0.0, 0.1, 0.2, 0.6, 0.8],
            repeats: 10,
            seed,
            config: CalibrationConfig::default(),
            regressor: RegressorConfig::default(),
        }
    }

    /// Calibration settings used for the synthetic benchmark.
    pub fn benchmark_config() -> CalibrationConfig {
        CalibrationConfig {
            lambda: 1e-3,
            ..CalibrationConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(Error::validation("repeats must be at least 1"));
        }
        self.config.validate()?;
        match self.kind {
            ExperimentKind::BiasRate if self.rates.is_empty() => {
                Err(Error::validation("bias-rate grid is empty"))
            }
            ExperimentKind::BiasRate if self.rates.iter().any(|r| !(0.0..=1.0).contains(r)) => {
                Err(Error::validation("bias rates must lie in [0, 1]"))
            }
            ExperimentKind::Fos if self.subject_counts.is_empty() => {
                Err(Error::validation("subject-count grid is empty"))
            }
            ExperimentKind::Fos if self.subject_counts.contains(&0) => {
                Err(Error::validation("subject counts must be positive"))
            }
            ExperimentKind::AlphaSweep if self.alphas.is_empty() => {
                Err(Error::validation("alpha grid is empty"))
            }
            ExperimentKind::AlphaSweep if self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) => {
                Err(Error::validation("alphas must lie in [0, 1]"))
            }
            ExperimentKind::Downstream
                if !(self.regressor.train_fraction > 0.0 && self.regressor.train_fraction < 1.0) =>
            {
                Err(Error::validation("train_fraction must lie strictly between 0 and 1"))
            }
            _ => Ok(()),
        }
    }

    fn repeat_seed(&self, repeat: usize) -> u64 {
        self.seed.wrapping_add(repeat as u64)
    }

    fn repeat_config(&self, repeat: usize) -> CalibrationConfig {
        CalibrationConfig {
            seed: self.repeat_seed(repeat),
            ..self.config.clone()
        }
    }
}

/// Features plus ratings with ground truth.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: FeatureTable,
    pub records: Vec<RatingRecord>,
}

impl Dataset {
    /// Pairs ratings with feature rows by item id.
    pub fn new(features: FeatureTable, records: Vec<RatingRecord>) -> Result<Self> {
        if records.len() != features.len() {
            return Err(Error::validation(format!(
                "{} rating records for {} feature rows",
                records.len(),
                features.len()
            )));
        }
        let mut by_id: std::collections::HashMap<&str, &RatingRecord> =
            records.iter().map(|r| (r.item_id.as_str(), r)).collect();
        let ordered = features
            .item_ids()
            .iter()
            .map(|id| {
                by_id.remove(id.as_str()).cloned().ok_or_else(|| {
                    Error::validation(format!("item `{id}` has features but no rating record"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            features,
            records: ordered,
        })
    }

    pub fn ground_truth(&self) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| {
                r.ground_truth_mos.ok_or_else(|| {
                    Error::validation(format!(
                        "item `{}` has no ground_truth_mos; evaluation is impossible",
                        r.item_id
                    ))
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub group: String,
    pub method: String,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatRow {
    pub group: String,
    pub method: String,
    pub repeat: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// A CSV of numbers meant for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub plan: ExperimentPlan,
    /// Per-group medians over repeats, followed by the relative change rows.
    pub rows: Vec<TableRow>,
    pub per_repeat: Vec<RepeatRow>,
    #[serde(skip)]
    pub plots: Vec<PlotData>,
    /// Epoch trace of the first calibration run, when one was made.
    #[serde(skip)]
    pub trace: Vec<EpochReport>,
}

impl ExperimentResult {
    pub fn row(&self, group: &str, method: &str) -> Option<&MetricsReport> {
        self.rows
            .iter()
            .find(|r| r.group == group && r.method == method)
            .map(|r| &r.metrics)
    }

    pub fn repeats_of(&self, group: &str, method: &str) -> Vec<MetricsReport> {
        self.per_repeat
            .iter()
            .filter(|r| r.group == group && r.method == method)
            .map(|r| r.metrics)
            .collect()
    }

    /// Writes `<kind>_metrics.json`, `<kind>_table.csv`, plot-data CSVs and,
    /// when present, `<kind>_trace.csv`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let stem = self.kind.to_string();
        let mut written = Vec::new();
        let metrics_path = dir.join(format!("{stem}_metrics.json"));
        io::write_json(&metrics_path, self)?;
        written.push(metrics_path);

        let table_path = dir.join(format!("{stem}_table.csv"));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![r.group.clone(), r.method.clone()];
                row.extend(r.metrics.fields().iter().map(|&v| io::fmt_f64(v)));
                row
            })
            .collect();
        io::write_csv(
            &table_path,
            &["group", "method", "srcc", "plcc", "krocc", "mse"],
            &rows,
        )?;
        written.push(table_path);

        for plot in &self.plots {
            let path = dir.join(format!("{stem}_{}.csv", plot.name));
            let header: Vec<&str> = plot.header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = plot
                .rows
                .iter()
                .map(|r| r.iter().map(|&v| io::fmt_f64(v)).collect())
                .collect();
            io::write_csv(&path, &header, &rows)?;
            written.push(path);
        }
        if !self.trace.is_empty() {
            let path = dir.join(format!("{stem}_trace.csv"));
            io::write_trace(&path, &self.trace)?;
            written.push(path);
        }
        Ok(written)
    }
}

/// `100 * (new - base) / base` per metric; NaN where the base is zero.
pub fn relative_change(base: &MetricsReport, new: &MetricsReport) -> MetricsReport {
    let b = base.fields();
    let n = new.fields();
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] = if b[k] == 0.0 {
            f64::NAN
        } else {
            100.0 * (n[k] - b[k]) / b[k]
        };
    }
    MetricsReport::from_fields(out)
}

/// Single opinion scores of one repeat, on the raw scale.
fn repeat_sos(plan: &ExperimentPlan, data: &Dataset, repeat: usize) -> Result<Vec<f64>> {
    let mut rng = sub_rng(plan.repeat_seed(repeat), streams::SOS);
    synthesize_sos(&data.records, plan.protocol, &mut rng)
}

/// Outcome of calibrating one label variant in one repeat.
struct Paired {
    group: String,
    repeat: usize,
    input: Vec<f64>,
    calibrated: Vec<f64>,
    trace: Vec<EpochReport>,
}

fn calibrate_variant(
    data: &Dataset,
    group: String,
    repeat: usize,
    labels: Vec<f64>,
    config: CalibrationConfig,
) -> Result<Paired> {
    let (calibrated, result) = calibrate_raw(&data.features, &labels, &config)?;
    Ok(Paired {
        group,
        repeat,
        input: labels,
        calibrated,
        trace: result.trace,
    })
}

struct Assembly {
    rows: Vec<TableRow>,
    per_repeat: Vec<RepeatRow>,
}

/// Medians of `(input, calibrated)` per group plus the relative-change row.
fn assemble(
    plan: &ExperimentPlan,
    runs: &[Paired],
    groups: &[String],
    truth: &[f64],
    input_name: &str,
) -> Result<Assembly> {
    let mut rows = Vec::new();
    let mut per_repeat = Vec::new();
    for group in groups {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        for run in runs.iter().filter(|r| &r.group == group) {
            let before = evaluate(&run.input, truth)?;
            let after = evaluate(&run.calibrated, truth)?;
            for (method, metrics) in [(input_name, before), ("PC3", after)] {
                per_repeat.push(RepeatRow {
                    group: group.clone(),
                    method: method.to_string(),
                    repeat: run.repeat,
                    seed: plan.repeat_seed(run.repeat),
                    metrics,
                });
            }
            inputs.push(before);
            outputs.push(after);
        }
        let before = median_report(&inputs)?;
        let after = median_report(&outputs)?;
        rows.push(TableRow {
            group: group.clone(),
            method: input_name.to_string(),
            metrics: before,
        });
        rows.push(TableRow {
            group: group.clone(),
            method: "PC3".into(),
            metrics: after,
        });
        rows.push(TableRow {
            group: group.clone(),
            method: "delta_pct".into(),
            metrics: relative_change(&before, &after),
        });
    }
    Ok(Assembly { rows, per_repeat })
}

fn take_first_trace(runs: &mut [Paired]) -> Vec<EpochReport> {
    runs.first_mut()
        .map(|r| std::mem::take(&mut r.trace))
        .unwrap_or_default()
}

/// Ground-truth deciles against the mean and spread of absolute label error,
/// pooled over repeats.
fn error_bars(runs: &[Paired], truth: &[f64]) -> PlotData {
    let n = truth.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| truth[a].total_cmp(&truth[b]));
    let mut bucket = vec![0usize; n];
    for (rank, &i) in order.iter().enumerate() {
        bucket[i] = (rank * 10 / n).min(9);
    }
    let stats = |errs: &[f64]| -> (f64, f64) {
        if errs.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let m = errs.iter().sum::<f64>() / errs.len() as f64;
        let v = errs.iter().map(|e| (e - m) * (e - m)).sum::<f64>() / errs.len() as f64;
        (m, v.sqrt())
    };
    let mut rows = Vec::new();
    for d in 0..10 {
        let members: Vec<usize> = (0..n).filter(|&i| bucket[i] == d).collect();
        if members.is_empty() {
            continue;
        }
        let mut sos_err = Vec::new();
        let mut pc3_err = Vec::new();
        for run in runs {
            for &i in &members {
                sos_err.push((run.input[i] - truth[i]).abs());
                pc3_err.push((run.calibrated[i] - truth[i]).abs());
            }
        }
        let (lo, hi) = members.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(truth[i]), hi.max(truth[i]))
        });
        let (sm, ss) = stats(&sos_err);
        let (pm, ps) = stats(&pc3_err);
        rows.push(vec![d as f64, lo, hi, members.len() as f64, sm, ss, pm, ps]);
    }
    PlotData {
        name: "error_bars".into(),
        header: [
            "decile", "mos_min", "mos_max", "items", "sos_mae", "sos_sd", "pc3_mae", "pc3_sd",
        ]
        .map(String::from)
        .to_vec(),
        rows,
    }
}

fn group_label(prefix: &str, v: impl fmt::Display) -> String {
    format!("{prefix}={v}")
}

/// SOS against calibrated SOS.
pub fn run_calibration(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentResult> {
    plan.validate()?;
    let truth = data.ground_truth()?;
    let group = "all".to_string();
    let mut runs = (0..plan.repeats)
        .into_par_iter()
        .map(|i| {
            let sos = repeat_sos(plan, data, i)?;
            calibrate_variant(data, group.clone(), i, sos, plan.repeat_config(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let Assembly { rows, per_repeat } = assemble(plan, &runs, &[group], &truth, "SOS")?;
    let plots = vec![error_bars(&runs, &truth)];
    let trace = take_first_trace(&mut runs);
    Ok(ExperimentResult {
        kind: ExperimentKind::Calibration,
        plan: plan.clone(),
        rows,
        per_repeat,
        plots,
        trace,
    })
}

/// Labels mixing ground truth with SOS at each bias rate.
pub fn run_bias_rate(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentResult> {
    plan.validate()?;
    let truth = data.ground_truth()?;
    let groups: Vec<String> = plan.rates.iter().map(|r| group_label("rate", r)).collect();
    let jobs: Vec<(usize, usize)> = (0..plan.rates.len())
        .flat_map(|g| (0..plan.repeats).map(move |i| (g, i)))
        .collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(g, i)| {
            let sos = repeat_sos(plan, data, i)?;
            let mut rng = sub_rng(plan.repeat_seed(i), streams::BIAS_MIX);
            let mixed = mix_bias_rate(&truth, &sos, plan.rates[g], &mut rng)?;
            calibrate_variant(data, groups[g].clone(), i, mixed, plan.repeat_config(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let Assembly { rows, per_repeat } = assemble(plan, &runs, &groups, &truth, "SOS")?;
    let trace = take_first_trace(&mut runs);
    Ok(ExperimentResult {
        kind: ExperimentKind::BiasRate,
        plan: plan.clone(),
        rows,
        per_repeat,
        plots: Vec::new(),
        trace,
    })
}

/// Mean of few opinion scores against its calibrated version, per subject count.
pub fn run_fos(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentResult> {
    plan.validate()?;
    let truth = data.ground_truth()?;
    let groups: Vec<String> = plan
        .subject_counts
        .iter()
        .map(|k| group_label("k", k))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..plan.subject_counts.len())
        .flat_map(|g| (0..plan.repeats).map(move |i| (g, i)))
        .collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(g, i)| {
            let mut rng = sub_rng(plan.repeat_seed(i), streams::FOS);
            let fos = fos_mean(&data.records, plan.subject_counts[g], &mut rng)?;
            calibrate_variant(data, groups[g].clone(), i, fos, plan.repeat_config(i))
        })
        .collect::<Result<Vec<_>>>()?;
    let Assembly { rows, per_repeat } = assemble(plan, &runs, &groups, &truth, "FOS")?;

    let mut curve = Vec::new();
    for (g, &k) in plan.subject_counts.iter().enumerate() {
        let fos = rows
            .iter()
            .find(|r| r.group == groups[g] && r.method == "FOS")
            .map(|r| r.metrics)
            .expect("row assembled");
        let pc3 = rows
            .iter()
            .find(|r| r.group == groups[g] && r.method == "PC3")
            .map(|r| r.metrics)
            .expect("row assembled");
        let mut row = vec![k as f64];
        row.extend(fos.fields());
        row.extend(pc3.fields());
        curve.push(row);
    }
    let plots = vec![PlotData {
        name: "curve".into(),
        header: [
            "k", "fos_srcc", "fos_plcc", "fos_krocc", "fos_mse", "pc3_srcc", "pc3_plcc",
            "pc3_krocc", "pc3_mse",
        ]
        .map(String::from)
        .to_vec(),
        rows: curve,
    }];
    let trace = take_first_trace(&mut runs);
    Ok(ExperimentResult {
        kind: ExperimentKind::Fos,
        plan: plan.clone(),
        rows,
        per_repeat,
        plots,
        trace,
    })
}

/// Calibration at each refresh rate, sorted by rate, with paired SOS draws.
pub fn run_alpha_sweep(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentResult> {
    plan.validate()?;
    let truth = data.ground_truth()?;
    let mut alphas = plan.alphas.clone();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let groups: Vec<String> = alphas.iter().map(|a| group_label("alpha", a)).collect();
    let jobs: Vec<(usize, usize)> = (0..alphas.len())
        .flat_map(|g| (0..plan.repeats).map(move |i| (g, i)))
        .collect();
    let mut runs = jobs
        .into_par_iter()
        .map(|(g, i)| {
            let sos = repeat_sos(plan, data, i)?;
            let config = CalibrationConfig {
                alpha: alphas[g],
                ..plan.repeat_config(i)
            };
            calibrate_variant(data, groups[g].clone(), i, sos, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let assembled = assemble(plan, &runs, &groups, &truth, "SOS")?;

    // One SOS baseline row, then one PC3 row per alpha.
    let mut rows = Vec::new();
    if let Some(first) = assembled.rows.iter().find(|r| r.method == "SOS") {
        rows.push(TableRow {
            group: "baseline".into(),
            method: "SOS".into(),
            metrics: first.metrics,
        });
    }
    rows.extend(assembled.rows.into_iter().filter(|r| r.method == "PC3"));
    let per_repeat = assembled
        .per_repeat
        .into_iter()
        .filter(|r| r.method == "PC3" || r.group == groups[0])
        .map(|mut r| {
            if r.method == "SOS" {
                r.group = "baseline".into();
            }
            r
        })
        .collect();
    let trace = take_first_trace(&mut runs);
    Ok(ExperimentResult {
        kind: ExperimentKind::AlphaSweep,
        plan: plan.clone(),
        rows,
        per_repeat,
        plots: Vec::new(),
        trace,
    })
}

/// Shuffled split: the first `round(fraction * N)` items train, the rest test.
pub fn train_test_split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Err(Error::validation(format!(
            "need at least 10 items for a train/test split, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut sub_rng(seed, streams::SPLIT));
    let n_train = ((fraction * n as f64).round() as usize).clamp(2, n - 2);
    let test = order.split_off(n_train);
    Ok((order, test))
}

/// Trains a regressor on `labels` and predicts `test` rows.
pub fn train_regressor(
    train: &FeatureTable,
    labels: &[f64],
    test: &FeatureTable,
    config: &RegressorConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    if labels.len() != train.len() {
        return Err(Error::validation("one label per training row is required"));
    }
    let target = LabelVector::normalize(labels)?;
    let mut rng = sub_rng(seed, streams::REGRESSOR);
    let mut net = Mlp::new(&[train.dim(), config.hidden, 1], &mut rng)?;
    let mut grads = GradientBundle::zeros_like(&net);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size.max(1)) {
            grads.clear();
            let m = batch.len() as f64;
            for &i in batch {
                let (pred, tape) = net.forward(train.row(i))?;
                let upstream = 2.0 * (pred - target.values()[i]) / m;
                net.backward_into(&tape, upstream, &mut grads)?;
            }
            net.optimizer_step(&grads, config.lambda)?;
        }
    }
    let scale = target.scale();
    (0..test.len())
        .map(|i| net.predict(test.row(i)).map(|p| scale.to_raw(p)))
        .collect()
}

/// Regressors trained on ground truth, SOS and calibrated SOS.
pub fn run_downstream(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentResult> {
    plan.validate()?;
    let truth = data.ground_truth()?;
    let per_repeat_rows = (0..plan.repeats)
        .into_par_iter()
        .map(|i| -> Result<Vec<RepeatRow>> {
            let seed = plan.repeat_seed(i);
            let (train_idx, test_idx) =
                train_test_split(data.features.len(), plan.regressor.train_fraction, seed)?;
            let train = data.features.subset(&train_idx)?;
            let test = data.features.subset(&test_idx)?;
            let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&j| v[j]).collect::<Vec<_>>();
            let sos = repeat_sos(plan, data, i)?;
            let sos_train = pick(&sos, &train_idx);
            let (pc3_train, _) = calibrate_raw(&train, &sos_train, &plan.repeat_config(i))?;
            let truth_test = pick(&truth, &test_idx);
            let variants = [
                ("MOS", pick(&truth, &train_idx)),
                ("SOS", sos_train),
                ("PC3", pc3_train),
            ];
            variants
                .into_iter()
                .map(|(method, labels)| {
                    let pred = train_regressor(&train, &labels, &test, &plan.regressor, seed)?;
                    Ok(RepeatRow {
                        group: "test".into(),
                        method: method.into(),
                        repeat: i,
                        seed,
                        metrics: evaluate(&pred, &truth_test)?,
                    })
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    let per_repeat: Vec<RepeatRow> = per_repeat_rows.into_iter().flatten().collect();
    let mut rows = Vec::new();
    for method in ["MOS", "SOS", "PC3"] {
        let reports: Vec<MetricsReport> = per_repeat
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.metrics)
            .collect();
        rows.push(TableRow {
            group: "test".into(),
            method: method.into(),
            metrics: median_report(&reports)?,
        });
    }
    let delta = relative_change(&rows[1].metrics, &rows[2].metrics);
    rows.push(TableRow {
        group: "test".into(),
        method: "delta_pct".into(),
        metrics: delta,
    });
    Ok(ExperimentResult {
        kind: ExperimentKind::Downstream,
        plan: plan.clone(),
        rows,
        per_repeat,
        plots: Vec::new(),
        trace: Vec::new(),
    })
}

pub fn run(plan: &ExperimentPlan, data: &Dataset) -> Result<ExperimentResult> {
    match plan.kind {
        ExperimentKind::Calibration => run_calibration(plan, data),
        ExperimentKind::BiasRate => run_bias_rate(plan, data),
        ExperimentKind::Fos => run_fos(plan, data),
        ExperimentKind::AlphaSweep => run_alpha_sweep(plan, data),
        ExperimentKind::Downstream => run_downstream(plan, data),
    }
}
