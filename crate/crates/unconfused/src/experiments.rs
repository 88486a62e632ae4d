//! The experiment protocols behind the CLI subcommands.
//!
//! Every run `r` of an experiment seeded with `s` draws all of its
//! randomness from `RngStream::for_run(s, r, purpose)`, so runs are
//! independent of each other and of scheduling. Runs execute in parallel
//! on a rayon pool; results are collected in run order before anything is
//! aggregated or written.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unconfused_core::bounds::{deviation_bound, min_sample_size, BoundQuery};
use unconfused_core::linalg::frobenius_norm;
use unconfused_core::metrics::{estimate_confusion_from_pairs, evaluate, EvalReport};
use unconfused_core::perceptron::{train_perceptron, PerceptronConfig};
use unconfused_core::rng::Purpose;
use unconfused_core::synth::{
    corrupt, generate_concept, generate_dataset, generate_sweep_matrices, sweep_level_matrix, SweepMatrices,
};
use unconfused_core::uma::{self, UmaFit};
use unconfused_core::{ConfusionMatrix, LabelSource, LabeledDataset, LinearModel, RngStream};

use crate::config::ExperimentConfig;
use crate::error::{AppError, Result};
use crate::io::{self, MatrixKind};

pub const THREADS_ENV: &str = "UNCONFUSED_THREADS";

/// A pool sized by `UNCONFUSED_THREADS` when set, else by rayon's default.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| AppError::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| AppError::Config(e.to_string()))
}

fn par_runs<T, F>(cfg: &ExperimentConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    thread_pool()?.install(|| (0..cfg.n_runs).into_par_iter().map(&f).collect())
}

pub fn stream(cfg: &ExperimentConfig, run_id: usize, purpose: Purpose) -> RngStream {
    RngStream::for_run(cfg.seed(), run_id as u64, purpose)
}

fn perceptron_config(cfg: &ExperimentConfig, run_id: usize, salt: u64, source: LabelSource) -> PerceptronConfig {
    PerceptronConfig {
        seed: cfg.seed() ^ ((run_id as u64) << 32) ^ salt,
        label_source: source,
        ..cfg.perceptron.clone()
    }
}

/// Data shared by every sweep level of one run.
pub struct RunData {
    pub concept: LinearModel,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub sweep: SweepMatrices,
}

pub fn prepare_run(cfg: &ExperimentConfig, run_id: usize) -> Result<RunData> {
    let s = &cfg.synth;
    let concept = generate_concept(s, stream(cfg, run_id, Purpose::Concept))?;
    let train = generate_dataset(s, &concept, s.n_train, stream(cfg, run_id, Purpose::Train))?;
    let test = generate_dataset(s, &concept, s.n_test, stream(cfg, run_id, Purpose::Test))?;
    let sweep = generate_sweep_matrices(s.q_classes, stream(cfg, run_id, Purpose::SweepMatrix))?;
    Ok(RunData { concept, train, test, sweep })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Self { mean, std }
    }
}

/// Summary of one learner at one sweep point, over runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Frobenius norm of the test confusion matrix, diagonal included.
    pub confusion_rate: MeanStd,
    /// The same norm over off-diagonal entries only.
    pub offdiag_rate: MeanStd,
    pub error_rate: MeanStd,
}

impl Aggregate {
    fn of<'a>(reports: impl Iterator<Item = &'a EvalReport> + Clone) -> Self {
        let collect = |f: fn(&EvalReport) -> f64| MeanStd::of(&reports.clone().map(f).collect::<Vec<_>>());
        Self {
            confusion_rate: collect(|r| r.confusion_rate),
            offdiag_rate: collect(|r| r.offdiag_confusion_rate()),
            error_rate: collect(|r| r.error_rate),
        }
    }
}

/// One learner evaluated in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    /// Base seed of the experiment; the run's streams derive from it and `run_id`.
    pub seed: u64,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub learner: String,
    /// Sweep level, when the experiment has one.
    pub level: Option<u32>,
    pub report: EvalReport,
    pub wall_time_secs: f64,
    pub iterations: usize,
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| AppError::Config(e.to_string()))?);
        out.push('\n');
    }
    io::write_text(path, &out)
}

pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| AppError::format(path, i + 1, e.to_string())))
        .collect()
}

struct Fitted {
    report: EvalReport,
    iterations: usize,
    secs: f64,
}

fn fit_uma(
    train: &LabeledDataset,
    c: &ConfusionMatrix,
    test: &LabeledDataset,
    cfg: &ExperimentConfig,
    stream: RngStream,
) -> Result<(Fitted, UmaFit)> {
    let start = Instant::now();
    let fit = uma::train(train, c, &cfg.uma, stream)?;
    let report = evaluate(&fit.model, test)?;
    Ok((Fitted { report, iterations: fit.updates(), secs: start.elapsed().as_secs_f64() }, fit))
}

fn fit_perceptron(
    train: &LabeledDataset,
    test: &LabeledDataset,
    pcfg: &PerceptronConfig,
) -> Result<(Fitted, LinearModel)> {
    let start = Instant::now();
    let fit = train_perceptron(train, pcfg)?;
    let report = evaluate(&fit.model, test)?;
    Ok((Fitted { report, iterations: fit.updates, secs: start.elapsed().as_secs_f64() }, fit.model))
}

fn record(cfg: &ExperimentConfig, hash: &str, run_id: usize, learner: &str, level: Option<u32>, f: Fitted) -> RunRecord {
    RunRecord {
        run_id,
        seed: cfg.seed(),
        config: cfg.clone(),
        config_hash: hash.to_string(),
        learner: learner.to_string(),
        level,
        report: f.report,
        wall_time_secs: f.secs,
        iterations: f.iterations,
    }
}

fn reports<'a>(records: &'a [RunRecord], learner: &'a str, level: u32) -> impl Iterator<Item = &'a EvalReport> + Clone {
    records.iter().filter(move |r| r.learner == learner && r.level == Some(level)).map(|r| &r.report)
}

fn fmt_ms(m: &MeanStd) -> String {
    format!("{:.9},{:.9}", m.mean, m.std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePoint {
    pub level: u32,
    /// `‖I + i·N‖_F` averaged over runs (each run draws its own `N`).
    pub fro_c: f64,
    pub uma: Aggregate,
    pub mperc: Aggregate,
}

pub struct NoiseSweep {
    pub points: Vec<NoisePoint>,
    pub records: Vec<RunRecord>,
}

/// Corrupts the training set with `C_i = I + i·N` for every level, trains
/// UMA (given `C_i`) and the perceptron on it and evaluates both on clean
/// test data.
pub fn sweep_noise(cfg: &ExperimentConfig) -> Result<NoiseSweep> {
    let hash = cfg.hash();
    let per_run = par_runs(cfg, |run| {
        let data = prepare_run(cfg, run)?;
        let mut out = Vec::new();
        for &level in &cfg.sweep_range {
            let c = sweep_level_matrix(&data.sweep.n, level)?;
            let fro = frobenius_norm(c.matrix());
            let noisy = corrupt(&data.train, &c, stream(cfg, run, Purpose::Corrupt).split(level.into()))?;
            let sel = stream(cfg, run, Purpose::Selection).split(level.into());
            let (u, _) = fit_uma(&noisy, &c, &data.test, cfg, sel)?;
            let pcfg = perceptron_config(cfg, run, level.into(), LabelSource::Noisy);
            let (p, _) = fit_perceptron(&noisy, &data.test, &pcfg)?;
            out.push((fro, record(cfg, &hash, run, "uma", Some(level), u)));
            out.push((fro, record(cfg, &hash, run, "mperc", Some(level), p)));
        }
        Ok(out)
    })?;
    let flat: Vec<(f64, RunRecord)> = per_run.into_iter().flatten().collect();
    let records: Vec<RunRecord> = flat.iter().map(|(_, r)| r.clone()).collect();
    let points = cfg
        .sweep_range
        .iter()
        .map(|&level| {
            let fros: Vec<f64> = flat
                .iter()
                .filter(|(_, r)| r.level == Some(level) && r.learner == "uma")
                .map(|(f, _)| *f)
                .collect();
            NoisePoint {
                level,
                fro_c: MeanStd::of(&fros).mean,
                uma: Aggregate::of(reports(&records, "uma", level)),
                mperc: Aggregate::of(reports(&records, "mperc", level)),
            }
        })
        .collect();
    Ok(NoiseSweep { points, records })
}

pub fn noise_sweep_csv(cfg: &ExperimentConfig, points: &[NoisePoint]) -> String {
    let mut out = io::provenance_line(&cfg.hash(), cfg.seed());
    out.push('\n');
    out.push_str(
        "i,fro_c,uma_confusion_mean,uma_confusion_std,mperc_confusion_mean,mperc_confusion_std,\
         uma_offdiag_mean,uma_offdiag_std,mperc_offdiag_mean,mperc_offdiag_std,\
         uma_error_mean,uma_error_std,mperc_error_mean,mperc_error_std\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{:.9},{},{},{},{},{},{}\n",
            p.level,
            p.fro_c,
            fmt_ms(&p.uma.confusion_rate),
            fmt_ms(&p.mperc.confusion_rate),
            fmt_ms(&p.uma.offdiag_rate),
            fmt_ms(&p.mperc.offdiag_rate),
            fmt_ms(&p.uma.error_rate),
            fmt_ms(&p.mperc.error_rate),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationPoint {
    pub level: u32,
    /// `1 − i/10`: positive underestimates the noise, negative overestimates it.
    pub factor: f64,
    pub fro_c: f64,
    pub uma: Aggregate,
}

pub struct EstimationSweep {
    pub points: Vec<EstimationPoint>,
    pub records: Vec<RunRecord>,
}

/// Corrupts once per run with `M = I + 10·N`, then trains UMA handed
/// `C_i = I + i·N` for every level.
pub fn sweep_estimation(cfg: &ExperimentConfig) -> Result<EstimationSweep> {
    let hash = cfg.hash();
    let per_run = par_runs(cfg, |run| {
        let data = prepare_run(cfg, run)?;
        let noisy = corrupt(&data.train, &data.sweep.m, stream(cfg, run, Purpose::Corrupt))?;
        let mut out = Vec::new();
        for &level in &cfg.sweep_range {
            let c = sweep_level_matrix(&data.sweep.n, level)?;
            let fro = frobenius_norm(c.matrix());
            let sel = stream(cfg, run, Purpose::Selection).split(level.into());
            let (u, _) = fit_uma(&noisy, &c, &data.test, cfg, sel)?;
            out.push((fro, record(cfg, &hash, run, "uma", Some(level), u)));
        }
        Ok(out)
    })?;
    let flat: Vec<(f64, RunRecord)> = per_run.into_iter().flatten().collect();
    let records: Vec<RunRecord> = flat.iter().map(|(_, r)| r.clone()).collect();
    let points = cfg
        .sweep_range
        .iter()
        .map(|&level| {
            let fros: Vec<f64> = flat.iter().filter(|(_, r)| r.level == Some(level)).map(|(f, _)| *f).collect();
            EstimationPoint {
                level,
                factor: 1.0 - f64::from(level) / 10.0,
                fro_c: MeanStd::of(&fros).mean,
                uma: Aggregate::of(reports(&records, "uma", level)),
            }
        })
        .collect();
    Ok(EstimationSweep { points, records })
}

pub fn estimation_sweep_csv(cfg: &ExperimentConfig, points: &[EstimationPoint]) -> String {
    let mut out = io::provenance_line(&cfg.hash(), cfg.seed());
    out.push('\n');
    out.push_str(
        "i,factor,fro_c,uma_confusion_mean,uma_confusion_std,uma_offdiag_mean,uma_offdiag_std,\
         uma_error_mean,uma_error_std\n",
    );
    for p in points {
        out.push_str(&format!(
            "{},{:.1},{:.9},{},{},{}\n",
            p.level,
            p.factor,
            p.fro_c,
            fmt_ms(&p.uma.confusion_rate),
            fmt_ms(&p.uma.offdiag_rate),
            fmt_ms(&p.uma.error_rate),
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemisupRun {
    pub run_id: usize,
    pub bootstrap_error: f64,
    pub mperc_error: f64,
    pub mperc_full_error: f64,
    /// `None` when the estimated confusion matrix was unusable.
    pub uma_error: Option<f64>,
    pub degraded: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemisupReport {
    pub runs: Vec<SemisupRun>,
    pub mean_mperc_error: f64,
    pub mean_mperc_full_error: f64,
    /// Over the runs where UMA could be trained.
    pub mean_uma_error: Option<f64>,
    /// Perceptron means over those same runs.
    pub paired_mperc_error: Option<f64>,
    pub paired_mperc_full_error: Option<f64>,
}

/// Self-training relabelling: label a small fraction of a clean pool, train
/// a bootstrap perceptron on part of it, relabel the whole pool with that
/// classifier, estimate its confusion matrix on the remaining labelled
/// points, then compare UMA on the relabelled pool with the perceptron on
/// the relabelled and on the true labels.
pub fn semisup(cfg: &ExperimentConfig) -> Result<(SemisupReport, Vec<RunRecord>)> {
    let hash = cfg.hash();
    let sc = &cfg.semisup;
    let per_run = par_runs(cfg, |run| {
        let s = &cfg.synth;
        let concept = generate_concept(s, stream(cfg, run, Purpose::Concept))?;
        let pool = generate_dataset(s, &concept, sc.pool_size, stream(cfg, run, Purpose::Train))?;
        let test = generate_dataset(s, &concept, s.n_test, stream(cfg, run, Purpose::Test))?;

        // the pool is i.i.d., so its first points are a uniform sample
        let labeled = ((sc.labeled_fraction * sc.pool_size as f64).round() as usize).clamp(2, sc.pool_size);
        let n_boot = ((sc.bootstrap_share * labeled as f64).round() as usize).clamp(1, labeled - 1);
        let boot_set = pool.subset(&(0..n_boot).collect::<Vec<_>>());
        let (boot, boot_model) =
            fit_perceptron(&boot_set, &test, &perceptron_config(cfg, run, 1, LabelSource::True))?;

        let relabeled = LabeledDataset::new(
            pool.q(),
            pool.dim(),
            pool.examples()
                .iter()
                .map(|e| e.with_noisy_label(Some(boot_model.predict(e.x())?)))
                .collect::<unconfused_core::Result<Vec<_>>>()?,
        )?;
        let held = relabeled.subset(&(n_boot..labeled).collect::<Vec<_>>());

        let (mperc, _) = fit_perceptron(&relabeled, &test, &perceptron_config(cfg, run, 2, LabelSource::Noisy))?;
        let (full, _) = fit_perceptron(&relabeled, &test, &perceptron_config(cfg, run, 3, LabelSource::True))?;
        let mut row = SemisupRun {
            run_id: run,
            bootstrap_error: boot.report.error_rate,
            mperc_error: mperc.report.error_rate,
            mperc_full_error: full.report.error_rate,
            uma_error: None,
            degraded: None,
        };
        let mut recs = vec![
            record(cfg, &hash, run, "bootstrap", None, boot),
            record(cfg, &hash, run, "mperc", None, mperc),
            record(cfg, &hash, run, "mperc_full", None, full),
        ];
        match estimate_confusion_from_pairs(&held)? {
            Ok(c) => {
                let (u, _) = fit_uma(&relabeled, &c, &test, cfg, stream(cfg, run, Purpose::Selection))?;
                row.uma_error = Some(u.report.error_rate);
                recs.push(record(cfg, &hash, run, "uma", None, u));
            }
            Err(degraded) => row.degraded = Some(degraded.to_string()),
        }
        Ok((row, recs))
    })?;
    let (runs, records): (Vec<_>, Vec<_>) = per_run.into_iter().unzip();
    let records: Vec<RunRecord> = records.into_iter().flatten().collect();
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| MeanStd::of(&v).mean);
    let ok: Vec<&SemisupRun> = runs.iter().filter(|r| r.uma_error.is_some()).collect();
    let report = SemisupReport {
        mean_mperc_error: MeanStd::of(&runs.iter().map(|r| r.mperc_error).collect::<Vec<_>>()).mean,
        mean_mperc_full_error: MeanStd::of(&runs.iter().map(|r| r.mperc_full_error).collect::<Vec<_>>()).mean,
        mean_uma_error: mean(ok.iter().filter_map(|r| r.uma_error).collect()),
        paired_mperc_error: mean(ok.iter().map(|r| r.mperc_error).collect()),
        paired_mperc_full_error: mean(ok.iter().map(|r| r.mperc_full_error).collect()),
        runs,
    };
    Ok((report, records))
}

pub fn semisup_csv(cfg: &ExperimentConfig, report: &SemisupReport) -> String {
    let mut out = io::provenance_line(&cfg.hash(), cfg.seed());
    out.push('\n');
    out.push_str("run,bootstrap_error,mperc_error,mperc_full_error,uma_error,degraded\n");
    for r in &report.runs {
        out.push_str(&format!(
            "{},{:.9},{:.9},{:.9},{},{}\n",
            r.run_id,
            r.bootstrap_error,
            r.mperc_error,
            r.mperc_full_error,
            r.uma_error.map(|e| format!("{e:.9}")).unwrap_or_default(),
            r.degraded.as_deref().map(|d| format!("\"{}\"", d.replace('"', "'"))).unwrap_or_default(),
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub epsilon: f64,
    pub delta: f64,
    pub m: u64,
    pub bound_at_m: f64,
}

pub const BOUND_EPSILONS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const BOUND_DELTAS: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];

/// Minimum sample sizes over the `(ε, δ)` grid for the configured `d` and `Q`.
pub fn bounds_table(d: usize, q: usize) -> Result<Vec<BoundRow>> {
    let mut rows = Vec::new();
    for &epsilon in &BOUND_EPSILONS {
        for &delta in &BOUND_DELTAS {
            let m = min_sample_size(epsilon, delta, d, q)?;
            let bound_at_m = deviation_bound(&BoundQuery { m, epsilon, delta, d, q_classes: q })?;
            rows.push(BoundRow { epsilon, delta, m, bound_at_m });
        }
    }
    Ok(rows)
}

pub fn bounds_csv(cfg: &ExperimentConfig, rows: &[BoundRow]) -> String {
    let mut out = io::provenance_line(&cfg.hash(), cfg.seed());
    out.push('\n');
    out.push_str(&format!("# d={} q={}\n", cfg.synth.dim, cfg.synth.q_classes));
    out.push_str("epsilon,delta,m,bound_at_m\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{:.6e}\n", r.epsilon, r.delta, r.m, r.bound_at_m));
    }
    out
}

/// Paths written by `generate`.
pub struct Generated {
    pub concept: PathBuf,
    pub train: PathBuf,
    pub test: PathBuf,
    pub m: PathBuf,
    pub n: PathBuf,
}

/// Run 0 of the configured experiment, written to `dir`.
pub fn generate(cfg: &ExperimentConfig, dir: &Path) -> Result<Generated> {
    let data = prepare_run(cfg, 0)?;
    let comment = io::provenance_line(&cfg.hash(), cfg.seed());
    let g = Generated {
        concept: dir.join("concept.json"),
        train: dir.join("train.csv"),
        test: dir.join("test.csv"),
        m: dir.join("m.json"),
        n: dir.join("n.json"),
    };
    io::write_model(&g.concept, &data.concept)?;
    io::write_dataset(&g.train, &data.train, Some(&comment))?;
    io::write_dataset(&g.test, &data.test, Some(&comment))?;
    io::write_confusion(&g.m, data.sweep.m.matrix(), Some(MatrixKind::Stochastic))?;
    io::write_confusion(&g.n, &data.sweep.n, Some(MatrixKind::Direction))?;
    Ok(g)
}

/// The noise matrix described by a confusion file: the matrix itself, or
/// `I + level·N` for a direction file.
pub fn confusion_from_file(file: &io::ConfusionFile, level: Option<u32>) -> Result<ConfusionMatrix> {
    match (file.kind, level) {
        (Some(MatrixKind::Direction), Some(level)) => Ok(sweep_level_matrix(&file.rows, level)?),
        (Some(MatrixKind::Direction), None) => {
            Err(AppError::Config("a direction matrix needs --level to become a confusion matrix".into()))
        }
        (_, Some(_)) => Err(AppError::Config("--level only applies to direction matrices".into())),
        (_, None) => Ok(ConfusionMatrix::new(file.rows.clone())?),
    }
}
