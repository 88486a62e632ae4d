use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use unconfused::config::{ExperimentConfig, Overrides};
use unconfused::error::{AppError, Result};
use unconfused::experiments::{self, stream};
use unconfused::io;
use unconfused_core::metrics::evaluate;
use unconfused_core::perceptron::train_perceptron;
use unconfused_core::rng::Purpose;
use unconfused_core::synth::corrupt;
use unconfused_core::uma::{self, Selection};
use unconfused_core::{ConfusionMatrix, LabelSource};

#[derive(Parser)]
#[command(name = "unconfused", version, about = "Multiclass learning from noisy labels with a known confusion matrix")]
struct Cli {
    /// Experiment configuration (JSON, with `schema_version`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Base seed; overrides `synth.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Number of runs; overrides `n_runs`.
    #[arg(long, global = true, value_name = "N")]
    runs: Option<usize>,
    #[arg(long, global = true, value_enum)]
    selection: Option<SelectionArg>,
    #[arg(long, global = true, value_name = "F")]
    alpha: Option<f64>,
    #[arg(long = "stop-norm", global = true, value_name = "F")]
    stop_norm: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Error,
    Confusion,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum Learner {
    Uma,
    Mperc,
    MpercFull,
}

#[derive(Subcommand)]
enum Command {
    /// Write a concept, train/test sets and the sweep matrices M and N.
    Generate,
    /// Replace the noisy labels of a dataset by draws from a confusion matrix.
    Corrupt {
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[arg(long, value_name = "PATH")]
        confusion: PathBuf,
        /// Sweep level `i` when the confusion file holds a direction `N`.
        #[arg(long)]
        level: Option<u32>,
    },
    /// Train one learner and save the model (and the UMA trace).
    Train {
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// Noise matrix for UMA; identity when omitted.
        #[arg(long, value_name = "PATH")]
        confusion: Option<PathBuf>,
        #[arg(long)]
        level: Option<u32>,
        #[arg(long, value_enum, default_value = "uma")]
        learner: Learner,
    },
    /// Evaluate a saved model on a dataset with true labels.
    Eval {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
    },
    /// Confusion rate of UMA and the perceptron as the noise level grows.
    SweepNoise,
    /// Confusion rate of UMA when handed a misestimated noise matrix.
    SweepEstimation,
    /// Self-training relabelling pipeline.
    Semisup,
    /// Minimum sample sizes over an (epsilon, delta) grid.
    Bounds,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        runs: cli.runs,
        selection: cli.selection.map(|s| match s {
            SelectionArg::Error => Selection::Error,
            SelectionArg::Confusion => Selection::Confusion,
            SelectionArg::Random => Selection::Random,
        }),
        alpha: cli.alpha,
        stop_norm: cli.stop_norm,
    };
    let cfg = ExperimentConfig::resolve(cli.config.as_deref(), &overrides)?;
    let out = cfg.output_dir.clone();
    let comment = io::provenance_line(&cfg.hash(), cfg.seed());

    match cli.command {
        Command::Generate => {
            let g = experiments::generate(&cfg, &out)?;
            for p in [g.concept, g.train, g.test, g.m, g.n] {
                println!("wrote {}", p.display());
            }
        }
        Command::Corrupt { data, confusion, level } => {
            let c = experiments::confusion_from_file(&io::read_confusion(&confusion)?, level)?;
            let ds = io::read_dataset(&data, Some(c.q()))?;
            let noisy = corrupt(&ds, &c, stream(&cfg, 0, Purpose::Corrupt))?;
            let path = out.join("noisy.csv");
            io::write_dataset(&path, &noisy, Some(&comment))?;
            println!("wrote {}", path.display());
        }
        Command::Train { data, confusion, level, learner } => train(&cfg, &data, confusion.as_deref(), level, learner)?,
        Command::Eval { model, data } => {
            let model = io::read_model(&model)?;
            let ds = io::read_dataset(&data, Some(model.q()))?;
            let report = evaluate(&model, &ds)?;
            let path = out.join("report.json");
            io::write_report(&path, &report)?;
            println!(
                "n={} error_rate={:.6} confusion_rate={:.6} offdiag_rate={:.6}",
                report.n,
                report.error_rate,
                report.confusion_rate,
                report.offdiag_confusion_rate()
            );
            let absent = report.absent_classes();
            if !absent.is_empty() {
                let names: Vec<String> = absent.iter().map(|c| (c + 1).to_string()).collect();
                println!("classes absent from the test set: {}", names.join(" "));
            }
            println!("wrote {}", path.display());
        }
        Command::SweepNoise => {
            let sweep = experiments::sweep_noise(&cfg)?;
            write_outputs(&out, "sweep_noise.csv", &experiments::noise_sweep_csv(&cfg, &sweep.points), &sweep.records)?;
        }
        Command::SweepEstimation => {
            let sweep = experiments::sweep_estimation(&cfg)?;
            let csv = experiments::estimation_sweep_csv(&cfg, &sweep.points);
            write_outputs(&out, "sweep_estimation.csv", &csv, &sweep.records)?;
        }
        Command::Semisup => {
            let (report, records) = experiments::semisup(&cfg)?;
            io::write_report(&out.join("semisup.json"), &report)?;
            write_outputs(&out, "semisup.csv", &experiments::semisup_csv(&cfg, &report), &records)?;
            for r in report.runs.iter().filter(|r| r.degraded.is_some()) {
                eprintln!("run {}: UMA skipped, {}", r.run_id, r.degraded.as_deref().unwrap_or_default());
            }
        }
        Command::Bounds => {
            let rows = experiments::bounds_table(cfg.synth.dim, cfg.synth.q_classes)?;
            let csv = experiments::bounds_csv(&cfg, &rows);
            print!("{csv}");
            io::write_text(&out.join("bounds.csv"), &csv)?;
        }
    }
    Ok(())
}

fn train(
    cfg: &ExperimentConfig,
    data: &Path,
    confusion: Option<&Path>,
    level: Option<u32>,
    learner: Learner,
) -> Result<()> {
    let out = &cfg.output_dir;
    let comment = io::provenance_line(&cfg.hash(), cfg.seed());
    let c = match confusion {
        Some(p) => Some(experiments::confusion_from_file(&io::read_confusion(p)?, level)?),
        None => None,
    };
    let ds = io::read_dataset(data, c.as_ref().map(ConfusionMatrix::q))?;
    let model = match learner {
        Learner::Uma => {
            let c = c.unwrap_or_else(|| ConfusionMatrix::identity(ds.q()));
            if c.q() != ds.q() {
                return Err(AppError::Config(format!("confusion matrix is {0}x{0}, data has {1} classes", c.q(), ds.q())));
            }
            let fit = uma::train(&ds, &c, &cfg.uma, stream(cfg, 0, Purpose::Selection))?;
            let trace = out.join("trace.csv");
            io::write_trace(&trace, &fit.trace, Some(&comment))?;
            println!("{} updates, stopped by {:?}; wrote {}", fit.updates(), fit.termination, trace.display());
            fit.model
        }
        Learner::Mperc | Learner::MpercFull => {
            let source = if matches!(learner, Learner::Mperc) { LabelSource::Noisy } else { LabelSource::True };
            let pcfg = unconfused_core::perceptron::PerceptronConfig {
                seed: cfg.seed(),
                label_source: source,
                ..cfg.perceptron.clone()
            };
            let fit = train_perceptron(&ds, &pcfg)?;
            println!("{} updates over {} epochs, converged: {}", fit.updates, fit.epochs, fit.converged);
            fit.model
        }
    };
    let path = out.join("model.json");
    io::write_model(&path, &model)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn write_outputs(out: &Path, name: &str, csv: &str, records: &[experiments::RunRecord]) -> Result<()> {
    let path = out.join(name);
    io::write_text(&path, csv)?;
    experiments::write_records(&out.join("runs.jsonl"), records)?;
    println!("wrote {} and {}", path.display(), out.join("runs.jsonl").display());
    Ok(())
}
