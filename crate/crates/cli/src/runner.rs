//! Multi-seed training runs and their on-disk artifacts.
//!
//! Layout under `output_dir`:
//!
//! ```text
//! config.resolved        effective configuration, JSON
//! summary.json           final metrics per seed and across seeds
//! summary.txt            the same, human readable
//! seed_<s>/metrics.csv   one row per evaluation
//! seed_<s>/samples_<step>.csv
//! seed_<s>/recon_<step>.csv     (variants with an encoder)
//! seed_<s>/checkpoint_<step>
//! ```

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dali_core::metrics::CSV_HEADER;
use dali_core::model::disc_step;
use dali_core::nn::{read_checkpoint, write_checkpoint};
use dali_core::rng::{stream_rng, Stream};
use dali_core::{
    evaluate, evaluate_full, train_step, EvalSettings, Evaluation, Losses, Matrix, MetricsRecord,
    ModelBundle, Optimizers, TrainSettings,
};
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::RunError;

pub const RESOLVED_CONFIG: &str = "config.resolved";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TEXT: &str = "summary.txt";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Suppress progress lines on stderr.
    pub quiet: bool,
}

pub fn seed_dir(output_dir: &Path, seed: u64) -> PathBuf {
    output_dir.join(format!("seed_{seed}"))
}

pub fn checkpoint_path(seed_dir: &Path, step: u64) -> PathBuf {
    seed_dir.join(format!("checkpoint_{step}"))
}

/// Final metrics of one seed, or why it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub completed: bool,
    /// Last evaluated step.
    pub step: u64,
    pub modes_captured: Option<usize>,
    pub high_quality_fraction: Option<f64>,
    /// Absent for variants without an encoder.
    pub recon_mse: Option<f64>,
    pub error: Option<String>,
}

/// Mean and sample standard deviation; the deviation is zero for a single value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, std, n })
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub modes_captured: Option<Stat>,
    pub high_quality_fraction: Option<Stat>,
    pub recon_mse: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: String,
    pub total_steps: u64,
    pub seeds: Vec<SeedSummary>,
    /// Over completed seeds only.
    pub aggregate: Aggregate,
}

impl RunSummary {
    fn from_seeds(config: &TrainConfig, seeds: Vec<SeedSummary>) -> Self {
        let done: Vec<&SeedSummary> = seeds.iter().filter(|s| s.completed).collect();
        let collect = |f: &dyn Fn(&SeedSummary) -> Option<f64>| -> Vec<f64> {
            done.iter().filter_map(|s| f(s)).collect()
        };
        let aggregate = Aggregate {
            modes_captured: Stat::of(&collect(&|s| s.modes_captured.map(|m| m as f64))),
            high_quality_fraction: Stat::of(&collect(&|s| s.high_quality_fraction)),
            recon_mse: Stat::of(&collect(&|s| s.recon_mse)),
        };
        RunSummary {
            variant: config.variant.label().to_string(),
            total_steps: config.total_steps,
            seeds,
            aggregate,
        }
    }

    pub fn failed(&self) -> usize {
        self.seeds.iter().filter(|s| !s.completed).count()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "variant {}  steps {}  seeds {} ({} failed)",
            self.variant,
            self.total_steps,
            self.seeds.len(),
            self.failed()
        );
        for seed in &self.seeds {
            if seed.completed {
                let _ = writeln!(
                    s,
                    "seed {:>4}  modes {:>3}  hq_frac {:.4}  recon_mse {}",
                    seed.seed,
                    seed.modes_captured.unwrap_or(0),
                    seed.high_quality_fraction.unwrap_or(f64::NAN),
                    seed.recon_mse.map_or("n/a".to_string(), |v| format!("{v:.6}")),
                );
            } else {
                let _ = writeln!(
                    s,
                    "seed {:>4}  FAILED after step {}: {}",
                    seed.seed,
                    seed.step,
                    seed.error.as_deref().unwrap_or("unknown error")
                );
            }
        }
        let fmt = |st: &Option<Stat>, p: usize| st.map_or("n/a".to_string(), |v| format!("{v:.p$}"));
        let a = &self.aggregate;
        let _ = writeln!(
            s,
            "mean ± std  modes {}  hq_frac {}  recon_mse {}",
            fmt(&a.modes_captured, 2),
            fmt(&a.high_quality_fraction, 4),
            fmt(&a.recon_mse, 6)
        );
        s
    }

    pub fn load(output_dir: &Path) -> Result<Self, RunError> {
        let path = output_dir.join(SUMMARY_JSON);
        let text = fs::read_to_string(&path).map_err(|e| RunError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents).map_err(|e| RunError::io(path, e))
}

fn write_points(path: &Path, header: &str, cols: &[&Matrix]) -> Result<(), RunError> {
    let file = File::create(path).map_err(|e| RunError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| RunError::io(path, e);
    writeln!(out, "{header}").map_err(io)?;
    let rows = cols.first().map_or(0, |m| m.nrows());
    for i in 0..rows {
        let mut line = String::new();
        for m in cols {
            for v in m.row(i) {
                if !line.is_empty() {
                    line.push(',');
                }
                let _ = write!(line, "{v}");
            }
        }
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

fn dump_evaluation(dir: &Path, step: u64, eval: &Evaluation, bundle: &ModelBundle) -> Result<(), RunError> {
    write_points(&dir.join(format!("samples_{step}.csv")), "x,y", &[&eval.samples])?;
    if let Some(rec) = &eval.recon {
        write_points(
            &dir.join(format!("recon_{step}.csv")),
            "x,y,x_rec,y_rec",
            &[&eval.test, rec],
        )?;
    }
    let path = checkpoint_path(dir, step);
    let file = File::create(&path).map_err(|e| RunError::io(&path, e))?;
    let mut out = BufWriter::new(file);
    write_checkpoint(&bundle.to_store(), &mut out)?;
    out.flush().map_err(|e| RunError::io(&path, e))
}

/// Per-seed result kept in memory by [`run_seed`].
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub records: Vec<MetricsRecord>,
    pub bundle: ModelBundle,
    /// Set when training stopped early.
    pub failure: Option<(u64, String)>,
}

/// Trains one seed, writing its artifacts into `dir` (which is emptied
/// first). Numerical failures end the run but are returned in
/// [`SeedRun::failure`] rather than as an error; I/O and setup problems are
/// errors.
pub fn run_seed(config: &TrainConfig, seed: u64, dir: &Path, opts: &RunOptions) -> Result<SeedRun, RunError> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;

    let mix = config.mixture.build()?;
    let mut bundle = ModelBundle::new(config.model_config(), &mut stream_rng(seed, Stream::Init))?;
    let mut data_rng = stream_rng(seed, Stream::Data);
    let mut latent_rng = stream_rng(seed, Stream::Latent);
    let mut optimizers = Optimizers::new(&config.optimizer);
    let settings = TrainSettings {
        lambda: config.lambda(),
        fresh_latent: config.fresh_latent,
    };
    let eval_settings = EvalSettings::from(&config.eval);

    let metrics_path = dir.join(METRICS_FILE);
    let file = File::create(&metrics_path).map_err(|e| RunError::io(&metrics_path, e))?;
    let mut metrics = BufWriter::new(file);
    let mio = |e| RunError::io(&metrics_path, e);
    writeln!(metrics, "{CSV_HEADER}").map_err(mio)?;

    let eval_steps = config.eval_steps();
    let mut next_eval = eval_steps.iter().copied().peekable();
    let mut records = Vec::with_capacity(eval_steps.len());
    let mut last = Losses::NONE;
    let mut failure = None;
    let start = Instant::now();

    for step in 0..=config.total_steps {
        if step > 0 {
            let result = (|| -> dali_core::Result<Losses> {
                for _ in 1..config.disc_steps {
                    let real = mix.sample(config.batch_size, &mut data_rng);
                    disc_step(&mut bundle, &real, &mut latent_rng, &mut optimizers)?;
                }
                let real = mix.sample(config.batch_size, &mut data_rng);
                Ok(train_step(&mut bundle, &real, &mut latent_rng, &settings, &mut optimizers)?.into())
            })();
            match result {
                Ok(l) => last = l,
                Err(e) => {
                    if !opts.quiet {
                        eprintln!("seed {seed}: stopped at step {step}: {e}");
                    }
                    failure = Some((step - 1, e.to_string()));
                    break;
                }
            }
        }
        if next_eval.peek() == Some(&step) {
            next_eval.next();
            let mut eval = evaluate_full(&bundle, &mix, &eval_settings, &mut stream_rng(seed, Stream::Eval))?;
            eval.record.step = step;
            eval.record.losses = last;
            if config.record_wall_time {
                eval.record.wall_ms = start.elapsed().as_millis() as u64;
            }
            writeln!(metrics, "{}", eval.record.to_csv_row()).map_err(mio)?;
            metrics.flush().map_err(mio)?;
            dump_evaluation(dir, step, &eval, &bundle)?;
            if !opts.quiet {
                eprintln!(
                    "seed {seed} step {step:>6}: modes {:>2}  hq_frac {:.3}  recon_mse {:.5}  L_d {:.3}  L_g {:.3}",
                    eval.record.modes_captured,
                    eval.record.high_quality_fraction,
                    eval.record.recon_mse,
                    last.l_d,
                    last.l_g
                );
            }
            records.push(eval.record);
        }
    }
    Ok(SeedRun {
        records,
        bundle,
        failure,
    })
}

fn seed_summary(seed: u64, run: &SeedRun) -> SeedSummary {
    let last = run.records.last();
    let finite = |v: f64| v.is_finite().then_some(v);
    let completed = run.failure.is_none();
    SeedSummary {
        seed,
        completed,
        step: last.map_or(0, |r| r.step),
        modes_captured: completed.then(|| last.map(|r| r.modes_captured)).flatten(),
        high_quality_fraction: completed.then(|| last.map(|r| r.high_quality_fraction)).flatten(),
        recon_mse: completed.then(|| last.and_then(|r| finite(r.recon_mse))).flatten(),
        error: run.failure.as_ref().map(|(_, e)| e.clone()),
    }
}

/// Validates `config`, runs every seed in turn, and writes the summary.
/// A seed that fails numerically is recorded as failed and the sweep
/// continues; the summary is returned either way.
pub fn run_experiment(config: &TrainConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let config = config.clone().resolve()?;
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(|e| RunError::io(out, e))?;
    write_file(&out.join(RESOLVED_CONFIG), &config.to_json())?;

    let mut seeds = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let run = run_seed(&config, seed, &seed_dir(out, seed), opts)?;
        seeds.push(seed_summary(seed, &run));
    }
    let summary = RunSummary::from_seeds(&config, seeds);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    write_file(&out.join(SUMMARY_JSON), &json)?;
    write_file(&out.join(SUMMARY_TEXT), &summary.to_text())?;
    Ok(summary)
}

/// Parses `checkpoint_<step>` file names.
pub fn checkpoint_step(path: &Path) -> Option<u64> {
    path.file_name()?.to_str()?.strip_prefix("checkpoint_")?.parse().ok()
}

/// Parses `seed_<s>` directory names.
pub fn seed_from_dir(path: &Path) -> Option<u64> {
    path.parent()?.file_name()?.to_str()?.strip_prefix("seed_")?.parse().ok()
}

/// Loads a checkpoint into the architecture described by `config` and
/// evaluates it with the evaluation stream of `seed`. The step is taken from
/// the file name when it follows the `checkpoint_<step>` pattern.
pub fn evaluate_checkpoint(path: &Path, config: &TrainConfig, seed: u64) -> Result<MetricsRecord, RunError> {
    let config = config.clone().resolve()?;
    let file = File::open(path).map_err(|e| RunError::io(path, e))?;
    let store = read_checkpoint(std::io::BufReader::new(file))?;
    let mut bundle = ModelBundle::empty(config.model_config())?;
    bundle.load_store(&store)?;
    let mix = config.mixture.build()?;
    let mut record = evaluate(&bundle, &mix, &EvalSettings::from(&config.eval), &mut stream_rng(seed, Stream::Eval))?;
    record.step = checkpoint_step(path).unwrap_or(0);
    Ok(record)
}

/// Reads a `metrics.csv` back into records.
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        _ => return Err(RunError::Config(format!("{}: missing metrics header", path.display()))),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| MetricsRecord::from_csv_row(l).map_err(RunError::from))
        .collect()
}
