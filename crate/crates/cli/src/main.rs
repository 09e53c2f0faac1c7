use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dali_cli::runner::seed_from_dir;
use dali_cli::{compare_variants, evaluate_checkpoint, run_experiment, write_comparison};
use dali_cli::{RunError, RunOptions, TrainConfig};
use dali_core::metrics::CSV_HEADER;
use dali_core::VariantKind;

#[derive(Parser)]
#[command(name = "dali", version, about = "Train and evaluate generators on the 2D grid mixture")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Training steps; eval_every is lowered to match if it is larger.
    #[arg(long)]
    steps: Option<u64>,
    /// Model variant: dali, dali_l2, dali_f or gan.
    #[arg(long)]
    variant: Option<VariantKind>,
    /// No progress output on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write metrics, dumps and checkpoints.
    Train {
        config: PathBuf,
        /// Output directory (overrides the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a saved checkpoint and print one metrics row.
    Eval {
        checkpoint: PathBuf,
        config: PathBuf,
        /// Seed of the evaluation stream; defaults to the checkpoint's seed_<s> directory.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        variant: Option<VariantKind>,
    },
    /// Run (or reuse) several configs and tabulate their mode coverage.
    Compare {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Directory for the per-variant runs and the comparison tables.
        #[arg(long, default_value = "compare")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn apply(mut c: TrainConfig, o: &Overrides) -> TrainConfig {
    if let Some(seed) = o.seed {
        c.seeds = vec![seed];
    }
    if let Some(steps) = o.steps {
        c.total_steps = steps;
        if steps > 0 {
            c.eval_every = c.eval_every.min(steps);
        }
    }
    if let Some(v) = o.variant {
        c.variant = v;
    }
    c
}

fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Train {
            config,
            out,
            overrides,
        } => {
            let mut c = apply(TrainConfig::load(&config)?, &overrides);
            if let Some(out) = out {
                c.output_dir = out;
            }
            let summary = run_experiment(&c, &RunOptions { quiet: overrides.quiet })?;
            print!("{}", summary.to_text());
            match summary.failed() {
                0 => Ok(()),
                failed => Err(RunError::SeedsFailed {
                    failed,
                    total: summary.seeds.len(),
                }),
            }
        }
        Command::Eval {
            checkpoint,
            config,
            seed,
            variant,
        } => {
            let mut c = TrainConfig::load(&config)?;
            if let Some(v) = variant {
                c.variant = v;
            }
            let seed = seed
                .or_else(|| seed_from_dir(&checkpoint))
                .or_else(|| c.seeds.first().copied())
                .unwrap_or(0);
            let record = evaluate_checkpoint(&checkpoint, &c, seed)?;
            println!("{CSV_HEADER}");
            println!("{}", record.to_csv_row());
            Ok(())
        }
        Command::Compare {
            configs,
            out,
            overrides,
        } => {
            let mut loaded = Vec::with_capacity(configs.len());
            let mut used: Vec<String> = Vec::new();
            for path in &configs {
                let mut c = apply(TrainConfig::load(path)?, &overrides);
                let base = c.variant.label().to_ascii_lowercase();
                let mut name = base.clone();
                let mut k = 2;
                while used.contains(&name) {
                    name = format!("{base}_{k}");
                    k += 1;
                }
                c.output_dir = out.join(&name);
                used.push(name);
                loaded.push(c);
            }
            let cmp = compare_variants(&loaded, &RunOptions { quiet: overrides.quiet })?;
            write_comparison(&cmp, &out)?;
            print!("{}", cmp.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
