//! Side-by-side mode coverage of several variants on the same mixture.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::TrainConfig;
use crate::error::RunError;
use crate::runner::{run_experiment, RunOptions, RunSummary, RESOLVED_CONFIG};

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

fn stat_cell(s: Option<crate::runner::Stat>, scale: f64, p: usize) -> (String, String) {
    match s {
        Some(s) => (format!("{:.p$}", s.mean * scale), format!("{:.p$}", s.std * scale)),
        None => ("NaN".into(), "NaN".into()),
    }
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<10} {:>6} {:>16} {:>18}", "variant", "seeds", "modes", "high quality %");
        for row in &self.rows {
            let a = &row.summary.aggregate;
            let (mm, ms) = stat_cell(a.modes_captured, 1.0, 2);
            let (hm, hs) = stat_cell(a.high_quality_fraction, 100.0, 1);
            let ok = row.summary.seeds.len() - row.summary.failed();
            let _ = writeln!(
                s,
                "{:<10} {:>6} {:>16} {:>18}",
                row.label,
                format!("{ok}/{}", row.summary.seeds.len()),
                format!("{mm} ± {ms}"),
                format!("{hm} ± {hs}")
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,seeds_ok,modes_mean,modes_std,hq_frac_mean,hq_frac_std\n");
        for row in &self.rows {
            let a = &row.summary.aggregate;
            let (mm, ms) = stat_cell(a.modes_captured, 1.0, 4);
            let (hm, hs) = stat_cell(a.high_quality_fraction, 1.0, 4);
            let ok = row.summary.seeds.len() - row.summary.failed();
            let _ = writeln!(s, "{},{ok},{mm},{ms},{hm},{hs}", row.label);
        }
        s
    }
}

/// Reuses a finished run whose resolved config matches exactly.
fn load_existing(config: &TrainConfig) -> Option<RunSummary> {
    let resolved = fs::read_to_string(config.output_dir.join(RESOLVED_CONFIG)).ok()?;
    if resolved != config.to_json() {
        return None;
    }
    RunSummary::load(&config.output_dir).ok()
}

/// Runs (or loads) each config and tabulates final modes captured and
/// high-quality fraction. All configs must share one mixture.
pub fn compare_variants(configs: &[TrainConfig], opts: &RunOptions) -> Result<Comparison, RunError> {
    let Some(first) = configs.first() else {
        return Err(RunError::Config("compare needs at least one config".into()));
    };
    let mut resolved = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        if c.mixture != first.mixture {
            return Err(RunError::Config(format!(
                "config {} uses mixture {:?}, config 1 uses {:?}",
                i + 1,
                c.mixture,
                first.mixture
            )));
        }
        resolved.push(c.clone().resolve()?);
    }
    for (i, a) in resolved.iter().enumerate() {
        if resolved[..i].iter().any(|b| b.output_dir == a.output_dir) {
            return Err(RunError::Config(format!(
                "two configs write to {}",
                a.output_dir.display()
            )));
        }
    }

    let mut rows = Vec::with_capacity(resolved.len());
    for config in &resolved {
        let summary = match load_existing(config) {
            Some(s) => s,
            None => run_experiment(config, opts)?,
        };
        rows.push(ComparisonRow {
            label: config.variant.label().to_string(),
            summary,
        });
    }
    Ok(Comparison { rows })
}

pub fn write_comparison(cmp: &Comparison, dir: &Path) -> Result<(), RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    for (name, body) in [("comparison.txt", cmp.to_text()), ("comparison.csv", cmp.to_csv())] {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| RunError::io(&path, e))?;
    }
    Ok(())
}
