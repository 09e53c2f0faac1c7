//! Mode-coverage and reconstruction metrics on the grid mixture.
//!
//! A generated point is *high quality* when it lies within `k_sigma`
//! standard deviations of its nearest mixture mean. A mode is *captured*
//! when it is the nearest mode of at least one high-quality point.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::autodiff::Matrix;
use crate::error::{Error, Result};
use crate::model::{ModelBundle, StepReport};
use crate::rng::standard_normal;
use crate::synthdata::GridMixture;

pub const DEFAULT_K_SIGMA: f64 = 3.0;

/// Column order of [`MetricsRecord::to_csv_row`].
pub const CSV_HEADER: &str = "step,modes,hq_frac,recon_mse,mean_nll,L_d,L_g,L_e,L_rec,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub l_d: f64,
    pub l_g: f64,
    pub l_e: f64,
    pub l_rec: f64,
}

impl Losses {
    /// Placeholder for evaluations that precede any training step.
    pub const NONE: Losses = Losses {
        l_d: f64::NAN,
        l_g: f64::NAN,
        l_e: f64::NAN,
        l_rec: f64::NAN,
    };
}

impl From<StepReport> for Losses {
    fn from(r: StepReport) -> Self {
        Self {
            l_d: r.l_d,
            l_g: r.l_g,
            l_e: r.l_e,
            l_rec: r.l_rec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub modes_captured: usize,
    pub high_quality_fraction: f64,
    /// NaN for models without an encoder.
    pub recon_mse: f64,
    /// NaN for models without an encoder.
    pub mean_nll: f64,
    pub losses: Losses,
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        let l = &self.losses;
        write!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            self.step,
            self.modes_captured,
            self.high_quality_fraction,
            self.recon_mse,
            self.mean_nll,
            l.l_d,
            l.l_g,
            l.l_e,
            l.l_rec,
            self.wall_ms
        )
        .expect("writing to a String");
        s
    }

    pub fn from_csv_row(row: &str) -> Result<Self> {
        let fields: Vec<&str> = row.trim().split(',').collect();
        if fields.len() != 10 {
            return Err(Error::Contract(format!(
                "metrics row needs 10 fields, got {}",
                fields.len()
            )));
        }
        let float = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Contract(format!("bad number `{}` in column {i}", fields[i])))
        };
        let int = |i: usize| -> Result<u64> {
            fields[i]
                .parse()
                .map_err(|_| Error::Contract(format!("bad integer `{}` in column {i}", fields[i])))
        };
        Ok(Self {
            step: int(0)?,
            modes_captured: int(1)? as usize,
            high_quality_fraction: float(2)?,
            recon_mse: float(3)?,
            mean_nll: float(4)?,
            losses: Losses {
                l_d: float(5)?,
                l_g: float(6)?,
                l_e: float(7)?,
                l_rec: float(8)?,
            },
            wall_ms: int(9)?,
        })
    }

    /// Equality on everything an evaluation computes, ignoring losses and timing.
    pub fn same_evaluation(&self, other: &Self) -> bool {
        let eq = |a: f64, b: f64| a == b || (a.is_nan() && b.is_nan());
        self.modes_captured == other.modes_captured
            && self.high_quality_fraction == other.high_quality_fraction
            && eq(self.recon_mse, other.recon_mse)
            && eq(self.mean_nll, other.mean_nll)
    }
}

fn row(points: &Matrix, i: usize) -> [f64; 2] {
    [points[[i, 0]], points[[i, 1]]]
}

pub fn high_quality_mask(samples: &Matrix, mix: &GridMixture, k_sigma: f64) -> Vec<bool> {
    let radius = k_sigma * mix.sigma();
    (0..samples.nrows())
        .map(|i| mix.nearest_mode(row(samples, i)).1 <= radius)
        .collect()
}

/// Number of distinct nearest modes among high-quality samples.
pub fn modes_captured(samples: &Matrix, mix: &GridMixture, k_sigma: f64) -> usize {
    let radius = k_sigma * mix.sigma();
    (0..samples.nrows())
        .filter_map(|i| {
            let (k, d) = mix.nearest_mode(row(samples, i));
            (d <= radius).then_some(k)
        })
        .collect::<BTreeSet<_>>()
        .len()
}

pub fn high_quality_fraction(samples: &Matrix, mix: &GridMixture, k_sigma: f64) -> f64 {
    if samples.nrows() == 0 {
        return 0.0;
    }
    let hq = high_quality_mask(samples, mix, k_sigma)
        .into_iter()
        .filter(|&b| b)
        .count();
    hq as f64 / samples.nrows() as f64
}

/// Mean squared Euclidean distance between rows.
pub fn mean_squared_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            op: "mean squared distance",
            left: a.dim(),
            right: b.dim(),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::Contract("need at least one point".into()));
    }
    let total: f64 = (a - b).mapv(|v| v * v).sum();
    Ok(total / a.nrows() as f64)
}

/// `(1/m) Σ ‖x_i − G(μ(x_i))‖²`.
pub fn recon_mse(bundle: &ModelBundle, test: &Matrix) -> Result<f64> {
    let rec = bundle.reconstruct(test)?;
    mean_squared_distance(test, &rec)
}

/// Fraction of `x` whose reconstruction lands within `k_sigma` standard
/// deviations of the mean of the mode nearest to `x`.
pub fn reconstruction_faithfulness(
    bundle: &ModelBundle,
    mix: &GridMixture,
    x: &Matrix,
    k_sigma: f64,
) -> Result<f64> {
    let rec = bundle.reconstruct(x)?;
    let radius = k_sigma * mix.sigma();
    let hits = (0..x.nrows())
        .filter(|&i| {
            let m = mix.mean(mix.nearest_mode(row(x, i)).0);
            let r = row(&rec, i);
            ((r[0] - m[0]).powi(2) + (r[1] - m[1]).powi(2)).sqrt() <= radius
        })
        .count();
    Ok(hits as f64 / x.nrows().max(1) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub n_gen: usize,
    pub test_m: usize,
    pub k_sigma: f64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            n_gen: 2500,
            test_m: 1000,
            k_sigma: DEFAULT_K_SIGMA,
        }
    }
}

/// Everything one evaluation produced, for dumping alongside the record.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub record: MetricsRecord,
    pub samples: Matrix,
    pub test: Matrix,
    /// `G(μ(x))` for each test point; absent without an encoder.
    pub recon: Option<Matrix>,
}

/// Generates `n_gen` points from the prior and scores them; reconstruction
/// error uses `test_m` fresh mixture samples. The prior batch is drawn before
/// the test set.
pub fn evaluate<R: Rng + ?Sized>(
    bundle: &ModelBundle,
    mix: &GridMixture,
    settings: &EvalSettings,
    rng: &mut R,
) -> Result<MetricsRecord> {
    Ok(evaluate_full(bundle, mix, settings, rng)?.record)
}

pub fn evaluate_full<R: Rng + ?Sized>(
    bundle: &ModelBundle,
    mix: &GridMixture,
    settings: &EvalSettings,
    rng: &mut R,
) -> Result<Evaluation> {
    let z = standard_normal(rng, settings.n_gen, bundle.latent_dim());
    let samples = bundle.generate(&z)?;
    let test = mix.sample(settings.test_m, rng);
    let (recon, recon_err, nll) = if bundle.variant().has_encoder() {
        let (recon, err) = if settings.test_m > 0 {
            let rec = bundle.reconstruct(&test)?;
            let err = mean_squared_distance(&test, &rec)?;
            (Some(rec), err)
        } else {
            (None, f64::NAN)
        };
        let nll = if settings.n_gen > 0 {
            bundle.latent_nll(&z)?
        } else {
            f64::NAN
        };
        (recon, err, nll)
    } else {
        (None, f64::NAN, f64::NAN)
    };
    let record = MetricsRecord {
        step: 0,
        modes_captured: modes_captured(&samples, mix, settings.k_sigma),
        high_quality_fraction: high_quality_fraction(&samples, mix, settings.k_sigma),
        recon_mse: recon_err,
        mean_nll: nll,
        losses: Losses::NONE,
        wall_ms: 0,
    };
    Ok(Evaluation {
        record,
        samples,
        test,
        recon,
    })
}
