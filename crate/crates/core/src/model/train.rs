//! One iteration of the alternating three-network game.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Matrix, Tape};
use crate::error::{Error, Result};
use crate::nn::GradMap;
use crate::optim::{AdamConfig, AdamState};
use crate::rng::standard_normal;

use super::loss::{
    disc_loss_gan, fgan_gen_loss, fgan_value, gaussian_nll, gen_loss_gan, reconstruction_loss,
};
use super::{ModelBundle, VariantKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    /// Weight of the latent reconstruction term.
    pub lambda: f64,
    /// Draw a second prior batch for the generator/encoder update instead of
    /// reusing the discriminator's.
    pub fresh_latent: bool,
}

impl TrainSettings {
    /// `λ = 1/d`.
    pub fn for_latent_dim(d: usize) -> Self {
        Self {
            lambda: 1.0 / d as f64,
            fresh_latent: false,
        }
    }
}

/// One Adam state for the discriminator and one shared by generator and encoder.
#[derive(Debug, Clone)]
pub struct Optimizers {
    pub disc: AdamState,
    pub gen_enc: AdamState,
}

impl Optimizers {
    pub fn new(config: &AdamConfig) -> Self {
        Self {
            disc: AdamState::new(config.clone()),
            gen_enc: AdamState::new(config.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub l_d: f64,
    pub l_g: f64,
    /// `λ` times the batch-mean latent negative log-likelihood; zero without an encoder.
    pub l_e: f64,
    pub l_rec: f64,
    /// Unweighted batch-mean latent negative log-likelihood; NaN without an encoder.
    pub mean_nll: f64,
}

impl StepReport {
    pub fn is_finite(&self) -> bool {
        [self.l_d, self.l_g, self.l_e, self.l_rec]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Losses and per-network gradients of one iteration, all evaluated at the
/// parameters the iteration started from.
#[derive(Debug, Clone)]
pub struct GradientSplit {
    pub report: StepReport,
    pub disc: GradMap,
    pub gen_enc: GradMap,
}

struct GenSide {
    fake: Matrix,
    l_g: f64,
    nll: Option<f64>,
    l_rec: f64,
    grads: GradMap,
}

/// Generator and encoder gradients of `L_rec`. The discriminator enters as a
/// constant: gradients pass through its layers into `G` but never reach its
/// parameters.
fn gen_side(bundle: &ModelBundle, z: &Matrix, lambda: f64) -> Result<GenSide> {
    let mut tape = Tape::new();
    let mut bound = bundle.gen_params.bind(&mut tape, true);
    let disc = bundle.disc_params.bind(&mut tape, false);
    let enc = bundle.enc_params.bind(&mut tape, true);

    let zn = tape.constant(z.clone());
    let x = bundle.generate_node(&mut tape, &bound, zn)?;
    let (d_fake, features) = bundle.discriminate_node(&mut tape, &disc, x)?;
    let l_g = match bundle.variant() {
        VariantKind::DaliF => fgan_gen_loss(&mut tape, d_fake),
        _ => gen_loss_gan(&mut tape, d_fake)?,
    };

    let (root, nll) = if bundle.variant().has_encoder() {
        let input = bundle.encoder_input(&mut tape, &disc, x, features)?;
        let post = bundle.encode_node(&mut tape, &enc, input)?;
        let nll = gaussian_nll(&mut tape, zn, post)?;
        (reconstruction_loss(&mut tape, l_g, nll, lambda)?, Some(nll))
    } else {
        (l_g, None)
    };

    tape.backward(root)?;
    bound.merge(enc);
    Ok(GenSide {
        fake: tape.value(x).clone(),
        l_g: tape.scalar(l_g),
        nll: nll.map(|n| tape.scalar(n)),
        l_rec: tape.scalar(root),
        grads: bound.gradients(&tape),
    })
}

/// Discriminator loss and gradients with generated points held constant.
pub fn disc_side(bundle: &ModelBundle, real: &Matrix, fake: &Matrix) -> Result<(f64, GradMap)> {
    let mut tape = Tape::new();
    let disc = bundle.disc_params.bind(&mut tape, true);
    let real = tape.constant(real.clone());
    let fake = tape.constant(fake.clone());
    let (d_real, _) = bundle.discriminate_node(&mut tape, &disc, real)?;
    let (d_fake, _) = bundle.discriminate_node(&mut tape, &disc, fake)?;
    let loss = match bundle.variant() {
        VariantKind::DaliF => {
            let v = fgan_value(&mut tape, d_real, d_fake)?;
            tape.scale(v, -1.0)
        }
        _ => disc_loss_gan(&mut tape, d_real, d_fake)?,
    };
    tape.backward(loss)?;
    Ok((tape.scalar(loss), disc.gradients(&tape)))
}

/// Gradients of one iteration. `z_gen` is the prior batch for the
/// generator/encoder update; `z_disc`, when given, produces the fakes the
/// discriminator sees (otherwise `z_gen` is reused).
pub fn compute_gradients(
    bundle: &ModelBundle,
    real: &Matrix,
    z_gen: &Matrix,
    z_disc: Option<&Matrix>,
    lambda: f64,
) -> Result<GradientSplit> {
    let gen = gen_side(bundle, z_gen, lambda)?;
    let fake = match z_disc {
        Some(z) => bundle.generate(z)?,
        None => gen.fake,
    };
    let (l_d, disc) = disc_side(bundle, real, &fake)?;
    let report = StepReport {
        l_d,
        l_g: gen.l_g,
        l_e: gen.nll.map_or(0.0, |n| lambda * n),
        l_rec: gen.l_rec,
        mean_nll: gen.nll.unwrap_or(f64::NAN),
    };
    Ok(GradientSplit {
        report,
        disc,
        gen_enc: gen.grads,
    })
}

/// Draws a prior batch, computes every loss, then updates the discriminator
/// on `L_d` and the generator and encoder jointly on `L_rec`.
pub fn train_step<R: Rng + ?Sized>(
    bundle: &mut ModelBundle,
    real: &Matrix,
    rng: &mut R,
    settings: &TrainSettings,
    optimizers: &mut Optimizers,
) -> Result<StepReport> {
    let n = real.nrows();
    if n < 2 {
        return Err(Error::Contract(format!("batch size must be at least 2, got {n}")));
    }
    let d = bundle.latent_dim();
    let z = standard_normal(rng, n, d);
    let z_gen = settings.fresh_latent.then(|| standard_normal(rng, n, d));
    let split = match &z_gen {
        Some(zg) => compute_gradients(bundle, real, zg, Some(&z), settings.lambda)?,
        None => compute_gradients(bundle, real, &z, None, settings.lambda)?,
    };
    if !split.report.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss at step {}: {:?}",
            optimizers.disc.steps() + 1,
            split.report
        )));
    }
    optimizers
        .disc
        .step(&mut [&mut bundle.disc_params], &split.disc)?;
    optimizers
        .gen_enc
        .step(&mut [&mut bundle.gen_params, &mut bundle.enc_params], &split.gen_enc)?;
    Ok(split.report)
}

/// An extra discriminator-only update, for schedules that train `D` more
/// often than `G` and `E`. Returns `L_d` before the update.
pub fn disc_step<R: Rng + ?Sized>(
    bundle: &mut ModelBundle,
    real: &Matrix,
    rng: &mut R,
    optimizers: &mut Optimizers,
) -> Result<f64> {
    let z = standard_normal(rng, real.nrows(), bundle.latent_dim());
    let fake = bundle.generate(&z)?;
    let (l_d, grads) = disc_side(bundle, real, &fake)?;
    if !l_d.is_finite() {
        return Err(Error::Numeric(format!("non-finite discriminator loss {l_d}")));
    }
    optimizers.disc.step(&mut [&mut bundle.disc_params], &grads)?;
    Ok(l_d)
}
