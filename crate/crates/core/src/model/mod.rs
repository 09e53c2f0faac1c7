//! Generator, discriminator and encoder bundle, plus inference.
//!
//! The generator maps prior draws `z ~ N(0, I_d)` to data space
//! deterministically. The encoder outputs a diagonal Gaussian `q(z|x)`; when
//! feature sharing is on it reads the discriminator's penultimate hidden layer
//! instead of raw data, and never updates those shared layers.

pub mod loss;
mod train;

pub use loss::{
    disc_loss_gan, fgan_gen_loss, fgan_value, gaussian_nll, gen_loss_gan, prior_log_constant,
    reconstruction_loss, PosteriorNodes,
};
pub use train::{compute_gradients, disc_side, disc_step, train_step, GradientSplit, Optimizers, StepReport, TrainSettings};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Matrix, NodeId, Tape};
use crate::error::{Error, Result};
use crate::nn::{init_into, mlp_forward, BoundParams, MlpSpec, ParamStore};
use crate::rng::standard_normal;

/// Bounds applied to the encoder's log-variance output.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    /// GAN-style adversarial game plus latent reconstruction.
    Dali,
    /// Identity posterior covariance.
    DaliL2,
    /// KL f-divergence game with an identity-headed critic.
    DaliF,
    /// Plain GAN, no encoder.
    Gan,
}

impl VariantKind {
    pub fn has_encoder(self) -> bool {
        self != VariantKind::Gan
    }

    pub fn label(self) -> &'static str {
        match self {
            VariantKind::Dali => "DALI",
            VariantKind::DaliL2 => "DALI-l2",
            VariantKind::DaliF => "DALI-f",
            VariantKind::Gan => "GAN",
        }
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dali" => Ok(VariantKind::Dali),
            "dali_l2" => Ok(VariantKind::DaliL2),
            "dali_f" => Ok(VariantKind::DaliF),
            "gan" => Ok(VariantKind::Gan),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Layer widths and activations. Input/output widths are implied by the data
/// and latent dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub generator_hidden: Vec<usize>,
    pub generator_activation: Activation,
    pub discriminator_hidden: Vec<usize>,
    pub discriminator_activation: Activation,
    /// Encoder layers on top of the shared discriminator features.
    pub encoder_hidden: Vec<usize>,
    /// Encoder layers on raw data when sharing is off.
    pub encoder_trunk_hidden: Vec<usize>,
    pub encoder_activation: Activation,
    pub share_features: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            generator_hidden: vec![128, 128],
            generator_activation: Activation::Relu,
            discriminator_hidden: vec![128, 128],
            discriminator_activation: Activation::LeakyRelu(0.2),
            encoder_hidden: vec![64],
            encoder_trunk_hidden: vec![128, 64],
            encoder_activation: Activation::LeakyRelu(0.2),
            share_features: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub variant: VariantKind,
    pub latent_dim: usize,
    pub data_dim: usize,
    pub arch: ArchConfig,
}

impl ModelConfig {
    pub fn new(variant: VariantKind, latent_dim: usize) -> Self {
        Self {
            variant,
            latent_dim,
            data_dim: 2,
            arch: ArchConfig::default(),
        }
    }
}

/// Encoder architecture: trunk followed by separate mean and log-variance heads.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub trunk: Option<MlpSpec>,
    pub mu_head: MlpSpec,
    /// Absent when the covariance is fixed to the identity.
    pub log_var_head: Option<MlpSpec>,
}

impl EncoderSpec {
    fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut v = Vec::new();
        if let Some(t) = &self.trunk {
            v.extend(t.param_shapes());
        }
        v.extend(self.mu_head.param_shapes());
        if let Some(h) = &self.log_var_head {
            v.extend(h.param_shapes());
        }
        v
    }
}

/// Encoder output as plain arrays.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Matrix,
    /// Already clamped to `[LOG_VAR_MIN, LOG_VAR_MAX]`.
    pub log_var: Matrix,
}

impl GaussianPosterior {
    pub fn sigma2(&self) -> Matrix {
        self.log_var.mapv(f64::exp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Network {
    Generator,
    Discriminator,
    Encoder,
}

/// The three networks and their parameters.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub generator: MlpSpec,
    pub discriminator: MlpSpec,
    pub encoder: Option<EncoderSpec>,
    pub gen_params: ParamStore,
    pub disc_params: ParamStore,
    pub enc_params: ParamStore,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = Vec::with_capacity(hidden.len() + 2);
    w.push(input);
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl ModelBundle {
    /// Builds the architecture and draws initial parameters.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let mut bundle = Self::empty(config)?;
        init_into(&bundle.generator, rng, &mut bundle.gen_params);
        init_into(&bundle.discriminator, rng, &mut bundle.disc_params);
        if let Some(enc) = &bundle.encoder {
            if let Some(trunk) = &enc.trunk {
                init_into(trunk, rng, &mut bundle.enc_params);
            }
            init_into(&enc.mu_head, rng, &mut bundle.enc_params);
            if let Some(h) = &enc.log_var_head {
                init_into(h, rng, &mut bundle.enc_params);
            }
        }
        Ok(bundle)
    }

    /// Architecture only, with empty parameter stores.
    pub fn empty(config: ModelConfig) -> Result<Self> {
        let ModelConfig {
            variant,
            latent_dim,
            data_dim,
            ref arch,
        } = config;
        if latent_dim == 0 || data_dim == 0 {
            return Err(Error::Config("latent and data dimensions must be positive".into()));
        }
        let generator = MlpSpec::new(
            "generator",
            widths(latent_dim, &arch.generator_hidden, data_dim),
            arch.generator_activation,
            Activation::Identity,
        )?;
        let head = match variant {
            VariantKind::DaliF => Activation::Identity,
            _ => Activation::Sigmoid,
        };
        let discriminator = MlpSpec::new(
            "discriminator",
            widths(data_dim, &arch.discriminator_hidden, 1),
            arch.discriminator_activation,
            head,
        )?;
        if arch.share_features && arch.discriminator_hidden.is_empty() {
            return Err(Error::Config(
                "feature sharing needs at least one discriminator hidden layer".into(),
            ));
        }

        let encoder = if variant.has_encoder() {
            let (input, hidden) = if arch.share_features {
                (*arch.discriminator_hidden.last().expect("checked"), &arch.encoder_hidden)
            } else {
                (data_dim, &arch.encoder_trunk_hidden)
            };
            let trunk = if hidden.is_empty() {
                None
            } else {
                let mut w = vec![input];
                w.extend_from_slice(hidden);
                // the trunk's last layer is a hidden representation, so it keeps
                // the hidden activation
                Some(MlpSpec::new(
                    "encoder.trunk",
                    w,
                    arch.encoder_activation,
                    arch.encoder_activation,
                )?)
            };
            let feat = hidden.last().copied().unwrap_or(input);
            let mu_head = MlpSpec::new(
                "encoder.mu",
                vec![feat, latent_dim],
                Activation::Identity,
                Activation::Identity,
            )?;
            let log_var_head = if variant == VariantKind::DaliL2 {
                None
            } else {
                Some(MlpSpec::new(
                    "encoder.log_var",
                    vec![feat, latent_dim],
                    Activation::Identity,
                    Activation::Identity,
                )?)
            };
            Some(EncoderSpec {
                trunk,
                mu_head,
                log_var_head,
            })
        } else {
            None
        };

        Ok(Self {
            config,
            generator,
            discriminator,
            encoder,
            gen_params: ParamStore::new(),
            disc_params: ParamStore::new(),
            enc_params: ParamStore::new(),
        })
    }

    pub fn variant(&self) -> VariantKind {
        self.config.variant
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn share_features(&self) -> bool {
        self.config.arch.share_features
    }

    pub fn params(&self, net: Network) -> &ParamStore {
        match net {
            Network::Generator => &self.gen_params,
            Network::Discriminator => &self.disc_params,
            Network::Encoder => &self.enc_params,
        }
    }

    pub fn params_mut(&mut self, net: Network) -> &mut ParamStore {
        match net {
            Network::Generator => &mut self.gen_params,
            Network::Discriminator => &mut self.disc_params,
            Network::Encoder => &mut self.enc_params,
        }
    }

    /// Expected `(name, rows, cols)` of every parameter across all networks.
    pub fn param_shapes(&self) -> Vec<(String, usize, usize)> {
        let mut v = self.generator.param_shapes();
        v.extend(self.discriminator.param_shapes());
        if let Some(e) = &self.encoder {
            v.extend(e.param_shapes());
        }
        v
    }

    /// All parameters in one store, for checkpointing.
    pub fn to_store(&self) -> ParamStore {
        let mut all = self.gen_params.clone();
        all.extend(self.disc_params.clone());
        all.extend(self.enc_params.clone());
        all
    }

    /// Replaces every parameter from a combined store, checking shapes
    /// against the architecture.
    pub fn load_store(&mut self, store: &ParamStore) -> Result<()> {
        let shapes = self.param_shapes();
        store.check_shapes(&shapes)?;
        if store.len() != shapes.len() {
            return Err(Error::Contract(format!(
                "checkpoint has {} entries, architecture expects {}",
                store.len(),
                shapes.len()
            )));
        }
        self.gen_params = store.subset("generator.");
        self.disc_params = store.subset("discriminator.");
        self.enc_params = store.subset("encoder.");
        Ok(())
    }

    fn require_encoder(&self) -> Result<&EncoderSpec> {
        self.encoder.as_ref().ok_or_else(|| {
            Error::Unsupported(format!(
                "variant {} has no encoder",
                self.variant().label()
            ))
        })
    }

    /// `G(z)` on the tape.
    pub fn generate_node(&self, tape: &mut Tape, params: &BoundParams, z: NodeId) -> Result<NodeId> {
        Ok(mlp_forward(&self.generator, params, z, tape)?.output)
    }

    /// Discriminator output and its penultimate features.
    pub fn discriminate_node(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        x: NodeId,
    ) -> Result<(NodeId, Option<NodeId>)> {
        let f = mlp_forward(&self.discriminator, params, x, tape)?;
        Ok((f.output, f.hiddens.last().copied()))
    }

    /// Encoder on either shared features or raw data, depending on the
    /// sharing flag. Log-variance is clamped; the identity-covariance variant
    /// yields a constant zero log-variance.
    pub fn encode_node(
        &self,
        tape: &mut Tape,
        params: &BoundParams,
        input: NodeId,
    ) -> Result<PosteriorNodes> {
        let enc = self.require_encoder()?;
        let h = match &enc.trunk {
            Some(trunk) => mlp_forward(trunk, params, input, tape)?.output,
            None => input,
        };
        let mu = mlp_forward(&enc.mu_head, params, h, tape)?.output;
        let log_var = match &enc.log_var_head {
            Some(head) => {
                let raw = mlp_forward(head, params, h, tape)?.output;
                tape.clamp(raw, LOG_VAR_MIN, LOG_VAR_MAX)
            }
            None => {
                let shape = tape.value(mu).raw_dim();
                tape.constant(Matrix::zeros(shape))
            }
        };
        Ok(PosteriorNodes { mu, log_var })
    }

    /// Encoder input for data `x`: shared discriminator features or `x` itself.
    pub fn encoder_input(
        &self,
        tape: &mut Tape,
        disc: &BoundParams,
        x: NodeId,
        features: Option<NodeId>,
    ) -> Result<NodeId> {
        if !self.share_features() {
            return Ok(x);
        }
        match features {
            Some(f) => Ok(f),
            None => Ok(self
                .discriminate_node(tape, disc, x)?
                .1
                .expect("sharing requires a discriminator hidden layer")),
        }
    }

    /// Maps latent codes to data space.
    pub fn generate(&self, z: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let g = self.gen_params.bind(&mut tape, false);
        let z = tape.constant(z.clone());
        let x = self.generate_node(&mut tape, &g, z)?;
        Ok(tape.value(x).clone())
    }

    /// Raw discriminator output.
    pub fn discriminate(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let d = self.disc_params.bind(&mut tape, false);
        let x = tape.constant(x.clone());
        let (out, _) = self.discriminate_node(&mut tape, &d, x)?;
        Ok(tape.value(out).clone())
    }

    /// `q(z|x)` for each row of `x`.
    pub fn posterior(&self, x: &Matrix) -> Result<GaussianPosterior> {
        self.require_encoder()?;
        let mut tape = Tape::new();
        let d = self.disc_params.bind(&mut tape, false);
        let e = self.enc_params.bind(&mut tape, false);
        let x = tape.constant(x.clone());
        let input = self.encoder_input(&mut tape, &d, x, None)?;
        let post = self.encode_node(&mut tape, &e, input)?;
        Ok(GaussianPosterior {
            mu: tape.value(post.mu).clone(),
            log_var: tape.value(post.log_var).clone(),
        })
    }

    /// Conditional-mean latent code `μ(x)`.
    pub fn infer_latent(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.posterior(x)?.mu)
    }

    /// `G(μ(x))`.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix> {
        let mu = self.infer_latent(x)?;
        self.generate(&mu)
    }

    /// Draws `k` codes from `q(z|x)` for a single point and maps each through `G`.
    pub fn sample_posterior<R: Rng + ?Sized>(&self, x: [f64; 2], k: usize, rng: &mut R) -> Result<Matrix> {
        self.sample_posterior_latents(x, k, rng)
            .and_then(|z| self.generate(&z))
    }

    /// The `k` latent draws behind [`ModelBundle::sample_posterior`].
    pub fn sample_posterior_latents<R: Rng + ?Sized>(
        &self,
        x: [f64; 2],
        k: usize,
        rng: &mut R,
    ) -> Result<Matrix> {
        if k == 0 {
            return Err(Error::Contract("posterior sample count must be at least 1".into()));
        }
        let post = self.posterior(&Matrix::from_shape_vec((1, 2), x.to_vec()).expect("1x2"))?;
        let d = self.latent_dim();
        let eps = standard_normal(rng, k, d);
        Ok(Matrix::from_shape_fn((k, d), |(i, j)| {
            post.mu[[0, j]] + (0.5 * post.log_var[[0, j]]).exp() * eps[[i, j]]
        }))
    }

    /// Batch-mean negative log-likelihood of `z` under `q(z | G(z))`.
    pub fn latent_nll(&self, z: &Matrix) -> Result<f64> {
        self.require_encoder()?;
        let mut tape = Tape::new();
        let g = self.gen_params.bind(&mut tape, false);
        let d = self.disc_params.bind(&mut tape, false);
        let e = self.enc_params.bind(&mut tape, false);
        let zn = tape.constant(z.clone());
        let x = self.generate_node(&mut tape, &g, zn)?;
        let input = self.encoder_input(&mut tape, &d, x, None)?;
        let post = self.encode_node(&mut tape, &e, input)?;
        let nll = gaussian_nll(&mut tape, zn, post)?;
        Ok(tape.scalar(nll))
    }
}
