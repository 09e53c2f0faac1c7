//! Fixtures shared by the benchmarks.

use dali_core::rng::{stream_rng, Stream};
use dali_core::{
    AdamConfig, Matrix, MixtureConfig, ModelBundle, ModelConfig, Optimizers, TrainSettings,
    VariantKind,
};

pub struct Fixture {
    pub bundle: ModelBundle,
    pub real: Matrix,
    pub optimizers: Optimizers,
    pub settings: TrainSettings,
}

/// Default architecture, a 256-point batch from the default grid.
pub fn fixture(variant: VariantKind) -> Fixture {
    let config = ModelConfig::new(variant, 2);
    let bundle = ModelBundle::new(config, &mut stream_rng(0, Stream::Init)).expect("default config is valid");
    let mix = MixtureConfig::default().build().expect("default mixture is valid");
    let real = mix.sample(256, &mut stream_rng(0, Stream::Data));
    Fixture {
        bundle,
        real,
        optimizers: Optimizers::new(&AdamConfig::default()),
        settings: TrainSettings::for_latent_dim(2),
    }
}
