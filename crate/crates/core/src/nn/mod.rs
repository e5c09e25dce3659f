//! Generator and discriminator architectures, plus the small building blocks
//! and optimizer they share.

pub(crate) mod backbone;
mod discriminator;
mod generator;
pub mod layers;
mod optim;
mod params;

pub use discriminator::{receptive_field, Discriminator, DiscriminatorSpec, PatchDiscriminator};
pub use generator::{
    ExpressionGenerator, GeneratorSpec, LandmarkGenerator, LandmarkOutput, DECODER_DROPOUT, DROPOUT_BLOCKS,
    ENCODER_LEAKY_SLOPE,
};
pub use layers::ForwardCtx;
pub use optim::{Adam, AdamConfig};
pub use params::ParamStore;
