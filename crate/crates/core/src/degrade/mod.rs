//! Simulation of the seven distortion classes (additive noise,
//! reverberation, clipping, bandwidth limitation, codec artifacts, packet
//! loss, wind noise) and their composition into training pairs.

mod ops;
mod recipe;

pub use ops::{
    add_noise, bandlimit, bandlimit_taps, clip, codec_crush, mu_law_compress, mu_law_expand, packet_loss,
    quantize_uniform, snr_db, synthesize_wind, wind_noise, LossModel, NoiseMix, PacketLossResult, WindGain,
};
pub use recipe::{
    apply_recipe, AssetBank, DegradationRecipe, DegradedPair, PairMetadata, Realized, Step, StepRecord, RANDOM_ASSET,
};
