//! Data engineering and verification kernels for universal speech
//! enhancement.

// Parameter checks are written as `!(x > 0.0)` on purpose: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod curate;
pub mod degrade;
pub mod dp;
pub mod dsp;
pub mod error;
pub mod metrics;
pub mod rir;
pub mod sfi;
pub mod twostage;

pub use audio::{AudioBuffer, RandomStream};
pub use curate::ManifestEntry;
pub use degrade::{DegradationRecipe, DegradedPair};
pub use dp::{DiscreteDistribution, DiscreteJointModel, DpCurvePoint};
pub use error::{Error, Result};
pub use rir::{RirDecomposition, TargetKind};
pub use sfi::{SfiParams, SpectrogramFrameGrid};
pub use twostage::{LinearLayerStack, TransportCorrector};
