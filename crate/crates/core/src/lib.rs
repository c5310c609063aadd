//! Building blocks for a recognition-synthesis singing voice conversion
//! system.
//!
//! Audio enters through [`audio`], is analysed on a shared 10 ms frame grid
//! by [`features`] and [`pitch`], and is augmented by the speaker
//! perturbations in [`perturb`]. [`pitchconv`] maps log-F0 contours between
//! speakers, [`diffusion`] holds the DDPM machinery (schedule, sampler,
//! classifier-free guidance, conditional layer normalization and a small
//! trainable denoiser), and [`contrastive`] the perturbation-invariance
//! objective. [`corpus`] composes training sets and segments long
//! recordings, [`eval`] provides similarity metrics, and [`svcf`] is the
//! tensor file format shared by all of them.

pub mod audio;
pub mod contrastive;
pub mod corpus;
pub mod diffusion;
pub mod error;
pub mod eval;
pub mod features;
pub mod fsutil;
pub mod perturb;
pub mod pitch;
pub mod pitchconv;
pub mod svcf;
pub mod synth;

pub use audio::{AudioClip, CANONICAL_RATE};
pub use error::{Error, Result};
pub use features::FrameConfig;
pub use pitch::F0Track;
pub use pitchconv::{ConversionPolicy, SpeakerF0Stats};
pub use svcf::Tensor;
