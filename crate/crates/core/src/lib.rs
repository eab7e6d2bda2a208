//! EOG artifact removal for single- and multi-channel EEG.
//!
//! The pipeline has an offline and an online stage:
//!
//! 1. [`lstm`]: a four-layer LSTM learns to estimate VEOG and HEOG from
//!    normalized contaminated EEG.
//! 2. [`removal`]: the estimated EOG rows are stacked under the EEG, the
//!    stack is whitened and decomposed with FastICA ([`ica`]), sources that
//!    correlate with an EOG estimate are dropped from the mixing matrix, and
//!    the remaining sources are projected back to the EEG channels.
//!
//! [`datagen`] synthesizes semi-simulated recordings (pure EEG plus scaled
//! VEOG/HEOG) so the whole chain can be checked against ground truth.

pub mod datagen;
pub mod error;
pub mod ica;
pub mod lstm;
pub mod numerics;
pub mod preprocess;
pub mod recording;
pub mod removal;

pub use error::{Error, Result};
pub use recording::{ChannelRole, Recording};
