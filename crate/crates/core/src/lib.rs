//! Noisy spiking actor networks for exploration in continuous control.
//!
//! The crate is organised bottom-up:
//!
//! * [`diffcore`]: a small reverse-mode autodiff tape over dense `f64` arrays.
//! * [`neurons`]: CLIF / integrated neuron dynamics, with and without noise.
//! * [`noisegen`]: colored-noise synthesis and per-episode noise bookkeeping.
//! * [`codec`]: population encoder and membrane-voltage decoder.
//! * [`actor`]: the noisy spiking actor and a plain MLP actor.
//! * [`critic`]: twin Q networks.
//! * [`envs`]: built-in deterministic control tasks.
//! * [`trainer`]: TD3 with noise-recording replay and noise reduction.
//! * [`cli`]: config, checkpoint and metrics formats plus the `nsan` tool.

pub mod actor;
pub mod cli;
pub mod codec;
pub mod critic;
pub mod diffcore;
pub mod envs;
pub mod error;
pub mod neurons;
pub mod noisegen;
pub mod trainer;

pub use error::{Error, Result};
