//! Complex-spectrogram speech enhancement with a dual-path attention RNN
//! bottleneck, together with the signal plumbing, objective metrics and a
//! cochlear-implant (ACE) electrodogram simulator used to evaluate it.

pub mod complex_nn;
pub mod dat_rnn;
pub mod electrodogram;
pub mod error;
pub mod evaluation;
pub mod ftb;
pub mod gradcheck;
pub mod network;
pub mod params;
pub mod signal_io;
pub mod stft;
pub mod training;

pub use error::{Error, Result};
