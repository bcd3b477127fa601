//! HiFiNet: hierarchical frequency-decomposition representation learning for
//! road networks, plus the graph-spectral toolkit used to analyse it.

pub mod config;
pub mod error;
pub mod eval;
pub mod freqdecomp;
pub mod hierarchy;
pub mod model;
pub mod persist;
pub mod roadnet;
pub mod spectral;
pub mod sweep;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
