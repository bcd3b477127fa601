//! Dense matrices, a reverse-mode tape over them, and parameter storage.

mod gradcheck;
mod init;
mod matrix;
mod params;
mod tape;

pub use gradcheck::{grad_check, Coverage, GradCheckReport};
pub use init::{normal, xavier_uniform};
pub use matrix::Matrix;
pub use params::{Bound, Param, ParamStore};
pub use tape::{Gradients, Tape, Unary, Var};

/// Epsilon used by every layer normalisation in the model.
pub const LAYER_NORM_EPS: f64 = 1e-5;
