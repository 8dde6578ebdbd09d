//! Learned lower-envelope curvature priors for binary labelings, with
//! TRW-S based MAP inference and the surrounding tooling.

pub mod error;
pub mod inference;
pub mod io;
pub mod learning;
pub mod lp;
pub mod model;
pub mod pipeline;
pub mod shapes;
pub mod tasks;

pub use error::{Error, LpFailure, Result};
pub use model::*;
