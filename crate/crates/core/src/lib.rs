//! Tail behaviour of randomly weighted series `X = sum_j A_j Z_j` with
//! regularly varying noise: model constructors, moment-condition checks,
//! limit constants and Monte Carlo verification.

// `!(x > 0.0)` style guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod exec;
pub mod law;
pub mod measure;
pub mod models;
pub mod rng;
mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use exec::Exec;
pub use law::{LawFamily, LawSpec, MeanMode, RegVarLaw, SpectralAtom};
pub use measure::{LimitMeasure, Region, TailSet};
pub use rng::StreamKey;
pub use stats::MeanEstimate;
