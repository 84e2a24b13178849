//! Consensus-based distributed state estimation over sensor networks whose
//! links carry fixed, known, heterogeneous transmission delays.
//!
//! The crate covers the whole pipeline: plant and network generation
//! ([`model`]), delay-augmented operators ([`augment`]), distributed
//! observability ([`observability`]), block-diagonal gain synthesis and
//! delay-tolerance analysis ([`gain`]), the message-passing estimator and its
//! augmented twin ([`estimator`]), and Monte-Carlo experiments ([`harness`]).

pub mod augment;
pub mod error;
pub mod estimator;
pub mod gain;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod model;
pub mod observability;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector, TOL};
