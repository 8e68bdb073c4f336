//! Data-driven Koopman and Perron-Frobenius approximations with computable
//! error certificates.

pub mod certify;
pub mod dynamics;
pub mod error;
pub mod galerkin;
pub mod io;
pub mod geometry;
pub mod linalg;
pub mod observables;
pub mod ode;
pub mod rng;
pub mod special;
pub mod surrogate;
pub mod tune;

pub use error::{Error, ErrorKind, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
