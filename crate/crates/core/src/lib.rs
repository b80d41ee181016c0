pub mod calculus;
pub mod error;
pub mod exit_time;
pub mod fd;
pub mod feynman_kac;
pub mod io;
pub mod mode_algebra;
pub mod rng;
pub mod torus_fourier;
pub mod variable_coeff;
pub mod walk;

pub use error::{Error, Result};
