//! Deflated dynamics value iteration (DDVI) and deflated dynamics temporal
//! difference learning (DDTD) for tabular MDPs, together with the spectral
//! tools they rely on and an experiment harness.

pub mod deflation;
pub mod envs;
pub mod harness;
pub mod error;
pub mod linalg;
pub mod mdp;
pub mod solvers;
pub mod spectra;
pub mod td;

pub use error::{Error, Result};
