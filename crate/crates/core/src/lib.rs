//! Microcanonical entropies, canonical free energies, equilibrium macrostate
//! sets and ensemble (non)equivalence for finite mean-field models.

pub mod classify;
pub mod cli;
pub mod equilibria;
pub mod error;
pub(crate) mod floats;
pub mod lft;
pub mod model;
pub mod models;
pub mod sampler;
pub(crate) mod solver;
pub mod thermo;

pub use error::{Error, Result};
pub use model::{Macrostate, Model};
