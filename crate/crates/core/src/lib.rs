//! Fixed points of tree automata on Galton–Watson trees, and whether
//! each one is realised by a deterministic classification of trees.

pub mod automata;
pub mod distmap;
pub mod error;
pub mod fixedpoints;
pub mod offspring;
pub mod pivot;
pub mod simulate;

pub use error::{Error, Result};
