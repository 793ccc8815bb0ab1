//! G2-structure tensor algebra and the Laplacian flow of closed G2
//! structures on flat 7-tori.
//!
//! Fields live on a [`lattice::Lattice`] with one to three active axes;
//! every field is constant along the remaining axes while all pointwise
//! algebra stays fully seven dimensional.

pub mod diagnostics;
pub mod error;
pub mod exterior;
pub mod flow;
pub mod g2algebra;
pub mod lattice;
pub mod riemann;

pub use error::{Error, Result};
