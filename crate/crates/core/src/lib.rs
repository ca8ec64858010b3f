//! Bell-inequality (CH) tests on multi-pair sources whose particles are
//! measured globally and binarized by a vote.

pub mod bell;
pub mod entanglement;
pub mod error;
pub mod fock;
pub mod numeric;
pub mod optimize;
pub mod pair;
pub mod quadrature;
pub mod spin;
pub mod study;
pub mod vote;

pub use error::{Error, Result};
