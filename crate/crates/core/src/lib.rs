pub mod arith;
pub mod cpabe;
pub mod error;
pub mod harness;
pub mod paillier;
pub mod protocol;
pub mod vphe;

pub use error::{Error, Result};
