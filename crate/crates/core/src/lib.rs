pub mod error;
pub mod budget;
pub mod circuit;
pub mod config;
pub mod cv;
pub mod gates;
pub mod hilbert;
pub mod jch;
pub mod optim;
pub mod trap;
pub mod vqe;

pub use error::{HyqError, Result};
pub use hilbert::{HybridState, Operator, RegisterLayout, WireSpec, C64};
