//! Capacity of the binomial channel `Y ~ Binomial(n, X)` with input `X` in
//! `[0, 1]`: the channel law, input/output distributions, information
//! density and its derivatives, a certified capacity solver, closed-form
//! bounds and exact small-`n` reference solutions.

pub mod bounds;
pub mod cli;
pub mod density;
pub mod distributions;
pub mod error;
pub mod kernel;
pub mod oracles;
pub mod report;
pub mod solver;

pub use distributions::{DiscreteInput, OutputPmf};
pub use error::{Error, Result};
pub use kernel::ChannelSpec;
