pub mod aggregation;
pub mod backbone;
pub mod costvol;
pub mod data;
pub mod dop;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod regression;
pub mod selftest;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Graph, Real, Tensor, Var};
