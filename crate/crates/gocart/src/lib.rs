//! Go-CART: covariate-dependent Gaussian graphical models estimated by
//! recursive dyadic partitioning of the covariate space with a sparse
//! inverse-covariance fit in each leaf.

pub mod error;
pub mod numerics;
pub mod glasso;
pub mod dpt;
pub mod dataset;
pub mod risk;
pub mod greedy;
pub mod exact;
pub mod baselines;
pub mod simdata;
pub mod evalmetrics;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
