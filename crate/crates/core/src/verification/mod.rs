//! Independent checks on computed solutions.

pub mod convergence;
pub mod kkt;
pub mod oracle;
pub mod properties;
pub mod residual;
