//! Lévy process simulation with exact jump ledgers, jump-adapted solutions
//! of `dX = σ(X₋) dL`, and Monte Carlo checks of short-time scaling laws on
//! geometric time grids.

pub mod lab;
pub mod levy;
pub mod par;
pub mod paths;
pub mod quad;
pub mod rng;
pub mod sde;
pub mod stats;
