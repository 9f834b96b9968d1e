//! Slow, obviously-correct reference implementations. Each function
//! recomputes its quantity straight from the definition so the production
//! code can be checked against it.

pub mod compare;
pub mod features;
pub mod filter;
pub mod linalg;
pub mod stats;
pub mod scenes;
pub mod windows;
