//! Analysis of affine control systems `x' = A(u) x + C u + d` with a box
//! control range: exact simulation, Floquet data and periodic solutions,
//! box approximations of control sets and chain control sets, and their
//! behaviour at infinity in the projective compactification.

pub mod catalog;
pub mod error;
pub mod floquet;
pub mod graph;
pub mod linalg;
pub mod projective;
pub mod reach;
pub mod system;

pub use error::{Error, Result};
pub use graph::Direction;
