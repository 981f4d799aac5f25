//! Numerics for conic Kähler–Einstein metrics on the Riemann sphere in the
//! radial gauge `t = log|z|^2`.

pub mod bergman;
pub mod cone_analysis;
pub mod error;
pub mod functionals;
pub mod grid;
pub mod geometry;
pub mod linalg;
pub mod ma_solver;
pub mod stability;

pub use error::{Error, Result};
pub use grid::Grid;
