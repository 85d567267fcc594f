//! Solvers and estimate checks for the boundary-degenerate operator
//!
//! `L = y^a1 Tr(Q D_x^2) + 2 y^((a1+a2)/2) q.grad_x D_y + gamma y^a2 D_yy + y^(a2-1) (b.grad_x + c D_y)`
//!
//! on the half-space `R^N x (0, inf)`. Everything is reduced to families of
//! one-dimensional operators in `y`, one per Fourier mode in `x`, which are
//! discretised through their sesquilinear forms on a graded cell-centred mesh.

pub mod bessel1d;
pub mod error;
pub mod grid;
pub mod harness;
pub mod jet;
pub mod linalg;
pub mod multiplier;
pub mod par;
pub mod params;
pub mod probe;
pub mod semigroup;
pub mod transforms;

pub use error::{Error, Result};
pub use grid::{make_grid, Field, Grid, XBox};
pub use params::{ModelParams, OperatorSpec, SpaceSpec, WindowReport};
pub use transforms::{TransformChain, TransformStep};

pub use num_complex::Complex64;
