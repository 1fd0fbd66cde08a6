//! Numerical harness for vectorial L-infinity systems: the infinity-Laplacian,
//! the Aronsson system of a general Hamiltonian, the `Q_inf` system of the
//! dilation functional and a degenerate linear system. Ships explicit solution
//! families (power maps, eikonal maps from a radial ODE), a verification layer
//! with finite-difference oracles, and differential-inclusion checks.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hamiltonian;
pub mod inclusion;
pub mod map;
pub mod ode;
pub mod operators;
pub mod solutions;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use map::{Domain, MapModel, Provenance};
pub use operators::Operator;
pub use tensor::{Dilation, FourTensor, Hessian, Matrix, Vector};
