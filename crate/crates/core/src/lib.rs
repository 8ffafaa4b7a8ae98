//! Constructive solution of Hammerstein integral equations on the half-line,
//!
//! ```text
//! f(x) = int_0^inf K(x,t) G(f(t)) dt,
//! ```
//!
//! by monotone successive approximations from `f_0 = eta`, together with
//! numerical certification of the structural hypotheses and a-priori bounds
//! that make the iteration converge, and a solver for the companion
//! Hammerstein-Nemytsky equation.
//!
//! Pipeline: build a [`quadrature::HalfLineGrid`], check a
//! [`kernels::KernelSpec`] and a [`nonlinearity::NonlinearitySpec`], assemble
//! the [`picard::OperatorMatrix`], run [`picard::solve_picard`], then
//! [`analysis::certify`] and optionally [`nemytsky::solve_nemytsky`].

pub mod analysis;
pub mod error;
pub mod kernels;
pub mod nemytsky;
pub mod nonlinearity;
pub mod picard;
pub mod quadrature;

pub use error::{Error, Result};
pub use kernels::{BaseKernel, GapForm, Kernel, KernelFamily, KernelSpec, Modulation};
pub use nonlinearity::{NonlinearityFamily, NonlinearitySpec};
pub use picard::{assemble_operator, solve_picard, OperatorMatrix, SolveReport};
pub use quadrature::{build_grid, HalfLineGrid, Rule};
