//! Multiscale solvers for singularly perturbed convection–diffusion problems
//! `-ε Δu + b·∇u = f` on `(0,1)^d` with homogeneous Dirichlet data.
//!
//! The crate builds super-localized coarse bases from patch-local Q1 solves
//! ([`basis`]), solves with them by Galerkin projection or collocation
//! ([`solvers`]), compares against Q1 FEM, SUPG and a fine reference, and
//! runs convergence and localization studies ([`analysis`], [`runner`]).

pub mod analysis;
pub mod basis;
pub mod cache;
pub mod config;
pub mod dense;
pub mod error;
pub mod fem;
pub mod linsolve;
pub mod mesh;
pub mod par;
pub mod projection;
pub mod runner;
pub mod solvers;
pub mod source;
pub mod sparse;
pub mod velocity;

pub use error::{Error, Result};
