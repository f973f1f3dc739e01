//! Entropic optimal transport between discrete measures.
//!
//! - [`measure`]: discrete measures and seeded samplers
//! - [`cost`]: cost specifications and cost matrices
//! - [`sinkhorn`]: log-domain Sinkhorn solver, Sinkhorn divergence and the
//!   projective shortcuts for decomposable costs
//! - [`gaussian`]: closed-form EOT between Gaussians
//! - [`gromov`]: entropic Gromov-Wasserstein through bilinear EOT costs
//! - [`experiments`]: Monte Carlo harness for empirical convergence rates

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cost;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod gromov;
pub mod measure;
pub mod sinkhorn;

pub use cost::{cost_matrix, rescale_problem, BaseCost, CostMatrix, CostSpec, TailCost};
pub use error::{Error, Result};
pub use gaussian::{bures_eps, gaussian_eot, GaussianParam};
pub use gromov::{entropic_gw, gw11, GwConfig, GwSolution};
pub use measure::{center, DiscreteMeasure, Seed};
pub use sinkhorn::{sinkhorn_divergence, sinkhorn_solve, EotSolution, Potentials, SinkhornConfig};
