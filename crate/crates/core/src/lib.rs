//! Simulation and numerical verification of Poisson cluster point processes.
//!
//! A Poisson cluster configuration is built by projection: sample a Poisson
//! field of *cluster vectors* (finite ordered tuples of points) whose intensity
//! is the convolution measure `λ*` of the centre intensity `λ` with the cluster
//! law `η`, then unpack every cluster into its points. The crate implements that
//! construction together with the closed-form identities that characterize the
//! resulting measure, and Monte Carlo harnesses that check them:
//!
//! | module | contents |
//! |--------|----------|
//! | [`configspace`] | points, cluster vectors, configurations, test functions, cylinder functions |
//! | [`measures`] | centre intensities, cluster laws, the `λ*` density and region masses |
//! | [`sampler`] | Poisson, marked, lifted and projected samplers |
//! | [`properness`] | droplet clusters, local-finiteness and simplicity criteria, PGF identity |
//! | [`laplace`] | closed-form and empirical Laplace functionals |
//! | [`quasiinv`] | compactly supported diffeomorphisms and Radon–Nikodym densities |
//! | [`calculus`] | log-derivatives, integration by parts, Dirichlet form and generator |
//! | [`dynamics`] | Euler–Maruyama simulation of the equilibrium diffusion |
//! | [`catalog`] | fixed test functions, fields and diffeomorphisms used by defaults and checks |
//! | [`cli`] | JSON experiment configs, result manifests and subcommand dispatch |
//! | [`acceptance`] | the acceptance criteria as runnable checks |
//!
//! Only clusters of finite size are supported (`p_∞ = 0`); cluster sizes are
//! truncated at `n_max`.

// `!(x > 0.0)` deliberately rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod acceptance;
pub mod calculus;
pub mod catalog;
pub mod cli;
pub mod configspace;
pub mod dynamics;
mod error;
pub mod laplace;
pub mod measures;
pub mod properness;
pub mod quadrature;
pub mod quasiinv;
pub mod sampler;
pub mod stats;

pub use error::{DivergenceReport, Error, Result};
