//! Numerical laboratory for in-context learning on multi-modal latent-factor data.
//!
//! Prompts are drawn from a rank-one latent factor model whose covariate
//! covariance `I + m mᵀ` changes from task to task. On top of that the crate
//! provides
//!
//! * forward passes for a single linear self-attention (LSA) layer and for
//!   deep linear cross-attention (LCA) stacks with a raw-data skip connection
//!   ([`attention`]),
//! * the closed-form population losses of the one- and two-parameter LCA
//!   models, evaluated by Gauss–Legendre quadrature over `Z = 1 + ‖m‖²`
//!   ([`losses`], [`quadrature`]),
//! * gradient-descent training on population and empirical losses ([`optim`]),
//! * executable checks of the failure of single-layer LSA and of the large-depth
//!   limits ([`theory`]),
//! * an experiment harness with deterministic CSV/JSON output ([`experiments`]).

pub mod attention;
pub mod checks;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod losses;
pub mod optim;
pub mod parallel;
pub mod quadrature;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
