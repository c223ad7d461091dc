//! Bilevel optimization with a trainable inner initialization and pessimistic
//! trajectory truncation, plus the standard explicit and implicit
//! hypergradient baselines and an executable verification harness for the
//! underlying convergence theory.
//!
//! The library solves nested problems
//!
//! ```text
//! min_{x ∈ X, y}  F(x, y)   s.t.   y ∈ argmin_{y ∈ Y} f(x, y)
//! ```
//!
//! where the inner problem may be non-convex with many minimizers. The inner
//! problem is replaced by K steps of projected gradient descent started from
//! a trainable initialization z; the outer objective is evaluated at the
//! trajectory iterate with the worst upper value (a pessimistic truncation),
//! and both x and z descend through that truncated iterate by reverse-mode
//! differentiation of the recorded trajectory.
//!
//! ```
//! use bilevel::problems::nonconvex_sine;
//! use bilevel::solvers::{run_iaptt_gm, MethodKind, SolverConfig};
//! use bilevel::vector::Vector;
//!
//! let problem = nonconvex_sine();
//! let mut config = SolverConfig::new(MethodKind::IapttGm);
//! config.outer_iters = 100;
//! let state = run_iaptt_gm(
//!     &problem,
//!     &config,
//!     &Vector::from_slice(&[1.0]),
//!     &Vector::from_slice(&[2.0]),
//! )
//! .unwrap();
//! assert_eq!(state.logs.len(), 100);
//! ```

pub mod bench;
pub mod boxset;
pub mod dynamics;
pub mod error;
pub mod hypergrad;
pub mod problems;
pub mod residual;
pub mod rng;
pub mod solvers;
pub mod theory;
pub mod vector;

pub use boxset::BoxSet;
pub use error::{Error, Result};
pub use residual::{residual, Residual};
pub use vector::Vector;
