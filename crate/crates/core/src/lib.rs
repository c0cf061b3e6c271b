//! Discrete-choice models on social graphs.
//!
//! Two social models and two graph-blind baselines:
//!
//! - **LLGR** — logistic regression with a shared weight vector and one
//!   offset per node, offsets coupled along graph edges by a quadratic
//!   penalty. Trained with a consensus ADMM scheme whose per-node and
//!   per-edge subproblems parallelize ([`admm`]).
//! - **LCGR** — the latent-class extension: each node carries a hidden
//!   class whose joint prior is a pairwise Markov random field on the
//!   graph. Trained by Monte Carlo EM: Gibbs-sampled prior marginals feed
//!   per-node/per-edge posteriors, and the M-step solves one weighted
//!   LLGR instance per class ([`gibbs`], [`mcem`]).
//! - Plain logistic regression and an i.i.d. latent-class mixture of
//!   logistic regressions as references ([`baselines`]).
//!
//! [`synth`] generates the community-structured benchmark data,
//! [`eval`] drives masked cross-validation, λ sweeps and regularization
//! paths, and [`bench`] holds the thread-scaling harness.

pub mod admm;
pub mod baselines;
pub mod bench;
pub mod data;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod graph;
pub mod mcem;
pub mod model;
pub mod seeds;
pub mod synth;

pub use data::{Dataset, Label};
pub use error::{Error, Result};
pub use graph::SocialGraph;
pub use model::{choice_probability, Hyperparams, LcgrParams, LlgrParams};
