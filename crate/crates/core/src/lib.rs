//! Latent Dirichlet Allocation with three posterior-inference algorithms:
//! collapsed Gibbs sampling ([`gibbs`]), batch variational Bayes ([`vb`])
//! and online variational Bayes ([`online_vb`]), plus held-out perplexity
//! and topic-recovery scoring ([`eval`]).
//!
//! ```no_run
//! use lda_trio::corpus::{generate_synthetic, SyntheticSpec};
//! use lda_trio::math::Rng;
//! use lda_trio::vb::{self, VbConfig};
//!
//! let spec = SyntheticSpec { topics: 5, terms: 50, documents: 200, doc_len: 100, alpha: 0.1, beta: 0.05 };
//! let (corpus, _truth) = generate_synthetic(&spec, &mut Rng::new(1)).unwrap();
//! let model = vb::train(&corpus, &VbConfig { topics: 5, ..VbConfig::default() }).unwrap();
//! println!("final ELBO {:?}", model.report.final_statistic());
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod math;
pub mod matrix;
pub mod model_file;
pub mod online_vb;
pub mod report;
pub mod vb;

pub use error::{Error, Result};
