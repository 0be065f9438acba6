//! Hierarchical multidimensional scaling for replicate distance matrices.
//!
//! The pipeline turns aligned recordings into per-replicate Hellinger distances
//! ([`audio`], [`metrics`]), fits the hierarchical gamma model by maximum
//! likelihood ([`mle`]) or Markov chain Monte Carlo ([`sampler`]), and
//! summarizes the draws ([`diagnostics`], [`summarize`]). [`synth`] provides
//! ground-truth data for testing.

#![allow(clippy::needless_range_loop)]

pub mod audio;
pub mod chain_io;
pub mod diagnostics;
pub mod error;
pub mod mds;
pub mod metrics;
pub mod mle;
pub mod model;
pub mod sampler;
pub mod special;
pub mod state;
pub mod summarize;
pub mod synth;
pub mod tensor;
pub mod triangle;

pub use chain_io::{read_chain, write_chain, ChainSchema};
pub use diagnostics::{ess, hpd, ppc_hierarchical, ppc_pairwise, trace_export, EssEstimate, PpcReport};
pub use error::{HmdsError, Result};
pub use metrics::{build_tensor, hellinger, CurveSet};
pub use mle::{fit_delta_tau, fit_mle, fit_psi, MleEstimate};
pub use model::{delta_conditional, log_likelihood, log_posterior, tau_conditional};
pub use sampler::{empirical_bayes_lambda, run_chain, ChainConfig};
pub use state::{AcceptanceRates, ChainOutput, Hyperparams, ModelState};
pub use summarize::{agglomerate, posterior_mean_delta, procrustes_align, Dendrogram, Linkage};
pub use synth::{generate_tensor, generate_warped_audio};
pub use tensor::{normalize_tensor, read_tensor, validate_tensor, write_tensor, DistanceTensor};
pub use triangle::UpperTriangle;
