//! Spectral-assisted network variational inference (SANVI) for generalized
//! random dot product graphs.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. Everything here is pure computation: latent-position models and
//! graph sampling, spectral embeddings, the extended surrogate log-likelihood
//! (ESL) and its maximizer, the one-step estimator, Gaussian variational
//! inference by Adam stochastic gradient descent, a Metropolis-Hastings
//! baseline, and the evaluation metrics used to compare them.
//!
//! Enabling the `rayon` feature runs the per-vertex solvers in parallel.
//! Every per-vertex random stream is keyed by `(seed, vertex)`, so results are
//! bit-identical with and without the feature.
//!
//! ```
//! use sanvi_core::graph_model::{make_scenario, sample_grdpg, ScenarioKind, ScenarioSpec};
//! use sanvi_core::spectral::ase;
//! use sanvi_core::eval::procrustes_sse;
//!
//! let config = make_scenario(&ScenarioSpec::new(ScenarioKind::Sbm5, 200, 7)).unwrap();
//! let graph = sample_grdpg(&config, 11).unwrap();
//! let emb = ase(&graph, 2).unwrap();
//! let fit = procrustes_sse(&emb.x, &config.x0).unwrap();
//! assert!(fit.sse < 20.0);
//! ```

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod esl;
pub mod eval;
pub mod graph_model;
pub mod mcmc;
pub mod one_step;
pub mod rng;
pub mod spectral;
pub mod vi;

mod linalg;
mod math;
mod par;

pub use error::{Error, Result};
pub use graph_model::{Diagonal, Graph, LatentConfig, ScenarioKind, ScenarioSpec, Signature};
pub use spectral::Embedding;
