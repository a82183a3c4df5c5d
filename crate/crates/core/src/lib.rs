//! Round-synchronous simulator for decentralized stochastic optimization with
//! compressed gossip communication.
//!
//! The crate is organized around five building blocks:
//!
//! * [`topology`] — communication graphs, mixing matrices and spectral gaps,
//! * [`compressors`] — contractive compression operators with exact bit accounting,
//! * [`problems`] — objective families (synthetic least squares, non-convex
//!   logistic regression) behind one gradient-oracle interface,
//! * [`algorithms`] — MoTEF, MoTEF-VR and the BEER / Choco-SGD / DSGD / D2
//!   baselines as explicit state machines over `d x n` matrices,
//! * [`diagnostics`] — Lyapunov error terms and numerical verification of the
//!   descent-constant inequality systems,
//!
//! tied together by the [`harness`] experiment runner (config files, metric
//! CSVs, parameter sweeps).

pub mod algorithms;
pub mod compressors;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod problems;
pub mod rng;
pub mod topology;

pub use error::SimError;
