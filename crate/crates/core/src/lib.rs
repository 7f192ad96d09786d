//! Distributed semismooth Newton augmented Lagrangian (DSSNAL) solver for
//! consensus problems `min_w sum_i f_i(w) + gamma ||w||_1` over a simulated
//! synchronous agent network.
//!
//! The pieces, bottom up:
//! - [`prox`]: scalar clip / soft-threshold kernels and their Jacobians.
//! - [`topology`]: graphs, gossip matrices, neighbor-weighted sums.
//! - [`netsim`]: barrier-synchronized exchanges with a communication ledger.
//! - [`problems`]: Huber and squared-hinge local objectives.
//! - [`subproblem`]: the inner objective of one outer iteration.
//! - [`dapg`], [`dissn`]: first-order and Newton inner solvers.
//! - [`dssnal`]: the outer loop.

// Parameter checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocks;
pub mod config;
pub mod dapg;
pub mod data;
pub mod dissn;
pub mod dssnal;
pub mod error;
pub mod netsim;
pub mod problems;
pub mod prox;
pub mod report;
pub mod subproblem;
pub mod topology;

pub use blocks::AgentBlocks;
pub use dssnal::{solve, SolveResult, SolverConfig};
pub use error::{Error, Result};
pub use problems::{Family, ProblemInstance};
pub use topology::{GossipMatrix, Graph, Topology};
