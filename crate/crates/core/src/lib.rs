//! Simulated Massively Parallel Computation (MPC) substrate with strict
//! local/global memory accounting, plus the graph algorithms that run on it:
//!
//! - [`pipeline`]: pipelined maximal matching / maximal independent set for
//!   bounded-arboricity graphs, with an unpipelined reference driver that
//!   produces the identical solution under a shared seed.
//! - [`treecolor`]: `O(log log n)`-round 4-coloring of trees (peeling, random
//!   bipartition, rooting, pointer jumping, layer recoloring).
//! - [`audit`]: verifiers for every output and empirical audits of the
//!   invariants and memory bounds the algorithms rely on.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command-line
//! harness and everything else touching the OS live in the `mpcforest` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod audit;
pub mod graph;
pub mod local;
pub mod mpc;
pub mod pipeline;
pub mod tape;
pub mod treecolor;

pub use graph::{Graph, GraphError, VertexId};
pub use mpc::{Cluster, Direction, MpcError, RoundLedger, SimConfig};
pub use pipeline::{Mode, Solution};
