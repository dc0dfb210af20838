//! Gaussian-beam laser ablation on point-cloud tissue surfaces, and two
//! planners that choose cut sequences bringing a surface down to a target
//! without crossing a forbidden boundary.
//!
//! - [`model`]: single-cut physics, surfaces, vertical-cut superposition.
//! - [`metrics`]: modified cost, MSE, constraint violation, volume integrals.
//! - [`superposition`]: vertical-cut power optimizer.
//! - [`graph`]: weighted-sampling tree search over arbitrary cuts.
//! - [`feedback`]: feedforward and receding-horizon execution on a perturbed plant.
//! - [`scenario`], [`io`], [`cli`]: benchmark geometries, file formats, and the `ablate` binary.
//!
//! Runnable examples, one per capability:
//!
//! | example | shows |
//! |---|---|
//! | `single_cut` | crater profile of one cut |
//! | `superposition` | vertical cuts commute, tilted cuts do not |
//! | `optimizer_two_cut` | exact recovery of a two-cut target |
//! | `graph_square_well` | graph-search plan and its per-run costs |
//! | `feedback_perturbation` | feedforward vs feedback under model error |
//! | `tumor_3d` | volumetric tumor removal above a vessel |
//! | `scenario_files` | scenario, plan, and surface files round trip |
//!
//! ```text
//! cargo run --release --example graph_square_well -- 3
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boundary;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod scenario;
pub mod superposition;
