//! Patch assignment flows on grid graphs.
//!
//! A labeled patch dictionary and an initial (noisy) labeling define a point
//! on a product of probability simplices, one simplex over the dictionary
//! templates per grid vertex. The flow performs Riemannian gradient ascent of
//! a patch-consistency objective under the Fisher-Rao geometry and converges
//! to an integral assignment, from which a regularized labeling and an
//! uncertainty map are read off.

pub mod cli;
pub mod dictionary;
pub mod error;
pub mod flow;
pub mod grid;
pub mod io;
pub mod labeling;
pub mod oracle;
pub mod scenario;
pub mod simplex;

pub use dictionary::{build_adjacency, PatchAdjacency, PatchDictionary, PatchTemplate, Similarity};
pub use error::{Error, Result};
pub use flow::{integrate, FlowConfig, FlowProblem, FlowResult, StopReason};
pub use grid::{Direction, GridGraph, Orientation};
pub use labeling::{
    extract_labeling, initialize, mean_patch_assignment, smooth_labels, Boundary, LabelField, UncertaintyField,
};
pub use simplex::{AssignmentField, SimplexPoint, TangentVector};
