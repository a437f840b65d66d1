//! Construction, prediction, and scoring of place+object scene graphs over
//! image collections.
//!
//! * [`graph`] — the graph data model and its adjacency views.
//! * [`geometry`] — pose distances, 3D box projection, 2D box overlap.
//! * [`scene`] / [`gt`] — per-scene annotations and ground-truth graphs.
//! * [`metrics`] — assignment solving, object matching, PP/PO IoU, Recall@1.
//! * [`assoc`] — embedding-based prediction with an object memory bank.
//! * [`embedlab`] — losses, coding rate, linear probe, gradient checks.
//! * [`sim`] — synthetic scenes for exact and statistical verification.

pub mod assoc;
pub mod embedlab;
pub mod geometry;
pub mod graph;
pub mod gt;
pub mod metrics;
pub mod scene;
pub mod sim;

pub use graph::{MSGraph, ObjectId, PlaceId};
