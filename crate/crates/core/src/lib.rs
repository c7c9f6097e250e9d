//! Flow-graph classroom games.
//!
//! * [`diagram`], [`document`], [`metrics`], [`path`]: the diagram model, its
//!   canonical JSON form, cyclomatic complexity and path validation.
//! * [`grading`]: the answer analysis engine.
//! * [`game`]: game lifecycle, sessions, answers and live monitoring.

pub mod diagram;
pub mod document;
pub mod game;
pub mod grading;
pub mod metrics;
pub mod path;
pub mod samples;

pub use diagram::{Canvas, Diagram, DiagramError, Edge, EdgeShape, ItemId, Node, NodeKind, NodeType, Point};
pub use document::DecodeError;
pub use metrics::GraphMetrics;
pub use path::{NodePath, PathFailure, PathIndex, PathVerdict};
