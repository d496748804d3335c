//! Warehouse fleet planning with human intention recognition.
//!
//! The crate is organised bottom-up: [`graph`] owns the road network and its
//! distance matrix, [`intention`] tracks human workers and predicts where
//! they are heading, [`timeline`] plans robots over time-windowed resources,
//! [`hap`] gives humans precedence over robots, and [`sim`] ties everything
//! into a deterministic warehouse simulation.

pub mod bridge;
pub mod demo;
pub mod geom;
pub mod graph;
pub mod intention;
pub mod hap;
pub mod sim;
pub mod timeline;

pub use geom::Point;
pub use graph::{DistanceMatrix, EdgeId, NodeId, NodeKind, WarehouseGraph};
