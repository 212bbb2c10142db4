pub mod cli;
pub mod error;
pub mod format;
pub mod graph;
pub mod graphgen;
pub mod layout;
pub mod ordering;
pub mod planner;
pub mod schedule;
pub mod segmentation;
pub mod simulator;
pub mod viz;

pub use error::{Error, Result};
pub use graph::{Graph, GraphBuilder, OpId, OpKind, TensorCategory, TensorId};
pub use schedule::Schedule;
