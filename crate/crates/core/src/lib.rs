//! Building interpretable abstract MDPs from recorded trajectories.

pub mod action;
pub mod cluster;
pub mod config;
pub mod env;
pub mod error;
pub mod eval;
pub mod guide;
pub mod ingest;
pub mod interval;
pub mod mdp;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod semantics;
pub mod verify;

pub use error::{Error, Result};
