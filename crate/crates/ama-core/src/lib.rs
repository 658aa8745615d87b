//! Adaptive data mixing for multi-task preference optimization.
//!
//! The library trains a shared model over several task datasets while a
//! second "player" adapts the task sampling distribution to whichever
//! task currently has the largest clipped excess loss over its own
//! specialist model. Two adaptive variants are provided (sampling-based
//! and reweighting-based) along with the standard-mixing baselines and
//! ablations, a checkpoint selection rule, and a synthetic two-player
//! game harness used to measure convergence of the minimax gap.

pub mod algorithms;
pub mod checkpoint;
pub mod config;
pub mod domain;
pub mod error;
pub mod game;
pub mod io;
pub mod losses;
pub mod players;
pub mod plots;
pub mod rng;

pub use algorithms::{Algorithm, RunConfig, TrainResult};
pub use domain::{SimplexWeights, TaskDataset, TaskId};
pub use error::{AmaError, Result};
pub use losses::{DpoConfig, ParamVector};
