//! Contact-only localization and docking of a known object on a voxel grid.
//!
//! A probe that can only sense contact searches for an object whose pose is
//! unknown but bounded by an initial hypothesis volume. Planning runs in two
//! phases: a coarse volumetric belief shrinks the possibly-occupied voxels,
//! then a set of discrete pose hypotheses is refined until every remaining
//! pose agrees on where the probe must dock.

pub mod baselines;
pub mod error;
pub mod harness;
pub mod model;
pub mod outcome;
pub mod particle;
pub mod planner;
pub mod volumetric;
pub mod workspace;

pub use error::{Error, Result};
