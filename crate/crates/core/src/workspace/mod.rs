//! Voxel-grid geometry: grids and voxel sets, probe footprints, straight-line
//! actions and their swept volumes, contact surfaces and distance queries.

mod grid;
mod motion;

pub use grid::{dist2, Coord, GridWorkspace, VoxelSet};
pub use motion::{
    candidate_actions, contact_cells, contact_surface, discretize_action, elimination_set,
    max_reach, probe_voxels, set_distance, swept_prefix, swept_voxels, ActionSpec, Config,
    Direction, DiscretizedAction, ProbeShape,
};
