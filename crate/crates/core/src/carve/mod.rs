//! Shape initialization: silhouette carving, iso-surface extraction and simplification.

mod grid;
mod marching_cubes;
mod simplify;

pub use grid::{
    carve_occupancy, occupancy_to_field, read_occupancy_dump, write_occupancy_dump,
    CarveSemantics, OccupancyGrid, ScalarField,
};
pub use marching_cubes::marching_cubes;
pub use simplify::{simplify, SimplifyOptions, SimplifyReport};

pub const DEFAULT_GRID_RESOLUTION: usize = 128;
pub const DEFAULT_SMOOTHING: f64 = 1.0;
pub const DEFAULT_ISO: f64 = 0.5;
pub const DEFAULT_TARGET_FACES: usize = 8000;
