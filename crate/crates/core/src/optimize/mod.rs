//! Multi-view geometry optimization: loss, optimizer, remeshing and the full reconstruction loop.

mod adam;
mod loss;
mod reconstruct;
mod remesh;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use loss::{loss_total, normal_consistency, LossOutput};
pub use reconstruct::{
    initial_mesh, reconstruct, reconstruct_from, reconstruct_with, write_loss_trace, InitReport, LossRecord, OptimConfig,
    PhaseTimings, Reconstruction,
};
pub use remesh::{remesh, remesh_carrying, RemeshStats};
