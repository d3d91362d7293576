//! UV atlas generation, texture optimization in UV space and visibility masks.

mod atlas;
mod bake;
mod ssim;
mod visibility;

pub use atlas::{generate_uv_atlas, segment_charts, TexelPoint, TextureAtlas, CHART_ANGLE_DEG, GUTTER};
pub use bake::{
    bake_texture, initial_texture, sample_image, tv_loss, tv_loss_with_grad, BakeOutput, TexLossRecord,
    TexOptConfig,
};
pub use ssim::{ssim, ssim_with_grad, SSIM_C1, SSIM_C2, SSIM_SIGMA, SSIM_WINDOW};
pub use visibility::{point_visible, visibility_mask, VISIBILITY_TOLERANCE};
