//! Fusing multi-view world-space normal maps into watertight meshes, then texturing them.
//!
//! The pipeline: carve a visual hull from the silhouettes, extract and simplify a mesh,
//! refine it against the normal maps with a differentiable rasterizer and continuous
//! remeshing, then bake a UV texture from RGB views. Everything is generic over the scalar
//! type (`f32` or `f64`); the aliases below fix `f64`.

pub mod bvh;
pub mod camera;
pub mod carve;
pub mod error;
pub mod geom;
pub mod imageio;
pub mod mesh;
pub mod real;
pub mod shapes;
mod topology;
pub mod diffrast;
pub mod optimize;
pub mod metrics;
pub mod texture;

pub use camera::{preset_rig, Camera, RigSpec};
pub use error::{Error, Result};
pub use geom::{vec3, Vec3};
pub use mesh::TriangleMesh;
pub use optimize::{reconstruct, OptimConfig};
pub use real::Real;
pub use texture::{bake_texture, generate_uv_atlas, visibility_mask, TexOptConfig};

pub type Point = geom::Vec3<f64>;
pub type Mesh = mesh::TriangleMesh<f64>;
pub type Cam = camera::Camera<f64>;
pub type Normals = imageio::NormalMap<f64>;
pub type Mask = imageio::AlphaMask<f64>;
pub type Image = imageio::RgbImage<f64>;
pub type Atlas = texture::TextureAtlas<f64>;
