//! File-format surface: normal-map codecs, PNG rasters and OBJ/PLY meshes.

mod maps;
mod meshio;
mod png;

pub use maps::{
    alpha_from_normals, decode_normal_map, encode_normal_map, AlphaMask, BitDepth, IntRaster,
    NormalMap, RgbImage, BACKGROUND_THRESHOLD,
};
pub use meshio::{read_mesh, read_obj, read_ply, write_mesh, write_obj, write_ply, MeshReadInfo};
pub use png::{
    read_normal_png, read_raster_png, read_rgb_png, write_gray16_png, write_mask_png,
    write_normal_png, write_raster_png, write_rgb_png,
};
