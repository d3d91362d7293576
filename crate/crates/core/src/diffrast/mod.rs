//! Software differentiable rasterizer for world-space normals, coverage and textures.

mod raster;
mod shade;
mod textured;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imageio::{AlphaMask, NormalMap};
use crate::mesh::TriangleMesh;
use crate::real::Real;

pub use raster::Scene;
pub use textured::{render_textured, texture_backward, TexturedOutput};

use raster::{Raster, BAND_ROWS};
use shade::{finalize, Acc, Shader};

/// `tri_id` value for pixels no triangle covers.
pub const NO_TRIANGLE: u32 = raster::NONE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shading {
    /// Interpolated area-weighted vertex normals, renormalized per pixel.
    #[default]
    Smooth,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderOptions {
    /// Blend silhouette pixels by their distance to contour edges.
    pub antialias: bool,
    pub shading: Shading,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            antialias: true,
            shading: Shading::Smooth,
        }
    }
}

impl RenderOptions {
    /// Hard pixel-center coverage, as used for synthetic ground truth.
    pub fn hard() -> Self {
        Self {
            antialias: false,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOutput<T> {
    pub normal_image: NormalMap<T>,
    pub alpha: AlphaMask<T>,
    /// Camera-space depth of the nearest surface; infinite on background.
    pub depth: Vec<T>,
    pub tri_id: Vec<u32>,
    /// Zero-area faces that were skipped.
    pub degenerate_faces: usize,
    pub options: RenderOptions,
    pub(crate) raster: Raster<T>,
}

/// Per-pixel loss gradients with respect to the rendered normal and alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelGrads<T> {
    pub width: usize,
    pub height: usize,
    pub normal: Vec<Vec3<T>>,
    pub alpha: Vec<T>,
}

impl<T: Real> PixelGrads<T> {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            normal: vec![Vec3::zero(); width * height],
            alpha: vec![T::zero(); width * height],
        }
    }
}

/// Loss gradient with respect to each vertex position.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexGrads<T> {
    pub values: Vec<Vec3<T>>,
}

impl<T: Real> VertexGrads<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: vec![Vec3::zero(); n],
        }
    }

    pub fn add(&mut self, o: &Self) {
        for (a, b) in self.values.iter_mut().zip(&o.values) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|g| g.is_finite())
    }
}

impl<T: Real> Scene<'_, T> {
    pub fn render(&self, cam: &Camera<T>, opts: &RenderOptions) -> RenderOutput<T> {
        let r = Raster::build(self, cam, opts.antialias);
        let shader = Shader {
            scene: self,
            r: &r,
            opts: *opts,
        };
        let n = cam.width * cam.height;
        let shaded: Vec<(Vec3<T>, T)> = (0..n).into_par_iter().map(|i| shader.pixel(i)).collect();
        let (normals, alpha): (Vec<_>, Vec<_>) = shaded.into_iter().unzip();
        RenderOutput {
            normal_image: NormalMap {
                width: cam.width,
                height: cam.height,
                data: normals,
            },
            alpha: AlphaMask {
                width: cam.width,
                height: cam.height,
                data: alpha,
            },
            depth: r.px.iter().map(|c| c.d1).collect(),
            tri_id: r.px.iter().map(|c| c.h1).collect(),
            degenerate_faces: self.degenerate,
            options: *opts,
            raster: r,
        }
    }

    pub fn backward(
        &self,
        out: &RenderOutput<T>,
        cam: &Camera<T>,
        grads: &PixelGrads<T>,
    ) -> Result<VertexGrads<T>> {
        let r = &out.raster;
        if r.vertex_count != self.mesh.vertices.len() || r.face_count != self.mesh.faces.len() {
            return Err(Error::arg("render output belongs to a different mesh"));
        }
        let n = r.width * r.height;
        if cam.width != r.width
            || cam.height != r.height
            || grads.width != r.width
            || grads.height != r.height
            || grads.normal.len() != n
            || grads.alpha.len() != n
        {
            return Err(Error::arg(format!(
                "pixel gradients are {}x{} but the render is {}x{}",
                grads.width, grads.height, r.width, r.height
            )));
        }
        let shader = Shader {
            scene: self,
            r,
            opts: out.options,
        };
        let (nv, nf) = (r.vertex_count, r.face_count);
        let chunk = r.width * BAND_ROWS * 4;
        let partial: Vec<Option<Acc<T>>> = (0..n.div_ceil(chunk))
            .into_par_iter()
            .map(|c| {
                let mut acc: Option<Acc<T>> = None;
                for i in c * chunk..((c + 1) * chunk).min(n) {
                    let (gn, ga) = (grads.normal[i], grads.alpha[i]);
                    if gn == Vec3::zero() && ga == T::zero() {
                        continue;
                    }
                    let acc = acc.get_or_insert_with(|| Acc::new(nv, nf));
                    shader.pixel_backward(i, gn, ga, acc);
                }
                acc
            })
            .collect();
        let mut total = Acc::new(nv, nf);
        for p in partial.iter().flatten() {
            total.merge(p);
        }
        Ok(VertexGrads {
            values: finalize(self, r, cam, &total),
        })
    }
}

/// Renders world-space normals and coverage with default options.
pub fn render<T: Real>(mesh: &TriangleMesh<T>, cam: &Camera<T>) -> RenderOutput<T> {
    Scene::new(mesh).render(cam, &RenderOptions::default())
}

pub fn render_with<T: Real>(mesh: &TriangleMesh<T>, cam: &Camera<T>, opts: &RenderOptions) -> RenderOutput<T> {
    Scene::new(mesh).render(cam, opts)
}

/// Reverse-mode pass of [`render`]: per-vertex gradients of a loss given its per-pixel gradients.
pub fn render_backward<T: Real>(
    out: &RenderOutput<T>,
    mesh: &TriangleMesh<T>,
    cam: &Camera<T>,
    grads: &PixelGrads<T>,
) -> Result<VertexGrads<T>> {
    Scene::new(mesh).backward(out, cam, grads)
}

#[cfg(test)]
mod tests;
