use rayon::prelude::*;

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imageio::{AlphaMask, RgbImage};
use crate::mesh::TriangleMesh;
use crate::real::Real;

use super::raster::{pixel_center, Blend, Raster, Scene, NONE};
use super::shade::{bary, perspective_t};
use super::RenderOptions;

#[derive(Debug, Clone)]
pub struct TexturedOutput<T> {
    pub image: RgbImage<T>,
    pub alpha: AlphaMask<T>,
    pub(crate) raster: Raster<T>,
    texture_size: (usize, usize),
}

/// Up to four `(texel index, weight)` taps of a clamped bilinear lookup.
/// Texel `(i, j)` is centered at `((i + 0.5) / w, 1 - (j + 0.5) / h)`; row 0 is the top.
pub(crate) fn bilinear_taps<T: Real>(w: usize, h: usize, uv: [T; 2]) -> [(usize, T); 4] {
    let x = uv[0] * T::from_usize_(w) - T::lit(0.5);
    let y = (T::one() - uv[1]) * T::from_usize_(h) - T::lit(0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let clampi = |v: T, n: usize| -> usize {
        if v <= T::zero() {
            0
        } else {
            v.to_usize().unwrap_or(usize::MAX).min(n - 1)
        }
    };
    let (ix0, ix1) = (clampi(x0, w), clampi(x0 + T::one(), w));
    let (iy0, iy1) = (clampi(y0, h), clampi(y0 + T::one(), h));
    let one = T::one();
    [
        (iy0 * w + ix0, (one - fx) * (one - fy)),
        (iy0 * w + ix1, fx * (one - fy)),
        (iy1 * w + ix0, (one - fx) * fy),
        (iy1 * w + ix1, fx * fy),
    ]
}

pub(crate) fn sample<T: Real>(tex: &RgbImage<T>, uv: [T; 2]) -> Vec3<T> {
    let mut c = Vec3::zero();
    for (i, w) in bilinear_taps(tex.width, tex.height, uv) {
        c += tex.data[i] * w;
    }
    c
}

struct UvShader<'a, 'm, T> {
    scene: &'a Scene<'m, T>,
    r: &'a Raster<T>,
}

impl<T: Real> UvShader<'_, '_, T> {
    fn uv_faces(&self) -> (&[[T; 2]], &[[u32; 3]]) {
        let uv = self.scene.mesh.uv.as_ref().expect("checked by caller");
        (&uv.coords, &uv.faces)
    }

    fn uv_at(&self, f: u32, p: [T; 2]) -> [T; 2] {
        let v = self.scene.verts(f);
        let r = self.r;
        let br = bary(
            [r.screen[v[0]], r.screen[v[1]], r.screen[v[2]]],
            [r.cam[v[0]].z, r.cam[v[1]].z, r.cam[v[2]].z],
            p,
        );
        let (coords, faces) = self.uv_faces();
        let c = faces[f as usize].map(|i| coords[i as usize]);
        [
            c[0][0] * br.b[0] + c[1][0] * br.b[1] + c[2][0] * br.b[2],
            c[0][1] * br.b[0] + c[1][1] * br.b[1] + c[2][1] * br.b[2],
        ]
    }

    fn edge_uv(&self, bl: &Blend<T>) -> [T; 2] {
        let e = self.r.contours[bl.edge as usize];
        let (coords, faces) = self.uv_faces();
        let face = self.scene.mesh.faces[e.face as usize];
        let corner = |v: u32| coords[faces[e.face as usize][face.iter().position(|&w| w == v).unwrap()] as usize];
        let (ua, ub) = (corner(e.a), corner(e.b));
        let (tp, _) = perspective_t(bl.t, self.r.cam[e.a as usize].z, self.r.cam[e.b as usize].z);
        [ua[0] + (ub[0] - ua[0]) * tp, ua[1] + (ub[1] - ua[1]) * tp]
    }

    /// Weighted texture lookups and coverage that make up pixel `i`.
    fn lookups(&self, i: usize) -> (Vec<([T; 2], T)>, T) {
        let cell = self.r.px[i];
        let p = pixel_center(i, self.r.width);
        let half = T::lit(0.5);
        let one = T::one();
        let mut out = Vec::with_capacity(2);
        let alpha = match self.r.blend[i] {
            None => {
                if cell.h1 == NONE {
                    T::zero()
                } else {
                    out.push((self.uv_at(cell.h1, p), one));
                    one
                }
            }
            Some(bl) if bl.inside => {
                let c = half + bl.dist;
                out.push((self.uv_at(cell.h1, p), c));
                if cell.h2 != NONE {
                    out.push((self.uv_at(cell.h2, p), one - c));
                    one
                } else {
                    c
                }
            }
            Some(bl) => {
                let c = half - bl.dist;
                out.push((self.edge_uv(&bl), c));
                if cell.h1 != NONE {
                    out.push((self.uv_at(cell.h1, p), one - c));
                    one
                } else {
                    c
                }
            }
        };
        (out, alpha)
    }
}

/// Renders a texture through per-corner UVs with the same coverage rules as normal rendering.
pub fn render_textured<T: Real>(
    mesh: &TriangleMesh<T>,
    texture: &RgbImage<T>,
    cam: &Camera<T>,
    opts: &RenderOptions,
) -> Result<TexturedOutput<T>> {
    let uv = mesh
        .uv
        .as_ref()
        .ok_or_else(|| Error::arg("textured rendering needs per-corner UVs"))?;
    if uv.faces.len() != mesh.faces.len() {
        return Err(Error::arg("UV face count differs from mesh face count"));
    }
    if texture.width == 0 || texture.height == 0 {
        return Err(Error::arg("texture is empty"));
    }
    let scene = Scene::new(mesh);
    let r = Raster::build(&scene, cam, opts.antialias);
    let sh = UvShader { scene: &scene, r: &r };
    let n = cam.width * cam.height;
    let px: Vec<(Vec3<T>, T)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (taps, a) = sh.lookups(i);
            let mut c = Vec3::zero();
            for (uv, w) in taps {
                c += sample(texture, uv) * w;
            }
            (c, a)
        })
        .collect();
    let (data, alpha): (Vec<_>, Vec<_>) = px.into_iter().unzip();
    Ok(TexturedOutput {
        image: RgbImage {
            width: cam.width,
            height: cam.height,
            data,
        },
        alpha: AlphaMask {
            width: cam.width,
            height: cam.height,
            data: alpha,
        },
        raster: r,
        texture_size: (texture.width, texture.height),
    })
}

/// Scatters per-pixel color gradients onto texels; geometry is held fixed.
pub fn texture_backward<T: Real>(
    out: &TexturedOutput<T>,
    mesh: &TriangleMesh<T>,
    pixel_grads: &[Vec3<T>],
) -> Result<RgbImage<T>> {
    let r = &out.raster;
    if pixel_grads.len() != r.width * r.height {
        return Err(Error::arg("pixel gradient count differs from the render size"));
    }
    if mesh.uv.is_none() || r.vertex_count != mesh.vertices.len() || r.face_count != mesh.faces.len() {
        return Err(Error::arg("render output belongs to a different mesh"));
    }
    let (tw, th) = out.texture_size;
    let scene = Scene::new(mesh);
    let sh = UvShader { scene: &scene, r };
    let mut grad = RgbImage::filled(tw, th, Vec3::zero());
    for (i, g) in pixel_grads.iter().enumerate() {
        if *g == Vec3::zero() {
            continue;
        }
        let (taps, _) = sh.lookups(i);
        for (uv, w) in taps {
            for (t, tw8) in bilinear_taps(tw, th, uv) {
                grad.data[t] += *g * (w * tw8);
            }
        }
    }
    Ok(grad)
}
