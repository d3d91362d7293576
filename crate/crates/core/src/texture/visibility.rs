use rayon::prelude::*;

use crate::bvh::Bvh;
use crate::camera::Camera;
use crate::diffrast::{render_with, RenderOptions, NO_TRIANGLE};
use crate::geom::Vec3;
use crate::imageio::AlphaMask;
use crate::mesh::TriangleMesh;
use crate::real::Real;

/// Depth-test tolerance for visibility, in world units.
pub const VISIBILITY_TOLERANCE: f64 = 1e-3;

/// Whether surface point `p` on a face with unit normal `n` is seen by `cam`: front-facing,
/// inside the image and not occluded by more than the tolerance.
pub fn point_visible<T: Real>(bvh: &Bvh<T>, p: Vec3<T>, n: Vec3<T>, cam: &Camera<T>) -> bool {
    let c = cam.center();
    let to_cam = c - p;
    if n.dot(to_cam) <= T::zero() {
        return false;
    }
    let Some(pr) = cam.project(p) else {
        return false;
    };
    let (w, h) = (T::from_usize_(cam.width), T::from_usize_(cam.height));
    if !(pr.pixel[0] >= T::zero() && pr.pixel[0] < w && pr.pixel[1] >= T::zero() && pr.pixel[1] < h) {
        return false;
    }
    let dir = p - c;
    let len = dir.norm();
    let t_max = T::one() - T::lit(VISIBILITY_TOLERANCE) / len;
    bvh.first_hit(c, dir, T::zero(), t_max).is_none()
}

/// Per pixel of `query`: 1 where the visible surface is seen by none of `observed`, 0 elsewhere
/// and on background.
pub fn visibility_mask<T: Real>(mesh: &TriangleMesh<T>, observed: &[Camera<T>], query: &Camera<T>) -> AlphaMask<T> {
    let out = render_with(mesh, query, &RenderOptions::hard());
    let bvh = Bvh::new(mesh);
    let w = query.width;
    let data = (0..w * query.height)
        .into_par_iter()
        .map(|i| {
            let f = out.tri_id[i];
            if f == NO_TRIANGLE {
                return T::zero();
            }
            let pixel = [
                T::from_usize_(i % w) + T::lit(0.5),
                T::from_usize_(i / w) + T::lit(0.5),
            ];
            let p = query.unproject(pixel, out.depth[i]);
            let n = mesh.face_normal(f as usize);
            if observed.iter().any(|c| point_visible(&bvh, p, n, c)) {
                T::zero()
            } else {
                T::one()
            }
        })
        .collect();
    AlphaMask {
        width: w,
        height: query.height,
        data,
    }
}
