use std::collections::HashMap;

use rayon::prelude::*;

use crate::camera::Camera;
use crate::geom::{cross2, Vec3};
use crate::mesh::{edge_key, TriangleMesh};
use crate::real::Real;

pub(crate) const NONE: u32 = u32::MAX;
/// Rows per work unit; fixed so partial sums reduce identically at any thread count.
pub(crate) const BAND_ROWS: usize = 16;
const NEAR: f64 = 1e-3;

#[derive(Debug, Clone, Copy)]
pub(crate) struct SceneEdge {
    pub a: u32,
    pub b: u32,
    /// Face traversing `a -> b`.
    pub f1: u32,
    /// Face traversing `b -> a`, or `NONE` on a boundary.
    pub f2: u32,
}

/// Per-mesh data shared by every view: normals and edge adjacency.
#[derive(Debug, Clone)]
pub struct Scene<'m, T> {
    pub(crate) mesh: &'m TriangleMesh<T>,
    pub(crate) face_cross: Vec<Vec3<T>>,
    pub(crate) face_unit: Vec<Vec3<T>>,
    pub(crate) vertex_sum: Vec<Vec3<T>>,
    pub(crate) vertex_normal: Vec<Vec3<T>>,
    pub(crate) edges: Vec<SceneEdge>,
    pub(crate) degenerate: usize,
}

impl<'m, T: Real> Scene<'m, T> {
    pub fn new(mesh: &'m TriangleMesh<T>) -> Self {
        let face_cross: Vec<Vec3<T>> = (0..mesh.faces.len()).map(|f| mesh.face_cross(f)).collect();
        let face_unit = face_cross.iter().map(|c| c.normalized()).collect();
        let degenerate = face_cross.iter().filter(|c| c.norm2() == T::zero()).count();
        let mut vertex_sum = vec![Vec3::zero(); mesh.vertices.len()];
        for (face, c) in mesh.faces.iter().zip(&face_cross) {
            for &v in face {
                vertex_sum[v as usize] += *c;
            }
        }
        let vertex_normal = vertex_sum.iter().map(|m| m.normalized()).collect();
        let mut index: HashMap<u64, u32> = HashMap::with_capacity(mesh.faces.len() * 3 / 2);
        let mut edges: Vec<SceneEdge> = Vec::with_capacity(mesh.faces.len() * 3 / 2);
        for (f, face) in mesh.faces.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (face[k], face[(k + 1) % 3]);
                match index.get(&edge_key(a, b)) {
                    Some(&e) => {
                        let e = &mut edges[e as usize];
                        if e.f2 == NONE {
                            e.f2 = f as u32;
                        }
                    }
                    None => {
                        index.insert(edge_key(a, b), edges.len() as u32);
                        edges.push(SceneEdge {
                            a,
                            b,
                            f1: f as u32,
                            f2: NONE,
                        });
                    }
                }
            }
        }
        Self {
            mesh,
            face_cross,
            face_unit,
            vertex_sum,
            vertex_normal,
            edges,
            degenerate,
        }
    }

    pub fn mesh(&self) -> &TriangleMesh<T> {
        self.mesh
    }

    pub fn vertex_normals(&self) -> &[Vec3<T>] {
        &self.vertex_normal
    }

    #[inline]
    pub(crate) fn verts(&self, f: u32) -> [usize; 3] {
        self.mesh.faces[f as usize].map(|v| v as usize)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Px<T> {
    pub h1: u32,
    pub h2: u32,
    pub d1: T,
    pub d2: T,
}

/// Silhouette edge crossing one front-facing and one back-facing (or missing) face.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Contour {
    pub a: u32,
    pub b: u32,
    pub face: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Blend<T> {
    pub edge: u32,
    /// Pixel center is covered by the surface the edge bounds.
    pub inside: bool,
    pub dist: T,
    pub t: T,
}

/// View-dependent geometry: projected vertices, two depth layers and silhouette blends.
#[derive(Debug, Clone)]
pub(crate) struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub vertex_count: usize,
    pub face_count: usize,
    pub screen: Vec<[T; 2]>,
    /// Camera-space coordinates per vertex.
    pub cam: Vec<Vec3<T>>,
    pub contours: Vec<Contour>,
    pub px: Vec<Px<T>>,
    pub blend: Vec<Option<Blend<T>>>,
}

#[inline]
pub(crate) fn pixel_center<T: Real>(i: usize, width: usize) -> [T; 2] {
    let h = T::lit(0.5);
    [T::from_usize_(i % width) + h, T::from_usize_(i / width) + h]
}

/// Closest point parameter and distance from `p` to segment `a-b`.
#[inline]
pub(crate) fn segment_distance<T: Real>(p: [T; 2], a: [T; 2], b: [T; 2]) -> (T, T) {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > T::zero() {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / l2).clamp01()
    } else {
        T::zero()
    };
    let q = [a[0] + d[0] * t, a[1] + d[1] * t];
    let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    (t, dist)
}

/// Inclusive pixel index range whose centers lie in `[lo, hi]`, clipped to `[0, n)`.
fn pixel_range<T: Real>(lo: T, hi: T, n: usize) -> Option<(usize, usize)> {
    let a = (lo - T::lit(0.5)).ceil().max(T::zero());
    let b = (hi - T::lit(0.5)).floor().min(T::from_usize_(n) - T::one());
    if !(a <= b) {
        return None;
    }
    Some((a.to_usize()?, b.to_usize()?))
}

impl<T: Real> Raster<T> {
    pub fn build(scene: &Scene<'_, T>, cam: &Camera<T>, antialias: bool) -> Self {
        let mesh = scene.mesh;
        let (w, h) = (cam.width, cam.height);
        let near = T::lit(NEAR);
        let f = cam.focal_px();
        let [cx, cy] = cam.principal_point();
        let camq: Vec<Vec3<T>> = mesh.vertices.iter().map(|&p| cam.to_camera(p)).collect();
        let screen: Vec<[T; 2]> = camq
            .iter()
            .map(|q| {
                if q.z > near {
                    [cx + f * q.x / q.z, cy - f * q.y / q.z]
                } else {
                    [T::nan(), T::nan()]
                }
            })
            .collect();
        let valid = |v: usize| camq[v].z > near;
        let front: Vec<bool> = (0..mesh.faces.len())
            .map(|fi| {
                let [a, b, c] = scene.verts(fi as u32);
                if !(valid(a) && valid(b) && valid(c)) || scene.face_cross[fi].norm2() == T::zero() {
                    return false;
                }
                let (sa, sb, sc) = (screen[a], screen[b], screen[c]);
                cross2([sb[0] - sa[0], sb[1] - sa[1]], [sc[0] - sa[0], sc[1] - sa[1]]) < T::zero()
            })
            .collect();

        // (face, x0, x1, y0, y1) for every front face touching a pixel center
        let spans: Vec<(u32, usize, usize, usize, usize)> = (0..mesh.faces.len())
            .filter(|&fi| front[fi])
            .filter_map(|fi| {
                let [a, b, c] = scene.verts(fi as u32);
                let (sa, sb, sc) = (screen[a], screen[b], screen[c]);
                let (x0, x1) = pixel_range(sa[0].min(sb[0]).min(sc[0]), sa[0].max(sb[0]).max(sc[0]), w)?;
                let (y0, y1) = pixel_range(sa[1].min(sb[1]).min(sc[1]), sa[1].max(sb[1]).max(sc[1]), h)?;
                Some((fi as u32, x0, x1, y0, y1))
            })
            .collect();

        let empty = Px {
            h1: NONE,
            h2: NONE,
            d1: T::infinity(),
            d2: T::infinity(),
        };
        let mut px = vec![empty; w * h];
        px.par_chunks_mut(w * BAND_ROWS).enumerate().for_each(|(band, chunk)| {
            let row0 = band * BAND_ROWS;
            let row1 = row0 + chunk.len() / w;
            for &(fi, x0, x1, y0, y1) in &spans {
                if y1 < row0 || y0 >= row1 {
                    continue;
                }
                let [a, b, c] = scene.verts(fi);
                let s = [screen[a], screen[b], screen[c]];
                let iz = [T::one() / camq[a].z, T::one() / camq[b].z, T::one() / camq[c].z];
                for y in y0.max(row0)..=y1.min(row1 - 1) {
                    for x in x0..=x1 {
                        let p = pixel_center::<T>(y * w + x, w);
                        let e0 = cross2([s[1][0] - p[0], s[1][1] - p[1]], [s[2][0] - p[0], s[2][1] - p[1]]);
                        let e1 = cross2([s[2][0] - p[0], s[2][1] - p[1]], [s[0][0] - p[0], s[0][1] - p[1]]);
                        let e2 = cross2([s[0][0] - p[0], s[0][1] - p[1]], [s[1][0] - p[0], s[1][1] - p[1]]);
                        if e0 > T::zero() || e1 > T::zero() || e2 > T::zero() {
                            continue;
                        }
                        let dsum = e0 + e1 + e2;
                        let inv = (e0 * iz[0] + e1 * iz[1] + e2 * iz[2]) / dsum;
                        let depth = T::one() / inv;
                        let cell = &mut chunk[(y - row0) * w + x];
                        if depth < cell.d1 {
                            cell.h2 = cell.h1;
                            cell.d2 = cell.d1;
                            cell.h1 = fi;
                            cell.d1 = depth;
                        } else if depth < cell.d2 {
                            cell.h2 = fi;
                            cell.d2 = depth;
                        }
                    }
                }
            }
        });

        let mut contours = Vec::new();
        if antialias {
            for e in &scene.edges {
                let front1 = front[e.f1 as usize];
                let front2 = e.f2 != NONE && front[e.f2 as usize];
                if front1 == front2 || !valid(e.a as usize) || !valid(e.b as usize) {
                    continue;
                }
                let face = if front1 { e.f1 } else { e.f2 };
                contours.push(Contour { a: e.a, b: e.b, face });
            }
        }
        let mut blend: Vec<Option<Blend<T>>> = vec![None; w * h];
        if !contours.is_empty() {
            let half = T::lit(0.5);
            let cspans: Vec<(u32, usize, usize, usize, usize)> = contours
                .iter()
                .enumerate()
                .filter_map(|(ci, e)| {
                    let (sa, sb) = (screen[e.a as usize], screen[e.b as usize]);
                    let (x0, x1) = pixel_range(sa[0].min(sb[0]) - half, sa[0].max(sb[0]) + half, w)?;
                    let (y0, y1) = pixel_range(sa[1].min(sb[1]) - half, sa[1].max(sb[1]) + half, h)?;
                    Some((ci as u32, x0, x1, y0, y1))
                })
                .collect();
            let faces = &mesh.faces;
            blend
                .par_chunks_mut(w * BAND_ROWS)
                .zip(px.par_chunks(w * BAND_ROWS))
                .enumerate()
                .for_each(|(band, (bchunk, pchunk))| {
                    let row0 = band * BAND_ROWS;
                    let row1 = row0 + bchunk.len() / w;
                    for &(ci, x0, x1, y0, y1) in &cspans {
                        if y1 < row0 || y0 >= row1 {
                            continue;
                        }
                        let e = contours[ci as usize];
                        let (sa, sb) = (screen[e.a as usize], screen[e.b as usize]);
                        let (za, zb) = (camq[e.a as usize].z, camq[e.b as usize].z);
                        for y in y0.max(row0)..=y1.min(row1 - 1) {
                            for x in x0..=x1 {
                                let li = (y - row0) * w + x;
                                let p = pixel_center::<T>(y * w + x, w);
                                let (t, dist) = segment_distance(p, sa, sb);
                                if !(dist < half) {
                                    continue;
                                }
                                if let Some(prev) = bchunk[li] {
                                    if !(dist < prev.dist) {
                                        continue;
                                    }
                                }
                                let cell = pchunk[li];
                                let inside = cell.h1 != NONE && {
                                    let fc = faces[cell.h1 as usize];
                                    fc.contains(&e.a) || fc.contains(&e.b)
                                };
                                if !inside && cell.h1 != NONE {
                                    let ze = T::one() / ((T::one() - t) / za + t / zb);
                                    if !(cell.d1 > ze) {
                                        continue;
                                    }
                                }
                                bchunk[li] = Some(Blend {
                                    edge: ci,
                                    inside,
                                    dist,
                                    t,
                                });
                            }
                        }
                    }
                });
        }

        Self {
            width: w,
            height: h,
            vertex_count: mesh.vertices.len(),
            face_count: mesh.faces.len(),
            screen,
            cam: camq,
            contours,
            px,
            blend,
        }
    }
}
