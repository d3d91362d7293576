use crate::camera::Camera;
use crate::geom::Vec3;
use crate::real::Real;

use super::raster::{pixel_center, Blend, Raster, Scene, NONE};
use super::{RenderOptions, Shading};

/// Screen-space and perspective-correct barycentrics of a pixel center.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bary<T> {
    pub lam: [T; 3],
    pub b: [T; 3],
    /// `sum(lam / z)`, the inverse depth.
    pub s: T,
}

#[inline]
fn sub2<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn c2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

pub(crate) fn bary<T: Real>(s: [[T; 2]; 3], z: [T; 3], p: [T; 2]) -> Bary<T> {
    let (a0, a1, a2) = (sub2(s[0], p), sub2(s[1], p), sub2(s[2], p));
    let e = [c2(a1, a2), c2(a2, a0), c2(a0, a1)];
    let d = e[0] + e[1] + e[2];
    let lam = [e[0] / d, e[1] / d, e[2] / d];
    let w = [lam[0] / z[0], lam[1] / z[1], lam[2] / z[2]];
    let sum = w[0] + w[1] + w[2];
    Bary {
        lam,
        b: [w[0] / sum, w[1] / sum, w[2] / sum],
        s: sum,
    }
}

/// Pulls `g_b` (gradient w.r.t. perspective-correct weights) back to screen positions and depths.
pub(crate) fn bary_backward<T: Real>(
    s: [[T; 2]; 3],
    z: [T; 3],
    p: [T; 2],
    br: &Bary<T>,
    g_b: [T; 3],
    g_s: &mut [[T; 2]; 3],
    g_z: &mut [T; 3],
) {
    let gb_dot = g_b[0] * br.b[0] + g_b[1] * br.b[1] + g_b[2] * br.b[2];
    let mut g_lam = [T::zero(); 3];
    for k in 0..3 {
        let g_w = (g_b[k] - gb_dot) / br.s;
        g_lam[k] = g_w / z[k];
        g_z[k] -= g_w * br.lam[k] / (z[k] * z[k]);
    }
    let a = [sub2(s[0], p), sub2(s[1], p), sub2(s[2], p)];
    let e = [c2(a[1], a[2]), c2(a[2], a[0]), c2(a[0], a[1])];
    let d = e[0] + e[1] + e[2];
    let gl_dot = g_lam[0] * br.lam[0] + g_lam[1] * br.lam[1] + g_lam[2] * br.lam[2];
    for k in 0..3 {
        let g_e = (g_lam[k] - gl_dot) / d;
        // e_k = cross2(a_i, a_j) with (i, j) the next two corners
        let (i, j) = ((k + 1) % 3, (k + 2) % 3);
        g_s[i][0] += g_e * a[j][1];
        g_s[i][1] -= g_e * a[j][0];
        g_s[j][0] -= g_e * a[i][1];
        g_s[j][1] += g_e * a[i][0];
    }
}

/// `d normalize(m) / dm` applied to `g`.
#[inline]
pub(crate) fn normalize_backward<T: Real>(m: Vec3<T>, g: Vec3<T>) -> Vec3<T> {
    let len = m.norm();
    if len == T::zero() {
        return Vec3::zero();
    }
    let u = m / len;
    (g - u * u.dot(g)) / len
}

/// Parameter along the world-space edge for screen parameter `t`, plus its partials
/// with respect to `(t, za, zb)`.
#[inline]
pub(crate) fn perspective_t<T: Real>(t: T, za: T, zb: T) -> (T, [T; 3]) {
    let a = (T::one() - t) / za;
    let b = t / zb;
    let s = a + b;
    let s2 = s * s;
    (
        b / s,
        [
            (a / zb + b / za) / s2,
            b * (T::one() - t) / (za * za) / s2,
            -a * t / (zb * zb) / s2,
        ],
    )
}

/// Per-chunk gradient accumulators.
#[derive(Debug, Clone)]
pub(crate) struct Acc<T> {
    pub g_s: Vec<[T; 2]>,
    pub g_z: Vec<T>,
    /// W.r.t. unit vertex normals.
    pub g_vn: Vec<Vec3<T>>,
    /// W.r.t. unit face normals.
    pub g_fu: Vec<Vec3<T>>,
}

impl<T: Real> Acc<T> {
    pub fn new(vertices: usize, faces: usize) -> Self {
        Self {
            g_s: vec![[T::zero(); 2]; vertices],
            g_z: vec![T::zero(); vertices],
            g_vn: vec![Vec3::zero(); vertices],
            g_fu: vec![Vec3::zero(); faces],
        }
    }

    pub fn merge(&mut self, o: &Self) {
        for (a, b) in self.g_s.iter_mut().zip(&o.g_s) {
            a[0] += b[0];
            a[1] += b[1];
        }
        for (a, b) in self.g_z.iter_mut().zip(&o.g_z) {
            *a += *b;
        }
        for (a, b) in self.g_vn.iter_mut().zip(&o.g_vn) {
            *a += *b;
        }
        for (a, b) in self.g_fu.iter_mut().zip(&o.g_fu) {
            *a += *b;
        }
    }
}

pub(crate) struct Shader<'a, 'm, T> {
    pub scene: &'a Scene<'m, T>,
    pub r: &'a Raster<T>,
    pub opts: RenderOptions,
}

impl<T: Real> Shader<'_, '_, T> {
    #[inline]
    fn tri(&self, f: u32) -> ([usize; 3], [[T; 2]; 3], [T; 3]) {
        let v = self.scene.verts(f);
        let r = self.r;
        (
            v,
            [r.screen[v[0]], r.screen[v[1]], r.screen[v[2]]],
            [r.cam[v[0]].z, r.cam[v[1]].z, r.cam[v[2]].z],
        )
    }

    pub fn surface(&self, f: u32, p: [T; 2]) -> Vec3<T> {
        match self.opts.shading {
            Shading::Flat => self.scene.face_unit[f as usize],
            Shading::Smooth => {
                let (v, s, z) = self.tri(f);
                let br = bary(s, z, p);
                let n = &self.scene.vertex_normal;
                (n[v[0]] * br.b[0] + n[v[1]] * br.b[1] + n[v[2]] * br.b[2]).normalized()
            }
        }
    }

    pub fn surface_backward(&self, f: u32, p: [T; 2], g: Vec3<T>, acc: &mut Acc<T>) {
        match self.opts.shading {
            Shading::Flat => acc.g_fu[f as usize] += g,
            Shading::Smooth => {
                let (v, s, z) = self.tri(f);
                let br = bary(s, z, p);
                let n = &self.scene.vertex_normal;
                let m = n[v[0]] * br.b[0] + n[v[1]] * br.b[1] + n[v[2]] * br.b[2];
                let gm = normalize_backward(m, g);
                let g_b = [gm.dot(n[v[0]]), gm.dot(n[v[1]]), gm.dot(n[v[2]])];
                for k in 0..3 {
                    acc.g_vn[v[k]] += gm * br.b[k];
                }
                let mut g_s = [[T::zero(); 2]; 3];
                let mut g_z = [T::zero(); 3];
                bary_backward(s, z, p, &br, g_b, &mut g_s, &mut g_z);
                for k in 0..3 {
                    acc.g_s[v[k]][0] += g_s[k][0];
                    acc.g_s[v[k]][1] += g_s[k][1];
                    acc.g_z[v[k]] += g_z[k];
                }
            }
        }
    }

    pub fn edge_surface(&self, bl: &Blend<T>) -> Vec3<T> {
        let e = self.r.contours[bl.edge as usize];
        match self.opts.shading {
            Shading::Flat => self.scene.face_unit[e.face as usize],
            Shading::Smooth => {
                let (a, b) = (e.a as usize, e.b as usize);
                let (tp, _) = perspective_t(bl.t, self.r.cam[a].z, self.r.cam[b].z);
                let n = &self.scene.vertex_normal;
                n[a].lerp(n[b], tp).normalized()
            }
        }
    }

    pub fn edge_surface_backward(&self, bl: &Blend<T>, p: [T; 2], g: Vec3<T>, acc: &mut Acc<T>) {
        let e = self.r.contours[bl.edge as usize];
        match self.opts.shading {
            Shading::Flat => acc.g_fu[e.face as usize] += g,
            Shading::Smooth => {
                let (a, b) = (e.a as usize, e.b as usize);
                let (za, zb) = (self.r.cam[a].z, self.r.cam[b].z);
                let (tp, dtp) = perspective_t(bl.t, za, zb);
                let n = &self.scene.vertex_normal;
                let m = n[a].lerp(n[b], tp);
                let gm = normalize_backward(m, g);
                acc.g_vn[a] += gm * (T::one() - tp);
                acc.g_vn[b] += gm * tp;
                let g_tp = gm.dot(n[b] - n[a]);
                acc.g_z[a] += g_tp * dtp[1];
                acc.g_z[b] += g_tp * dtp[2];
                let t = bl.t;
                if t > T::zero() && t < T::one() {
                    let g_t = g_tp * dtp[0];
                    let (sa, sb) = (self.r.screen[a], self.r.screen[b]);
                    let d = sub2(sb, sa);
                    let rr = sub2(p, sa);
                    let l2 = d[0] * d[0] + d[1] * d[1];
                    let two_t = t + t;
                    for c in 0..2 {
                        acc.g_s[b][c] += g_t * (rr[c] - two_t * d[c]) / l2;
                        acc.g_s[a][c] += g_t * (-rr[c] - d[c] + two_t * d[c]) / l2;
                    }
                }
            }
        }
    }

    /// Gradient of the pixel-to-edge distance pushed to the edge's screen endpoints.
    fn dist_backward(&self, bl: &Blend<T>, p: [T; 2], g_dist: T, acc: &mut Acc<T>) {
        if bl.dist == T::zero() {
            return;
        }
        let e = self.r.contours[bl.edge as usize];
        let (a, b) = (e.a as usize, e.b as usize);
        let (sa, sb) = (self.r.screen[a], self.r.screen[b]);
        let t = bl.t;
        let q = [sa[0] + (sb[0] - sa[0]) * t, sa[1] + (sb[1] - sa[1]) * t];
        let nh = [(p[0] - q[0]) / bl.dist, (p[1] - q[1]) / bl.dist];
        for c in 0..2 {
            acc.g_s[a][c] -= g_dist * (T::one() - t) * nh[c];
            acc.g_s[b][c] -= g_dist * t * nh[c];
        }
    }

    /// Shaded normal and coverage of pixel `i`.
    pub fn pixel(&self, i: usize) -> (Vec3<T>, T) {
        let cell = self.r.px[i];
        let p = pixel_center(i, self.r.width);
        let half = T::lit(0.5);
        let layer = |f: u32| {
            if f == NONE {
                (Vec3::zero(), T::zero())
            } else {
                (self.surface(f, p), T::one())
            }
        };
        match self.r.blend[i] {
            None => layer(cell.h1),
            Some(bl) if bl.inside => {
                let c = half + bl.dist;
                let (f1, _) = layer(cell.h1);
                let (back, a2) = layer(cell.h2);
                (f1 * c + back * (T::one() - c), c + (T::one() - c) * a2)
            }
            Some(bl) => {
                let c = half - bl.dist;
                let fe = self.edge_surface(&bl);
                let (f1, a1) = layer(cell.h1);
                (fe * c + f1 * (T::one() - c), c + (T::one() - c) * a1)
            }
        }
    }

    pub fn pixel_backward(&self, i: usize, g_n: Vec3<T>, g_a: T, acc: &mut Acc<T>) {
        let cell = self.r.px[i];
        let p = pixel_center(i, self.r.width);
        let half = T::lit(0.5);
        match self.r.blend[i] {
            None => {
                if cell.h1 != NONE {
                    self.surface_backward(cell.h1, p, g_n, acc);
                }
            }
            Some(bl) if bl.inside => {
                let c = half + bl.dist;
                let f1 = self.surface(cell.h1, p);
                self.surface_backward(cell.h1, p, g_n * c, acc);
                let (back, a2) = if cell.h2 != NONE {
                    self.surface_backward(cell.h2, p, g_n * (T::one() - c), acc);
                    (self.surface(cell.h2, p), T::one())
                } else {
                    (Vec3::zero(), T::zero())
                };
                let g_c = g_n.dot(f1 - back) + g_a * (T::one() - a2);
                self.dist_backward(&bl, p, g_c, acc);
            }
            Some(bl) => {
                let c = half - bl.dist;
                let fe = self.edge_surface(&bl);
                self.edge_surface_backward(&bl, p, g_n * c, acc);
                let (f1, a1) = if cell.h1 != NONE {
                    self.surface_backward(cell.h1, p, g_n * (T::one() - c), acc);
                    (self.surface(cell.h1, p), T::one())
                } else {
                    (Vec3::zero(), T::zero())
                };
                let g_c = g_n.dot(fe - f1) + g_a * (T::one() - a1);
                self.dist_backward(&bl, p, -g_c, acc);
            }
        }
    }
}

/// Converts accumulated screen, depth and normal gradients into world-space vertex gradients.
pub(crate) fn finalize<T: Real>(scene: &Scene<'_, T>, r: &Raster<T>, cam: &Camera<T>, acc: &Acc<T>) -> Vec<Vec3<T>> {
    let mesh = scene.mesh;
    let mut g_p = vec![Vec3::zero(); mesh.vertices.len()];
    let g_m: Vec<Vec3<T>> = scene
        .vertex_sum
        .iter()
        .zip(&acc.g_vn)
        .map(|(m, g)| normalize_backward(*m, *g))
        .collect();
    for (f, face) in mesh.faces.iter().enumerate() {
        let mut g = normalize_backward(scene.face_cross[f], acc.g_fu[f]);
        for &v in face {
            g += g_m[v as usize];
        }
        if g == Vec3::zero() {
            continue;
        }
        let [a, b, c] = face.map(|v| v as usize);
        let u = mesh.vertices[b] - mesh.vertices[a];
        let w = mesh.vertices[c] - mesh.vertices[a];
        let gu = w.cross(g);
        let gw = g.cross(u);
        g_p[b] += gu;
        g_p[c] += gw;
        g_p[a] -= gu + gw;
    }
    let f = cam.focal_px();
    let (right, up, fwd) = (cam.right(), cam.up(), cam.forward());
    for v in 0..mesh.vertices.len() {
        let [gx, gy] = acc.g_s[v];
        let gz = acc.g_z[v];
        if gx == T::zero() && gy == T::zero() && gz == T::zero() {
            continue;
        }
        let q = r.cam[v];
        let iz = T::one() / q.z;
        g_p[v] += right * (gx * f * iz)
            - up * (gy * f * iz)
            + fwd * (gz - gx * f * q.x * iz * iz + gy * f * q.y * iz * iz);
    }
    g_p
}
