use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imageio::RgbImage;
use crate::mesh::{TriangleMesh, UvLayer};
use crate::real::Real;

/// Faces join a chart while their normal stays within this angle of the seed normal.
pub const CHART_ANGLE_DEG: f64 = 45.0;
/// Free texels between the footprints of neighboring charts.
pub const GUTTER: usize = 2;
const MIN_ANGLE_DEG: f64 = 1.0;
const PACK_SHRINK: f64 = 0.95;
const PACK_TRIES: usize = 120;

/// A texel's surface point: face index and barycentric weights of its corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TexelPoint<T> {
    pub face: u32,
    pub bary: [T; 3],
}

#[derive(Debug, Clone)]
pub struct TextureAtlas<T> {
    pub resolution: usize,
    pub texels: RgbImage<T>,
    /// Texels a bilinear lookup inside some chart can touch.
    pub valid_mask: Vec<bool>,
    /// Faces of each chart.
    pub charts: Vec<Vec<u32>>,
    /// Nearest surface point of every valid texel.
    pub texel_points: Vec<Option<TexelPoint<T>>>,
}

impl<T: Real> TextureAtlas<T> {
    pub fn valid_count(&self) -> usize {
        self.valid_mask.iter().filter(|&&v| v).count()
    }

    /// World position of a texel's surface point.
    pub fn texel_position(&self, mesh: &TriangleMesh<T>, texel: usize) -> Option<Vec3<T>> {
        let tp = self.texel_points[texel]?;
        let t = mesh.tri(tp.face as usize);
        Some(t[0] * tp.bary[0] + t[1] * tp.bary[1] + t[2] * tp.bary[2])
    }
}

/// Region growing over edge-adjacent faces; faces join while within `max_angle_deg` of the seed normal.
pub fn segment_charts<T: Real>(mesh: &TriangleMesh<T>, max_angle_deg: f64) -> Vec<Vec<u32>> {
    let all: Vec<u32> = (0..mesh.faces.len() as u32).collect();
    let adj = adjacency(mesh);
    grow_charts(mesh, &adj, &all, max_angle_deg)
}

fn adjacency<T: Real>(mesh: &TriangleMesh<T>) -> Vec<Vec<u32>> {
    let mut adj = vec![Vec::new(); mesh.faces.len()];
    for (_, _, fs) in mesh.edge_faces() {
        for &f in &fs {
            for &g in &fs {
                if f != g {
                    adj[f as usize].push(g);
                }
            }
        }
    }
    adj
}

fn grow_charts<T: Real>(mesh: &TriangleMesh<T>, adj: &[Vec<u32>], faces: &[u32], max_angle_deg: f64) -> Vec<Vec<u32>> {
    let cos_min = T::lit(max_angle_deg.to_radians().cos());
    let mut allowed = vec![false; mesh.faces.len()];
    for &f in faces {
        allowed[f as usize] = true;
    }
    let mut taken = vec![false; mesh.faces.len()];
    let mut charts = Vec::new();
    for &seed in faces {
        if taken[seed as usize] {
            continue;
        }
        let n0 = mesh.face_normal(seed as usize);
        let mut chart = vec![seed];
        taken[seed as usize] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            for &g in &adj[f as usize] {
                let gi = g as usize;
                if allowed[gi] && !taken[gi] && mesh.face_normal(gi).dot(n0) >= cos_min {
                    taken[gi] = true;
                    chart.push(g);
                    queue.push_back(g);
                }
            }
        }
        charts.push(chart);
    }
    charts
}

/// A chart projected onto its area-weighted mean plane, in world units.
struct Flat<T> {
    /// Per face, the three projected corners.
    corners: Vec<[[T; 2]; 3]>,
    min: [T; 2],
    max: [T; 2],
}

fn flatten<T: Real>(mesh: &TriangleMesh<T>, chart: &[u32]) -> Flat<T> {
    let mut n = Vec3::zero();
    for &f in chart {
        n += mesh.face_cross(f as usize);
    }
    let n = if n.norm() > T::zero() {
        n.normalized()
    } else {
        mesh.face_normal(chart[0] as usize)
    };
    let axis = if n.x.abs() <= n.y.abs() && n.x.abs() <= n.z.abs() {
        Vec3 { x: T::one(), y: T::zero(), z: T::zero() }
    } else if n.y.abs() <= n.z.abs() {
        Vec3 { x: T::zero(), y: T::one(), z: T::zero() }
    } else {
        Vec3 { x: T::zero(), y: T::zero(), z: T::one() }
    };
    let u = axis.cross(n).normalized();
    let v = n.cross(u);
    let mut min = [T::infinity(); 2];
    let mut max = [T::neg_infinity(); 2];
    let corners = chart
        .iter()
        .map(|&f| {
            mesh.tri(f as usize).map(|p| {
                let q = [p.dot(u), p.dot(v)];
                for k in 0..2 {
                    min[k] = min[k].min(q[k]);
                    max[k] = max[k].max(q[k]);
                }
                q
            })
        })
        .collect();
    Flat { corners, min, max }
}

fn signed_area2<T: Real>(t: &[[T; 2]; 3]) -> T {
    (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1])
}

/// Every face keeps a clearly positive orientation after projection.
fn flat_is_oriented<T: Real>(mesh: &TriangleMesh<T>, chart: &[u32], flat: &Flat<T>) -> bool {
    chart.iter().zip(&flat.corners).all(|(&f, c)| {
        let a3 = mesh.face_cross(f as usize).norm();
        a3 == T::zero() || signed_area2(c) > a3 * T::lit(1e-3)
    })
}

#[derive(Debug, Clone, Copy)]
struct Placement {
    x: usize,
    y: usize,
}

/// Shelf packing, tallest first. Sizes include the one-texel inset on each side.
fn shelf_pack(sizes: &[(usize, usize)], res: usize) -> Option<Vec<Placement>> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].1.cmp(&sizes[a].1).then(sizes[b].0.cmp(&sizes[a].0)).then(a.cmp(&b)));
    let mut out = vec![Placement { x: 0, y: 0 }; sizes.len()];
    let (mut x, mut y, mut shelf_h) = (0usize, 0usize, 0usize);
    for i in order {
        let (w, h) = sizes[i];
        if w > res || h > res {
            return None;
        }
        if x + w > res {
            x = 0;
            y += shelf_h + GUTTER;
            shelf_h = 0;
        }
        if y + h > res {
            return None;
        }
        out[i] = Placement { x, y };
        x += w + GUTTER;
        shelf_h = shelf_h.max(h);
    }
    Some(out)
}

/// Texel-space corners (x right, y down) of every face of every chart at scale `s` texels per unit.
fn layout<T: Real>(flats: &[Flat<T>], res: usize) -> Option<(T, Vec<Placement>)> {
    let total: T = flats
        .iter()
        .map(|f| (f.max[0] - f.min[0]) * (f.max[1] - f.min[1]))
        .sum();
    let rf = T::from_usize_(res);
    let mut s = if total > T::zero() {
        (rf * rf * T::lit(0.6) / total).sqrt()
    } else {
        rf
    };
    for _ in 0..PACK_TRIES {
        let sizes: Vec<(usize, usize)> = flats
            .iter()
            .map(|f| {
                let w = ((f.max[0] - f.min[0]) * s).ceil().to_usize().unwrap_or(usize::MAX);
                let h = ((f.max[1] - f.min[1]) * s).ceil().to_usize().unwrap_or(usize::MAX);
                (w.saturating_add(2), h.saturating_add(2))
            })
            .collect();
        if let Some(p) = shelf_pack(&sizes, res) {
            return Some((s, p));
        }
        s *= T::lit(PACK_SHRINK);
    }
    None
}

fn texel_corners<T: Real>(flat: &Flat<T>, face: usize, s: T, at: Placement) -> [[T; 2]; 3] {
    let (ox, oy) = (T::from_usize_(at.x + 1), T::from_usize_(at.y + 1));
    flat.corners[face].map(|q| [ox + (q[0] - flat.min[0]) * s, oy + (flat.max[1] - q[1]) * s])
}

/// Closest point of a 2D triangle to `p` as barycentric weights, with the distance.
fn closest_bary<T: Real>(t: &[[T; 2]; 3], p: [T; 2]) -> ([T; 3], T) {
    let area = signed_area2(t);
    if area.abs() > T::zero() {
        let w0 = signed_area2(&[p, t[1], t[2]]) / area;
        let w1 = signed_area2(&[t[0], p, t[2]]) / area;
        let w2 = T::one() - w0 - w1;
        if w0 >= T::zero() && w1 >= T::zero() && w2 >= T::zero() {
            return ([w0, w1, w2], T::zero());
        }
    }
    let mut best = ([T::one(), T::zero(), T::zero()], T::infinity());
    for k in 0..3 {
        let (a, b) = (t[k], t[(k + 1) % 3]);
        let d = [b[0] - a[0], b[1] - a[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let u = if len2 > T::zero() {
            (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp01()
        } else {
            T::zero()
        };
        let q = [a[0] + d[0] * u, a[1] + d[1] * u];
        let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        if dist < best.1 {
            let mut w = [T::zero(); 3];
            w[k] = T::one() - u;
            w[(k + 1) % 3] = u;
            best = (w, dist);
        }
    }
    best
}

/// Strict interior test used for the overlap check; shared edges belong to neither side.
fn strictly_inside<T: Real>(t: &[[T; 2]; 3], p: [T; 2]) -> bool {
    let area = signed_area2(t);
    if area == T::zero() {
        return false;
    }
    let side = |a: T| a / area > T::lit(1e-9);
    side(signed_area2(&[p, t[1], t[2]])) && side(signed_area2(&[t[0], p, t[2]])) && side(signed_area2(&[t[0], t[1], p]))
}

struct Rasterized<T> {
    valid: Vec<bool>,
    points: Vec<Option<(TexelPoint<T>, T)>>,
    /// Charts whose own faces claim some texel twice.
    overlapping: Vec<usize>,
}

fn rasterize<T: Real>(
    charts: &[Vec<u32>],
    flats: &[Flat<T>],
    s: T,
    places: &[Placement],
    res: usize,
) -> Rasterized<T> {
    let reach = T::lit(std::f64::consts::SQRT_2);
    let mut out = Rasterized {
        valid: vec![false; res * res],
        points: vec![None; res * res],
        overlapping: Vec::new(),
    };
    let mut owner = vec![u32::MAX; res * res];
    for (c, chart) in charts.iter().enumerate() {
        let mut bad = false;
        for (k, &f) in chart.iter().enumerate() {
            let t = texel_corners(&flats[c], k, s, places[c]);
            let lo = |i: usize| {
                (t[0][i].min(t[1][i]).min(t[2][i]) - T::lit(2.0))
                    .floor()
                    .max(T::zero())
                    .to_usize()
                    .unwrap()
            };
            let hi = |i: usize| {
                ((t[0][i].max(t[1][i]).max(t[2][i]) + T::lit(2.0)).ceil().to_usize().unwrap()).min(res)
            };
            for y in lo(1)..hi(1) {
                for x in lo(0)..hi(0) {
                    let p = [T::from_usize_(x) + T::lit(0.5), T::from_usize_(y) + T::lit(0.5)];
                    let i = y * res + x;
                    if strictly_inside(&t, p) {
                        if owner[i] != u32::MAX {
                            bad = true;
                        }
                        owner[i] = f;
                    }
                    let (bary, d) = closest_bary(&t, p);
                    if d < reach {
                        out.valid[i] = true;
                        if out.points[i].map_or(true, |(_, best)| d < best) {
                            out.points[i] = Some((TexelPoint { face: f, bary }, d));
                        }
                    }
                }
            }
        }
        if bad {
            out.overlapping.push(c);
        }
    }
    out
}

/// Planar-projection charts, shelf packed with gutters. Returns the mesh with per-corner UVs
/// and a mid-gray atlas. Retries once at twice the resolution if the charts do not fit.
pub fn generate_uv_atlas<T: Real>(mesh: &TriangleMesh<T>, resolution: usize) -> Result<(TriangleMesh<T>, TextureAtlas<T>)> {
    if mesh.is_empty() {
        return Err(Error::arg("cannot build an atlas for an empty mesh"));
    }
    if resolution < 8 {
        return Err(Error::arg("atlas resolution must be at least 8"));
    }
    match build_atlas(mesh, resolution) {
        Err(Error::PackOverflow(_)) => build_atlas(mesh, resolution * 2),
        other => other,
    }
}

fn build_atlas<T: Real>(mesh: &TriangleMesh<T>, res: usize) -> Result<(TriangleMesh<T>, TextureAtlas<T>)> {
    let adj = adjacency(mesh);
    let mut charts: Vec<(Vec<u32>, f64)> = grow_charts(mesh, &adj, &(0..mesh.faces.len() as u32).collect::<Vec<_>>(), CHART_ANGLE_DEG)
        .into_iter()
        .map(|c| (c, CHART_ANGLE_DEG))
        .collect();
    loop {
        // split charts that fold over themselves in projection
        let mut i = 0;
        while i < charts.len() {
            let flat = flatten(mesh, &charts[i].0);
            if charts[i].0.len() > 1 && !flat_is_oriented(mesh, &charts[i].0, &flat) {
                let (faces, angle) = charts.swap_remove(i);
                let a = (angle * 0.5).max(MIN_ANGLE_DEG);
                let parts = if angle <= MIN_ANGLE_DEG {
                    faces.iter().map(|&f| vec![f]).collect()
                } else {
                    grow_charts(mesh, &adj, &faces, a)
                };
                charts.extend(parts.into_iter().map(|c| (c, a)));
                continue;
            }
            i += 1;
        }
        let flats: Vec<Flat<T>> = charts.iter().map(|(c, _)| flatten(mesh, c)).collect();
        let (s, places) = layout(&flats, res).ok_or(Error::PackOverflow(res))?;
        let faces: Vec<Vec<u32>> = charts.iter().map(|(c, _)| c.clone()).collect();
        let r = rasterize(&faces, &flats, s, &places, res);
        if !r.overlapping.is_empty() {
            let mut bad = r.overlapping;
            bad.sort_unstable_by(|a, b| b.cmp(a));
            for c in bad {
                let (faces, angle) = charts.swap_remove(c);
                let a = (angle * 0.5).max(MIN_ANGLE_DEG);
                let parts = if angle <= MIN_ANGLE_DEG || faces.len() <= 1 {
                    faces.iter().map(|&f| vec![f]).collect()
                } else {
                    grow_charts(mesh, &adj, &faces, a)
                };
                charts.extend(parts.into_iter().map(|c| (c, a)));
            }
            continue;
        }
        // per-corner UVs, shared within a chart
        let rf = T::from_usize_(res);
        let mut coords = Vec::new();
        let mut uv_faces = vec![[0u32; 3]; mesh.faces.len()];
        for (c, chart) in faces.iter().enumerate() {
            let mut local: std::collections::HashMap<u32, u32> = std::collections::HashMap::new();
            for (k, &f) in chart.iter().enumerate() {
                let t = texel_corners(&flats[c], k, s, places[c]);
                for corner in 0..3 {
                    let v = mesh.faces[f as usize][corner];
                    let idx = *local.entry(v).or_insert_with(|| {
                        coords.push([t[corner][0] / rf, T::one() - t[corner][1] / rf]);
                        (coords.len() - 1) as u32
                    });
                    uv_faces[f as usize][corner] = idx;
                }
            }
        }
        let mut out = mesh.clone();
        out.uv = Some(UvLayer { coords, faces: uv_faces });
        let atlas = TextureAtlas {
            resolution: res,
            texels: RgbImage::filled(res, res, Vec3::splat(T::lit(0.5))),
            valid_mask: r.valid,
            charts: faces,
            texel_points: r.points.into_iter().map(|p| p.map(|(tp, _)| tp)).collect(),
        };
        return Ok((out, atlas));
    }
}
