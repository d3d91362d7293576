use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::geom::{vec3, Aabb, Vec3};
use crate::imageio::AlphaMask;
use crate::real::Real;

/// How per-view silhouettes combine into occupancy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CarveSemantics {
    /// Empty as soon as one view sees background (visual hull).
    #[default]
    Intersection,
    /// Empty only when every view sees background.
    Union,
}

/// Cubic bit grid over an axis-aligned box; voxel `(i,j,k)` has linear index `i + n (j + n k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid<T> {
    pub resolution: usize,
    pub extent: Aabb<T>,
    bits: Vec<u64>,
}

impl<T: Real> OccupancyGrid<T> {
    pub fn empty(resolution: usize, extent: Aabb<T>) -> Self {
        let n = resolution * resolution * resolution;
        Self {
            resolution,
            extent,
            bits: vec![0; n.div_ceil(64)],
        }
    }

    pub fn unit_cube(resolution: usize) -> Self {
        Self::empty(
            resolution,
            Aabb {
                min: Vec3::splat(-T::one()),
                max: Vec3::splat(T::one()),
            },
        )
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        let idx = self.index(i, j, k);
        self.bits[idx / 64] >> (idx % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.index(i, j, k);
        if v {
            self.bits[idx / 64] |= 1 << (idx % 64);
        } else {
            self.bits[idx / 64] &= !(1 << (idx % 64));
        }
    }

    pub fn voxel_size(&self) -> Vec3<T> {
        self.extent.extent() / T::from_usize_(self.resolution)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3<T> {
        let s = self.voxel_size();
        let h = T::lit(0.5);
        self.extent.min
            + vec3(
                (T::from_usize_(i) + h) * s.x,
                (T::from_usize_(j) + h) * s.y,
                (T::from_usize_(k) + h) * s.z,
            )
    }

    /// Voxel containing `p`, if inside the extent.
    pub fn voxel_of(&self, p: Vec3<T>) -> Option<[usize; 3]> {
        let s = self.voxel_size();
        let mut out = [0; 3];
        for a in 0..3 {
            let f = ((p[a] - self.extent.min[a]) / s[a]).floor();
            if f < T::zero() || f >= T::from_usize_(self.resolution) {
                return None;
            }
            out[a] = f.to_usize().unwrap();
        }
        Some(out)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn volume(&self) -> T {
        let s = self.voxel_size();
        T::from_usize_(self.count()) * s.x * s.y * s.z
    }

    /// Grid dilated by one voxel in the 26-neighborhood.
    pub fn dilated(&self) -> Self {
        let n = self.resolution;
        let mut out = Self::empty(n, self.extent);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    if !self.get(i, j, k) {
                        continue;
                    }
                    for dk in -1i64..=1 {
                        for dj in -1i64..=1 {
                            for di in -1i64..=1 {
                                let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                                if a >= 0 && b >= 0 && c >= 0 && (a as usize) < n && (b as usize) < n && (c as usize) < n {
                                    out.set(a as usize, b as usize, c as usize, true);
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Carves a cubic grid over `[-1,1]^3` from binary silhouettes (nearest-pixel lookup of voxel centers).
pub fn carve_occupancy<T: Real>(
    masks: &[AlphaMask<T>],
    cams: &[Camera<T>],
    resolution: usize,
    semantics: CarveSemantics,
) -> Result<OccupancyGrid<T>> {
    if masks.len() != cams.len() || masks.is_empty() {
        return Err(Error::arg(format!(
            "need equal non-zero numbers of masks and cameras, got {} and {}",
            masks.len(),
            cams.len()
        )));
    }
    if resolution < 8 {
        return Err(Error::arg("grid resolution must be at least 8"));
    }
    for (m, c) in masks.iter().zip(cams) {
        if m.width != c.width || m.height != c.height {
            return Err(Error::arg(format!(
                "mask is {}x{} but camera is {}x{}",
                m.width, m.height, c.width, c.height
            )));
        }
    }
    let mut grid = OccupancyGrid::unit_cube(resolution);
    let n = resolution;
    let half = T::lit(0.5);
    let foreground = |view: usize, p: Vec3<T>| -> bool {
        let (m, c) = (&masks[view], &cams[view]);
        match c.project(p) {
            Some(pr) => {
                let (x, y) = (pr.pixel[0].floor(), pr.pixel[1].floor());
                if x < T::zero() || y < T::zero() {
                    return false;
                }
                let (x, y) = (x.to_usize().unwrap(), y.to_usize().unwrap());
                x < m.width && y < m.height && m.get(x, y) >= half
            }
            None => false,
        }
    };
    let slices: Vec<Vec<bool>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut out = vec![false; n * n];
            for j in 0..n {
                for i in 0..n {
                    let p = grid.voxel_center(i, j, k);
                    out[i + n * j] = match semantics {
                        CarveSemantics::Intersection => (0..cams.len()).all(|v| foreground(v, p)),
                        CarveSemantics::Union => (0..cams.len()).any(|v| foreground(v, p)),
                    };
                }
            }
            out
        })
        .collect();
    for (k, slice) in slices.iter().enumerate() {
        for j in 0..n {
            for i in 0..n {
                if slice[i + n * j] {
                    grid.set(i, j, k, true);
                }
            }
        }
    }
    Ok(grid)
}

/// Scalar samples on a cubic lattice; sample `(i,j,k)` sits at `origin + spacing * (i,j,k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub resolution: usize,
    pub origin: Vec3<T>,
    pub spacing: T,
    pub data: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn from_fn(resolution: usize, origin: Vec3<T>, spacing: T, f: impl Fn(Vec3<T>) -> T) -> Self {
        let n = resolution;
        let mut data = Vec::with_capacity(n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    data.push(f(origin
                        + vec3(T::from_usize_(i), T::from_usize_(j), T::from_usize_(k)) * spacing));
                }
            }
        }
        Self {
            resolution,
            origin,
            spacing,
            data,
        }
    }

    /// Samples the cube `[-half, half]^3` at `resolution` evenly spaced points per axis.
    pub fn sample_cube(resolution: usize, half: T, f: impl Fn(Vec3<T>) -> T) -> Self {
        let spacing = T::lit(2.0) * half / T::from_usize_(resolution - 1);
        Self::from_fn(resolution, Vec3::splat(-half), spacing, f)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.data[i + self.resolution * (j + self.resolution * k)]
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3<T> {
        self.origin + vec3(T::from_usize_(i), T::from_usize_(j), T::from_usize_(k)) * self.spacing
    }

    /// Adds a `width`-sample border filled with `value`.
    pub fn padded(&self, width: usize, value: T) -> Self {
        let n = self.resolution;
        let m = n + 2 * width;
        let mut data = vec![value; m * m * m];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    data[(i + width) + m * ((j + width) + m * (k + width))] = self.get(i, j, k);
                }
            }
        }
        Self {
            resolution: m,
            origin: self.origin - Vec3::splat(self.spacing * T::from_usize_(width)),
            spacing: self.spacing,
            data,
        }
    }
}

fn gaussian_kernel<T: Real>(sigma: T) -> Vec<T> {
    let r = (T::lit(3.0) * sigma).ceil().to_usize().unwrap().max(1);
    let mut k: Vec<T> = (0..=2 * r)
        .map(|i| {
            let x = T::from_usize_(i) - T::from_usize_(r);
            (-(x * x) / (T::lit(2.0) * sigma * sigma)).exp()
        })
        .collect();
    let s: T = k.iter().copied().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Binary occupancy to `{0,1}` samples at voxel centers, then a separable
/// Gaussian blur with standard deviation `sigma` voxels (edge-clamped).
pub fn occupancy_to_field<T: Real>(grid: &OccupancyGrid<T>, sigma: T) -> Result<ScalarField<T>> {
    if sigma < T::zero() {
        return Err(Error::arg("smoothing radius must be non-negative"));
    }
    let n = grid.resolution;
    let mut data: Vec<T> = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                data.push(if grid.get(i, j, k) { T::one() } else { T::zero() });
            }
        }
    }
    if sigma > T::zero() {
        let kernel = gaussian_kernel(sigma);
        let r = kernel.len() / 2;
        let strides = [1, n, n * n];
        for stride in strides {
            let src = data.clone();
            data.par_chunks_mut(n * n).enumerate().for_each(|(k, slab)| {
                for j in 0..n {
                    for i in 0..n {
                        let idx = [i, j, k];
                        let axis = strides.iter().position(|&s| s == stride).unwrap();
                        let pos = idx[axis] as i64;
                        let base = i + n * j + n * n * k - idx[axis] * stride;
                        let mut acc = T::zero();
                        for (t, w) in kernel.iter().enumerate() {
                            let q = (pos + t as i64 - r as i64).clamp(0, n as i64 - 1) as usize;
                            acc += *w * src[base + q * stride];
                        }
                        slab[i + n * j] = acc;
                    }
                }
            });
        }
    }
    let s = grid.voxel_size();
    Ok(ScalarField {
        resolution: n,
        origin: grid.voxel_center(0, 0, 0),
        spacing: s.x,
        data,
    })
}

const DUMP_MAGIC: &[u8; 4] = b"OCC1";

/// Raw dump: `OCC1`, u32 resolution, f32 extent min, f32 extent max (cubic), then LSB-first bits.
pub fn write_occupancy_dump<T: Real>(grid: &OccupancyGrid<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let n = grid.resolution;
    let mut out = Vec::with_capacity(16 + (n * n * n).div_ceil(8));
    out.extend_from_slice(DUMP_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(grid.extent.min.x.as_f64() as f32).to_le_bytes());
    out.extend_from_slice(&(grid.extent.max.x.as_f64() as f32).to_le_bytes());
    let total = n * n * n;
    for byte in 0..total.div_ceil(8) {
        let word = grid.bits[byte / 8];
        out.push((word >> ((byte % 8) * 8)) as u8);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_occupancy_dump<T: Real>(path: impl AsRef<Path>) -> Result<OccupancyGrid<T>> {
    let path = path.as_ref();
    let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.len() < 16 || &b[..4] != DUMP_MAGIC {
        return Err(Error::Format(format!("{}: not an occupancy dump", path.display())));
    }
    let n = u32::from_le_bytes(b[4..8].try_into().unwrap()) as usize;
    let lo = f32::from_le_bytes(b[8..12].try_into().unwrap()) as f64;
    let hi = f32::from_le_bytes(b[12..16].try_into().unwrap()) as f64;
    let body = &b[16..];
    if body.len() != (n * n * n).div_ceil(8) {
        return Err(Error::Format(format!("{}: truncated occupancy dump", path.display())));
    }
    let mut g = OccupancyGrid::empty(
        n,
        Aabb {
            min: Vec3::splat(T::lit(lo)),
            max: Vec3::splat(T::lit(hi)),
        },
    );
    for (i, &byte) in body.iter().enumerate() {
        g.bits[i / 8] |= (byte as u64) << ((i % 8) * 8);
    }
    Ok(g)
}
