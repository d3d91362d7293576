use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bvh::Bvh;
use crate::camera::Camera;
use crate::diffrast::{render_textured, render_with, texture_backward, RenderOptions};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imageio::RgbImage;
use crate::mesh::TriangleMesh;
use crate::optimize::{adam_step, AdamState};
use crate::real::Real;

use super::atlas::TextureAtlas;
use super::ssim::ssim_with_grad;
use super::visibility::point_visible;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TexOptConfig {
    pub steps: usize,
    pub w_l1: f64,
    pub w_ssim: f64,
    pub w_tv: f64,
    pub learning_rate: f64,
    pub render: RenderOptions,
}

impl Default for TexOptConfig {
    fn default() -> Self {
        Self {
            steps: 100,
            w_l1: 1.0,
            w_ssim: 10.0,
            w_tv: 1.0,
            learning_rate: 0.01,
            render: RenderOptions::default(),
        }
    }
}

impl TexOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::arg("texture steps must be at least 1"));
        }
        if !(self.w_l1 >= 0.0 && self.w_ssim >= 0.0 && self.w_tv >= 0.0) {
            return Err(Error::arg("texture loss weights must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("texture learning_rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TexLossRecord {
    pub step: usize,
    pub l1: f64,
    pub ssim: f64,
    pub tv: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct BakeOutput<T> {
    pub atlas: TextureAtlas<T>,
    /// One record per step plus the final state.
    pub trace: Vec<TexLossRecord>,
    /// Step of the returned texels: the iterate with the lowest total loss.
    pub best_step: usize,
    /// Valid texels whose surface point some view sees.
    pub seen: Vec<bool>,
}

/// Subgradient of `|d|`; differences at rounding level count as zero.
fn sign<T: Real>(d: T) -> T {
    let tol = T::epsilon() * T::lit(64.0);
    if d > tol {
        T::one()
    } else if d < -tol {
        -T::one()
    } else {
        T::zero()
    }
}

/// Anisotropic TV: mean over valid right/down texel pairs of the per-channel absolute difference.
pub fn tv_loss<T: Real>(texels: &RgbImage<T>, valid: &[bool]) -> T {
    tv_impl(texels, valid, None)
}

/// [`tv_loss`] and its gradient.
pub fn tv_loss_with_grad<T: Real>(texels: &RgbImage<T>, valid: &[bool]) -> (T, RgbImage<T>) {
    let mut g = RgbImage::filled(texels.width, texels.height, Vec3::zero());
    let v = tv_impl(texels, valid, Some(&mut g));
    (v, g)
}

fn tv_impl<T: Real>(texels: &RgbImage<T>, valid: &[bool], mut grad: Option<&mut RgbImage<T>>) -> T {
    let (w, h) = (texels.width, texels.height);
    let mut pairs = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !valid[i] {
                continue;
            }
            if x + 1 < w && valid[i + 1] {
                pairs.push((i, i + 1));
            }
            if y + 1 < h && valid[i + w] {
                pairs.push((i, i + w));
            }
        }
    }
    if pairs.is_empty() {
        return T::zero();
    }
    let scale = T::one() / T::from_usize_(3 * pairs.len());
    let mut sum = T::zero();
    for &(i, j) in &pairs {
        let d = texels.data[i] - texels.data[j];
        sum += d.abs_sum();
        if let Some(g) = grad.as_deref_mut() {
            for c in 0..3 {
                let s = sign(d[c]) * scale;
                g.data[i][c] += s;
                g.data[j][c] -= s;
            }
        }
    }
    sum * scale
}

/// Bilinear image lookup at continuous pixel coordinates (pixel centers at `+0.5`), clamped.
pub fn sample_image<T: Real>(img: &RgbImage<T>, pixel: [T; 2]) -> Vec3<T> {
    let x = pixel[0] - T::lit(0.5);
    let y = pixel[1] - T::lit(0.5);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let idx = |v: T, n: usize| -> usize {
        if v <= T::zero() {
            0
        } else {
            v.to_usize().unwrap_or(usize::MAX).min(n - 1)
        }
    };
    let (ix0, ix1) = (idx(x0, img.width), idx(x0 + T::one(), img.width));
    let (iy0, iy1) = (idx(y0, img.height), idx(y0 + T::one(), img.height));
    let g = |x: usize, y: usize| img.data[y * img.width + x];
    let one = T::one();
    g(ix0, iy0) * ((one - fx) * (one - fy)) + g(ix1, iy0) * (fx * (one - fy)) + g(ix0, iy1) * ((one - fx) * fy)
        + g(ix1, iy1) * (fx * fy)
}

fn check_inputs<T: Real>(
    mesh: &TriangleMesh<T>,
    atlas: &TextureAtlas<T>,
    images: &[RgbImage<T>],
    cams: &[Camera<T>],
) -> Result<()> {
    if images.is_empty() || images.len() != cams.len() {
        return Err(Error::arg(format!(
            "need matching non-zero numbers of images and cameras, got {} and {}",
            images.len(),
            cams.len()
        )));
    }
    for (i, (img, c)) in images.iter().zip(cams).enumerate() {
        if img.width != c.width || img.height != c.height {
            return Err(Error::arg(format!(
                "view {i}: image is {}x{} but camera is {}x{}",
                img.width, img.height, c.width, c.height
            )));
        }
    }
    if mesh.uv.is_none() {
        return Err(Error::arg("texture baking needs per-corner UVs"));
    }
    if atlas.texel_points.len() != atlas.resolution * atlas.resolution {
        return Err(Error::arg("atlas does not match its resolution"));
    }
    Ok(())
}

fn full_coverage<T: Real>(mesh: &TriangleMesh<T>, cam: &Camera<T>, opts: &RenderOptions) -> Vec<bool> {
    let full = T::one() - T::lit(1e-6);
    render_with(mesh, cam, opts).alpha.data.iter().map(|&a| a >= full).collect()
}

/// True when all pixels of the bilinear footprint at `pixel` are fully covered by the mesh.
fn footprint_covered<T: Real>(covered: &[bool], w: usize, h: usize, pixel: [T; 2]) -> bool {
    let x = (pixel[0] - T::lit(0.5)).floor();
    let y = (pixel[1] - T::lit(0.5)).floor();
    let (Some(x), Some(y)) = (x.to_isize(), y.to_isize()) else {
        return false;
    };
    (0..2).all(|dy| {
        (0..2).all(|dx| {
            let (px, py) = ((x + dx).clamp(0, w as isize - 1), (y + dy).clamp(0, h as isize - 1));
            covered[py as usize * w + px as usize]
        })
    })
}

/// Cosine-weighted mean of the views' colors at every texel some view sees through fully
/// covered pixels. Remaining valid texels take the average of already filled neighbors,
/// spreading outward, and texels out of reach of any sample take the mean sampled color.
/// Invalid texels are mid-gray. Also returns which texels are visible from some view.
pub fn initial_texture<T: Real>(
    mesh: &TriangleMesh<T>,
    atlas: &TextureAtlas<T>,
    images: &[RgbImage<T>],
    cams: &[Camera<T>],
    opts: &RenderOptions,
) -> Result<(RgbImage<T>, Vec<bool>)> {
    check_inputs(mesh, atlas, images, cams)?;
    let bvh = Bvh::new(mesh);
    let covered: Vec<Vec<bool>> = cams.par_iter().map(|c| full_coverage(mesh, c, opts)).collect();
    let res = atlas.resolution;
    let samples: Vec<(bool, Option<Vec3<T>>)> = (0..res * res)
        .into_par_iter()
        .map(|t| {
            let (Some(tp), Some(p)) = (atlas.texel_points[t], atlas.texel_position(mesh, t)) else {
                return (false, None);
            };
            let n = mesh.face_normal(tp.face as usize);
            let mut visible = false;
            let mut acc = Vec3::zero();
            let mut wsum = T::zero();
            for ((img, cam), cov) in images.iter().zip(cams).zip(&covered) {
                if !point_visible(&bvh, p, n, cam) {
                    continue;
                }
                visible = true;
                let Some(pr) = cam.project(p) else { continue };
                if !footprint_covered(cov, cam.width, cam.height, pr.pixel) {
                    continue;
                }
                let w = n.dot((cam.center() - p).normalized());
                acc += sample_image(img, pr.pixel) * w;
                wsum += w;
            }
            (visible, (wsum > T::zero()).then(|| acc / wsum))
        })
        .collect();
    let seen: Vec<bool> = samples.iter().map(|s| s.0).collect();
    let sampled = samples.iter().filter(|s| s.1.is_some()).count();
    if sampled == 0 {
        return Err(Error::NoVisibleTexels);
    }
    let mean = samples.iter().filter_map(|s| s.1).fold(Vec3::zero(), |a, c| a + c) / T::from_usize_(sampled);
    let gray = Vec3::splat(T::lit(0.5));
    let mut tex = RgbImage::filled(res, res, gray);
    let mut filled: Vec<bool> = samples.iter().map(|s| s.1.is_some()).collect();
    for (t, s) in samples.iter().enumerate() {
        if let Some(c) = s.1 {
            tex.data[t] = c;
        }
    }
    loop {
        let mut next = Vec::new();
        for t in 0..res * res {
            if filled[t] || !atlas.valid_mask[t] {
                continue;
            }
            let (x, y) = (t % res, t / res);
            let mut acc = Vec3::zero();
            let mut k = 0;
            let nbrs = [
                (x > 0).then(|| t - 1),
                (x + 1 < res).then(|| t + 1),
                (y > 0).then(|| t - res),
                (y + 1 < res).then(|| t + res),
            ];
            for q in nbrs.into_iter().flatten() {
                if filled[q] && atlas.valid_mask[q] {
                    acc += tex.data[q];
                    k += 1;
                }
            }
            if k > 0 {
                next.push((t, acc / T::from_usize_(k)));
            }
        }
        if next.is_empty() {
            break;
        }
        for (t, c) in next {
            tex.data[t] = c;
            filled[t] = true;
        }
    }
    for t in 0..res * res {
        if atlas.valid_mask[t] && !filled[t] {
            tex.data[t] = mean;
        }
    }
    Ok((tex, seen))
}

struct ViewLoss<T> {
    l1: T,
    ssim: T,
    texel_grad: RgbImage<T>,
}

/// Photometric loss of one view. Pixels the render does not fully cover are copied from the
/// observation, so background and silhouette blending never enter the comparison.
fn view_loss<T: Real>(
    mesh: &TriangleMesh<T>,
    tex: &RgbImage<T>,
    obs: &RgbImage<T>,
    cam: &Camera<T>,
    cfg: &TexOptConfig,
) -> Result<ViewLoss<T>> {
    let out = render_textured(mesh, tex, cam, &cfg.render)?;
    let full = T::one() - T::lit(1e-6);
    let mask: Vec<bool> = out.alpha.data.iter().map(|&a| a >= full).collect();
    let mut pred = obs.clone();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            pred.data[i] = out.image.data[i];
        }
    }
    let n3 = T::from_usize_(3 * obs.data.len());
    let mut l1 = T::zero();
    let (s, gs) = ssim_with_grad(&pred, obs)?;
    let (w_l1, w_ssim) = (T::lit(cfg.w_l1), T::lit(cfg.w_ssim));
    let mut g = vec![Vec3::zero(); obs.data.len()];
    for (i, &m) in mask.iter().enumerate() {
        let d = pred.data[i] - obs.data[i];
        l1 += d.abs_sum();
        if !m {
            continue;
        }
        for c in 0..3 {
            g[i][c] = w_l1 * sign(d[c]) / n3 - w_ssim * gs.data[i][c];
        }
    }
    Ok(ViewLoss {
        l1: l1 / n3,
        ssim: s,
        texel_grad: texture_backward(&out, mesh, &g)?,
    })
}

/// Texture optimization in UV space: `w_l1 * L1 + w_ssim * (1 - SSIM) + w_tv * TV` averaged
/// over the views, minimized with Adam from the projective initialization. Returns the
/// lowest-loss iterate, so the result is never worse than the initialization.
pub fn bake_texture<T: Real>(
    mesh: &TriangleMesh<T>,
    atlas: &TextureAtlas<T>,
    images: &[RgbImage<T>],
    cams: &[Camera<T>],
    cfg: &TexOptConfig,
) -> Result<BakeOutput<T>> {
    cfg.validate()?;
    let (mut tex, seen) = initial_texture(mesh, atlas, images, cams, &cfg.render)?;
    let res = atlas.resolution;
    let views = T::from_usize_(images.len());
    let mut adam = AdamState::new(res * res);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let w_tv = T::lit(cfg.w_tv);
    let mut best = (f64::INFINITY, 0, tex.clone());
    for step in 0..=cfg.steps {
        let per_view: Vec<ViewLoss<T>> = images
            .par_iter()
            .zip(cams.par_iter())
            .map(|(obs, cam)| view_loss(mesh, &tex, obs, cam, cfg))
            .collect::<Result<_>>()?;
        let (tv, tv_grad) = tv_loss_with_grad(&tex, &atlas.valid_mask);
        let l1 = per_view.iter().map(|v| v.l1).sum::<T>() / views;
        let s = per_view.iter().map(|v| v.ssim).sum::<T>() / views;
        let total = T::lit(cfg.w_l1) * l1 + T::lit(cfg.w_ssim) * (T::one() - s) + w_tv * tv;
        let rec = TexLossRecord {
            step,
            l1: l1.as_f64(),
            ssim: s.as_f64(),
            tv: tv.as_f64(),
            total: total.as_f64(),
        };
        debug!("texture step {step}: {rec:?}");
        trace.push(rec);
        if !rec.total.is_finite() {
            return Err(Error::NonFinite { iteration: step });
        }
        if rec.total < best.0 {
            best = (rec.total, step, tex.clone());
        }
        if step == cfg.steps {
            break;
        }
        let mut grad = vec![Vec3::zero(); res * res];
        for (t, g) in grad.iter_mut().enumerate() {
            if !atlas.valid_mask[t] {
                continue;
            }
            for v in &per_view {
                *g += v.texel_grad.data[t];
            }
            *g = *g / views + tv_grad.data[t] * w_tv;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite { iteration: step });
        }
        adam_step(&mut adam, &mut tex.data, &grad, T::lit(cfg.learning_rate))?;
        for c in &mut tex.data {
            *c = Vec3 {
                x: c.x.clamp01(),
                y: c.y.clamp01(),
                z: c.z.clamp01(),
            };
        }
    }
    let mut out = atlas.clone();
    out.texels = best.2;
    Ok(BakeOutput {
        atlas: out,
        trace,
        best_step: best.1,
        seen,
    })
}
