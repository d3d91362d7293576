use crate::diffrast::{PixelGrads, RenderOutput, VertexGrads};
use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imageio::{AlphaMask, NormalMap};
use crate::mesh::TriangleMesh;
use crate::real::Real;

/// Loss value, its parts, and gradients routed to the rasterizer and to the vertices.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub total: T,
    pub normal: T,
    pub alpha: T,
    pub consistency: T,
    /// Per view, already scaled by the loss weights.
    pub pixel_grads: Vec<PixelGrads<T>>,
    /// Gradient of `lambda_nc * L_nc`.
    pub vertex_grads: VertexGrads<T>,
}

#[inline]
fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Mean over interior edges of `1 - cos` between the two incident face normals, with its vertex gradient.
pub fn normal_consistency<T: Real>(mesh: &TriangleMesh<T>) -> (T, VertexGrads<T>) {
    let mut grads = VertexGrads::zeros(mesh.vertices.len());
    let pairs: Vec<(u32, u32)> = mesh
        .edge_faces()
        .into_iter()
        .filter(|(_, _, fs)| fs.len() == 2)
        .map(|(_, _, fs)| (fs[0], fs[1]))
        .collect();
    if pairs.is_empty() {
        return (T::zero(), grads);
    }
    let cross: Vec<Vec3<T>> = (0..mesh.faces.len()).map(|f| mesh.face_cross(f)).collect();
    let unit: Vec<Vec3<T>> = cross.iter().map(|c| c.normalized()).collect();
    let scale = T::one() / T::from_usize_(pairs.len());
    let mut value = T::zero();
    let mut g_unit = vec![Vec3::zero(); mesh.faces.len()];
    for &(f, g) in &pairs {
        let (nf, ng) = (unit[f as usize], unit[g as usize]);
        value += T::one() - nf.dot(ng);
        g_unit[f as usize] -= ng * scale;
        g_unit[g as usize] -= nf * scale;
    }
    for (f, face) in mesh.faces.iter().enumerate() {
        let c = cross[f];
        let len = c.norm();
        if len == T::zero() {
            continue;
        }
        let u = c / len;
        let gc = (g_unit[f] - u * u.dot(g_unit[f])) / len;
        let [a, b, cc] = face.map(|v| v as usize);
        let e1 = mesh.vertices[b] - mesh.vertices[a];
        let e2 = mesh.vertices[cc] - mesh.vertices[a];
        let g1 = e2.cross(gc);
        let g2 = gc.cross(e1);
        grads.values[b] += g1;
        grads.values[cc] += g2;
        grads.values[a] -= g1 + g2;
    }
    (value * scale, grads)
}

/// `L_n + lambda_alpha * L_alpha + lambda_nc * L_nc` with element-wise mean L1 image terms.
pub fn loss_total<T: Real>(
    rendered: &[RenderOutput<T>],
    observed_normals: &[NormalMap<T>],
    observed_alphas: &[AlphaMask<T>],
    mesh: &TriangleMesh<T>,
    lambda_alpha: T,
    lambda_nc: T,
) -> Result<LossOutput<T>> {
    let views = rendered.len();
    if views == 0 || observed_normals.len() != views || observed_alphas.len() != views {
        return Err(Error::arg(format!(
            "view counts differ: {} renders, {} normal maps, {} masks",
            views,
            observed_normals.len(),
            observed_alphas.len()
        )));
    }
    let inv_views = T::one() / T::from_usize_(views);
    let mut l_n = T::zero();
    let mut l_a = T::zero();
    let mut pixel_grads = Vec::with_capacity(views);
    for ((r, on), oa) in rendered.iter().zip(observed_normals).zip(observed_alphas) {
        let (w, h) = (r.normal_image.width, r.normal_image.height);
        if on.width != w || on.height != h || oa.width != w || oa.height != h {
            return Err(Error::arg(format!(
                "observation is {}x{} but render is {w}x{h}",
                on.width, on.height
            )));
        }
        let n = T::from_usize_(w * h);
        let gn_scale = inv_views / (n * T::lit(3.0));
        let ga_scale = lambda_alpha * inv_views / n;
        let mut g = PixelGrads::zeros(w, h);
        let mut sum_n = T::zero();
        let mut sum_a = T::zero();
        for i in 0..w * h {
            let d = r.normal_image.data[i] - on.data[i];
            sum_n += d.abs_sum();
            g.normal[i] = Vec3 {
                x: sign(d.x),
                y: sign(d.y),
                z: sign(d.z),
            } * gn_scale;
            let da = r.alpha.data[i] - oa.data[i];
            sum_a += da.abs();
            g.alpha[i] = sign(da) * ga_scale;
        }
        l_n += sum_n / (n * T::lit(3.0));
        l_a += sum_a / n;
        pixel_grads.push(g);
    }
    l_n *= inv_views;
    l_a *= inv_views;
    let (l_nc, mut vertex_grads) = normal_consistency(mesh);
    for g in &mut vertex_grads.values {
        *g = *g * lambda_nc;
    }
    Ok(LossOutput {
        total: l_n + lambda_alpha * l_a + lambda_nc * l_nc,
        normal: l_n,
        alpha: l_a,
        consistency: l_nc,
        pixel_grads,
        vertex_grads,
    })
}
