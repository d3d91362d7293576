use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::real::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment buffers, one per vertex.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Vec3<T>>,
    pub v: Vec<Vec3<T>>,
    pub step: i32,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![Vec3::zero(); n],
            v: vec![Vec3::zero(); n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave everything untouched.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    vertices: &mut [Vec3<T>],
    grads: &[Vec3<T>],
    learning_rate: T,
) -> Result<()> {
    if state.m.len() != vertices.len() || grads.len() != vertices.len() {
        return Err(Error::arg(format!(
            "optimizer state has {} entries for {} vertices and {} gradients",
            state.m.len(),
            vertices.len(),
            grads.len()
        )));
    }
    if let Some(bad) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::arg(format!("non-finite gradient at vertex {bad}")));
    }
    let (b1, b2, eps) = (T::lit(ADAM_BETA1), T::lit(ADAM_BETA2), T::lit(ADAM_EPS));
    state.step += 1;
    let c1 = T::one() - b1.powi(state.step);
    let c2 = T::one() - b2.powi(state.step);
    for ((p, g), (m, v)) in vertices
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for k in 0..3 {
            m[k] = b1 * m[k] + (T::one() - b1) * g[k];
            v[k] = b2 * v[k] + (T::one() - b2) * g[k] * g[k];
            let mh = m[k] / c1;
            let vh = v[k] / c2;
            p[k] -= learning_rate * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}
