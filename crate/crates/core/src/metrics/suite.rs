//! Procedural ground-truth meshes for the benchmark: closed surfaces of genus 0, 1 and 2.

use crate::carve::{marching_cubes, simplify, ScalarField, SimplifyOptions};
use crate::error::Result;
use crate::geom::{vec3, Vec3};
use crate::mesh::TriangleMesh;
use crate::real::Real;

/// Bounding radius every suite mesh is scaled to.
pub const SUITE_RADIUS: f64 = 0.9;
pub const SUITE_GRID: usize = 96;
pub const SUITE_FACES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteShape {
    Sphere,
    Torus,
    RoundedCube,
    Metaballs,
    DoubleTorus,
}

impl SuiteShape {
    pub const ALL: [SuiteShape; 5] = [
        SuiteShape::Sphere,
        SuiteShape::Torus,
        SuiteShape::RoundedCube,
        SuiteShape::Metaballs,
        SuiteShape::DoubleTorus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteShape::Sphere => "sphere",
            SuiteShape::Torus => "torus",
            SuiteShape::RoundedCube => "rounded_cube",
            SuiteShape::Metaballs => "metaballs",
            SuiteShape::DoubleTorus => "double_torus",
        }
    }

    pub fn genus(self) -> usize {
        match self {
            SuiteShape::Torus => 1,
            SuiteShape::DoubleTorus => 2,
            _ => 0,
        }
    }

    /// Positive inside, zero on the surface.
    pub fn field(self, p: Vec3<f64>) -> f64 {
        match self {
            SuiteShape::Sphere => 0.8 - p.norm(),
            SuiteShape::Torus => -torus_sdf(tilt(p, 1.1), 0.55, 0.22),
            SuiteShape::RoundedCube => {
                // a body diagonal stands vertical, so no face is seen only edge-on
                let q = rot_z(tilt(rot_y(p, 0.35), 0.6155), std::f64::consts::FRAC_PI_4);
                let d = vec3(q.x.abs() - 0.45, q.y.abs() - 0.45, q.z.abs() - 0.45);
                let outside = d.max_elem(Vec3::zero()).norm();
                let inside = d.x.max(d.y).max(d.z).min(0.0);
                0.15 - (outside + inside)
            }
            SuiteShape::Metaballs => {
                let balls = [
                    (vec3(-0.38, -0.12, 0.05), 0.36),
                    (vec3(0.34, -0.05, -0.08), 0.32),
                    (vec3(0.0, 0.36, 0.1), 0.28),
                ];
                balls
                    .iter()
                    .map(|(c, r)| r * r / ((p - *c).norm2() + 1e-12))
                    .sum::<f64>()
                    - 1.0
            }
            SuiteShape::DoubleTorus => {
                let q = tilt(p, 1.1);
                let a = torus_sdf(q - vec3(0.34, 0.0, 0.0), 0.34, 0.13);
                let b = torus_sdf(q + vec3(0.34, 0.0, 0.0), 0.34, 0.13);
                -smooth_min(a, b, 0.06)
            }
        }
    }

    /// Marching cubes on a fine grid, simplified and scaled to [`SUITE_RADIUS`].
    pub fn mesh<T: Real>(self) -> Result<TriangleMesh<T>> {
        let field = ScalarField::sample_cube(SUITE_GRID, 1.0, |p: Vec3<f64>| self.field(p));
        let mc = marching_cubes(&field, 0.0);
        let (mut m, _) = simplify(
            &mc,
            &SimplifyOptions {
                target_faces: SUITE_FACES,
                max_error: None,
            },
        )?;
        m.normalize_to_ball(SUITE_RADIUS);
        Ok(m.cast())
    }
}

fn torus_sdf(p: Vec3<f64>, major: f64, minor: f64) -> f64 {
    let q = (p.x * p.x + p.z * p.z).sqrt() - major;
    (q * q + p.y * p.y).sqrt() - minor
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    let h = (0.5 + 0.5 * (b - a) / k).clamp(0.0, 1.0);
    b + (a - b) * h - k * h * (1.0 - h)
}

/// Rotation about x; tilts ring axes toward the horizontal so the holes face the equatorial views.
fn tilt(p: Vec3<f64>, angle: f64) -> Vec3<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    vec3(p.x, c * p.y - s * p.z, s * p.y + c * p.z)
}

fn rot_z(p: Vec3<f64>, angle: f64) -> Vec3<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    vec3(c * p.x - s * p.y, s * p.x + c * p.y, p.z)
}

fn rot_y(p: Vec3<f64>, angle: f64) -> Vec3<f64> {
    let (c, s) = (angle.cos(), angle.sin());
    vec3(c * p.x + s * p.z, p.y, -s * p.x + c * p.z)
}

/// All five suite meshes with their names.
pub fn procedural_suite<T: Real>() -> Result<Vec<(String, TriangleMesh<T>)>> {
    SuiteShape::ALL
        .iter()
        .map(|s| Ok((s.name().to_string(), s.mesh()?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_meshes_are_closed_with_expected_genus() {
        for s in SuiteShape::ALL {
            let m: TriangleMesh<f64> = s.mesh().unwrap();
            assert!(m.check_manifold().is_watertight_manifold(), "{}", s.name());
            let e = m.edges().len() as i64;
            let chi = m.vertices.len() as i64 - e + m.faces.len() as i64;
            assert_eq!(chi, 2 - 2 * s.genus() as i64, "{}", s.name());
            let r = m.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!((r - SUITE_RADIUS).abs() < 1e-9);
            assert!(m.signed_volume() > 0.0);
        }
    }
}
