//! Orbit camera rig and pinhole projection.
//!
//! World frame is right-handed with +Y up. A camera at azimuth `az` and
//! elevation `el` sits at `distance * (sin az cos el, sin el, cos az cos el)`
//! and looks at the origin; azimuth 0 is the "front" view on +Z. Pixel
//! coordinates are continuous with the origin at the top-left image corner,
//! +x right, +y down; pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{vec3, Vec3};
use crate::real::Real;

pub const DEFAULT_FOV_DEG: f64 = 60.0;
pub const DEFAULT_VIEWS: usize = 4;
pub const DEFAULT_RESOLUTION: usize = 256;

/// Orbit distance equal to 1.5 times the NDC focal length `cot(fov / 2)`.
pub fn default_distance(fov_deg: f64) -> f64 {
    1.5 / (fov_deg.to_radians() * 0.5).tan()
}

/// Serialized form of one camera; field names are the JSON keys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub fov_deg: f64,
    pub distance: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PresetSpec {
    pub n_views: usize,
    pub fov_deg: f64,
    pub distance: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for PresetSpec {
    fn default() -> Self {
        Self {
            n_views: DEFAULT_VIEWS,
            fov_deg: DEFAULT_FOV_DEG,
            distance: default_distance(DEFAULT_FOV_DEG),
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
        }
    }
}

/// Camera rig JSON: `{"preset": {...}}`, a bare camera array, or `{"cameras": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RigSpec {
    Preset { preset: PresetSpec },
    Explicit(Vec<CameraSpec>),
    Wrapped { cameras: Vec<CameraSpec> },
}

impl RigSpec {
    pub fn cameras<T: Real>(&self) -> Result<Vec<Camera<T>>> {
        match self {
            RigSpec::Preset { preset } => preset_rig(
                preset.n_views,
                preset.fov_deg,
                preset.distance,
                preset.width,
                preset.height,
            ),
            RigSpec::Explicit(list) | RigSpec::Wrapped { cameras: list } => {
                list.iter().map(Camera::from_spec).collect()
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Writes cameras as an explicit JSON array.
pub fn rig_to_json<T: Real>(cams: &[Camera<T>]) -> String {
    let specs: Vec<CameraSpec> = cams.iter().map(Camera::spec).collect();
    serde_json::to_string_pretty(&specs).expect("camera specs serialize")
}

/// A pinhole camera on the orbit rig.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T> {
    pub width: usize,
    pub height: usize,
    pub fov_deg: T,
    pub azimuth_deg: T,
    pub elevation_deg: T,
    pub distance: T,
    center: Vec3<T>,
    right: Vec3<T>,
    up: Vec3<T>,
    forward: Vec3<T>,
    /// Focal length in pixels (vertical field of view).
    focal: T,
}

/// A projected point: continuous pixel coordinates and camera-space depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub pixel: [T; 2],
    pub depth: T,
}

impl<T: Real> Camera<T> {
    pub fn new(
        width: usize,
        height: usize,
        fov_deg: T,
        azimuth_deg: T,
        elevation_deg: T,
        distance: T,
    ) -> Result<Self> {
        if !(fov_deg > T::zero() && fov_deg < T::lit(180.0)) {
            return Err(Error::arg(format!("fov_deg must lie in (0,180), got {fov_deg}")));
        }
        if !(distance > T::zero()) || !distance.is_finite() {
            return Err(Error::arg(format!("distance must be positive, got {distance}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::arg("camera resolution must be non-zero"));
        }
        let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let dir = vec3(az.sin() * el.cos(), el.sin(), az.cos() * el.cos());
        let center = dir * distance;
        let forward = -dir;
        // d(dir)/d(az), normalized; equals forward x (+Y) away from the poles.
        let right = vec3(az.cos(), T::zero(), -az.sin());
        let up = right.cross(forward);
        let focal = T::from_usize_(height) * T::lit(0.5) / (fov_deg.to_radians() * T::lit(0.5)).tan();
        Ok(Self {
            width,
            height,
            fov_deg,
            azimuth_deg,
            elevation_deg,
            distance,
            center,
            right,
            up,
            forward,
            focal,
        })
    }

    pub fn from_spec(s: &CameraSpec) -> Result<Self> {
        Self::new(
            s.width,
            s.height,
            T::lit(s.fov_deg),
            T::lit(s.azimuth_deg),
            T::lit(s.elevation_deg),
            T::lit(s.distance),
        )
    }

    pub fn spec(&self) -> CameraSpec {
        CameraSpec {
            azimuth_deg: self.azimuth_deg.as_f64(),
            elevation_deg: self.elevation_deg.as_f64(),
            fov_deg: self.fov_deg.as_f64(),
            distance: self.distance.as_f64(),
            width: self.width,
            height: self.height,
        }
    }

    /// Same pose with a different image size.
    pub fn with_resolution(&self, width: usize, height: usize) -> Self {
        Self::new(
            width,
            height,
            self.fov_deg,
            self.azimuth_deg,
            self.elevation_deg,
            self.distance,
        )
        .expect("valid camera stays valid")
    }

    pub fn center(&self) -> Vec3<T> {
        self.center
    }
    pub fn right(&self) -> Vec3<T> {
        self.right
    }
    pub fn up(&self) -> Vec3<T> {
        self.up
    }
    pub fn forward(&self) -> Vec3<T> {
        self.forward
    }
    pub fn focal_px(&self) -> T {
        self.focal
    }

    pub fn principal_point(&self) -> [T; 2] {
        [
            T::from_usize_(self.width) * T::lit(0.5),
            T::from_usize_(self.height) * T::lit(0.5),
        ]
    }

    /// World to camera coordinates `(x right, y up, z = depth along the view axis)`.
    #[inline]
    pub fn to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        let d = p - self.center;
        vec3(self.right.dot(d), self.up.dot(d), self.forward.dot(d))
    }

    /// Perspective projection; `None` for points on or behind the camera plane.
    #[inline]
    pub fn project(&self, p: Vec3<T>) -> Option<Projection<T>> {
        let q = self.to_camera(p);
        if !(q.z > T::zero()) {
            return None;
        }
        let [cx, cy] = self.principal_point();
        Some(Projection {
            pixel: [cx + self.focal * q.x / q.z, cy - self.focal * q.y / q.z],
            depth: q.z,
        })
    }

    /// Inverse of [`Camera::project`] for a given depth.
    pub fn unproject(&self, pixel: [T; 2], depth: T) -> Vec3<T> {
        let [cx, cy] = self.principal_point();
        let x = (pixel[0] - cx) / self.focal;
        let y = (cy - pixel[1]) / self.focal;
        self.center + (self.forward + self.right * x + self.up * y) * depth
    }

    /// Unit ray direction through a pixel position.
    pub fn ray_dir(&self, pixel: [T; 2]) -> Vec3<T> {
        (self.unproject(pixel, T::one()) - self.center).normalized()
    }

    /// Row-major 4x4 world-to-camera transform (camera looks down -Z, OpenGL style).
    pub fn view_matrix(&self) -> [[T; 4]; 4] {
        let (r, u, f, c) = (self.right, self.up, self.forward, self.center);
        let z = T::zero();
        [
            [r.x, r.y, r.z, -r.dot(c)],
            [u.x, u.y, u.z, -u.dot(c)],
            [-f.x, -f.y, -f.z, f.dot(c)],
            [z, z, z, T::one()],
        ]
    }

    /// Row-major OpenGL-style perspective projection matrix.
    pub fn projection_matrix(&self, near: T, far: T) -> [[T; 4]; 4] {
        let z = T::zero();
        let t = T::one() / (self.fov_deg.to_radians() * T::lit(0.5)).tan();
        let aspect = T::from_usize_(self.width) / T::from_usize_(self.height);
        [
            [t / aspect, z, z, z],
            [z, t, z, z],
            [z, z, (far + near) / (near - far), T::lit(2.0) * far * near / (near - far)],
            [z, z, -T::one(), z],
        ]
    }
}

/// Cameras evenly spaced in azimuth (`360 k / n_views`) at zero elevation.
pub fn preset_rig<T: Real>(
    n_views: usize,
    fov_deg: f64,
    distance: f64,
    width: usize,
    height: usize,
) -> Result<Vec<Camera<T>>> {
    if n_views == 0 {
        return Err(Error::arg("n_views must be at least 1"));
    }
    (0..n_views)
        .map(|k| {
            Camera::new(
                width,
                height,
                T::lit(fov_deg),
                T::lit(360.0 * k as f64 / n_views as f64),
                T::zero(),
                T::lit(distance),
            )
        })
        .collect()
}

/// The default rig: 4 views, 60 degrees, 256 x 256.
pub fn default_rig<T: Real>() -> Vec<Camera<T>> {
    let p = PresetSpec::default();
    preset_rig(p.n_views, p.fov_deg, p.distance, p.width, p.height).expect("default rig is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_rig_layout() {
        let cams: Vec<Camera<f64>> = default_rig();
        let az: Vec<f64> = cams.iter().map(|c| c.azimuth_deg).collect();
        assert_eq!(az, vec![0.0, 90.0, 180.0, 270.0]);
        let d = 1.5 / (30f64).to_radians().tan();
        assert!((d - 2.598).abs() < 1e-3);
        assert!((cams[0].center() - vec3(0.0, 0.0, d)).norm() < 1e-12);
        for c in &cams {
            let p = c.project(Vec3::zero()).unwrap();
            assert!((p.pixel[0] - 128.0).abs() < 1e-9 && (p.pixel[1] - 128.0).abs() < 1e-9);
            assert!((p.depth - d).abs() < 1e-12);
        }
    }

    #[test]
    fn front_camera_sign_conventions() {
        let cams: Vec<Camera<f64>> = preset_rig(1, 60.0, default_distance(60.0), 64, 64).unwrap();
        let c = &cams[0];
        assert!((c.forward() - vec3(0.0, 0.0, -1.0)).norm() < 1e-12);
        let right = c.project(vec3(0.01, 0.0, 0.0)).unwrap();
        assert!(right.pixel[0] > 32.0);
        let up = c.project(vec3(0.0, 0.01, 0.0)).unwrap();
        assert!(up.pixel[1] < 32.0);
        assert!(c.project(vec3(0.0, 0.0, 5.0)).is_none());
    }

    #[test]
    fn opposite_cameras_relate_rotation_and_reflection() {
        let cams: Vec<Camera<f64>> = preset_rig(2, 60.0, 2.6, 64, 48).unwrap();
        let p = vec3(0.2, -0.3, 0.4);
        let a = cams[0].project(p).unwrap();
        // rotation by 180 degrees about +Y: identical pixel
        let b = cams[1].project(vec3(-p.x, p.y, -p.z)).unwrap();
        assert!((a.pixel[0] - b.pixel[0]).abs() < 1e-9 && (a.pixel[1] - b.pixel[1]).abs() < 1e-9);
        // reflection through z = 0: horizontally mirrored pixel
        let m = cams[1].project(vec3(p.x, p.y, -p.z)).unwrap();
        assert!((a.pixel[0] + m.pixel[0] - 64.0).abs() < 1e-9);
        assert!((a.pixel[1] - m.pixel[1]).abs() < 1e-9);
    }

    #[test]
    fn top_down_camera_is_well_defined() {
        let c: Camera<f64> = Camera::new(32, 32, 60.0, 0.0, 90.0, 2.6).unwrap();
        assert!((c.forward() - vec3(0.0, -1.0, 0.0)).norm() < 1e-12);
        assert!((c.up().norm() - 1.0).abs() < 1e-12);
        assert!(c.right().dot(c.up()).abs() < 1e-12);
    }

    #[test]
    fn invalid_cameras_rejected() {
        assert!(Camera::<f64>::new(8, 8, 180.0, 0.0, 0.0, 1.0).is_err());
        assert!(Camera::<f64>::new(8, 8, 60.0, 0.0, 0.0, 0.0).is_err());
        assert!(preset_rig::<f64>(0, 60.0, 1.0, 8, 8).is_err());
    }

    #[test]
    fn rig_json_forms() {
        let preset = r#"{"preset": {"n_views":4, "fov_deg":60.0, "distance":2.598, "width":256, "height":256}}"#;
        let cams: Vec<Camera<f64>> = RigSpec::from_json(preset).unwrap().cameras().unwrap();
        assert_eq!(cams.len(), 4);
        let json = rig_to_json(&cams);
        let back: Vec<Camera<f64>> = RigSpec::from_json(&json).unwrap().cameras().unwrap();
        assert_eq!(cams, back);
        let explicit = r#"[{"azimuth_deg":10,"elevation_deg":5,"fov_deg":45,"distance":3,"width":16,"height":8}]"#;
        let cams: Vec<Camera<f64>> = RigSpec::from_json(explicit).unwrap().cameras().unwrap();
        assert_eq!(cams[0].width, 16);
        assert_eq!(cams[0].elevation_deg, 5.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn project_unproject_round_trip(
            az in 0.0f64..360.0, el in -60.0f64..60.0,
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0,
        ) {
            let c: Camera<f64> = Camera::new(256, 256, 60.0, az, el, 2.598).unwrap();
            let p = vec3(x, y, z);
            let pr = c.project(p).unwrap();
            let q = c.unproject(pr.pixel, pr.depth);
            prop_assert!((p - q).norm() <= 1e-6);
        }
    }
}
