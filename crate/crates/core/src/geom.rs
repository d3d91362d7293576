//! Small fixed-size vector algebra.

use std::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

#[inline]
pub fn vec3<T>(x: T, y: T, z: T) -> Vec3<T> {
    Vec3 { x, y, z }
}

impl<T: Real> Vec3<T> {
    pub fn zero() -> Self {
        Self::splat(T::zero())
    }

    pub fn splat(v: T) -> Self {
        vec3(v, v, v)
    }

    pub fn from_f64(v: [f64; 3]) -> Self {
        vec3(T::lit(v[0]), T::lit(v[1]), T::lit(v[2]))
    }

    pub fn to_f64(self) -> [f64; 3] {
        [self.x.as_f64(), self.y.as_f64(), self.z.as_f64()]
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm2(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.norm2().sqrt()
    }

    /// Unit vector, or zero for the zero vector.
    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            Self::zero()
        }
    }

    #[inline]
    pub fn abs_sum(self) -> T {
        self.x.abs() + self.y.abs() + self.z.abs()
    }

    pub fn min_elem(self, o: Self) -> Self {
        vec3(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    pub fn max_elem(self, o: Self) -> Self {
        vec3(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }

    pub fn lerp(self, o: Self, t: T) -> Self {
        self + (o - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        vec3(U::lit(self.x.as_f64()), U::lit(self.y.as_f64()), U::lit(self.z.as_f64()))
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> SubAssign for Vec3<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.x -= o.x;
        self.y -= o.y;
        self.z -= o.z;
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl<T: Real> Div<T> for Vec3<T> {
    type Output = Self;
    #[inline]
    fn div(self, s: T) -> Self {
        vec3(self.x / s, self.y / s, self.z / s)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl<T> Index<usize> for Vec3<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        match i {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

impl<T> IndexMut<usize> for Vec3<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        match i {
            0 => &mut self.x,
            1 => &mut self.y,
            2 => &mut self.z,
            _ => panic!("Vec3 index {i} out of range"),
        }
    }
}

/// 2D cross product (z component of the 3D cross).
#[inline]
pub fn cross2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3<T> {
    pub rows: [Vec3<T>; 3],
}

impl<T: Real> Mat3<T> {
    pub fn from_rows(r0: Vec3<T>, r1: Vec3<T>, r2: Vec3<T>) -> Self {
        Self { rows: [r0, r1, r2] }
    }

    pub fn mul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        vec3(self.rows[0].dot(v), self.rows[1].dot(v), self.rows[2].dot(v))
    }

    /// `M^T v`.
    pub fn tmul_vec(&self, v: Vec3<T>) -> Vec3<T> {
        self.rows[0] * v.x + self.rows[1] * v.y + self.rows[2] * v.z
    }

    pub fn det(&self) -> T {
        self.rows[0].dot(self.rows[1].cross(self.rows[2]))
    }

    /// Solves `M x = b` by Cramer's rule; `None` when `|det|` is below `eps`.
    pub fn solve(&self, b: Vec3<T>, eps: T) -> Option<Vec3<T>> {
        let det = self.det();
        if det.abs() <= eps {
            return None;
        }
        let [r0, r1, r2] = self.rows;
        let cols = [
            vec3(r0.x, r1.x, r2.x),
            vec3(r0.y, r1.y, r2.y),
            vec3(r0.z, r1.z, r2.z),
        ];
        let d = |a: Vec3<T>, b: Vec3<T>, c: Vec3<T>| a.dot(b.cross(c));
        Some(vec3(
            d(b, cols[1], cols[2]) / det,
            d(cols[0], b, cols[2]) / det,
            d(cols[0], cols[1], b) / det,
        ))
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub fn empty() -> Self {
        Self {
            min: Vec3::splat(T::infinity()),
            max: Vec3::splat(T::neg_infinity()),
        }
    }

    pub fn from_points<'a>(pts: impl IntoIterator<Item = &'a Vec3<T>>) -> Self {
        let mut b = Self::empty();
        for p in pts {
            b.grow(*p);
        }
        b
    }

    pub fn grow(&mut self, p: Vec3<T>) {
        self.min = self.min.min_elem(p);
        self.max = self.max.max_elem(p);
    }

    pub fn union(&self, o: &Self) -> Self {
        Self {
            min: self.min.min_elem(o.min),
            max: self.max.max_elem(o.max),
        }
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::lit(0.5)
    }

    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    /// Squared distance from `p` to the box (zero inside).
    pub fn dist2(&self, p: Vec3<T>) -> T {
        let mut d = T::zero();
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                T::zero()
            };
            d += v * v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cramer_solves_diagonal_system() {
        let m = Mat3::from_rows(vec3(2.0, 0.0, 0.0), vec3(0.0, 4.0, 0.0), vec3(1.0, 0.0, 1.0));
        let x = m.solve(vec3(2.0, 8.0, 4.0), 1e-12).unwrap();
        assert_eq!(x, vec3(1.0, 2.0, 3.0));
        let singular = Mat3::from_rows(vec3(1.0, 1.0, 0.0), vec3(1.0, 1.0, 0.0), vec3(0.0, 0.0, 1.0));
        assert!(singular.solve(vec3(1.0, 1.0, 1.0), 1e-12).is_none());
    }

    #[test]
    fn cross_is_right_handed() {
        let x: Vec3<f64> = vec3(1.0, 0.0, 0.0);
        let y = vec3(0.0, 1.0, 0.0);
        assert_eq!(x.cross(y), vec3(0.0, 0.0, 1.0));
    }
}
