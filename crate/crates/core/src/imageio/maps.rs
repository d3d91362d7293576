use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::real::Real;

/// Foreground/background cut shared by normal decoding and alpha extraction.
pub const BACKGROUND_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            b => Err(Error::Format(format!("unsupported bit depth {b}"))),
        }
    }
}

/// Integer raster as stored in PNG files, row-major with top-left origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntRaster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub depth: BitDepth,
    pub data: Vec<u16>,
}

/// Per-pixel world-space normals; background pixels hold the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vec3<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMask<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// Linear RGB image with channels in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vec3<T>>,
}

impl<T: Real> NormalMap<T> {
    pub fn background(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![Vec3::zero(); width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3<T> {
        self.data[y * self.width + x]
    }

    /// Renormalizes pixels at or above `threshold` and zeroes the rest.
    pub fn sanitized(&self, threshold: T) -> Self {
        let data = self
            .data
            .iter()
            .map(|n| {
                if n.norm() >= threshold {
                    n.normalized()
                } else {
                    Vec3::zero()
                }
            })
            .collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

impl<T: Real> AlphaMask<T> {
    pub fn filled(width: usize, height: usize, v: T) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn count_foreground(&self) -> usize {
        self.data.iter().filter(|&&a| a > T::zero()).count()
    }
}

impl<T: Real> RgbImage<T> {
    pub fn filled(width: usize, height: usize, c: Vec3<T>) -> Self {
        Self {
            width,
            height,
            data: vec![c; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Vec3<T> {
        self.data[y * self.width + x]
    }

    pub fn to_raster(&self, depth: BitDepth) -> IntRaster {
        let max = depth.max_value() as f64;
        let data = self
            .data
            .iter()
            .flat_map(|c| c.to_f64())
            .map(|v| (v.clamp(0.0, 1.0) * max).round() as u16)
            .collect();
        IntRaster {
            width: self.width,
            height: self.height,
            channels: 3,
            depth,
            data,
        }
    }

    pub fn from_raster(r: &IntRaster) -> Result<Self> {
        if r.channels != 3 {
            return Err(Error::Format(format!(
                "expected 3 channels, found {}",
                r.channels
            )));
        }
        let max = T::lit(r.depth.max_value() as f64);
        let data = r
            .data
            .chunks_exact(3)
            .map(|c| {
                Vec3::<T>::from_f64([c[0] as f64, c[1] as f64, c[2] as f64]) / max
            })
            .collect();
        Ok(Self {
            width: r.width,
            height: r.height,
            data,
        })
    }
}

/// `n = 2 * channel / maxval - 1`; short vectors become background, the rest unit length.
pub fn decode_normal_map<T: Real>(raster: &IntRaster) -> Result<NormalMap<T>> {
    if raster.channels != 3 {
        return Err(Error::Format(format!(
            "normal maps need 3 channels, found {}",
            raster.channels
        )));
    }
    let max = raster.depth.max_value() as f64;
    let bg = T::lit(BACKGROUND_THRESHOLD);
    let data = raster
        .data
        .chunks_exact(3)
        .map(|c| {
            let n: Vec3<T> = Vec3::from_f64([
                2.0 * c[0] as f64 / max - 1.0,
                2.0 * c[1] as f64 / max - 1.0,
                2.0 * c[2] as f64 / max - 1.0,
            ]);
            if n.norm() < bg {
                Vec3::zero()
            } else {
                n.normalized()
            }
        })
        .collect();
    Ok(NormalMap {
        width: raster.width,
        height: raster.height,
        data,
    })
}

/// `channel = round((n + 1) / 2 * maxval)`; the zero vector maps to mid-gray.
pub fn encode_normal_map<T: Real>(n: &NormalMap<T>, depth: BitDepth) -> IntRaster {
    let max = depth.max_value() as f64;
    let data = n
        .data
        .iter()
        .flat_map(|v| v.to_f64())
        .map(|c| (((c.clamp(-1.0, 1.0) + 1.0) * 0.5) * max).round() as u16)
        .collect();
    IntRaster {
        width: n.width,
        height: n.height,
        channels: 3,
        depth,
        data,
    }
}

/// Binary coverage: 1 where `|n| >= threshold`.
pub fn alpha_from_normals<T: Real>(n: &NormalMap<T>, threshold: T) -> AlphaMask<T> {
    AlphaMask {
        width: n.width,
        height: n.height,
        data: n
            .data
            .iter()
            .map(|v| {
                if v.norm() >= threshold {
                    T::one()
                } else {
                    T::zero()
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec3;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn raster(depth: BitDepth, px: &[[u16; 3]]) -> IntRaster {
        IntRaster {
            width: px.len(),
            height: 1,
            channels: 3,
            depth,
            data: px.iter().flatten().copied().collect(),
        }
    }

    #[test]
    fn decode_axis_and_midgray() {
        let r = raster(BitDepth::Eight, &[[255, 128, 128], [128, 128, 128]]);
        let n: NormalMap<f64> = decode_normal_map(&r).unwrap();
        assert!((n.data[0] - vec3(1.0, 0.0, 0.0)).norm() < 1e-2);
        assert!((n.data[0].norm() - 1.0).abs() < 1e-12);
        assert_eq!(n.data[1], Vec3::zero());

        let r = raster(BitDepth::Sixteen, &[[65535, 32768, 32768]]);
        let n: NormalMap<f64> = decode_normal_map(&r).unwrap();
        assert!((n.data[0] - vec3(1.0, 0.0, 0.0)).norm() < 1e-4);
    }

    #[test]
    fn decode_rejects_wrong_channel_count() {
        let r = IntRaster {
            width: 1,
            height: 1,
            channels: 4,
            depth: BitDepth::Eight,
            data: vec![0, 0, 0, 0],
        };
        assert!(matches!(
            decode_normal_map::<f64>(&r),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn encode_known_values() {
        let n = NormalMap {
            width: 2,
            height: 1,
            data: vec![vec3(0.0, 0.0, 1.0), Vec3::zero()],
        };
        let r8 = encode_normal_map(&n, BitDepth::Eight);
        assert_eq!(r8.data, vec![128, 128, 255, 128, 128, 128]);
        let r16 = encode_normal_map(&n, BitDepth::Sixteen);
        assert_eq!(r16.data, vec![32768, 32768, 65535, 32768, 32768, 32768]);
    }

    #[test]
    fn sixteen_bit_round_trip_of_random_unit_vectors() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let count = 100_000;
        let data: Vec<Vec3<f64>> = (0..count)
            .map(|_| loop {
                let v = vec3(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let l = v.norm();
                if l > 0.1 && l <= 1.0 {
                    break v / l;
                }
            })
            .collect();
        let n = NormalMap {
            width: count,
            height: 1,
            data,
        };
        let back: NormalMap<f64> =
            decode_normal_map(&encode_normal_map(&n, BitDepth::Sixteen)).unwrap();
        let worst = n
            .data
            .iter()
            .zip(&back.data)
            .map(|(a, b)| {
                (0..3)
                    .map(|i| (a[i] - b[i]).abs())
                    .fold(0.0f64, f64::max)
            })
            .fold(0.0, f64::max);
        assert!(worst <= 2.0 / 65535.0, "worst channel error {worst}");
    }

    #[test]
    fn alpha_thresholding_defaults() {
        let bg: NormalMap<f64> = NormalMap::background(3, 2);
        assert!(alpha_from_normals(&bg, BACKGROUND_THRESHOLD).data.iter().all(|&a| a == 0.0));
        let fg = NormalMap {
            width: 2,
            height: 1,
            data: vec![vec3(0.0, 1.0, 0.0), vec3(0.6, 0.0, 0.8)],
        };
        assert!(alpha_from_normals(&fg, BACKGROUND_THRESHOLD).data.iter().all(|&a| a == 1.0));
    }

    proptest! {
        #[test]
        fn round_trip_preserves_background_and_unit_norm(
            px in proptest::collection::vec((0u16..=255, 0u16..=255, 0u16..=255), 1..64),
        ) {
            let r = raster(BitDepth::Eight, &px.iter().map(|&(a, b, c)| [a, b, c]).collect::<Vec<_>>());
            let n: NormalMap<f64> = decode_normal_map(&r).unwrap();
            for v in &n.data {
                prop_assert!(*v == Vec3::zero() || (v.norm() - 1.0).abs() <= 1e-3);
            }
            let again: NormalMap<f64> = decode_normal_map(&encode_normal_map(&n, BitDepth::Eight)).unwrap();
            for (a, b) in n.data.iter().zip(&again.data) {
                prop_assert_eq!(*a == Vec3::zero(), *b == Vec3::zero());
            }
        }

        #[test]
        fn alpha_is_monotone_in_threshold(
            v in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0), 1..64),
            lo in 0.01f64..0.5, step in 0.0f64..0.4,
        ) {
            let n = NormalMap { width: v.len(), height: 1, data: v.iter().map(|&(a, b, c)| vec3(a, b, c)).collect() };
            let a_lo = alpha_from_normals(&n, lo);
            let a_hi = alpha_from_normals(&n, lo + step);
            for (l, h) in a_lo.data.iter().zip(&a_hi.data) {
                prop_assert!(h <= l);
            }
        }
    }
}
