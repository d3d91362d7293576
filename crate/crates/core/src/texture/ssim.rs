use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::imageio::RgbImage;
use crate::real::Real;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// 1-D Gaussian blur with the window truncated at the borders and renormalized per output sample.
struct Blur<T> {
    taps: Vec<T>,
    /// `1 / sum of in-range taps` per position, for each axis.
    norm_x: Vec<T>,
    norm_y: Vec<T>,
    w: usize,
    h: usize,
}

impl<T: Real> Blur<T> {
    fn new(w: usize, h: usize) -> Self {
        let r = (SSIM_WINDOW / 2) as i64;
        let taps: Vec<T> = (-r..=r)
            .map(|k| T::lit((-(k * k) as f64 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()))
            .collect();
        let norm = |n: usize| -> Vec<T> {
            (0..n as i64)
                .map(|p| {
                    let mut s = T::zero();
                    for k in -r..=r {
                        if (0..n as i64).contains(&(p + k)) {
                            s += taps[(k + r) as usize];
                        }
                    }
                    T::one() / s
                })
                .collect()
        };
        Self {
            norm_x: norm(w),
            norm_y: norm(h),
            taps,
            w,
            h,
        }
    }

    fn pass(&self, src: &[T], horizontal: bool, transpose: bool) -> Vec<T> {
        let (w, h) = (self.w, self.h);
        let r = (SSIM_WINDOW / 2) as i64;
        let (n, norm) = if horizontal { (w, &self.norm_x) } else { (h, &self.norm_y) };
        let mut out = vec![T::zero(); w * h];
        for y in 0..h {
            for x in 0..w {
                let p = if horizontal { x } else { y } as i64;
                let mut s = T::zero();
                for k in -r..=r {
                    let q = p + k;
                    if q < 0 || q >= n as i64 {
                        continue;
                    }
                    let (qx, qy) = if horizontal { (q as usize, y) } else { (x, q as usize) };
                    let v = src[qy * w + qx];
                    // transposed pass: the weight belongs to the source position
                    s += if transpose { v * norm[q as usize] } else { v } * self.taps[(k + r) as usize];
                }
                out[y * w + x] = if transpose { s } else { s * norm[p as usize] };
            }
        }
        out
    }

    fn apply(&self, src: &[T]) -> Vec<T> {
        self.pass(&self.pass(src, true, false), false, false)
    }

    fn apply_t(&self, src: &[T]) -> Vec<T> {
        self.pass(&self.pass(src, false, true), true, true)
    }
}

fn channel<T: Real>(img: &RgbImage<T>, c: usize) -> Vec<T> {
    img.data.iter().map(|v| v[c]).collect()
}

struct Maps<T> {
    s: Vec<T>,
    d_mu: Vec<T>,
    d_aa: Vec<T>,
    d_ab: Vec<T>,
}

/// SSIM map of one channel and its partials with respect to the local statistics of `a`.
fn channel_maps<T: Real>(blur: &Blur<T>, a: &[T], b: &[T], grads: bool) -> Maps<T> {
    let (c1, c2) = (T::lit(SSIM_C1), T::lit(SSIM_C2));
    let two = T::lit(2.0);
    let prod = |x: &[T], y: &[T]| -> Vec<T> { x.iter().zip(y).map(|(p, q)| *p * *q).collect() };
    let mu_a = blur.apply(a);
    let mu_b = blur.apply(b);
    let e_aa = blur.apply(&prod(a, a));
    let e_bb = blur.apply(&prod(b, b));
    let e_ab = blur.apply(&prod(a, b));
    let n = a.len();
    let mut m = Maps {
        s: Vec::with_capacity(n),
        d_mu: Vec::new(),
        d_aa: Vec::new(),
        d_ab: Vec::new(),
    };
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let a1 = two * ma * mb + c1;
        let a2 = two * cov + c2;
        let b1 = ma * ma + mb * mb + c1;
        let b2 = va + vb + c2;
        let s = (a1 * a2) / (b1 * b2);
        m.s.push(s);
        if grads {
            let den = b1 * b2;
            // d/d mu_a with e_aa and e_ab held fixed
            let d_mu = (two * mb * a2 - two * mb * a1) / den - s * (two * ma / b1 - two * ma / b2);
            m.d_mu.push(d_mu);
            m.d_aa.push(-s / b2);
            m.d_ab.push(two * a1 / den);
        }
    }
    m
}

fn check_dims<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::arg(format!(
            "ssim needs equal sizes, got {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    if a.data.is_empty() {
        return Err(Error::arg("ssim of empty images"));
    }
    Ok(())
}

/// Mean SSIM over pixels and channels: 11x11 Gaussian window (sigma 1.5), truncated and
/// renormalized at the borders.
pub fn ssim<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<T> {
    check_dims(a, b)?;
    let blur = Blur::new(a.width, a.height);
    let mut total = T::zero();
    for c in 0..3 {
        total += channel_maps(&blur, &channel(a, c), &channel(b, c), false).s.into_iter().sum::<T>();
    }
    Ok(total / T::from_usize_(3 * a.data.len()))
}

/// [`ssim`] and its gradient with respect to `a`.
pub fn ssim_with_grad<T: Real>(a: &RgbImage<T>, b: &RgbImage<T>) -> Result<(T, RgbImage<T>)> {
    check_dims(a, b)?;
    let blur = Blur::new(a.width, a.height);
    let scale = T::one() / T::from_usize_(3 * a.data.len());
    let mut total = T::zero();
    let mut grad = RgbImage::filled(a.width, a.height, Vec3::zero());
    for c in 0..3 {
        let (ca, cb) = (channel(a, c), channel(b, c));
        let m = channel_maps(&blur, &ca, &cb, true);
        total += m.s.iter().copied().sum::<T>();
        let sc = |v: Vec<T>| -> Vec<T> { v.into_iter().map(|x| x * scale).collect() };
        let g_mu = blur.apply_t(&sc(m.d_mu));
        let g_aa = blur.apply_t(&sc(m.d_aa));
        let g_ab = blur.apply_t(&sc(m.d_ab));
        for i in 0..ca.len() {
            grad.data[i][c] = g_mu[i] + T::lit(2.0) * ca[i] * g_aa[i] + cb[i] * g_ab[i];
        }
    }
    Ok((total * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> RgbImage<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RgbImage {
            width: w,
            height: h,
            data: (0..w * h).map(|_| crate::geom::vec3(rng.gen(), rng.gen(), rng.gen())).collect(),
        }
    }

    fn checker(w: usize, h: usize) -> RgbImage<f64> {
        RgbImage {
            width: w,
            height: h,
            data: (0..w * h)
                .map(|i| Vec3::splat(((i % w + i / w) % 2) as f64))
                .collect(),
        }
    }

    #[test]
    fn identical_images_score_one() {
        let a = random(23, 17, 1);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverted_checker_matches_two_level_closed_form() {
        let (w, h) = (40, 40);
        let a = checker(w, h);
        let b = RgbImage {
            width: w,
            height: h,
            data: a.data.iter().map(|v| Vec3::splat(1.0) - *v).collect(),
        };
        // For b = 1 - a with binary a, every statistic follows from the window mean of a.
        let blur = Blur::<f64>::new(w, h);
        let m = channel_maps(&blur, &channel(&a, 0), &channel(&b, 0), false);
        let r = 5i64;
        for y in 10..30 {
            for x in 10..30 {
                let mut wsum = 0.0;
                let mut mu = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let g = (-((dx * dx + dy * dy) as f64) / (2.0 * 1.5 * 1.5)).exp();
                        wsum += g;
                        mu += g * (((x as i64 + dx + y as i64 + dy) % 2) as f64);
                    }
                }
                let mu = mu / wsum;
                let var = mu - mu * mu;
                let expect = ((2.0 * mu * (1.0 - mu) + SSIM_C1) * (SSIM_C2 - 2.0 * var))
                    / ((mu * mu + (1.0 - mu) * (1.0 - mu) + SSIM_C1) * (2.0 * var + SSIM_C2));
                let got = m.s[y * w + x];
                assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
                assert!(got < -0.99);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let a = random(14, 12, 2);
        let b = random(14, 12, 3);
        let (_, g) = ssim_with_grad(&a, &b).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        let gmax = g.data.iter().map(|v| v.x.abs().max(v.y.abs()).max(v.z.abs())).fold(0.0, f64::max);
        for i in (0..a.data.len()).step_by(7) {
            for c in 0..3 {
                let mut p = a.clone();
                p.data[i][c] += h;
                let mut m = a.clone();
                m.data[i][c] -= h;
                let fd = (ssim(&p, &b).unwrap() - ssim(&m, &b).unwrap()) / (2.0 * h);
                worst = worst.max((fd - g.data[i][c]).abs() / gmax);
            }
        }
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn transposed_blur_is_the_adjoint() {
        let blur = Blur::<f64>::new(9, 13);
        let x: Vec<f64> = (0..117).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..117).map(|i| ((i * 17) % 7) as f64 - 3.0).collect();
        let lhs: f64 = blur.apply(&x).iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(blur.apply_t(&y)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn size_mismatch_is_an_argument_error() {
        assert!(matches!(ssim(&random(4, 4, 0), &random(4, 5, 0)), Err(Error::Argument(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ssim_is_symmetric_and_bounded(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = random(12, 9, s1);
            let b = random(12, 9, s2);
            let ab = ssim(&a, &b).unwrap();
            prop_assert_eq!(ab, ssim(&b, &a).unwrap());
            prop_assert!((-1.0..=1.0).contains(&ab));
        }
    }
}
