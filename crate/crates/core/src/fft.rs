//! Radix-2 FFT used by the configuration-space convolutions.
//!
//! Plans are plain twiddle tables computed once per size, so repeated
//! transforms of the same size are bit-identical.

use alloc::vec::Vec;
use core::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    #[inline]
    pub const fn new(re: f64, im: f64) -> Self {
        Complex { re, im }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Complex::new(self.re, -self.im)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Complex::new(self.re * s, self.im * s)
    }
}

impl Add for Complex {
    type Output = Complex;
    #[inline]
    fn add(self, o: Complex) -> Complex {
        Complex::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Complex {
    type Output = Complex;
    #[inline]
    fn sub(self, o: Complex) -> Complex {
        Complex::new(self.re - o.re, self.im - o.im)
    }
}

impl Mul for Complex {
    type Output = Complex;
    #[inline]
    fn mul(self, o: Complex) -> Complex {
        Complex::new(
            self.re * o.re - self.im * o.im,
            self.re * o.im + self.im * o.re,
        )
    }
}

/// In-place iterative Cooley-Tukey transform of one power-of-two length.
#[derive(Debug, Clone)]
pub struct FftPlan {
    n: usize,
    twiddles: Vec<Complex>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    /// Panics unless `n` is a power of two.
    pub fn new(n: usize) -> Self {
        assert!(n.is_power_of_two(), "FFT length must be a power of two");
        let twiddles = (0..n / 2)
            .map(|k| {
                let (s, c) = libm::sincos(-2.0 * core::f64::consts::PI * k as f64 / n as f64);
                Complex::new(c, s)
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|k| {
                if bits == 0 {
                    0
                } else {
                    k.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        FftPlan {
            n,
            twiddles,
            bitrev,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward transform, `X_k = sum_n x_n e^{-2 pi i k n / N}`.
    pub fn forward(&self, data: &mut [Complex]) {
        self.transform(data, false);
    }

    /// Inverse transform including the `1/N` factor.
    pub fn inverse(&self, data: &mut [Complex]) {
        self.transform(data, true);
        let s = 1.0 / self.n as f64;
        for z in data.iter_mut() {
            *z = z.scale(s);
        }
    }

    fn transform(&self, data: &mut [Complex], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n);
        for k in 0..n {
            let r = self.bitrev[k];
            if k < r {
                data.swap(k, r);
            }
        }
        let mut len = 2;
        while len <= n {
            let half = len / 2;
            let stride = n / len;
            for start in (0..n).step_by(len) {
                for k in 0..half {
                    let mut w = self.twiddles[k * stride];
                    if inverse {
                        w = w.conj();
                    }
                    let a = data[start + k];
                    let b = data[start + k + half] * w;
                    data[start + k] = a + b;
                    data[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
    }
}

/// Row-major 2D complex array with power-of-two sides.
#[derive(Debug, Clone)]
pub struct Spectrum2D {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex>,
}

/// 2D transform built from two 1D plans.
#[derive(Debug, Clone)]
pub struct FftPlan2D {
    rows: FftPlan,
    cols: FftPlan,
}

impl FftPlan2D {
    pub fn new(width: usize, height: usize) -> Self {
        FftPlan2D {
            rows: FftPlan::new(width),
            cols: FftPlan::new(height),
        }
    }

    pub fn width(&self) -> usize {
        self.rows.len()
    }

    pub fn height(&self) -> usize {
        self.cols.len()
    }

    pub fn forward(&self, s: &mut Spectrum2D) {
        self.apply(s, false);
    }

    pub fn inverse(&self, s: &mut Spectrum2D) {
        self.apply(s, true);
    }

    fn apply(&self, s: &mut Spectrum2D, inverse: bool) {
        let (w, h) = (self.width(), self.height());
        assert!(s.width == w && s.height == h);
        for row in s.data.chunks_mut(w) {
            if inverse {
                self.rows.inverse(row);
            } else {
                self.rows.forward(row);
            }
        }
        let mut column = alloc::vec![Complex::ZERO; h];
        for x in 0..w {
            for y in 0..h {
                column[y] = s.data[y * w + x];
            }
            if inverse {
                self.cols.inverse(&mut column);
            } else {
                self.cols.forward(&mut column);
            }
            for y in 0..h {
                s.data[y * w + x] = column[y];
            }
        }
    }
}

/// Circular cross-correlation `c[k] = sum_n a[n] b[n - k]` of two real
/// arrays that are already zero-padded to the plan's size.
///
/// Both real inputs are packed into one complex transform (`a + i b`), their
/// spectra separated by conjugate symmetry, multiplied as `A conj(B)`, and
/// transformed back.
pub fn correlate_real(plan: &FftPlan2D, a: &[f64], b: &[f64]) -> Vec<f64> {
    let (w, h) = (plan.width(), plan.height());
    assert!(a.len() == w * h && b.len() == w * h);
    let mut packed = Spectrum2D {
        width: w,
        height: h,
        data: a.iter().zip(b).map(|(&x, &y)| Complex::new(x, y)).collect(),
    };
    plan.forward(&mut packed);
    let z = &packed.data;
    let mut product = alloc::vec![Complex::ZERO; w * h];
    for ky in 0..h {
        let my = (h - ky) % h;
        for kx in 0..w {
            let mx = (w - kx) % w;
            let zk = z[ky * w + kx];
            let zm = z[my * w + mx].conj();
            // A = (Z_k + conj Z_-k) / 2,  B = (Z_k - conj Z_-k) / 2i
            let fa = (zk + zm).scale(0.5);
            let d = (zk - zm).scale(0.5);
            let fb = Complex::new(d.im, -d.re);
            product[ky * w + kx] = fa * fb.conj();
        }
    }
    let mut out = Spectrum2D {
        width: w,
        height: h,
        data: product,
    };
    plan.inverse(&mut out);
    out.data.into_iter().map(|c| c.re).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::SmallRng, Rng, SeedableRng};

    fn naive_dft(x: &[Complex]) -> Vec<Complex> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter().enumerate().fold(Complex::ZERO, |acc, (t, &v)| {
                    let ang = -2.0 * core::f64::consts::PI * (k * t) as f64 / n as f64;
                    acc + v * Complex::new(ang.cos(), ang.sin())
                })
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = SmallRng::seed_from_u64(7);
        for &n in &[1usize, 2, 4, 8, 32, 64] {
            let x: Vec<Complex> = (0..n).map(|_| Complex::new(rng.gen(), rng.gen())).collect();
            let mut y = x.clone();
            FftPlan::new(n).forward(&mut y);
            let want = naive_dft(&x);
            for (a, b) in y.iter().zip(&want) {
                assert!((a.re - b.re).abs() < 1e-10 && (a.im - b.im).abs() < 1e-10);
            }
            FftPlan::new(n).inverse(&mut y);
            for (a, b) in y.iter().zip(&x) {
                assert!((a.re - b.re).abs() < 1e-12 && (a.im - b.im).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn packed_correlation_matches_circular_definition() {
        let mut rng = SmallRng::seed_from_u64(11);
        let (w, h) = (8, 4);
        let a: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..w * h).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = correlate_real(&FftPlan2D::new(w, h), &a, &b);
        for ky in 0..h {
            for kx in 0..w {
                let mut s = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        let bx = (x + w - kx) % w;
                        let by = (y + h - ky) % h;
                        s += a[y * w + x] * b[by * w + bx];
                    }
                }
                assert!((c[ky * w + kx] - s).abs() < 1e-12);
            }
        }
    }
}
