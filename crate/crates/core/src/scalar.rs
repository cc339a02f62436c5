//! Scalar abstraction shared by every numerical module.
//!
//! All state-space math is written against [`Real`], which is implemented for
//! `f32` and `f64`. The trait also carries the precision-specific complex GEMM
//! kernel used on the density-matrix hot path.

use std::fmt;

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Default
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + 'static
{
    /// Smallest validation tolerance that is meaningful at this precision.
    const TOL_FLOOR: f64;

    /// `C <- alpha * A * B + beta * C` for column-major complex matrices.
    ///
    /// `a` is `m x k`, `b` is `k x n`, `c` is `m x n`, all densely packed.
    fn complex_gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Complex<Self>,
        a: &[Complex<Self>],
        b: &[Complex<Self>],
        beta: Complex<Self>,
        c: &mut [Complex<Self>],
    );
}

// `Complex<T>` is `#[repr(C)] { re, im }`, which is layout-identical to the
// `[T; 2]` pairs matrixmultiply expects.
macro_rules! impl_real {
    ($t:ty, $floor:expr, $kernel:path) => {
        impl Real for $t {
            const TOL_FLOOR: f64 = $floor;

            fn complex_gemm(
                m: usize,
                k: usize,
                n: usize,
                alpha: Complex<Self>,
                a: &[Complex<Self>],
                b: &[Complex<Self>],
                beta: Complex<Self>,
                c: &mut [Complex<Self>],
            ) {
                assert_eq!(a.len(), m * k, "gemm: lhs shape");
                assert_eq!(b.len(), k * n, "gemm: rhs shape");
                assert_eq!(c.len(), m * n, "gemm: output shape");
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: slice lengths were checked against the strides
                // below, and the output does not alias either input.
                unsafe {
                    $kernel(
                        matrixmultiply::CGemmOption::Standard,
                        matrixmultiply::CGemmOption::Standard,
                        m,
                        k,
                        n,
                        [alpha.re, alpha.im],
                        a.as_ptr() as *const [$t; 2],
                        1,
                        m as isize,
                        b.as_ptr() as *const [$t; 2],
                        1,
                        k as isize,
                        [beta.re, beta.im],
                        c.as_mut_ptr() as *mut [$t; 2],
                        1,
                        m as isize,
                    );
                }
            }
        }
    };
}

impl_real!(f32, 1e-4, matrixmultiply::cgemm);
impl_real!(f64, 0.0, matrixmultiply::zgemm);

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

/// A tolerance stated for double precision, widened to what `T` can honor.
#[inline]
pub fn tol<T: Real>(x: f64) -> T {
    lit(x.max(T::TOL_FLOOR))
}

/// Lossy conversion used for error reporting and serialization.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn cre<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

/// `|z|` without requiring `num_traits::Float` on the component type.
#[inline]
pub(crate) fn modulus<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}

/// `exp(-i theta)`.
#[inline]
pub(crate) fn phase<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), -theta.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_product() {
        let (m, k, n) = (3, 4, 2);
        let a: Vec<Complex<f64>> = (0..m * k)
            .map(|i| Complex::new(i as f64 * 0.5, 1.0 - i as f64))
            .collect();
        let b: Vec<Complex<f64>> = (0..k * n)
            .map(|i| Complex::new(1.0 + i as f64, 0.25 * i as f64))
            .collect();
        let mut out = vec![Complex::new(1.0, 0.0); m * n];
        f64::complex_gemm(
            m,
            k,
            n,
            Complex::new(2.0, 0.0),
            &a,
            &b,
            Complex::new(1.0, 0.0),
            &mut out,
        );
        for i in 0..m {
            for j in 0..n {
                let mut acc = Complex::new(0.0, 0.0);
                for l in 0..k {
                    acc += a[i + l * m] * b[l + j * k];
                }
                let expect = acc * 2.0 + Complex::new(1.0, 0.0);
                assert!((out[i + j * m] - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn tolerance_floor_only_widens_single_precision() {
        assert_eq!(tol::<f64>(1e-12), 1e-12);
        assert_eq!(tol::<f32>(1e-12), 1e-4);
    }
}
