//! Real singular value decomposition and least-squares solves.
//!
//! The SVD is one-sided Jacobi, applied to the triangular factor of a
//! Householder QR when the matrix is tall. Jacobi keeps full relative accuracy
//! on rank-deficient inputs, which feature matrices of correlated trajectories
//! routinely are.

use nalgebra::{DMatrix, DVector};

use crate::scalar::{lit, Real};

const MAX_SWEEPS: usize = 80;

/// `A = U diag(s) Vᵀ` with `U` `m x r`, `V` `n x r`, `r = min(m, n)`.
#[derive(Clone, Debug)]
pub struct Svd<T: Real> {
    pub u: DMatrix<T>,
    pub s: DVector<T>,
    pub v: DMatrix<T>,
}

/// Hestenes one-sided Jacobi on the columns of `a` (`m >= n`).
/// Returns `(A V, V)`; the columns of `A V` are mutually orthogonal.
fn one_sided_jacobi<T: Real>(mut a: DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let n = a.ncols();
    let mut v = DMatrix::identity(n, n);
    let eps: T = lit(f64::EPSILON);
    let tiny: T = lit(f64::MIN_POSITIVE);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dot(&a.column(q));
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma.abs() <= tiny {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let t = if zeta == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    (a, v)
}

fn rotate<T: Real>(m: &mut DMatrix<T>, p: usize, q: usize, c: T, s: T) {
    for i in 0..m.nrows() {
        let (x, y) = (m[(i, p)], m[(i, q)]);
        m[(i, p)] = c * x - s * y;
        m[(i, q)] = s * x + c * y;
    }
}

fn svd_tall<T: Real>(a: &DMatrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    let (q, r) = if m > n {
        let qr = a.clone().qr();
        (Some(qr.q()), qr.r())
    } else {
        (None, a.clone())
    };
    let (av, v) = one_sided_jacobi(r);
    let mut s = DVector::zeros(n);
    let mut u = DMatrix::zeros(av.nrows(), n);
    for j in 0..n {
        let norm = av.column(j).norm();
        s[j] = norm;
        if norm > T::zero() {
            u.set_column(j, &(av.column(j) / norm));
        }
    }
    let u = match q {
        Some(q) => q * u,
        None => u,
    };
    // sort descending
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap_or(std::cmp::Ordering::Equal));
    Svd {
        u: DMatrix::from_fn(m, n, |r, c| u[(r, order[c])]),
        s: DVector::from_fn(n, |i, _| s[order[i]]),
        v: DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]),
    }
}

/// Thin SVD with singular values in descending order.
pub fn svd<T: Real>(a: &DMatrix<T>) -> Svd<T> {
    if a.nrows() >= a.ncols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose());
        Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

/// Singular values in descending order.
pub fn singular_values<T: Real>(a: &DMatrix<T>) -> DVector<T> {
    svd(a).s
}

/// Largest singular value (0 for an empty matrix).
pub fn spectral_norm<T: Real>(a: &DMatrix<T>) -> T {
    if a.is_empty() {
        return T::zero();
    }
    singular_values(a)[0]
}

/// Reusable minimum-norm least-squares solver for a fixed design matrix.
#[derive(Clone, Debug)]
pub struct LeastSquares<T: Real> {
    svd: Svd<T>,
    cutoff: T,
}

impl<T: Real> LeastSquares<T> {
    /// Singular values below `rel_cutoff * s_max` are treated as zero.
    pub fn new(a: &DMatrix<T>, rel_cutoff: f64) -> Self {
        let svd = svd(a);
        let s_max = svd.s.iter().copied().fold(T::zero(), T::max);
        Self {
            cutoff: s_max * lit(rel_cutoff),
            svd,
        }
    }

    pub fn rows(&self) -> usize {
        self.svd.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.svd.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.svd.s.iter().filter(|&&s| s > self.cutoff).count()
    }

    /// `argmin ‖A w - y‖² + ridge ‖w‖²` restricted to the retained subspace.
    pub fn solve(&self, y: &DVector<T>, ridge: T) -> DVector<T> {
        let uty = self.svd.u.transpose() * y;
        let mut scaled = DVector::zeros(uty.len());
        for (i, &s) in self.svd.s.iter().enumerate() {
            if s > self.cutoff && s > T::zero() {
                scaled[i] = uty[i] * s / (s * s + ridge);
            }
        }
        &self.svd.v * scaled
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn check(a: &DMatrix<f64>) {
        let f = svd(a);
        let recon = &f.u * DMatrix::from_diagonal(&f.s) * f.v.transpose();
        assert!((recon - a).norm() <= 1e-12 * a.norm().max(1.0));
        let r = f.s.len();
        assert!((f.v.transpose() * &f.v - DMatrix::identity(r, r)).norm() < 1e-12);
        for w in f.s.as_slice().windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn reconstructs_tall_wide_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, n) in [(1, 1), (5, 5), (30, 6), (6, 30), (200, 40)] {
            check(&random(m, n, &mut rng));
        }
    }

    #[test]
    fn reconstructs_rank_deficient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(30, 3, &mut rng) * random(3, 6, &mut rng);
        check(&a);
        let s = singular_values(&a);
        assert!(s[3] < 1e-13 * s[0]);
        check(&DMatrix::zeros(4, 3));
    }

    #[test]
    fn known_singular_values() {
        let a = DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 4.0, 5.0]);
        // AᵀA = [[25, 20], [20, 25]] -> eigenvalues 45, 5
        let s = singular_values(&a);
        assert!((s[0] - 45f64.sqrt()).abs() < 1e-14);
        assert!((s[1] - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn solver_reuses_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(50, 4, &mut rng);
        let ls = LeastSquares::new(&a, 1e-12);
        assert_eq!(ls.rank(), 4);
        for _ in 0..3 {
            let w0 = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let y = &a * &w0;
            assert!((ls.solve(&y, 0.0) - w0).norm() < 1e-12);
        }
    }
}
