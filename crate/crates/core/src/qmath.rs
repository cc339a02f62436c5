//! Dense complex linear algebra and quantum-state primitives.
//!
//! Tensor-product layouts put qubit 0 in the most significant position, so for
//! `A ⊗ B` the first factor indexes the outer blocks. The Pauli basis is
//! ordered `{I, Z, X, Y}` per qubit and extended lexicographically with qubit 0
//! as the most significant base-4 digit.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{c, cre, lit, modulus, phase, to_f64, tol, Real};

/// Dense complex matrix, column-major.
pub type CMatrix<T> = DMatrix<Complex<T>>;

pub fn zeros<T: Real>(rows: usize, cols: usize) -> CMatrix<T> {
    CMatrix::from_element(rows, cols, Complex::new(T::zero(), T::zero()))
}

pub fn identity<T: Real>(dim: usize) -> CMatrix<T> {
    CMatrix::identity(dim, dim)
}

/// `a * b` through the precision-specific GEMM kernel.
pub fn matmul<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let mut out = zeros(a.nrows(), b.ncols());
    gemm_into(cre(T::one()), a, b, cre(T::zero()), &mut out);
    out
}

/// `out <- alpha * a * b + beta * out`.
pub fn gemm_into<T: Real>(
    alpha: Complex<T>,
    a: &CMatrix<T>,
    b: &CMatrix<T>,
    beta: Complex<T>,
    out: &mut CMatrix<T>,
) {
    assert_eq!(a.ncols(), b.nrows(), "gemm: inner dimensions");
    assert_eq!(out.shape(), (a.nrows(), b.ncols()), "gemm: output shape");
    T::complex_gemm(
        a.nrows(),
        a.ncols(),
        b.ncols(),
        alpha,
        a.as_slice(),
        b.as_slice(),
        beta,
        out.as_mut_slice(),
    );
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s.re == T::zero() && s.im == T::zero() {
                continue;
            }
            for l in 0..bc {
                for k in 0..br {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    (0..a.nrows().min(a.ncols())).fold(cre(T::zero()), |acc, i| acc + a[(i, i)])
}

/// Largest entrywise modulus of `a - a^H`.
pub fn hermitian_defect<T: Real>(a: &CMatrix<T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for j in 0..n {
        for i in 0..=j {
            let d = modulus(a[(i, j)] - a[(j, i)].conj());
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

fn max_abs<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |m, z| m.max(modulus(*z)))
}

fn check_square<T: Real>(a: &CMatrix<T>, context: &'static str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOperator<T: Real> {
    matrix: CMatrix<T>,
}

impl<T: Real> DensityOperator<T> {
    /// Validates `matrix` and wraps it. Nothing is repaired: a matrix that
    /// misses any invariant is rejected.
    pub fn new(matrix: CMatrix<T>) -> Result<Self> {
        let rho = Self { matrix };
        rho.validate()?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix<T>) -> Self {
        Self { matrix }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        let w = T::one() / lit::<T>(d as f64);
        Self {
            matrix: CMatrix::from_diagonal_element(d, d, cre(w)),
        }
    }

    /// `|psi><psi|` for a normalized state vector.
    pub fn pure(psi: &DVector<Complex<T>>) -> Result<Self> {
        let m = psi * psi.adjoint();
        Self::new(m)
    }

    /// `|index><index|` in the computational basis.
    pub fn basis_state(n_qubits: usize, index: usize) -> Self {
        let d = 1usize << n_qubits;
        let mut m = zeros(d, d);
        m[(index, index)] = cre(T::one());
        Self { matrix: m }
    }

    /// Checks Hermiticity (1e-12), unit trace (1e-10) and positivity (-1e-10).
    pub fn validate(&self) -> Result<()> {
        let d = check_square(&self.matrix, "density operator")?;
        if !d.is_power_of_two() {
            return Err(Error::InvalidConfig(format!(
                "density operator dimension {d} is not a power of two"
            )));
        }
        let herm = hermitian_defect(&self.matrix);
        if herm > tol(1e-12) {
            return Err(Error::NotHermitian(to_f64(herm)));
        }
        let tr = trace(&self.matrix);
        if (tr.re - T::one()).abs() > tol(1e-10) || tr.im.abs() > tol(1e-10) {
            return Err(Error::InvalidTrace(to_f64(tr.re)));
        }
        let min = self.min_eigenvalue();
        if min < -tol::<T>(1e-10) {
            return Err(Error::NotPositive(to_f64(min)));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> T {
        let eig = SymmetricEigen::new(self.matrix.clone());
        eig.eigenvalues
            .iter()
            .fold(T::max_value().unwrap(), |m, &v| m.min(v))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_qubits(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.matrix
    }

    /// Schatten-2 (Hilbert-Schmidt) distance.
    pub fn distance(&self, other: &Self) -> T {
        (&self.matrix - &other.matrix).norm()
    }
}

fn partial_trace_blocks<T: Real>(
    a: &CMatrix<T>,
    outer: usize,
    inner: usize,
    keep_outer: bool,
) -> Result<CMatrix<T>> {
    let d = check_square(a, "partial trace")?;
    if d != outer * inner {
        return Err(Error::DimensionMismatch {
            context: "partial trace",
            expected: outer * inner,
            found: d,
        });
    }
    let keep = if keep_outer { outer } else { inner };
    let mut out = zeros(keep, keep);
    for j in 0..keep {
        for i in 0..keep {
            let mut acc = cre(T::zero());
            if keep_outer {
                for t in 0..inner {
                    acc += a[(i * inner + t, j * inner + t)];
                }
            } else {
                for t in 0..outer {
                    acc += a[(t * inner + i, t * inner + j)];
                }
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Traces out the trailing tensor factor of dimension `trace_dim`.
pub fn partial_trace_last<T: Real>(
    rho: &DensityOperator<T>,
    keep_dim: usize,
    trace_dim: usize,
) -> Result<DensityOperator<T>> {
    partial_trace_blocks(rho.matrix(), keep_dim, trace_dim, true)
        .map(DensityOperator::from_matrix_unchecked)
}

/// Traces out the leading tensor factor of dimension `trace_dim`.
pub fn partial_trace_first<T: Real>(
    rho: &DensityOperator<T>,
    trace_dim: usize,
    keep_dim: usize,
) -> Result<DensityOperator<T>> {
    partial_trace_blocks(rho.matrix(), trace_dim, keep_dim, false)
        .map(DensityOperator::from_matrix_unchecked)
}

/// Matrix-level variants, usable on arbitrary (non-state) operators.
pub fn partial_trace_last_matrix<T: Real>(
    a: &CMatrix<T>,
    keep_dim: usize,
    trace_dim: usize,
) -> Result<CMatrix<T>> {
    partial_trace_blocks(a, keep_dim, trace_dim, true)
}

pub fn partial_trace_first_matrix<T: Real>(
    a: &CMatrix<T>,
    trace_dim: usize,
    keep_dim: usize,
) -> Result<CMatrix<T>> {
    partial_trace_blocks(a, trace_dim, keep_dim, false)
}

/// Traces out an arbitrary set of qubits from an `n_qubits` operator.
pub fn partial_trace_qubits<T: Real>(
    a: &CMatrix<T>,
    n_qubits: usize,
    traced: &[usize],
) -> Result<CMatrix<T>> {
    let d = check_square(a, "partial trace")?;
    if d != 1 << n_qubits {
        return Err(Error::DimensionMismatch {
            context: "partial trace",
            expected: 1 << n_qubits,
            found: d,
        });
    }
    if let Some(&q) = traced.iter().find(|&&q| q >= n_qubits) {
        return Err(Error::QubitOutOfRange { index: q, n_qubits });
    }
    let kept: Vec<usize> = (0..n_qubits).filter(|q| !traced.contains(q)).collect();
    let traced: Vec<usize> = (0..n_qubits).filter(|q| traced.contains(q)).collect();
    let bit = |q: usize| 1usize << (n_qubits - 1 - q);
    let offsets = |qubits: &[usize]| -> Vec<usize> {
        (0..1usize << qubits.len())
            .map(|idx| {
                qubits
                    .iter()
                    .enumerate()
                    .filter(|(pos, _)| idx >> (qubits.len() - 1 - pos) & 1 == 1)
                    .fold(0, |acc, (_, &q)| acc | bit(q))
            })
            .collect()
    };
    let keep_off = offsets(&kept);
    let trace_off = offsets(&traced);
    let k = keep_off.len();
    let mut out = zeros(k, k);
    for j in 0..k {
        for i in 0..k {
            let mut acc = cre(T::zero());
            for &t in &trace_off {
                acc += a[(keep_off[i] | t, keep_off[j] | t)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Eigendecomposition `h = V diag(values) V^H`, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct HermEig<T: Real> {
    pub values: DVector<T>,
    pub vectors: CMatrix<T>,
}

pub fn herm_eig<T: Real>(h: &CMatrix<T>) -> Result<HermEig<T>> {
    let n = check_square(h, "eigendecomposition")?;
    let defect = hermitian_defect(h);
    if defect > tol::<T>(1e-12) * T::one().max(max_abs(h)) {
        return Err(Error::NotHermitian(to_f64(defect)));
    }
    let eig = SymmetricEigen::new(h.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(HermEig { values, vectors })
}

/// `exp(-i h t)` for Hermitian `h`, via its eigendecomposition.
pub fn unitary_from_hamiltonian<T: Real>(h: &CMatrix<T>, t: T) -> Result<CMatrix<T>> {
    let HermEig { values, vectors } = herm_eig(h)?;
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let p = phase(lambda * t);
        for z in scaled.column_mut(j).iter_mut() {
            *z *= p;
        }
    }
    Ok(matmul(&scaled, &vectors.adjoint()))
}

/// Singular values of a complex matrix, descending.
///
/// Computed from the real embedding `[[X, -Y], [Y, X]]` of `X + iY`, whose
/// singular values are those of the complex matrix, each repeated twice.
pub fn singular_values<T: Real>(a: &CMatrix<T>) -> DVector<T> {
    let (m, n) = a.shape();
    let real = DMatrix::from_fn(2 * m, 2 * n, |r, c| {
        let z = a[(r % m, c % n)];
        match (r < m, c < n) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let s = linalg::singular_values(&real);
    DVector::from_fn(m.min(n), |i, _| s[2 * i])
}

/// Schatten `p`-norm `(sum_i s_i^p)^(1/p)` over singular values.
pub fn schatten_norm<T: Real>(a: &CMatrix<T>, p: T) -> Result<T> {
    if !(p >= T::one()) {
        return Err(Error::InvalidNormOrder(to_f64(p)));
    }
    if p == lit(2.0) {
        return Ok(a.norm());
    }
    let s = singular_values(a);
    if p == T::one() {
        return Ok(s.iter().fold(T::zero(), |acc, &x| acc + x));
    }
    let sum = s.iter().fold(T::zero(), |acc, &x| acc + x.powf(p));
    Ok(sum.powf(T::one() / p))
}

/// Single-qubit Pauli operators in basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    I,
    Z,
    X,
    Y,
}

impl Pauli {
    pub const ORDER: [Pauli; 4] = [Pauli::I, Pauli::Z, Pauli::X, Pauli::Y];

    /// Column and value of the single nonzero entry in row `row`.
    fn entry<T: Real>(self, row: usize) -> (usize, Complex<T>) {
        let one = T::one();
        match (self, row) {
            (Pauli::I, r) => (r, cre(one)),
            (Pauli::Z, 0) => (0, cre(one)),
            (Pauli::Z, _) => (1, cre(-one)),
            (Pauli::X, r) => (1 - r, cre(one)),
            (Pauli::Y, 0) => (1, c(T::zero(), -one)),
            (Pauli::Y, _) => (0, c(T::zero(), one)),
        }
    }

    pub fn matrix<T: Real>(self) -> CMatrix<T> {
        let mut m = zeros(2, 2);
        for r in 0..2 {
            let (col, v) = self.entry::<T>(r);
            m[(r, col)] = v;
        }
        m
    }
}

/// Tensor Pauli basis element `index` on `n_qubits` qubits.
pub fn pauli_basis_element<T: Real>(index: usize, n_qubits: usize) -> CMatrix<T> {
    let d = 1usize << n_qubits;
    let mut m = zeros(d, d);
    for r in 0..d {
        let (col, v) = pauli_row_entry::<T>(index, n_qubits, r);
        m[(r, col)] = v;
    }
    m
}

fn pauli_digits(index: usize, n_qubits: usize) -> impl Iterator<Item = (usize, Pauli)> {
    (0..n_qubits).map(move |q| {
        let digit = (index >> (2 * (n_qubits - 1 - q))) & 3;
        (q, Pauli::ORDER[digit])
    })
}

fn pauli_row_entry<T: Real>(index: usize, n_qubits: usize, row: usize) -> (usize, Complex<T>) {
    let mut col = 0usize;
    let mut val = cre(T::one());
    for (q, p) in pauli_digits(index, n_qubits) {
        let shift = n_qubits - 1 - q;
        let (cb, v) = p.entry::<T>((row >> shift) & 1);
        col |= cb << shift;
        val *= v;
    }
    (col, val)
}

/// Real coordinates `Tr(a B_i) / 2^n` in the tensor Pauli basis.
pub fn pauli_coordinates<T: Real>(a: &CMatrix<T>, n_qubits: usize) -> DVector<T> {
    let d = 1usize << n_qubits;
    let norm = lit::<T>(d as f64);
    DVector::from_iterator(
        d * d,
        (0..d * d).map(|i| {
            // Tr(a B) = sum_r B[r, c(r)] a[c(r), r]
            let mut acc = cre(T::zero());
            for r in 0..d {
                let (col, v) = pauli_row_entry::<T>(i, n_qubits, r);
                acc += v * a[(col, r)];
            }
            acc.re / norm
        }),
    )
}

/// Inverse of [`pauli_coordinates`] for Hermitian operators.
pub fn from_pauli_coordinates<T: Real>(coords: &DVector<T>, n_qubits: usize) -> CMatrix<T> {
    let d = 1usize << n_qubits;
    let mut m = zeros(d, d);
    for (i, &w) in coords.iter().enumerate() {
        if w == T::zero() {
            continue;
        }
        for r in 0..d {
            let (col, v) = pauli_row_entry::<T>(i, n_qubits, r);
            m[(r, col)] += v * w;
        }
    }
    m
}

/// Real matrix of a linear map in the normalized tensor Pauli basis,
/// `T̄_ij = Tr(B_i T(B_j)) / 2^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSuperop<T: Real> {
    pub n_qubits: usize,
    pub matrix: DMatrix<T>,
}

impl<T: Real> PauliSuperop<T> {
    pub fn apply(&self, coords: &DVector<T>) -> DVector<T> {
        &self.matrix * coords
    }

    /// Block acting on the traceless coordinates (identity row and column removed).
    pub fn traceless_block(&self) -> DMatrix<T> {
        let n = self.matrix.nrows();
        self.matrix.view((1, 1), (n - 1, n - 1)).into_owned()
    }
}

pub fn pauli_superop<T: Real, F>(channel: F, n_qubits: usize) -> PauliSuperop<T>
where
    F: Fn(&CMatrix<T>) -> CMatrix<T>,
{
    let dim = 1usize << (2 * n_qubits);
    let mut matrix = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let image = channel(&pauli_basis_element(j, n_qubits));
        matrix.set_column(j, &pauli_coordinates(&image, n_qubits));
    }
    PauliSuperop { n_qubits, matrix }
}

/// `‖T|_{H₀}‖₂₋₂`: the largest singular value of the traceless block.
pub fn restricted_norm_2_2<T: Real>(sop: &PauliSuperop<T>) -> T {
    if sop.matrix.nrows() <= 1 {
        return T::zero();
    }
    linalg::spectral_norm(&sop.traceless_block())
}

/// Full operator norm `‖T‖₂₋₂` over all operators.
pub fn operator_norm_2_2<T: Real>(sop: &PauliSuperop<T>) -> T {
    linalg::spectral_norm(&sop.matrix)
}

/// Random full-rank state from the Hilbert-Schmidt ensemble,
/// `ρ = G G^H / Tr(G G^H)` with i.i.d. standard complex normal `G`.
pub fn random_density<T: Real, R: Rng + ?Sized>(
    n_qubits: usize,
    rng: &mut R,
) -> DensityOperator<T> {
    let d = 1usize << n_qubits;
    let g = CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(lit::<T>(re), lit::<T>(im))
    });
    let mut m = matmul(&g, &g.adjoint());
    let tr = trace(&m).re;
    m.iter_mut().for_each(|z| *z /= tr);
    // Exact Hermitian symmetry; the GEMM result differs from its adjoint
    // only by roundoff.
    let m = (&m + m.adjoint()) * cre(lit::<T>(0.5));
    DensityOperator::from_matrix_unchecked(m)
}
