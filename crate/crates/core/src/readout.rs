//! Polynomial readout over ⟨Z⟩ expectations.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::scalar::{lit, Real};

/// Relative singular-value cutoff of the least-squares solver.
pub const SVD_CUTOFF: f64 = 1e-12;

/// `C(n + R, R)`: readout weights (constant included) of a degree-`R`
/// polynomial in `n` variables.
pub fn node_count(n_vars: usize, degree: usize) -> usize {
    let mut acc: u128 = 1;
    for i in 1..=degree as u128 {
        acc = acc * (n_vars as u128 + i) / i;
    }
    acc as usize
}

/// Exponent vectors of total degree exactly `d` over `n` variables, in
/// lexicographically descending order.
fn monomials_of_degree(n: usize, d: usize) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() + 1 == n {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(n, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(n, d as u32, &mut Vec::with_capacity(n), &mut out);
    }
    out
}

/// Graded-lexicographic monomial basis: the constant first, then each degree
/// in turn, lexicographically descending within a degree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureMap {
    n_vars: usize,
    degree: usize,
    monomials: Vec<Vec<u32>>,
}

impl FeatureMap {
    pub fn new(n_vars: usize, degree: usize) -> Result<Self> {
        if n_vars == 0 || degree == 0 {
            return Err(Error::InvalidConfig(
                "feature map needs at least one variable and degree >= 1".into(),
            ));
        }
        let mut monomials = vec![vec![0; n_vars]];
        for d in 1..=degree {
            monomials.extend(monomials_of_degree(n_vars, d));
        }
        Ok(Self {
            n_vars,
            degree,
            monomials,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Vec<u32>] {
        &self.monomials
    }

    pub fn index_of(&self, exponents: &[u32]) -> Option<usize> {
        self.monomials.iter().position(|m| m == exponents)
    }

    fn eval_into<T: Real>(&self, z: &[T], out: &mut [T]) {
        let max = self.degree;
        // powers[i][e] = z_i^e
        let powers: Vec<Vec<T>> = z
            .iter()
            .map(|&x| {
                let mut p = Vec::with_capacity(max + 1);
                p.push(T::one());
                for e in 1..=max {
                    p.push(p[e - 1] * x);
                }
                p
            })
            .collect();
        for (slot, m) in out.iter_mut().zip(&self.monomials) {
            let mut v = T::one();
            for (i, &e) in m.iter().enumerate() {
                if e > 0 {
                    v *= powers[i][e as usize];
                }
            }
            *slot = v;
        }
    }
}

/// Features of one timestep: the constant followed by every monomial.
pub fn feature_vector<T: Real>(z: &[T], fm: &FeatureMap) -> Result<DVector<T>> {
    if z.len() != fm.n_vars {
        return Err(Error::DimensionMismatch {
            context: "feature vector input",
            expected: fm.n_vars,
            found: z.len(),
        });
    }
    let mut out = DVector::zeros(fm.len());
    fm.eval_into(z, out.as_mut_slice());
    Ok(out)
}

/// Features of every row of `z` (timesteps x variables).
pub fn feature_matrix<T: Real>(z: &DMatrix<T>, fm: &FeatureMap) -> Result<DMatrix<T>> {
    if z.ncols() != fm.n_vars {
        return Err(Error::DimensionMismatch {
            context: "feature matrix input",
            expected: fm.n_vars,
            found: z.ncols(),
        });
    }
    let mut out = DMatrix::zeros(z.nrows(), fm.len());
    let mut row = vec![T::zero(); fm.len()];
    let mut vars = vec![T::zero(); fm.n_vars];
    for k in 0..z.nrows() {
        for (i, v) in vars.iter_mut().enumerate() {
            *v = z[(k, i)];
        }
        fm.eval_into(&vars, &mut row);
        for (j, &v) in row.iter().enumerate() {
            out[(k, j)] = v;
        }
    }
    Ok(out)
}

/// Minimum-norm least squares via SVD with relative cutoff [`SVD_CUTOFF`].
pub fn fit_least_squares<T: Real>(
    features: &DMatrix<T>,
    targets: &DVector<T>,
) -> Result<DVector<T>> {
    fit_ridge(features, targets, T::zero())
}

/// Ridge-regularized least squares; `ridge = 0` gives [`fit_least_squares`].
///
/// Singular directions below the cutoff are discarded in both cases.
pub fn fit_ridge<T: Real>(
    features: &DMatrix<T>,
    targets: &DVector<T>,
    ridge: T,
) -> Result<DVector<T>> {
    if features.nrows() == 0 {
        return Err(Error::SequenceTooShort { needed: 1, have: 0 });
    }
    if features.nrows() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "least-squares targets",
            expected: features.nrows(),
            found: targets.len(),
        });
    }
    if ridge < T::zero() {
        return Err(Error::InvalidConfig("ridge must be non-negative".into()));
    }
    Ok(LeastSquares::new(features, SVD_CUTOFF).solve(targets, ridge))
}

/// `Σ(ŷ - y)² / Σ(y - ȳ)²`.
pub fn nmse<T: Real>(predicted: &[T], target: &[T]) -> Result<T> {
    if predicted.len() != target.len() {
        return Err(Error::DimensionMismatch {
            context: "nmse",
            expected: target.len(),
            found: predicted.len(),
        });
    }
    if target.len() < 2 {
        return Err(Error::SequenceTooShort {
            needed: 2,
            have: target.len(),
        });
    }
    let n: T = lit(target.len() as f64);
    let mean = target.iter().fold(T::zero(), |a, &b| a + b) / n;
    let mut num = T::zero();
    let mut den = T::zero();
    for (&p, &y) in predicted.iter().zip(target) {
        num += (p - y) * (p - y);
        den += (y - mean) * (y - mean);
    }
    if den <= T::zero() {
        return Err(Error::ConstantTarget);
    }
    Ok(num / den)
}

/// A trained polynomial readout.
#[derive(Clone, Debug, PartialEq)]
pub struct ReadoutModel<T: Real> {
    pub feature_map: FeatureMap,
    pub weights: DVector<T>,
}

impl<T: Real> ReadoutModel<T> {
    pub fn new(feature_map: FeatureMap, weights: DVector<T>) -> Result<Self> {
        if weights.len() != feature_map.len() {
            return Err(Error::DimensionMismatch {
                context: "readout weights",
                expected: feature_map.len(),
                found: weights.len(),
            });
        }
        Ok(Self {
            feature_map,
            weights,
        })
    }

    /// Fits on `z` (timesteps x variables) against `targets`.
    pub fn fit(
        feature_map: FeatureMap,
        z: &DMatrix<T>,
        targets: &DVector<T>,
        ridge: T,
    ) -> Result<Self> {
        let x = feature_matrix(z, &feature_map)?;
        let weights = fit_ridge(&x, targets, ridge)?;
        Self::new(feature_map, weights)
    }

    pub fn predict_one(&self, z: &[T]) -> Result<T> {
        Ok(feature_vector(z, &self.feature_map)?.dot(&self.weights))
    }

    pub fn predict(&self, z: &DMatrix<T>) -> Result<DVector<T>> {
        Ok(feature_matrix(z, &self.feature_map)? * &self.weights)
    }

    /// The pointwise product of two readouts as a single readout of degree
    /// `R₁ + R₂` over the concatenated variables `(self vars, other vars)`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        let (n1, n2) = (self.feature_map.n_vars, other.feature_map.n_vars);
        let fm = FeatureMap::new(n1 + n2, self.feature_map.degree + other.feature_map.degree)?;
        let index: HashMap<&[u32], usize> = fm
            .monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.as_slice(), i))
            .collect();
        let mut weights = DVector::zeros(fm.len());
        let mut joint = vec![0u32; n1 + n2];
        for (a, ma) in self.feature_map.monomials.iter().enumerate() {
            for (b, mb) in other.feature_map.monomials.iter().enumerate() {
                joint[..n1].copy_from_slice(ma);
                joint[n1..].copy_from_slice(mb);
                let slot = index[joint.as_slice()];
                weights[slot] += self.weights[a] * other.weights[b];
            }
        }
        Self::new(fm, weights)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_features_in_order() {
        let fm = FeatureMap::new(2, 1).unwrap();
        let f = feature_vector(&[0.3, -0.7], &fm).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 0.3, -0.7]);
    }

    #[test]
    fn quadratic_order_is_graded_lex() {
        let fm = FeatureMap::new(2, 2).unwrap();
        let expect: Vec<Vec<u32>> = vec![
            vec![0, 0],
            vec![1, 0],
            vec![0, 1],
            vec![2, 0],
            vec![1, 1],
            vec![0, 2],
        ];
        assert_eq!(fm.monomials(), expect.as_slice());
        let f = feature_vector(&[2.0, 3.0], &fm).unwrap();
        assert_eq!(f.as_slice(), &[1.0, 2.0, 3.0, 4.0, 6.0, 9.0]);
    }

    #[test]
    fn feature_counts() {
        for (n, r, len) in [(4, 6, 210), (6, 1, 7), (5, 5, 252), (6, 4, 210)] {
            assert_eq!(FeatureMap::new(n, r).unwrap().len(), len);
            assert_eq!(node_count(n, r), len);
        }
    }

    #[test]
    fn length_mismatch_rejected() {
        let fm = FeatureMap::new(3, 2).unwrap();
        assert!(matches!(
            feature_vector(&[0.1, 0.2], &fm),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(FeatureMap::new(3, 0).is_err());
    }

    #[test]
    fn square_system_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_matrix(6, 6, &mut rng);
        let y = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let w = fit_least_squares(&a, &y).unwrap();
        assert!((a * w - y).norm() < 1e-10);
    }

    #[test]
    fn in_span_targets_fit_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random_matrix(40, 5, &mut rng);
        let w0 = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let y = &a * &w0;
        let w = fit_least_squares(&a, &y).unwrap();
        assert!((&a * w - &y).norm() <= 1e-10 * y.norm());
    }

    #[test]
    fn rank_deficient_matches_pseudoinverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = random_matrix(30, 3, &mut rng);
        let c = random_matrix(3, 6, &mut rng);
        let a = &b * &c;
        let y = DVector::from_fn(30, |_, _| rng.random_range(-1.0..1.0));
        let w = fit_least_squares(&a, &y).unwrap();
        // (BC)⁺ = C⁺B⁺ for full column rank B and full row rank C
        let bt = b.transpose();
        let ct = c.transpose();
        let b_pinv = (&bt * &b).try_inverse().unwrap() * &bt;
        let c_pinv = &ct * (&c * &ct).try_inverse().unwrap();
        let oracle = c_pinv * b_pinv * &y;
        assert!((&w - &oracle).norm() < 1e-8);
        let resid = &a * &w - &y;
        assert!((a.transpose() * resid).norm() < 1e-8 * a.norm() * y.norm());
    }

    #[test]
    fn ridge_shrinks_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(50, 4, &mut rng);
        let y = DVector::from_fn(50, |_, _| rng.random_range(-1.0..1.0));
        let w0 = fit_least_squares(&a, &y).unwrap();
        let w1 = fit_ridge(&a, &y, 10.0).unwrap();
        assert!(w1.norm() < w0.norm());
        assert!(fit_ridge(&a, &y, -1.0).is_err());
    }

    #[test]
    fn empty_fit_rejected() {
        let a = DMatrix::<f64>::zeros(0, 3);
        assert!(fit_least_squares(&a, &DVector::zeros(0)).is_err());
    }

    #[test]
    fn nmse_examples() {
        let y = [0.1, 0.4, -0.2, 0.9, 0.3];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        let mean = y.iter().sum::<f64>() / 5.0;
        assert!((nmse(&[mean; 5], &y).unwrap() - 1.0).abs() < 1e-14);
        let c = 0.25;
        let shifted: Vec<f64> = y.iter().map(|v| v + c).collect();
        let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        assert!((nmse(&shifted, &y).unwrap() - c * c * 5.0 / var).abs() < 1e-14);
        assert!(matches!(
            nmse(&[1.0, 2.0], &[0.5, 0.5]),
            Err(Error::ConstantTarget)
        ));
        assert!(nmse(&[1.0], &[0.5]).is_err());
    }

    #[test]
    fn product_readout_matches_pointwise_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m1 = ReadoutModel::new(
            FeatureMap::new(2, 2).unwrap(),
            DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let m2 = ReadoutModel::new(
            FeatureMap::new(1, 3).unwrap(),
            DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let p = m1.product(&m2).unwrap();
        assert_eq!(p.feature_map.len(), node_count(3, 5));
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = m1.predict_one(&z[..2]).unwrap() * m2.predict_one(&z[2..]).unwrap();
            assert!((p.predict_one(&z).unwrap() - lhs).abs() < 1e-12);
        }
    }
}
