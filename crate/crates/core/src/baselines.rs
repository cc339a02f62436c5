//! Classical comparison models: echo state networks and finite Volterra series.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, LeastSquares};
use crate::readout::SVD_CUTOFF;
use crate::scalar::{lit, Real};

/// `points` evenly spaced values covering `[low, high]`.
pub fn linspace(low: f64, high: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![low],
        _ => (0..points)
            .map(|i| low + (high - low) * i as f64 / (points - 1) as f64)
            .collect(),
    }
}

/// Spectral scales swept for ESNs: `points` values in `[0.01, 0.99]`.
pub fn spectral_grid(points: usize) -> Vec<f64> {
    linspace(0.01, 0.99, points)
}

/// Input scales swept for ESNs: `points` values in `[0.01, 1]`.
pub fn input_grid(points: usize) -> Vec<f64> {
    linspace(0.01, 1.0, points)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EsnConfig<T: Real> {
    pub m: usize,
    /// Target largest singular value of `W_r`.
    pub spectral_scale: T,
    /// Half-width of the input weight range.
    pub input_scale: T,
}

/// Unscaled random draw shared by every `(s, δ)` point of a sweep:
/// `W_r` uniform on `[-2, 2]`, input pattern uniform on `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EsnDraw<T: Real> {
    pub w_r: DMatrix<T>,
    pub w_r_norm: T,
    pub input_pattern: DVector<T>,
}

impl<T: Real> EsnDraw<T> {
    pub fn random<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        let w_r = DMatrix::from_fn(m, m, |_, _| lit(rng.random_range(-2.0..=2.0)));
        let input_pattern = DVector::from_fn(m, |_, _| lit(rng.random_range(-1.0..=1.0)));
        Self {
            w_r_norm: spectral_norm(&w_r),
            w_r,
            input_pattern,
        }
    }

    /// Rescales to `σ_max(W_r) = s` and `W_i ∈ [-δ, δ]`.
    pub fn scaled(&self, spectral_scale: T, input_scale: T) -> Result<Esn<T>> {
        if self.w_r_norm <= T::zero() {
            return Err(Error::InvalidConfig("reservoir matrix is zero".into()));
        }
        Ok(Esn {
            w_r: &self.w_r * (spectral_scale / self.w_r_norm),
            w_i: &self.input_pattern * input_scale,
        })
    }
}

/// `x_k = tanh(W_r x_{k-1} + W_i u_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Esn<T: Real> {
    pub w_r: DMatrix<T>,
    pub w_i: DVector<T>,
}

impl<T: Real> Esn<T> {
    pub fn random<R: Rng + ?Sized>(cfg: &EsnConfig<T>, rng: &mut R) -> Result<Self> {
        EsnDraw::random(cfg.m, rng).scaled(cfg.spectral_scale, cfg.input_scale)
    }

    pub fn size(&self) -> usize {
        self.w_i.len()
    }

    /// States for every input, starting from `x0`.
    pub fn run_from(&self, u: &[T], x0: &DVector<T>) -> Result<DMatrix<T>> {
        let m = self.size();
        if x0.len() != m {
            return Err(Error::DimensionMismatch {
                context: "ESN initial state",
                expected: m,
                found: x0.len(),
            });
        }
        let mut out = DMatrix::zeros(u.len(), m);
        let mut x = x0.clone();
        let mut pre = DVector::zeros(m);
        for (k, &uk) in u.iter().enumerate() {
            pre.copy_from(&self.w_i);
            pre *= uk;
            pre.gemv(T::one(), &self.w_r, &x, T::one());
            x = pre.map(|v| v.tanh());
            out.set_row(k, &x.transpose());
        }
        Ok(out)
    }
}

/// States of `esn` from `x₀ = 0`, one row per timestep.
pub fn esn_run<T: Real>(esn: &Esn<T>, u: &[T]) -> DMatrix<T> {
    esn.run_from(u, &DVector::zeros(esn.size()))
        .expect("zero state has the reservoir dimension")
}

/// Linear readout on a subset of state columns plus a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseReadout<T: Real> {
    pub columns: Vec<usize>,
    /// Constant first, then one weight per selected column.
    pub weights: DVector<T>,
}

impl<T: Real> SparseReadout<T> {
    pub fn n_nodes(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, states: &DMatrix<T>) -> DVector<T> {
        let mut y = DVector::from_element(states.nrows(), self.weights[0]);
        for (i, &c) in self.columns.iter().enumerate() {
            y.axpy(self.weights[i + 1], &states.column(c), T::one());
        }
        y
    }
}

fn design<T: Real>(states: &DMatrix<T>, columns: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(states.nrows(), columns.len() + 1, |r, c| {
        if c == 0 {
            T::one()
        } else {
            states[(r, columns[c - 1])]
        }
    })
}

/// Node-selection least squares over a fixed training window of ESN states.
pub struct EsnFitter<'a, T: Real> {
    states: &'a DMatrix<T>,
    full: LeastSquares<T>,
}

impl<'a, T: Real> EsnFitter<'a, T> {
    pub fn new(states: &'a DMatrix<T>) -> Self {
        let all: Vec<usize> = (0..states.ncols()).collect();
        Self {
            full: LeastSquares::new(&design(states, &all), SVD_CUTOFF),
            states,
        }
    }

    /// Fits all `m + 1` weights, keeps the `C - 1` state weights of largest
    /// magnitude (ties to the lower index) and refits on those columns.
    pub fn fit(&self, targets: &DVector<T>, n_nodes: usize) -> Result<SparseReadout<T>> {
        let m = self.states.ncols();
        if n_nodes == 0 || n_nodes > m + 1 {
            return Err(Error::InvalidConfig(format!(
                "node budget {n_nodes} outside 1..={}",
                m + 1
            )));
        }
        if targets.len() != self.states.nrows() {
            return Err(Error::DimensionMismatch {
                context: "ESN targets",
                expected: self.states.nrows(),
                found: targets.len(),
            });
        }
        let w = self.full.solve(targets, T::zero());
        if n_nodes == m + 1 {
            return Ok(SparseReadout {
                columns: (0..m).collect(),
                weights: w,
            });
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            w[b + 1]
                .abs()
                .partial_cmp(&w[a + 1].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        let mut columns: Vec<usize> = order[..n_nodes - 1].to_vec();
        columns.sort_unstable();
        let refit = LeastSquares::new(&design(self.states, &columns), SVD_CUTOFF);
        Ok(SparseReadout {
            weights: refit.solve(targets, T::zero()),
            columns,
        })
    }
}

/// One-shot [`EsnFitter::fit`].
pub fn esn_fit_select<T: Real>(
    states: &DMatrix<T>,
    targets: &DVector<T>,
    n_nodes: usize,
) -> Result<SparseReadout<T>> {
    EsnFitter::new(states).fit(targets, n_nodes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VolterraConfig {
    pub order: usize,
    pub memory: usize,
}

impl VolterraConfig {
    pub fn new(order: usize, memory: usize) -> Result<Self> {
        if order < 1 || memory < 1 {
            return Err(Error::InvalidConfig(
                "Volterra order and memory must be >= 1".into(),
            ));
        }
        Ok(Self { order, memory })
    }

    /// `1 + Σ_{i=1}^{o} pⁱ` kernel coefficients.
    pub fn node_count(&self) -> usize {
        let mut total = 1;
        let mut power = 1;
        for _ in 0..self.order {
            power *= self.memory;
            total += power;
        }
        total
    }
}

/// `(o, p)` pairs and node counts tabulated for the Volterra baseline.
pub fn volterra_table() -> Vec<(usize, usize, usize)> {
    let mut rows = Vec::new();
    let ranges = [
        (2, 2..=27),
        (3, 2..=8),
        (4, 2..=5),
        (5, 2..=3),
        (6, 2..=2),
        (7, 2..=2),
        (8, 2..=2),
    ];
    for (o, ps) in ranges {
        for p in ps {
            let n = VolterraConfig {
                order: o,
                memory: p,
            }
            .node_count();
            rows.push((o, p, n));
        }
    }
    rows
}

/// One column per ordered lag tuple: the constant, then for each degree
/// `i = 1..o` every `(j₁, …, jᵢ) ∈ [0, p)ⁱ` in lexicographic order, with
/// value `∏ u_{k-j_l}` (lags before the first sample read as zero).
pub fn volterra_features<T: Real>(u: &[T], cfg: &VolterraConfig) -> DMatrix<T> {
    let t = u.len();
    let p = cfg.memory;
    let lag = |k: usize, j: usize| if k >= j { u[k - j] } else { T::zero() };
    let mut out = DMatrix::zeros(t, cfg.node_count());
    out.column_mut(0).fill(T::one());
    // columns of the previous degree, in order
    let mut prev_start = 0;
    let mut prev_len = 1;
    let mut next = 1;
    for _ in 0..cfg.order {
        let start = next;
        for c in prev_start..prev_start + prev_len {
            for j in 0..p {
                for k in 0..t {
                    out[(k, next)] = out[(k, c)] * lag(k, j);
                }
                next += 1;
            }
        }
        prev_start = start;
        prev_len = next - start;
    }
    out
}
