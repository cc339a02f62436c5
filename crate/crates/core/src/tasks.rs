//! Input sequences and benchmark target maps.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::ode::{rk4_step, Dopri5, Tolerances};
use crate::scalar::{lit, to_f64, Real};

pub const INPUT_LOW: f64 = 0.0;
pub const INPUT_HIGH: f64 = 0.2;
/// Any generated target with `|y| > DIVERGENCE_LIMIT` is reported as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Missile sampling interval in seconds.
pub const MISSILE_DT: f64 = 4e-4;
pub const LRPO_DESK_DIMS: [usize; 3] = [20, 50, 70];
pub const LRPO_PAPER_DIMS: [usize; 3] = [200, 500, 700];

#[derive(Clone, Debug, PartialEq)]
pub struct InputSequence<T: Real> {
    pub values: Vec<T>,
    pub low: T,
    pub high: T,
}

impl<T: Real> InputSequence<T> {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// I.i.d. inputs uniform on `[0, 0.2]`.
pub fn random_input<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> InputSequence<T> {
    let values = (0..len)
        .map(|_| lit(rng.random_range(INPUT_LOW..=INPUT_HIGH)))
        .collect();
    InputSequence {
        values,
        low: lit(INPUT_LOW),
        high: lit(INPUT_HIGH),
    }
}

fn check_divergence<T: Real>(step: usize, y: T) -> Result<()> {
    if !(y.abs() <= lit(DIVERGENCE_LIMIT)) {
        return Err(Error::Diverged {
            step,
            value: to_f64(y),
        });
    }
    Ok(())
}

/// Offset `γ` used with NARMA of delay `tau`.
pub fn narma_gamma<T: Real>(tau: usize) -> T {
    lit(match tau {
        30 => 0.05,
        40 => 0.04,
        _ => 0.1,
    })
}

/// `y_k = 0.3 y_{k-1} + 0.05 y_{k-1} Σ_{j<τ} y_{k-j-1} + 1.5 u_{k-τ} u_k + γ`,
/// with zero history before the first sample.
pub fn narma<T: Real>(u: &[T], tau: usize, gamma: T) -> Result<Vec<T>> {
    if tau == 0 {
        return Err(Error::InvalidConfig("NARMA delay must be >= 1".into()));
    }
    let (a, b, c): (T, T, T) = (lit(0.3), lit(0.05), lit(1.5));
    let mut y: Vec<T> = Vec::with_capacity(u.len());
    // running Σ_{j=0}^{τ-1} y_{k-1-j}
    let mut window = T::zero();
    for k in 0..u.len() {
        let prev = if k > 0 { y[k - 1] } else { T::zero() };
        let lagged_u = if k >= tau { u[k - tau] } else { T::zero() };
        let yk = a * prev + b * prev * window + c * lagged_u * u[k] + gamma;
        check_divergence(k, yk)?;
        y.push(yk);
        window += yk;
        if k >= tau {
            window -= y[k - tau];
        }
    }
    Ok(y)
}

/// Missile right-hand side with transformed input `ut = 5u - 0.5`.
pub fn missile_rhs<T: Real>(ut: T, x: &[T], dx: &mut [T]) {
    let (x1, x2) = (x[0], x[1]);
    let x1_2 = x1 * x1;
    let x1_3 = x1_2 * x1;
    let x1_5 = x1_3 * x1_2;
    let c = x1.cos();
    dx[0] = x2
        - lit::<T>(0.1) * c * (lit::<T>(5.0) * x1 - lit::<T>(4.0) * x1_3 + x1_5)
        - lit::<T>(0.5) * c * ut;
    dx[1] = lit::<T>(-65.0) * x1 + lit::<T>(50.0) * x1_3
        - lit::<T>(15.0) * x1_5
        - x2
        - lit::<T>(100.0) * ut;
}

/// `y_k = x₂((k+1)·dt)` with input `u_k` held over `(k·dt, (k+1)·dt]`.
pub fn missile_with<T: Real>(u: &[T], dt_sample: T, tol: Tolerances) -> Result<Vec<T>> {
    let mut x = [T::zero(); 2];
    let mut solver = Dopri5::new(2, tol);
    let mut out = Vec::with_capacity(u.len());
    for (k, &uk) in u.iter().enumerate() {
        let ut = lit::<T>(5.0) * uk - lit(0.5);
        let mut f = |_t: T, x: &[T], dx: &mut [T]| missile_rhs(ut, x, dx);
        let t0 = dt_sample * lit(k as f64);
        let t1 = dt_sample * lit((k + 1) as f64);
        solver.advance(&mut f, t0, t1, &mut x)?;
        check_divergence(k, x[1])?;
        out.push(x[1]);
    }
    Ok(out)
}

pub fn missile<T: Real>(u: &[T]) -> Result<Vec<T>> {
    missile_with(u, lit(MISSILE_DT), Tolerances::default())
}

/// Fixed-step RK4 reference for [`missile`] with `substeps` steps per sample.
pub fn missile_rk4<T: Real>(u: &[T], dt_sample: T, substeps: usize) -> Vec<T> {
    let mut x = [T::zero(); 2];
    let h = dt_sample / lit(substeps as f64);
    let mut out = Vec::with_capacity(u.len());
    for (k, &uk) in u.iter().enumerate() {
        let ut = lit::<T>(5.0) * uk - lit(0.5);
        let mut f = |_t: T, x: &[T], dx: &mut [T]| missile_rhs(ut, x, dx);
        for s in 0..substeps {
            let t = dt_sample * lit(k as f64) + h * lit(s as f64);
            rk4_step(&mut f, t, &mut x, h);
        }
        out.push(x[1]);
    }
    out
}

/// Degree-2 polynomial `c₀ + Σ bᵢxᵢ + Σ_{i≤j} q_{ij} xᵢxⱼ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Quadratic<T: Real> {
    pub constant: T,
    pub linear: DVector<T>,
    /// Row-major upper triangle including the diagonal.
    pub quadratic: Vec<T>,
}

impl<T: Real> Quadratic<T> {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eval(&self, x: &[T]) -> T {
        let n = self.dim();
        let mut acc = self.constant;
        let mut idx = 0;
        for i in 0..n {
            let mut inner = self.linear[i];
            for xj in &x[i..n] {
                inner += self.quadratic[idx] * *xj;
                idx += 1;
            }
            acc += x[i] * inner;
        }
        acc
    }
}

/// Linear reservoir `x_k = A x_{k-1} + c u_k` with a degree-2 polynomial
/// output, `A` block diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct LrpoConfig<T: Real> {
    pub blocks: Vec<DMatrix<T>>,
    pub input: DVector<T>,
    pub output: Quadratic<T>,
}

impl<T: Real> LrpoConfig<T> {
    /// Entries of each block uniform on `[0, 4]`, then rescaled so that its
    /// largest singular value is a uniform draw from `(0, 1)`.
    pub fn random<R: Rng + ?Sized>(block_dims: &[usize], rng: &mut R) -> Self {
        let blocks = block_dims
            .iter()
            .map(|&d| {
                let raw = DMatrix::from_fn(d, d, |_, _| lit::<T>(rng.random_range(0.0..=4.0)));
                let s_max = spectral_norm(&raw);
                let mut target = 0.0;
                while target == 0.0 {
                    target = rng.random::<f64>();
                }
                raw * (lit::<T>(target) / s_max)
            })
            .collect();
        let dim: usize = block_dims.iter().sum();
        let input = DVector::from_fn(dim, |_, _| lit(rng.random_range(0.0..=4.0)));
        let mut coeff = || lit::<T>(rng.random_range(-0.1..=0.1));
        let constant = coeff();
        let linear = DVector::from_fn(dim, |_, _| coeff());
        let quadratic = (0..dim * (dim + 1) / 2).map(|_| coeff()).collect();
        Self {
            blocks,
            input,
            output: Quadratic {
                constant,
                linear,
                quadratic,
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.input.len()
    }

    pub fn validate(&self) -> Result<()> {
        let dim: usize = self.blocks.iter().map(|b| b.nrows()).sum();
        if dim != self.dim() || self.output.dim() != dim {
            return Err(Error::DimensionMismatch {
                context: "LRPO blocks",
                expected: self.dim(),
                found: dim,
            });
        }
        for b in &self.blocks {
            if spectral_norm(b) >= T::one() {
                return Err(Error::InvalidConfig(
                    "LRPO block has largest singular value >= 1".into(),
                ));
            }
        }
        Ok(())
    }

    /// State trajectory, one row per timestep.
    pub fn states(&self, u: &[T]) -> DMatrix<T> {
        let mut out = DMatrix::zeros(u.len(), self.dim());
        let mut x = DVector::zeros(self.dim());
        let mut next = DVector::zeros(self.dim());
        for (k, &uk) in u.iter().enumerate() {
            let mut off = 0;
            for b in &self.blocks {
                let d = b.nrows();
                let mut dst = next.rows_mut(off, d);
                dst.gemv(T::one(), b, &x.rows(off, d), T::zero());
                off += d;
            }
            next.axpy(uk, &self.input, T::one());
            std::mem::swap(&mut x, &mut next);
            out.set_row(k, &x.transpose());
        }
        out
    }
}

pub fn lrpo<T: Real>(u: &[T], cfg: &LrpoConfig<T>) -> Result<Vec<T>> {
    cfg.validate()?;
    let states = cfg.states(u);
    let mut row = vec![T::zero(); cfg.dim()];
    let mut out = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        for (i, v) in row.iter_mut().enumerate() {
            *v = states[(k, i)];
        }
        let y = cfg.output.eval(&row);
        check_divergence(k, y)?;
        out.push(y);
    }
    Ok(out)
}

/// Benchmark target maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Lrpo,
    Missile,
    Narma15,
    Narma20,
    Narma30,
    Narma40,
    /// `y_k = u_k`.
    Identity,
}

impl TaskKind {
    pub const BENCHMARKS: [TaskKind; 6] = [
        TaskKind::Lrpo,
        TaskKind::Missile,
        TaskKind::Narma15,
        TaskKind::Narma20,
        TaskKind::Narma30,
        TaskKind::Narma40,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Lrpo => "lrpo",
            TaskKind::Missile => "missile",
            TaskKind::Narma15 => "narma15",
            TaskKind::Narma20 => "narma20",
            TaskKind::Narma30 => "narma30",
            TaskKind::Narma40 => "narma40",
            TaskKind::Identity => "identity",
        }
    }

    pub fn narma_delay(self) -> Option<usize> {
        match self {
            TaskKind::Narma15 => Some(15),
            TaskKind::Narma20 => Some(20),
            TaskKind::Narma30 => Some(30),
            TaskKind::Narma40 => Some(40),
            _ => None,
        }
    }

    /// Target sequence for `u`. `lrpo` must be supplied for [`TaskKind::Lrpo`].
    pub fn generate<T: Real>(self, u: &[T], lrpo_cfg: Option<&LrpoConfig<T>>) -> Result<Vec<T>> {
        match self {
            TaskKind::Lrpo => {
                let cfg = lrpo_cfg.ok_or_else(|| {
                    Error::InvalidConfig("LRPO target requires a system draw".into())
                })?;
                lrpo(u, cfg)
            }
            TaskKind::Missile => missile(u),
            TaskKind::Identity => Ok(u.to_vec()),
            k => {
                let tau = k.narma_delay().expect("remaining kinds are NARMA");
                narma(u, tau, narma_gamma(tau))
            }
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::BENCHMARKS
            .into_iter()
            .chain([TaskKind::Identity])
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task '{s}'")))
    }
}

/// Writes `k,u_k,y_k` rows (k starting at 1).
pub fn write_task_csv<T: Real, W: std::io::Write>(writer: W, u: &[T], y: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "u_k", "y_k"])?;
    for (k, (a, b)) in u.iter().zip(y).enumerate() {
        w.write_record([(k + 1).to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
