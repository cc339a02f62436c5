//! Local Markovian noise applied during the reservoir interaction.
//!
//! The interaction time is split into Trotter substeps. Each substep applies
//! the noiseless unitary for `δt = τ/substeps` and then the single-qubit
//! channel on every qubit of the joint ancilla + system register, in index
//! order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{
    gemm_into, kron, partial_trace_first_matrix, unitary_from_hamiltonian, zeros, CMatrix,
    DensityOperator,
};
use crate::reservoir::{encode_input, Reservoir};
use crate::scalar::{cre, lit, Real};

/// Default number of Trotter substeps per interaction.
pub const DEFAULT_SUBSTEPS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Dephasing,
    /// Amplitude damping to `|0>`; generalized damping at zero temperature.
    Decaying,
    /// Generalized amplitude damping with thermal weight `lambda`.
    Gad,
}

impl NoiseKind {
    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Dephasing => "dephasing",
            NoiseKind::Decaying => "decaying",
            NoiseKind::Gad => "gad",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dephasing" => Ok(NoiseKind::Dephasing),
            "decaying" | "amplitude_damping" => Ok(NoiseKind::Decaying),
            "gad" => Ok(NoiseKind::Gad),
            _ => Err(Error::InvalidConfig(format!("unknown noise kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig<T: Real> {
    pub kind: NoiseKind,
    /// Noise rate in units of the coupling scale.
    pub gamma_over_s: T,
    /// Ground-state weight of the thermal fixed point (GAD only).
    pub lambda: T,
    pub substeps: usize,
}

impl<T: Real> NoiseConfig<T> {
    pub fn dephasing(gamma_over_s: T) -> Self {
        Self {
            kind: NoiseKind::Dephasing,
            gamma_over_s,
            lambda: T::one(),
            substeps: DEFAULT_SUBSTEPS,
        }
    }

    pub fn decaying(gamma_over_s: T) -> Self {
        Self {
            kind: NoiseKind::Decaying,
            ..Self::dephasing(gamma_over_s)
        }
    }

    pub fn gad(gamma_over_s: T, lambda: T) -> Self {
        Self {
            kind: NoiseKind::Gad,
            lambda,
            ..Self::dephasing(gamma_over_s)
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    /// Short label such as `gad0.4` used in result tables.
    pub fn label(&self) -> String {
        match self.kind {
            NoiseKind::Gad => format!("gad{}", self.lambda),
            k => k.name().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.substeps == 0 {
            return Err(Error::InvalidConfig("substeps must be at least 1".into()));
        }
        if !(self.gamma_over_s >= T::zero()) {
            return Err(Error::InvalidConfig(
                "noise rate must be non-negative".into(),
            ));
        }
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return Err(Error::InvalidConfig("lambda must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Per-substep damping probability `p` with `√(1-p) = exp(-2 γ δt)`.
    pub fn damping_probability(&self, tau_s: T) -> T {
        let dt = tau_s / lit(self.substeps as f64);
        T::one() - (lit::<T>(-4.0) * self.gamma_over_s * dt).exp()
    }
}

fn mat2<T: Real>(a00: T, a01: T, a10: T, a11: T) -> CMatrix<T> {
    CMatrix::from_row_slice(2, 2, &[cre(a00), cre(a01), cre(a10), cre(a11)])
}

/// Single-qubit Kraus operators for one substep, with all-zero operators dropped.
pub fn kraus_set<T: Real>(cfg: &NoiseConfig<T>, tau_s: T) -> Result<Vec<CMatrix<T>>> {
    cfg.validate()?;
    let p = cfg.damping_probability(tau_s);
    let q = (T::one() - p).sqrt();
    let zero = T::zero();
    let half = lit::<T>(0.5);
    let ops = match cfg.kind {
        NoiseKind::Dephasing => {
            let a = ((T::one() + q) * half).sqrt();
            let b = ((T::one() - q) * half).sqrt();
            vec![mat2(a, zero, zero, a), mat2(b, zero, zero, -b)]
        }
        NoiseKind::Decaying | NoiseKind::Gad => {
            let lambda = if cfg.kind == NoiseKind::Decaying {
                T::one()
            } else {
                cfg.lambda
            };
            let sl = lambda.sqrt();
            let sm = (T::one() - lambda).sqrt();
            let sp = p.sqrt();
            vec![
                mat2(sl, zero, zero, sl * q),
                mat2(zero, sl * sp, zero, zero),
                mat2(sm * q, zero, zero, sm),
                mat2(zero, zero, sm * sp, zero),
            ]
        }
    };
    Ok(ops
        .into_iter()
        .filter(|m| m.iter().any(|z| z.re != zero || z.im != zero))
        .collect())
}

/// `max |Σ M†M - I|` over entries.
pub fn kraus_completeness_defect<T: Real>(kraus: &[CMatrix<T>]) -> T {
    let d = kraus.first().map_or(0, |m| m.nrows());
    let mut acc = zeros::<T>(d, d);
    for m in kraus {
        acc += m.adjoint() * m;
    }
    for i in 0..d {
        acc[(i, i)] -= cre(T::one());
    }
    acc.iter()
        .map(|z| z.norm_sqr().sqrt())
        .fold(T::zero(), |a, b| a.max(b))
}

/// `Σ_l M_l^{(q)} x M_l^{(q)†}` with `M_l` acting on qubit `q` (0 = most
/// significant) of an `n_qubits` register.
pub fn apply_local_kraus<T: Real>(
    x: &CMatrix<T>,
    kraus: &[CMatrix<T>],
    qubit: usize,
    n_qubits: usize,
) -> Result<CMatrix<T>> {
    let d = 1usize << n_qubits;
    if x.shape() != (d, d) {
        return Err(Error::DimensionMismatch {
            context: "local channel operand",
            expected: d,
            found: x.nrows(),
        });
    }
    if qubit >= n_qubits {
        return Err(Error::QubitOutOfRange {
            index: qubit,
            n_qubits,
        });
    }
    let mask = 1usize << (n_qubits - 1 - qubit);
    let mut out = zeros(d, d);
    let mut left = zeros(d, d);
    for m in kraus {
        // left = M x, acting on the row index
        for col in 0..d {
            for r in 0..d {
                if r & mask != 0 {
                    continue;
                }
                let (x0, x1) = (x[(r, col)], x[(r | mask, col)]);
                left[(r, col)] = m[(0, 0)] * x0 + m[(0, 1)] * x1;
                left[(r | mask, col)] = m[(1, 0)] * x0 + m[(1, 1)] * x1;
            }
        }
        // out += left M†, acting on the column index
        for c in 0..d {
            if c & mask != 0 {
                continue;
            }
            for r in 0..d {
                let (l0, l1) = (left[(r, c)], left[(r, c | mask)]);
                out[(r, c)] += l0 * m[(0, 0)].conj() + l1 * m[(0, 1)].conj();
                out[(r, c | mask)] += l0 * m[(1, 0)].conj() + l1 * m[(1, 1)].conj();
            }
        }
    }
    Ok(out)
}

/// Applies the single-qubit channel to qubit `qubit` of `rho`.
pub fn apply_channel<T: Real>(
    rho: &DensityOperator<T>,
    kraus: &[CMatrix<T>],
    qubit: usize,
) -> Result<DensityOperator<T>> {
    let out = apply_local_kraus(rho.matrix(), kraus, qubit, rho.n_qubits())?;
    Ok(DensityOperator::from_matrix_unchecked(out))
}

/// Trotterized noisy evolution for one reservoir.
#[derive(Clone, Debug)]
pub struct NoisyPropagator<'a, T: Real> {
    reservoir: &'a Reservoir<T>,
    sub_unitary: CMatrix<T>,
    sub_unitary_adj: CMatrix<T>,
    kraus: Vec<CMatrix<T>>,
    substeps: usize,
}

impl<'a, T: Real> NoisyPropagator<'a, T> {
    pub fn new(reservoir: &'a Reservoir<T>, noise: &NoiseConfig<T>) -> Result<Self> {
        let tau = reservoir.config().tau_s;
        let kraus = kraus_set(noise, tau)?;
        let dt = tau / lit(noise.substeps as f64);
        let sub_unitary = unitary_from_hamiltonian(reservoir.hamiltonian(), dt)?;
        let sub_unitary_adj = sub_unitary.adjoint();
        Ok(Self {
            reservoir,
            sub_unitary,
            sub_unitary_adj,
            kraus,
            substeps: noise.substeps,
        })
    }

    pub fn step(&self, rho: &DensityOperator<T>, u: T) -> Result<DensityOperator<T>> {
        let d = self.reservoir.sys_dim();
        if rho.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "reservoir state",
                expected: d,
                found: rho.dim(),
            });
        }
        let n = self.reservoir.config().total_qubits();
        let sigma = encode_input(u, self.reservoir.config().encoding)?;
        let mut full = kron(sigma.matrix(), rho.matrix());
        let mut tmp = zeros(2 * d, 2 * d);
        let (one, zero) = (cre(T::one()), cre(T::zero()));
        for _ in 0..self.substeps {
            gemm_into(one, &self.sub_unitary, &full, zero, &mut tmp);
            gemm_into(one, &tmp, &self.sub_unitary_adj, zero, &mut full);
            for q in 0..n {
                full = apply_local_kraus(&full, &self.kraus, q, n)?;
            }
        }
        let reduced = partial_trace_first_matrix(&full, 2, d)?;
        Ok(DensityOperator::from_matrix_unchecked(reduced))
    }
}

/// One noisy timestep; builds the propagator on every call.
pub fn noisy_step<T: Real>(
    rho: &DensityOperator<T>,
    u: T,
    reservoir: &Reservoir<T>,
    noise: &NoiseConfig<T>,
) -> Result<DensityOperator<T>> {
    NoisyPropagator::new(reservoir, noise)?.step(rho, u)
}
