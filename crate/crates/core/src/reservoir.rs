//! Ancilla-driven dissipative qubit reservoirs.
//!
//! A reservoir of `n_sys` system qubits interacts with one ancilla qubit
//! through an XX+YY exchange Hamiltonian with a uniform Z detuning. Each
//! timestep the ancilla is reset into a state that encodes the input, the
//! joint register evolves for `tau_s`, and the ancilla is traced out. The
//! ancilla is always tensor factor 0.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{NoiseConfig, NoisyPropagator};
use crate::qmath::{
    self, gemm_into, herm_eig, matmul, pauli_superop, random_density, restricted_norm_2_2,
    unitary_from_hamiltonian, zeros, CMatrix, DensityOperator,
};
use crate::scalar::{cre, lit, modulus, phase, to_f64, Real};

/// Steps evolved by the empirical convergence test.
pub const CONVERGENCE_HORIZON: usize = 500;
/// Max pairwise Schatten-2 spread accepted after the horizon.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-6;
/// Random initial states used by the empirical convergence test.
pub const CONVERGENCE_INIT_STATES: usize = 50;
/// Largest total qubit count (system + ancilla) for the dense spectral check.
pub const SPECTRAL_MAX_QUBITS: usize = 5;

/// How the scalar input is written into the ancilla.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    /// `u|0><0| + (1-u)|1><1|`
    #[default]
    Mixed,
    /// `(√u|0> + √(1-u)|1>)(h.c.)`
    Pure,
    /// `½(|0> + e^{-iu}|1>)(h.c.)`
    Phase,
    /// `u|0><0| + ((1-u)/2)(|0>+|1>)(<0|+<1|)`
    NonOrthogonal,
}

impl Encoding {
    pub const ALL: [Encoding; 4] = [
        Encoding::Mixed,
        Encoding::Pure,
        Encoding::Phase,
        Encoding::NonOrthogonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Encoding::Mixed => "mixed",
            Encoding::Pure => "pure",
            Encoding::Phase => "phase",
            Encoding::NonOrthogonal => "non_orthogonal",
        }
    }
}

impl std::str::FromStr for Encoding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Encoding::ALL
            .into_iter()
            .find(|e| e.name() == s || (s == "non-orthogonal" && *e == Encoding::NonOrthogonal))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown encoding '{s}'")))
    }
}

/// Dimensionless reservoir parameters (energies in units of `S`, time in `1/S`).
#[derive(Clone, Debug, PartialEq)]
pub struct ReservoirConfig<T: Real> {
    pub n_sys: usize,
    /// `(n_sys+1) x (n_sys+1)` symmetric coupling matrix; index 0 is the ancilla.
    /// Diagonal entries are ignored.
    pub couplings: DMatrix<T>,
    pub alpha_over_s: T,
    pub tau_s: T,
    pub encoding: Encoding,
}

impl<T: Real> ReservoirConfig<T> {
    pub fn new(couplings: DMatrix<T>, encoding: Encoding) -> Result<Self> {
        let n = couplings.nrows();
        if n < 2 {
            return Err(Error::InvalidConfig(
                "coupling matrix must cover the ancilla and at least one system qubit".into(),
            ));
        }
        let cfg = Self {
            n_sys: n - 1,
            couplings,
            alpha_over_s: lit(0.5),
            tau_s: T::one(),
            encoding,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same coupling `j` on every pair, detuning `alpha`, `tau_s = 1`.
    pub fn uniform(n_sys: usize, j: T, alpha: T, encoding: Encoding) -> Self {
        let n = n_sys + 1;
        let couplings = DMatrix::from_fn(n, n, |r, c| if r == c { T::zero() } else { j });
        Self {
            n_sys,
            couplings,
            alpha_over_s: alpha,
            tau_s: T::one(),
            encoding,
        }
    }

    /// Couplings drawn uniformly from `[-1, 1]`, `alpha/S = 0.5`, `tau S = 1`.
    pub fn random<R: Rng + ?Sized>(n_sys: usize, encoding: Encoding, rng: &mut R) -> Self {
        let n = n_sys + 1;
        let mut couplings = DMatrix::zeros(n, n);
        for a in 0..n {
            for b in a + 1..n {
                let j = lit::<T>(rng.random_range(-1.0..=1.0));
                couplings[(a, b)] = j;
                couplings[(b, a)] = j;
            }
        }
        Self {
            n_sys,
            couplings,
            alpha_over_s: lit(0.5),
            tau_s: T::one(),
            encoding,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_sys + 1;
        if self.n_sys == 0 || self.couplings.shape() != (n, n) {
            return Err(Error::InvalidConfig(format!(
                "coupling matrix must be {n}x{n} with n_sys >= 1"
            )));
        }
        for a in 0..n {
            for b in a + 1..n {
                if (self.couplings[(a, b)] - self.couplings[(b, a)]).abs() > lit(1e-12) {
                    return Err(Error::InvalidConfig(format!(
                        "couplings not symmetric at ({a}, {b})"
                    )));
                }
            }
        }
        if !(self.tau_s > T::zero()) {
            return Err(Error::InvalidConfig("tau_s must be positive".into()));
        }
        Ok(())
    }

    pub fn total_qubits(&self) -> usize {
        self.n_sys + 1
    }

    /// Number of real coordinates of the system state, `4^n`.
    pub fn state_space_size(&self) -> usize {
        1usize << (2 * self.n_sys)
    }
}

/// `H/S = Σ_{j1<j2} J(X X + Y Y) + α Σ_j Z` on the ancilla + system register.
pub fn build_hamiltonian<T: Real>(cfg: &ReservoirConfig<T>) -> CMatrix<T> {
    let n = cfg.total_qubits();
    let map: Vec<usize> = (0..n).collect();
    hamiltonian_on(cfg, &map, n)
}

/// Hamiltonian of `cfg` with local qubit `j` placed at global position
/// `qubit_map[j]` of a `total_qubits` register.
pub fn hamiltonian_on<T: Real>(
    cfg: &ReservoirConfig<T>,
    qubit_map: &[usize],
    total_qubits: usize,
) -> CMatrix<T> {
    let d = 1usize << total_qubits;
    let bit = |q: usize| 1usize << (total_qubits - 1 - qubit_map[q]);
    let n = cfg.total_qubits();
    let mut h = zeros(d, d);
    for s in 0..d {
        let mut diag = T::zero();
        for q in 0..n {
            diag += if s & bit(q) == 0 {
                cfg.alpha_over_s
            } else {
                -cfg.alpha_over_s
            };
        }
        h[(s, s)] += cre(diag);
        // (XX + YY) = 2(|01><10| + |10><01|) on the pair
        for a in 0..n {
            for b in a + 1..n {
                let j = cfg.couplings[(a, b)];
                if j == T::zero() {
                    continue;
                }
                let (ba, bb) = (bit(a), bit(b));
                if (s & ba == 0) != (s & bb == 0) {
                    h[(s ^ ba ^ bb, s)] += cre(j + j);
                }
            }
        }
    }
    h
}

/// Ancilla state encoding the input `u ∈ [0, 1]`.
pub fn encode_input<T: Real>(u: T, encoding: Encoding) -> Result<DensityOperator<T>> {
    if !(u >= T::zero() && u <= T::one()) {
        return Err(Error::InputOutOfRange {
            value: to_f64(u),
            low: 0.0,
            high: 1.0,
        });
    }
    let one = T::one();
    let half = lit::<T>(0.5);
    let v = one - u;
    let [a, b, cc, d] = match encoding {
        Encoding::Mixed => [cre(u), cre(T::zero()), cre(T::zero()), cre(v)],
        Encoding::Pure => {
            let off = cre((u * v).sqrt());
            [cre(u), off, off, cre(v)]
        }
        Encoding::Phase => {
            let p = phase(u);
            [cre(half), p.conj() * half, p * half, cre(half)]
        }
        Encoding::NonOrthogonal => {
            let w = v * half;
            [cre(u + w), cre(w), cre(w), cre(w)]
        }
    };
    // column-major: (0,0), (1,0), (0,1), (1,1)
    let m = CMatrix::from_column_slice(2, 2, &[a, cc, b, d]);
    Ok(DensityOperator::from_matrix_unchecked(m))
}

/// `⟨Z^{(i)}⟩` for every qubit of `rho`, most significant qubit first.
pub fn z_expectations<T: Real>(rho: &CMatrix<T>) -> DVector<T> {
    let d = rho.nrows();
    let n = d.trailing_zeros() as usize;
    let mut z = DVector::zeros(n);
    for s in 0..d {
        let p = rho[(s, s)].re;
        for q in 0..n {
            if s >> (n - 1 - q) & 1 == 0 {
                z[q] += p;
            } else {
                z[q] -= p;
            }
        }
    }
    z
}

/// `2 Σ_{r<s} |ρ_rs|`.
pub fn offdiag_mass<T: Real>(rho: &CMatrix<T>) -> T {
    let d = rho.nrows();
    let mut acc = T::zero();
    for col in 1..d {
        for row in 0..col {
            acc += modulus(rho[(row, col)]);
        }
    }
    acc + acc
}

/// A reservoir with its evolution operator precomputed.
#[derive(Clone, Debug)]
pub struct Reservoir<T: Real> {
    cfg: ReservoirConfig<T>,
    hamiltonian: CMatrix<T>,
    unitary: CMatrix<T>,
    /// `blocks[b][a] = <b|U|a>` on the ancilla, each `2^n x 2^n`.
    blocks: [[CMatrix<T>; 2]; 2],
    blocks_adj: [[CMatrix<T>; 2]; 2],
}

impl<T: Real> Reservoir<T> {
    pub fn new(cfg: ReservoirConfig<T>) -> Result<Self> {
        cfg.validate()?;
        let hamiltonian = build_hamiltonian(&cfg);
        let unitary = unitary_from_hamiltonian(&hamiltonian, cfg.tau_s)?;
        let d = 1usize << cfg.n_sys;
        let block = |b: usize, a: usize| unitary.view((b * d, a * d), (d, d)).into_owned();
        let blocks = [[block(0, 0), block(0, 1)], [block(1, 0), block(1, 1)]];
        let blocks_adj = [
            [blocks[0][0].adjoint(), blocks[0][1].adjoint()],
            [blocks[1][0].adjoint(), blocks[1][1].adjoint()],
        ];
        Ok(Self {
            cfg,
            hamiltonian,
            unitary,
            blocks,
            blocks_adj,
        })
    }

    pub fn config(&self) -> &ReservoirConfig<T> {
        &self.cfg
    }

    pub fn hamiltonian(&self) -> &CMatrix<T> {
        &self.hamiltonian
    }

    pub fn unitary(&self) -> &CMatrix<T> {
        &self.unitary
    }

    pub fn sys_dim(&self) -> usize {
        1 << self.cfg.n_sys
    }

    /// `Tr_anc(U (σ ⊗ x) U†)` for an arbitrary system operator `x`.
    pub fn apply(&self, x: &CMatrix<T>, sigma: &CMatrix<T>) -> CMatrix<T> {
        let d = self.sys_dim();
        let zero = cre(T::zero());
        let one = cre(T::one());
        let mut out = zeros(d, d);
        let mut p = [[zeros(d, d), zeros(d, d)], [zeros(d, d), zeros(d, d)]];
        for b in 0..2 {
            for a in 0..2 {
                if (0..2).all(|a2| sigma[(a, a2)] == zero) {
                    continue;
                }
                gemm_into(one, &self.blocks[b][a], x, zero, &mut p[b][a]);
            }
        }
        let mut q = zeros(d, d);
        for b in 0..2 {
            for a2 in 0..2 {
                let (s0, s1) = (sigma[(0, a2)], sigma[(1, a2)]);
                match (s0 == zero, s1 == zero) {
                    (true, true) => continue,
                    (false, true) => {
                        gemm_into(s0, &p[b][0], &self.blocks_adj[b][a2], one, &mut out)
                    }
                    (true, false) => {
                        gemm_into(s1, &p[b][1], &self.blocks_adj[b][a2], one, &mut out)
                    }
                    (false, false) => {
                        q.zip_zip_apply(&p[b][0], &p[b][1], |dst, x0, x1| *dst = x0 * s0 + x1 * s1);
                        gemm_into(one, &q, &self.blocks_adj[b][a2], one, &mut out);
                    }
                }
            }
        }
        out
    }

    /// The channel `T(u)` as a closure over operators.
    pub fn channel(&self, u: T) -> Result<impl Fn(&CMatrix<T>) -> CMatrix<T> + '_> {
        let sigma = encode_input(u, self.cfg.encoding)?.into_matrix();
        Ok(move |x: &CMatrix<T>| self.apply(x, &sigma))
    }

    fn check_dim(&self, rho: &DensityOperator<T>) -> Result<()> {
        if rho.dim() != self.sys_dim() {
            return Err(Error::DimensionMismatch {
                context: "reservoir state",
                expected: self.sys_dim(),
                found: rho.dim(),
            });
        }
        Ok(())
    }

    /// One noiseless timestep `ρ_k = T(u_k) ρ_{k-1}`.
    pub fn step(&self, rho: &DensityOperator<T>, u: T) -> Result<DensityOperator<T>> {
        self.check_dim(rho)?;
        let sigma = encode_input(u, self.cfg.encoding)?;
        Ok(DensityOperator::from_matrix_unchecked(
            self.apply(rho.matrix(), sigma.matrix()),
        ))
    }

    /// Evolves `rho0` through `inputs`, calling `observe(k, ρ_k)` after each
    /// step (`k` zero-based). Returns the final state.
    pub fn evolve<F>(
        &self,
        inputs: &[T],
        rho0: &DensityOperator<T>,
        noise: Option<&NoiseConfig<T>>,
        mut observe: F,
    ) -> Result<DensityOperator<T>>
    where
        F: FnMut(usize, &DensityOperator<T>),
    {
        self.check_dim(rho0)?;
        let noisy = noise
            .map(|cfg| NoisyPropagator::new(self, cfg))
            .transpose()?;
        let mut rho = rho0.clone();
        for (k, &u) in inputs.iter().enumerate() {
            rho = match &noisy {
                Some(p) => p.step(&rho, u)?,
                None => self.step(&rho, u)?,
            };
            observe(k, &rho);
        }
        Ok(rho)
    }

    /// Runs the reservoir and records `⟨Z^{(i)}⟩_k` for the system qubits.
    pub fn run(
        &self,
        inputs: &[T],
        rho0: &DensityOperator<T>,
        noise: Option<&NoiseConfig<T>>,
    ) -> Result<TrajectoryRecord<T>> {
        self.run_inner(inputs, rho0, noise, false)
    }

    /// As [`Reservoir::run`], additionally recording the off-diagonal mass.
    pub fn run_with_offdiag(
        &self,
        inputs: &[T],
        rho0: &DensityOperator<T>,
        noise: Option<&NoiseConfig<T>>,
    ) -> Result<TrajectoryRecord<T>> {
        self.run_inner(inputs, rho0, noise, true)
    }

    fn run_inner(
        &self,
        inputs: &[T],
        rho0: &DensityOperator<T>,
        noise: Option<&NoiseConfig<T>>,
        with_mass: bool,
    ) -> Result<TrajectoryRecord<T>> {
        let n = self.cfg.n_sys;
        let mut z = DMatrix::zeros(inputs.len(), n);
        let mut mass = Vec::with_capacity(if with_mass { inputs.len() } else { 0 });
        self.evolve(inputs, rho0, noise, |k, rho| {
            z.set_row(k, &z_expectations(rho.matrix()).transpose());
            if with_mass {
                mass.push(offdiag_mass(rho.matrix()));
            }
        })?;
        Ok(TrajectoryRecord {
            z_expectations: z,
            offdiag_mass: with_mass.then_some(mass),
        })
    }
}

/// Per-timestep observables of one reservoir run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord<T: Real> {
    /// `steps x n_sys`; row `k` holds `⟨Z^{(i)}⟩` after input `k`.
    pub z_expectations: DMatrix<T>,
    pub offdiag_mass: Option<Vec<T>>,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn len(&self) -> usize {
        self.z_expectations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceMethod {
    Empirical,
    Spectral,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceReport<T: Real> {
    pub method: ConvergenceMethod,
    pub passed: bool,
    /// `ε = 1 - sup_u ‖T(u)|_{H₀}‖₂₋₂` (spectral only).
    pub contraction_margin: Option<T>,
    /// Max pairwise Schatten-2 distance of the final states (empirical only).
    pub max_final_spread: Option<T>,
}

/// Parameters of the empirical convergence test.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalTest {
    pub n_init: usize,
    pub horizon: usize,
    pub tolerance: f64,
}

impl Default for EmpiricalTest {
    fn default() -> Self {
        Self {
            n_init: CONVERGENCE_INIT_STATES,
            horizon: CONVERGENCE_HORIZON,
            tolerance: CONVERGENCE_TOLERANCE,
        }
    }
}

/// Evolves `test.n_init` random initial states over the first `test.horizon`
/// inputs and checks that they collapse onto one trajectory.
pub fn empirical_convergence_test<T: Real, R: Rng + ?Sized>(
    reservoir: &Reservoir<T>,
    inputs: &[T],
    test: &EmpiricalTest,
    rng: &mut R,
) -> Result<ConvergenceReport<T>> {
    if inputs.len() < test.horizon {
        return Err(Error::SequenceTooShort {
            needed: test.horizon,
            have: inputs.len(),
        });
    }
    let n = reservoir.config().n_sys;
    let mut finals = Vec::with_capacity(test.n_init);
    for _ in 0..test.n_init {
        let rho0 = random_density::<T, R>(n, rng);
        finals.push(reservoir.evolve(&inputs[..test.horizon], &rho0, None, |_, _| ())?);
    }
    let mut spread = T::zero();
    for (i, a) in finals.iter().enumerate() {
        for b in &finals[i + 1..] {
            spread = spread.max(a.distance(b));
        }
    }
    Ok(ConvergenceReport {
        method: ConvergenceMethod::Empirical,
        passed: spread < lit(test.tolerance),
        contraction_margin: None,
        max_final_spread: Some(spread),
    })
}

/// `points` evenly spaced inputs covering `[0, 1]` including both ends.
pub fn unit_grid<T: Real>(points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![T::zero()],
        _ => (0..points)
            .map(|i| lit(i as f64 / (points - 1) as f64))
            .collect(),
    }
}

/// Restricted contraction norm of `T(u)` on the traceless hyperplane.
pub fn restricted_norm_at<T: Real>(reservoir: &Reservoir<T>, u: T) -> Result<T> {
    let qubits = reservoir.config().total_qubits();
    if qubits > SPECTRAL_MAX_QUBITS {
        return Err(Error::SystemTooLarge {
            qubits,
            max: SPECTRAL_MAX_QUBITS,
        });
    }
    let channel = reservoir.channel(u)?;
    let sop = pauli_superop(channel, reservoir.config().n_sys);
    Ok(restricted_norm_2_2(&sop))
}

/// Sufficient-condition convergence certificate: the sup over `u_grid` of
/// the restricted norm must be below one.
///
/// For the mixed encoding `T(u)` is affine in `u`, so a grid containing both
/// endpoints attains the sup over all of `[0, 1]`.
pub fn spectral_convergence_check<T: Real>(
    reservoir: &Reservoir<T>,
    u_grid: &[T],
) -> Result<ConvergenceReport<T>> {
    let mut sup = T::zero();
    for &u in u_grid {
        sup = sup.max(restricted_norm_at(reservoir, u)?);
    }
    let mut margin = T::one() - sup;
    // A unitary map has restricted norm 1 up to roundoff.
    if margin.abs() < lit(1e-12) {
        margin = T::zero();
    }
    Ok(ConvergenceReport {
        method: ConvergenceMethod::Spectral,
        passed: margin > T::zero(),
        contraction_margin: Some(margin),
        max_final_spread: None,
    })
}

/// A reservoir accepted by rejection sampling.
#[derive(Clone, Debug)]
pub struct SampledReservoir<T: Real> {
    pub reservoir: Reservoir<T>,
    pub report: ConvergenceReport<T>,
    pub attempts: usize,
}

/// Draws couplings uniformly from `[-1, 1]` until the empirical convergence
/// test passes on `test_input`.
pub fn sample_convergent_reservoir<T: Real, R: Rng + ?Sized>(
    n_sys: usize,
    encoding: Encoding,
    test_input: &[T],
    test: &EmpiricalTest,
    max_attempts: usize,
    rng: &mut R,
) -> Result<SampledReservoir<T>> {
    sample_loop(
        n_sys,
        encoding,
        test_input,
        test,
        max_attempts,
        rng,
        None::<&mut R>,
    )
}

/// As [`sample_convergent_reservoir`], with couplings drawn from `couplings`
/// and the test's random initial states from `states`.
pub fn sample_convergent_reservoir_split<T: Real, R1: Rng + ?Sized, R2: Rng + ?Sized>(
    n_sys: usize,
    encoding: Encoding,
    test_input: &[T],
    test: &EmpiricalTest,
    max_attempts: usize,
    couplings: &mut R1,
    states: &mut R2,
) -> Result<SampledReservoir<T>> {
    sample_loop(
        n_sys,
        encoding,
        test_input,
        test,
        max_attempts,
        couplings,
        Some(states),
    )
}

fn sample_loop<T: Real, R1: Rng + ?Sized, R2: Rng + ?Sized>(
    n_sys: usize,
    encoding: Encoding,
    test_input: &[T],
    test: &EmpiricalTest,
    max_attempts: usize,
    couplings: &mut R1,
    mut states: Option<&mut R2>,
) -> Result<SampledReservoir<T>> {
    if max_attempts == 0 {
        return Err(Error::InvalidConfig(
            "max_attempts must be at least 1".into(),
        ));
    }
    for attempt in 1..=max_attempts {
        let reservoir = Reservoir::new(ReservoirConfig::random(n_sys, encoding, couplings))?;
        let report = match states.as_deref_mut() {
            Some(s) => empirical_convergence_test(&reservoir, test_input, test, s)?,
            None => empirical_convergence_test(&reservoir, test_input, test, couplings)?,
        };
        if report.passed {
            return Ok(SampledReservoir {
                reservoir,
                report,
                attempts: attempt,
            });
        }
    }
    Err(Error::SamplingExhausted {
        attempts: max_attempts,
    })
}

/// Several non-interacting reservoirs evolved as one register.
///
/// The joint register is laid out as all ancillas first (subsystem order),
/// then all system qubits (subsystem order). The total Hamiltonian is the sum
/// of the embedded subsystem Hamiltonians.
#[derive(Clone, Debug)]
pub struct JointReservoir<T: Real> {
    parts: Vec<ReservoirConfig<T>>,
    unitary: CMatrix<T>,
    n_anc: usize,
    n_sys: usize,
}

impl<T: Real> JointReservoir<T> {
    pub fn new(parts: Vec<ReservoirConfig<T>>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidConfig("joint reservoir needs a subsystem".into()))?;
        let tau = first.tau_s;
        if parts.iter().any(|p| p.tau_s != tau) {
            return Err(Error::InvalidConfig(
                "joint subsystems must share tau_s".into(),
            ));
        }
        for p in &parts {
            p.validate()?;
        }
        let n_anc = parts.len();
        let n_sys: usize = parts.iter().map(|p| p.n_sys).sum();
        let total = n_anc + n_sys;
        let d = 1usize << total;
        let mut h = zeros(d, d);
        let mut offset = n_anc;
        for (k, p) in parts.iter().enumerate() {
            let map: Vec<usize> = std::iter::once(k)
                .chain((0..p.n_sys).map(|j| offset + j))
                .collect();
            h += hamiltonian_on(p, &map, total);
            offset += p.n_sys;
        }
        let unitary = unitary_from_hamiltonian(&h, tau)?;
        Ok(Self {
            parts,
            unitary,
            n_anc,
            n_sys,
        })
    }

    pub fn n_sys(&self) -> usize {
        self.n_sys
    }

    pub fn step(&self, rho: &DensityOperator<T>, u: T) -> Result<DensityOperator<T>> {
        if rho.dim() != 1 << self.n_sys {
            return Err(Error::DimensionMismatch {
                context: "joint reservoir state",
                expected: 1 << self.n_sys,
                found: rho.dim(),
            });
        }
        let mut anc = CMatrix::from_element(1, 1, cre(T::one()));
        for p in &self.parts {
            anc = qmath::kron(&anc, encode_input(u, p.encoding)?.matrix());
        }
        let full = qmath::kron(&anc, rho.matrix());
        let evolved = matmul(&matmul(&self.unitary, &full), &self.unitary.adjoint());
        let reduced =
            qmath::partial_trace_first_matrix(&evolved, 1 << self.n_anc, 1 << self.n_sys)?;
        Ok(DensityOperator::from_matrix_unchecked(reduced))
    }

    /// `⟨Z⟩` trajectories of all system qubits, subsystem by subsystem.
    pub fn run(&self, inputs: &[T], rho0: &DensityOperator<T>) -> Result<DMatrix<T>> {
        let mut z = DMatrix::zeros(inputs.len(), self.n_sys);
        let mut rho = rho0.clone();
        for (k, &u) in inputs.iter().enumerate() {
            rho = self.step(&rho, u)?;
            z.set_row(k, &z_expectations(rho.matrix()).transpose());
        }
        Ok(z)
    }
}

/// Spectrum of `h`, ascending, as plain reals (for symmetry checks).
pub fn spectrum<T: Real>(h: &CMatrix<T>) -> Result<Vec<T>> {
    let mut v: Vec<T> = herm_eig(h)?.values.iter().copied().collect();
    v.reverse();
    Ok(v)
}
