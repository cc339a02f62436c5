//! Experiment protocol: washout / train / evaluate, multi-sample averaging,
//! node-count sweeps, decoherence diagnostics and result emission.
//!
//! Every sample draws its randomness from named substreams of the master seed
//! and runs single-threaded; samples run in parallel and are reduced in index
//! order, so outputs do not depend on the worker count.

use std::fmt::Write as _;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    input_grid, spectral_grid, volterra_features, EsnDraw, EsnFitter, VolterraConfig,
};
use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::noise::{NoiseConfig, NoiseKind, DEFAULT_SUBSTEPS};
use crate::qmath::DensityOperator;
use crate::readout::{feature_matrix, nmse, node_count, FeatureMap, SVD_CUTOFF};
use crate::reservoir::{
    sample_convergent_reservoir_split, spectral_convergence_check, unit_grid, EmpiricalTest,
    Encoding, Reservoir, SPECTRAL_MAX_QUBITS,
};
use crate::tasks::{random_input, LrpoConfig, TaskKind, LRPO_DESK_DIMS, LRPO_PAPER_DIMS};

pub const WASHOUT: usize = 500;
pub const TRAIN: usize = 1000;
pub const EVAL: usize = 1000;
pub const TOTAL_STEPS: usize = WASHOUT + TRAIN + EVAL;
pub const DESK_SAMPLES: usize = 20;
pub const PAPER_SAMPLES: usize = 100;
pub const DEFAULT_MAX_ATTEMPTS: usize = 1000;

/// Zero-based row ranges of the training and evaluation windows
/// (timesteps 501–1500 and 1501–2500).
pub fn windows() -> (Range<usize>, Range<usize>) {
    (WASHOUT..WASHOUT + TRAIN, WASHOUT + TRAIN..TOTAL_STEPS)
}

/// Independent random streams per sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Hamiltonian = 1,
    InitialState = 2,
    Input = 3,
    TargetSystem = 4,
    Baseline = 5,
}

/// The substream of `master` reserved for `(sample, role)`.
pub fn substream(master: u64, sample: usize, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(((sample as u64) << 8) | role as u64);
    rng
}

/// Sample index of the streams shared by every sample (input sequence and
/// target systems): all learners in a comparison see the same data.
pub const SHARED: usize = (1 << 56) - 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Sa {
        n_sys: usize,
        degrees: Vec<usize>,
        encoding: Encoding,
    },
    Esn {
        m: usize,
        /// Node budgets `C`; empty means `m + 1`.
        nodes: Vec<usize>,
        spectral_points: usize,
        input_points: usize,
    },
    Volterra {
        order: usize,
        memory: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub tasks: Vec<TaskKind>,
    pub model: ModelSpec,
    pub n_samples: usize,
    pub noise: Option<NoiseConfig<f64>>,
    pub master_seed: u64,
    pub lrpo_dims: Vec<usize>,
    /// 0 uses every available core.
    pub workers: usize,
    pub ridge: f64,
    pub max_attempts: usize,
    pub convergence: EmpiricalTest,
    pub trace: bool,
}

impl ExperimentPlan {
    pub fn new(tasks: Vec<TaskKind>, model: ModelSpec, master_seed: u64) -> Self {
        Self {
            tasks,
            model,
            n_samples: DESK_SAMPLES,
            noise: None,
            master_seed,
            lrpo_dims: LRPO_DESK_DIMS.to_vec(),
            workers: 0,
            ridge: 0.0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            convergence: EmpiricalTest::default(),
            trace: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(Error::InvalidConfig("plan has no tasks".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        match &self.model {
            ModelSpec::Sa { n_sys, degrees, .. } => {
                if *n_sys == 0 || degrees.is_empty() || degrees.contains(&0) {
                    return Err(Error::InvalidConfig(
                        "SA needs n_sys >= 1 and degrees >= 1".into(),
                    ));
                }
            }
            ModelSpec::Esn {
                m,
                nodes,
                spectral_points,
                input_points,
            } => {
                if *m == 0 || *spectral_points == 0 || *input_points == 0 {
                    return Err(Error::InvalidConfig("ESN grid must be non-empty".into()));
                }
                if nodes.iter().any(|&c| c == 0 || c > m + 1) {
                    return Err(Error::InvalidConfig(format!(
                        "ESN node budgets must lie in 1..={}",
                        m + 1
                    )));
                }
            }
            ModelSpec::Volterra { order, memory } => {
                VolterraConfig::new(*order, *memory)?;
            }
        }
        if self.noise.is_some() && !matches!(self.model, ModelSpec::Sa { .. }) {
            return Err(Error::InvalidConfig(
                "noise applies to SA models only".into(),
            ));
        }
        Ok(())
    }
}

/// One aggregated table row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub model: String,
    pub n_sys: Option<usize>,
    #[serde(rename = "R")]
    pub degree: Option<usize>,
    pub n_nodes: usize,
    pub state_space: usize,
    pub nmse_mean: f64,
    pub nmse_stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

/// Readout variant evaluated on the same trajectory.
#[derive(Clone, Debug, PartialEq)]
struct Variant {
    model: String,
    n_sys: Option<usize>,
    degree: Option<usize>,
    n_nodes: usize,
    state_space: usize,
}

/// Per-timestep dump of one fitted readout.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything one sample contributes.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleOutcome {
    /// `nmse[variant][task]` on the evaluation window.
    pub nmse: Vec<Vec<f64>>,
    /// Training-window NMSE, same layout.
    pub train_nmse: Vec<Vec<f64>>,
    /// Reservoir draws needed to pass the convergence test (SA only).
    pub attempts: Option<usize>,
    pub traces: Vec<Trace>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub samples: Vec<SampleOutcome>,
}

impl ExperimentOutput {
    pub fn traces(&self) -> impl Iterator<Item = &Trace> {
        self.samples.iter().flat_map(|s| s.traces.iter())
    }
}

pub fn shared_input(master_seed: u64) -> Vec<f64> {
    random_input::<f64, _>(
        TOTAL_STEPS,
        &mut substream(master_seed, SHARED, Role::Input),
    )
    .values
}

fn model_label(plan: &ExperimentPlan) -> String {
    match &plan.model {
        ModelSpec::Sa { encoding, .. } => {
            let mut s = format!("sa-{}", encoding.name());
            if let Some(noise) = &plan.noise {
                let _ = write!(s, "+{}@{}", noise.label(), noise.gamma_over_s);
            }
            s
        }
        ModelSpec::Esn { m, .. } => format!("esn{m}"),
        ModelSpec::Volterra { order, memory } => format!("volterra{order},{memory}"),
    }
}

fn variants(plan: &ExperimentPlan) -> Vec<Variant> {
    let model = model_label(plan);
    match &plan.model {
        ModelSpec::Sa { n_sys, degrees, .. } => degrees
            .iter()
            .map(|&r| Variant {
                model: model.clone(),
                n_sys: Some(*n_sys),
                degree: Some(r),
                n_nodes: node_count(*n_sys, r),
                state_space: 1 << (2 * n_sys),
            })
            .collect(),
        ModelSpec::Esn { m, nodes, .. } => {
            let budgets = if nodes.is_empty() {
                vec![m + 1]
            } else {
                nodes.clone()
            };
            budgets
                .into_iter()
                .map(|c| Variant {
                    model: model.clone(),
                    n_sys: None,
                    degree: None,
                    n_nodes: c,
                    state_space: *m,
                })
                .collect()
        }
        ModelSpec::Volterra { order, memory } => vec![Variant {
            model,
            n_sys: None,
            degree: Some(*order),
            n_nodes: VolterraConfig {
                order: *order,
                memory: *memory,
            }
            .node_count(),
            state_space: *memory,
        }],
    }
}

/// Shared input and targets of one sample.
pub struct SampleData {
    pub input: Vec<f64>,
    pub targets: Vec<Vec<f64>>,
}

/// The shared input sequence and every task target.
pub fn sample_data(plan: &ExperimentPlan) -> Result<SampleData> {
    let input = shared_input(plan.master_seed);
    let lrpo_cfg = if plan.tasks.contains(&TaskKind::Lrpo) {
        let mut rng = substream(plan.master_seed, SHARED, Role::TargetSystem);
        Some(LrpoConfig::random(&plan.lrpo_dims, &mut rng))
    } else {
        None
    };
    let targets = plan
        .tasks
        .iter()
        .map(|t| t.generate(&input, lrpo_cfg.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleData { input, targets })
}

/// Draws the convergent reservoir used by SA `sample`.
pub fn sample_reservoir(
    plan: &ExperimentPlan,
    n_sys: usize,
    encoding: Encoding,
    sample: usize,
    input: &[f64],
) -> Result<(Reservoir<f64>, usize)> {
    let mut couplings = substream(plan.master_seed, sample, Role::Hamiltonian);
    let mut states = substream(plan.master_seed, sample, Role::InitialState);
    let drawn = sample_convergent_reservoir_split(
        n_sys,
        encoding,
        input,
        &plan.convergence,
        plan.max_attempts,
        &mut couplings,
        &mut states,
    )?;
    Ok((drawn.reservoir, drawn.attempts))
}

/// Fits on the training window of `features` and scores both windows.
struct WindowFit {
    ls: LeastSquares<f64>,
    train: Range<usize>,
    eval: Range<usize>,
}

impl WindowFit {
    fn new(features: &DMatrix<f64>) -> Self {
        let (train, eval) = windows();
        let x = features.rows(train.start, train.len()).into_owned();
        Self {
            ls: LeastSquares::new(&x, SVD_CUTOFF),
            train,
            eval,
        }
    }

    fn weights(&self, target: &[f64], ridge: f64) -> DVector<f64> {
        let y = DVector::from_column_slice(&target[self.train.clone()]);
        self.ls.solve(&y, ridge)
    }

    fn scores(
        &self,
        features: &DMatrix<f64>,
        target: &[f64],
        w: &DVector<f64>,
    ) -> Result<(f64, f64)> {
        let pred = features * w;
        let train = nmse(
            &pred.as_slice()[self.train.clone()],
            &target[self.train.clone()],
        )?;
        let eval = nmse(
            &pred.as_slice()[self.eval.clone()],
            &target[self.eval.clone()],
        )?;
        Ok((train, eval))
    }
}

/// Training-window readout weights for `target` (exposed for leakage checks).
pub fn fit_readout(features: &DMatrix<f64>, target: &[f64], ridge: f64) -> DVector<f64> {
    WindowFit::new(features).weights(target, ridge)
}

fn trace_rows(vars: &DMatrix<f64>, target: &[f64], pred: &DVector<f64>) -> Vec<Vec<f64>> {
    (0..vars.nrows())
        .map(|k| {
            let mut row = Vec::with_capacity(vars.ncols() + 3);
            row.push((k + 1) as f64);
            row.extend(vars.row(k).iter());
            row.push(target[k]);
            row.push(pred[k]);
            row
        })
        .collect()
}

fn score_features(
    plan: &ExperimentPlan,
    features: &DMatrix<f64>,
    data: &SampleData,
    trace: Option<(&DMatrix<f64>, &str, &str)>,
    traces: &mut Vec<Trace>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let fit = WindowFit::new(features);
    let mut eval = Vec::with_capacity(plan.tasks.len());
    let mut train = Vec::with_capacity(plan.tasks.len());
    for (task, target) in plan.tasks.iter().zip(&data.targets) {
        let w = fit.weights(target, plan.ridge);
        let (tr, ev) = fit.scores(features, target, &w)?;
        train.push(tr);
        eval.push(ev);
        if let Some((vars, var_prefix, label)) = trace {
            let pred = features * &w;
            let mut columns = vec!["k".to_string()];
            columns.extend((1..=vars.ncols()).map(|i| format!("{var_prefix}{i}")));
            columns.push("y_target".into());
            columns.push("y_pred".into());
            traces.push(Trace {
                name: format!("{}_{label}", task.name()),
                columns,
                rows: trace_rows(vars, target, &pred),
            });
        }
    }
    Ok((eval, train))
}

fn with_constant(states: &DMatrix<f64>) -> DMatrix<f64> {
    let mut x = DMatrix::from_element(states.nrows(), states.ncols() + 1, 1.0);
    x.columns_mut(1, states.ncols()).copy_from(states);
    x
}

fn run_sample(plan: &ExperimentPlan, data: &SampleData, sample: usize) -> Result<SampleOutcome> {
    let want_trace = plan.trace && sample == 0;
    let mut traces = Vec::new();
    let mut nmse_rows = Vec::new();
    let mut train_rows = Vec::new();
    let mut attempts = None;
    match &plan.model {
        ModelSpec::Sa {
            n_sys,
            degrees,
            encoding,
        } => {
            let (reservoir, tries) =
                sample_reservoir(plan, *n_sys, *encoding, sample, &data.input)?;
            attempts = Some(tries);
            let rho0 = DensityOperator::maximally_mixed(*n_sys);
            let z = reservoir
                .run(&data.input, &rho0, plan.noise.as_ref())?
                .z_expectations;
            for &r in degrees {
                let features = feature_matrix(&z, &FeatureMap::new(*n_sys, r)?)?;
                let label = format!("R{r}");
                let trace = want_trace.then_some((&z, "z", label.as_str()));
                let (ev, tr) = score_features(plan, &features, data, trace, &mut traces)?;
                nmse_rows.push(ev);
                train_rows.push(tr);
            }
        }
        ModelSpec::Esn {
            m,
            nodes,
            spectral_points,
            input_points,
        } => {
            let draw = EsnDraw::<f64>::random(
                *m,
                &mut substream(plan.master_seed, sample, Role::Baseline),
            );
            let budgets = if nodes.is_empty() {
                vec![m + 1]
            } else {
                nodes.clone()
            };
            let (train_w, eval_w) = windows();
            let grid: Vec<(f64, f64)> = spectral_grid(*spectral_points)
                .into_iter()
                .flat_map(|s| input_grid(*input_points).into_iter().map(move |d| (s, d)))
                .collect();
            let mut ev_sum = vec![vec![0.0; plan.tasks.len()]; budgets.len()];
            let mut tr_sum = ev_sum.clone();
            for &(s, d) in &grid {
                let esn = draw.scaled(s, d)?;
                let states = crate::baselines::esn_run(&esn, &data.input);
                let train_states = states.rows(train_w.start, train_w.len()).into_owned();
                let fitter = EsnFitter::new(&train_states);
                for (ti, target) in data.targets.iter().enumerate() {
                    let y = DVector::from_column_slice(&target[train_w.clone()]);
                    for (bi, &c) in budgets.iter().enumerate() {
                        let readout = fitter.fit(&y, c)?;
                        let pred = readout.predict(&states);
                        ev_sum[bi][ti] +=
                            nmse(&pred.as_slice()[eval_w.clone()], &target[eval_w.clone()])?;
                        tr_sum[bi][ti] +=
                            nmse(&pred.as_slice()[train_w.clone()], &target[train_w.clone()])?;
                    }
                }
            }
            let n = grid.len() as f64;
            nmse_rows = ev_sum
                .into_iter()
                .map(|v| v.into_iter().map(|x| x / n).collect())
                .collect();
            train_rows = tr_sum
                .into_iter()
                .map(|v| v.into_iter().map(|x| x / n).collect())
                .collect();
            if want_trace {
                // Full-budget readout at the middle of the grid.
                let (s, d) = grid[grid.len() / 2];
                let states = crate::baselines::esn_run(&draw.scaled(s, d)?, &data.input);
                let features = with_constant(&states);
                let u = DMatrix::from_column_slice(TOTAL_STEPS, 1, &data.input);
                score_features(plan, &features, data, Some((&u, "u", "full")), &mut traces)?;
            }
        }
        ModelSpec::Volterra { order, memory } => {
            let cfg = VolterraConfig::new(*order, *memory)?;
            let features = volterra_features(&data.input, &cfg);
            let u = DMatrix::from_column_slice(TOTAL_STEPS, 1, &data.input);
            let trace = want_trace.then_some((&u, "u", "volterra"));
            let (ev, tr) = score_features(plan, &features, data, trace, &mut traces)?;
            nmse_rows.push(ev);
            train_rows.push(tr);
        }
    }
    Ok(SampleOutcome {
        nmse: nmse_rows,
        train_nmse: train_rows,
        attempts,
        traces,
    })
}

/// Sample mean and standard error (sample stdev / √n; 0 for one sample).
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Runs every sample of `plan` and aggregates one row per (variant, task).
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentOutput> {
    plan.validate()?;
    let data = sample_data(plan)?;
    let samples: Vec<SampleOutcome> = pool(plan.workers)?.install(|| {
        (0..plan.n_samples)
            .into_par_iter()
            .map(|i| run_sample(plan, &data, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    for (vi, v) in variants(plan).into_iter().enumerate() {
        for (ti, task) in plan.tasks.iter().enumerate() {
            let values: Vec<f64> = samples.iter().map(|s| s.nmse[vi][ti]).collect();
            let (mean, stderr) = mean_stderr(&values);
            rows.push(ResultRow {
                task: task.name().to_string(),
                model: v.model.clone(),
                n_sys: v.n_sys,
                degree: v.degree,
                n_nodes: v.n_nodes,
                state_space: v.state_space,
                nmse_mean: mean,
                nmse_stderr: stderr,
                n_samples: plan.n_samples,
                seed: plan.master_seed,
            });
        }
    }
    Ok(ExperimentOutput { rows, samples })
}

/// Node-count study: one SA experiment per `(n_sys, degrees)` entry; the
/// trajectory and Hamiltonian of each sample are shared across degrees.
pub fn sweep_nodes(base: &ExperimentPlan, sizes: &[(usize, Vec<usize>)]) -> Result<Vec<ResultRow>> {
    let encoding = match &base.model {
        ModelSpec::Sa { encoding, .. } => *encoding,
        _ => Encoding::Mixed,
    };
    let mut rows = Vec::new();
    for (n, degrees) in sizes {
        let mut plan = base.clone();
        plan.model = ModelSpec::Sa {
            n_sys: *n,
            degrees: degrees.clone(),
            encoding,
        };
        rows.extend(run_experiment(&plan)?.rows);
    }
    Ok(rows)
}

/// Degrees giving the node sets used for 4, 5 and 6 system qubits.
pub fn default_sweep_sizes() -> Vec<(usize, Vec<usize>)> {
    vec![
        (4, (1..=6).collect()),
        (5, (1..=5).collect()),
        (6, (1..=4).collect()),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffdiagRow {
    /// One-based timestep.
    pub k: usize,
    pub mean_offdiag_mass: f64,
    pub n_samples: usize,
}

/// Off-diagonal mass of `ρ_k` averaged over samples, for one-based timesteps
/// `window`. Uses the plan's noise (or none) and SA model.
pub fn offdiag_report(plan: &ExperimentPlan, window: Range<usize>) -> Result<Vec<OffdiagRow>> {
    plan.validate()?;
    let (n_sys, encoding) = match &plan.model {
        ModelSpec::Sa {
            n_sys, encoding, ..
        } => (*n_sys, *encoding),
        _ => {
            return Err(Error::InvalidConfig(
                "off-diagonal report needs an SA model".into(),
            ))
        }
    };
    if window.start == 0 || window.end > TOTAL_STEPS + 1 || window.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "window must lie within 1..={TOTAL_STEPS}"
        )));
    }
    let input = shared_input(plan.master_seed);
    let per_sample: Vec<Vec<f64>> = pool(plan.workers)?.install(|| {
        (0..plan.n_samples)
            .into_par_iter()
            .map(|i| {
                let (reservoir, _) = sample_reservoir(plan, n_sys, encoding, i, &input)?;
                let rho0 = DensityOperator::maximally_mixed(n_sys);
                let steps = &input[..window.end - 1];
                let rec = reservoir.run_with_offdiag(steps, &rho0, plan.noise.as_ref())?;
                let mass = rec.offdiag_mass.expect("mass recorded");
                Ok(mass[window.start - 1..window.end - 1].to_vec())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let n = per_sample.len() as f64;
    Ok(window
        .clone()
        .enumerate()
        .map(|(i, k)| OffdiagRow {
            k,
            mean_offdiag_mass: per_sample.iter().map(|s| s[i]).sum::<f64>() / n,
            n_samples: per_sample.len(),
        })
        .collect())
}

/// One accepted reservoir of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergeRow {
    pub sample: usize,
    pub n_sys: usize,
    pub attempts: usize,
    pub max_final_spread: f64,
    /// Spectral margin when the register is small enough to certify.
    pub spectral_margin: Option<f64>,
}

/// Samples `plan.n_samples` convergent reservoirs and certifies them.
pub fn converge_study(plan: &ExperimentPlan) -> Result<Vec<ConvergeRow>> {
    let (n_sys, encoding) = match &plan.model {
        ModelSpec::Sa {
            n_sys, encoding, ..
        } => (*n_sys, *encoding),
        _ => {
            return Err(Error::InvalidConfig(
                "convergence study needs an SA model".into(),
            ))
        }
    };
    let input = shared_input(plan.master_seed);
    pool(plan.workers)?.install(|| {
        (0..plan.n_samples)
            .into_par_iter()
            .map(|i| {
                let mut couplings = substream(plan.master_seed, i, Role::Hamiltonian);
                let mut states = substream(plan.master_seed, i, Role::InitialState);
                let drawn = sample_convergent_reservoir_split(
                    n_sys,
                    encoding,
                    &input,
                    &plan.convergence,
                    plan.max_attempts,
                    &mut couplings,
                    &mut states,
                )?;
                let spectral_margin = if n_sys < SPECTRAL_MAX_QUBITS {
                    spectral_convergence_check(&drawn.reservoir, &unit_grid(11))?.contraction_margin
                } else {
                    None
                };
                Ok(ConvergeRow {
                    sample: i,
                    n_sys,
                    attempts: drawn.attempts,
                    max_final_spread: drawn.report.max_final_spread.unwrap_or(f64::NAN),
                    spectral_margin,
                })
            })
            .collect()
    })
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

/// Writes rows as CSV with shortest round-trip floats.
pub fn write_rows_csv<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "task",
        "model",
        "n_sys",
        "R",
        "n_nodes",
        "state_space",
        "nmse_mean",
        "nmse_stderr",
        "n_samples",
        "seed",
    ])?;
    for r in rows {
        w.write_record([
            r.task.clone(),
            r.model.clone(),
            opt(&r.n_sys),
            opt(&r.degree),
            r.n_nodes.to_string(),
            r.state_space.to_string(),
            r.nmse_mean.to_string(),
            r.nmse_stderr.to_string(),
            r.n_samples.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn rows_to_csv_string(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

pub fn write_rows_json<W: Write>(writer: W, rows: &[ResultRow]) -> Result<()> {
    serde_json::to_writer_pretty(writer, rows)?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(writer: W, trace: &Trace) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&trace.columns)?;
    for row in &trace.rows {
        let mut fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        // timestep index as an integer
        fields[0] = (row[0] as usize).to_string();
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per (sample, variant, task) with both window errors.
pub fn write_samples_csv<W: Write>(
    writer: W,
    plan: &ExperimentPlan,
    out: &ExperimentOutput,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "sample",
        "task",
        "n_nodes",
        "nmse",
        "train_nmse",
        "attempts",
    ])?;
    let vs = variants(plan);
    for (i, s) in out.samples.iter().enumerate() {
        for (vi, v) in vs.iter().enumerate() {
            for (ti, task) in plan.tasks.iter().enumerate() {
                w.write_record([
                    i.to_string(),
                    task.name().to_string(),
                    v.n_nodes.to_string(),
                    s.nmse[vi][ti].to_string(),
                    s.train_nmse[vi][ti].to_string(),
                    opt(&s.attempts),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_offdiag_csv<W: Write>(writer: W, rows: &[OffdiagRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "mean_offdiag_mass", "n_samples"])?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.mean_offdiag_mass.to_string(),
            r.n_samples.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_converge_csv<W: Write>(writer: W, rows: &[ConvergeRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "sample",
        "n_sys",
        "attempts",
        "max_final_spread",
        "spectral_margin",
    ])?;
    for r in rows {
        w.write_record([
            r.sample.to_string(),
            r.n_sys.to_string(),
            r.attempts.to_string(),
            r.max_final_spread.to_string(),
            opt(&r.spectral_margin),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Flat key-value experiment configuration (TOML).
///
/// ```toml
/// tasks = ["narma15", "narma20"]
/// model = "sa"            # sa | esn | volterra
/// n_sys = 4
/// degrees = [1, 6]
/// encoding = "mixed"      # mixed | pure | phase | non_orthogonal
/// esn_m = 256
/// esn_nodes = []          # empty: m + 1
/// esn_spectral_points = 3
/// esn_input_points = 3
/// volterra_order = 2
/// volterra_memory = 4
/// n_samples = 20
/// seed = 1
/// noise = "none"          # none | dephasing | decaying | gad
/// gamma = 0.01
/// lambda = 0.4
/// substeps = 50
/// lrpo_paper_dims = false
/// workers = 0
/// ridge = 0.0
/// max_attempts = 1000
/// trace = false
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub tasks: Vec<String>,
    pub model: String,
    pub n_sys: usize,
    pub degrees: Vec<usize>,
    pub encoding: String,
    pub esn_m: usize,
    pub esn_nodes: Vec<usize>,
    pub esn_spectral_points: usize,
    pub esn_input_points: usize,
    pub volterra_order: usize,
    pub volterra_memory: usize,
    pub n_samples: usize,
    pub seed: u64,
    pub noise: String,
    pub gamma: f64,
    pub lambda: f64,
    pub substeps: usize,
    pub lrpo_paper_dims: bool,
    pub workers: usize,
    pub ridge: f64,
    pub max_attempts: usize,
    pub trace: bool,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            tasks: ["lrpo", "missile", "narma15", "narma20"]
                .map(String::from)
                .to_vec(),
            model: "sa".into(),
            n_sys: 4,
            degrees: vec![1],
            encoding: "mixed".into(),
            esn_m: 256,
            esn_nodes: Vec::new(),
            esn_spectral_points: 3,
            esn_input_points: 3,
            volterra_order: 2,
            volterra_memory: 4,
            n_samples: DESK_SAMPLES,
            seed: 1,
            noise: "none".into(),
            gamma: 0.01,
            lambda: 0.4,
            substeps: DEFAULT_SUBSTEPS,
            lrpo_paper_dims: false,
            workers: 0,
            ridge: 0.0,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            trace: false,
        }
    }
}

impl PlanConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Switches to the full-size sweep: 100 samples, 10 x 10 ESN grid and
    /// full LRPO blocks.
    pub fn paper_scale(&mut self) {
        self.n_samples = PAPER_SAMPLES;
        self.esn_spectral_points = 10;
        self.esn_input_points = 10;
        self.lrpo_paper_dims = true;
    }

    pub fn noise_config(&self) -> Result<Option<NoiseConfig<f64>>> {
        if self.noise == "none" {
            return Ok(None);
        }
        let kind: NoiseKind = self.noise.parse()?;
        let cfg = NoiseConfig {
            kind,
            gamma_over_s: self.gamma,
            lambda: if kind == NoiseKind::Gad {
                self.lambda
            } else {
                1.0
            },
            substeps: self.substeps,
        };
        cfg.validate()?;
        Ok(Some(cfg))
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        Ok(match self.model.as_str() {
            "sa" => ModelSpec::Sa {
                n_sys: self.n_sys,
                degrees: self.degrees.clone(),
                encoding: self.encoding.parse()?,
            },
            "esn" => ModelSpec::Esn {
                m: self.esn_m,
                nodes: self.esn_nodes.clone(),
                spectral_points: self.esn_spectral_points,
                input_points: self.esn_input_points,
            },
            "volterra" => ModelSpec::Volterra {
                order: self.volterra_order,
                memory: self.volterra_memory,
            },
            other => return Err(Error::InvalidConfig(format!("unknown model '{other}'"))),
        })
    }

    pub fn plan(&self) -> Result<ExperimentPlan> {
        let tasks = self
            .tasks
            .iter()
            .map(|t| t.parse())
            .collect::<Result<Vec<TaskKind>>>()?;
        let mut plan = ExperimentPlan::new(tasks, self.model_spec()?, self.seed);
        plan.n_samples = self.n_samples;
        plan.noise = self.noise_config()?;
        plan.lrpo_dims = if self.lrpo_paper_dims {
            LRPO_PAPER_DIMS.to_vec()
        } else {
            LRPO_DESK_DIMS.to_vec()
        };
        plan.workers = self.workers;
        plan.ridge = self.ridge;
        plan.max_attempts = self.max_attempts;
        plan.trace = self.trace;
        plan.validate()?;
        Ok(plan)
    }
}
