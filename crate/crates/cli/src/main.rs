use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qrc_core::harness::{
    self, default_sweep_sizes, ExperimentPlan, ModelSpec, PlanConfig, ResultRow, TOTAL_STEPS,
};
use qrc_core::tasks::{write_task_csv, TaskKind};

#[derive(Parser)]
#[command(
    name = "qrc",
    version,
    about = "Quantum reservoir computing benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (CSV); stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write rows as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// 100 samples, full ESN grid and full-size LRPO blocks.
    #[arg(long)]
    paper_scale: bool,
    /// Directory for per-timestep dumps of the first sample.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Comma-separated task names.
    #[arg(long, value_delimiter = ',')]
    tasks: Option<Vec<String>>,
    /// Per-sample NMSE CSV.
    #[arg(long)]
    samples_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample convergent reservoirs and report acceptance statistics.
    Converge {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_sys: Option<usize>,
        #[arg(long)]
        encoding: Option<String>,
    },
    /// Run one SA experiment.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_sys: Option<usize>,
        /// Comma-separated readout degrees.
        #[arg(long, value_delimiter = ',')]
        degrees: Option<Vec<usize>>,
        #[arg(long)]
        encoding: Option<String>,
    },
    /// Node-count sweep over system sizes.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Entries `n:R1,R2,...` separated by ';' (default 4:1..6;5:1..5;6:1..4).
        #[arg(long)]
        sizes: Option<String>,
    },
    /// Decoherence study: NMSE rows plus the off-diagonal mass window.
    Noise {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dephasing")]
        kind: String,
        /// Comma-separated rates γ/s.
        #[arg(long, value_delimiter = ',', default_value = "0.01")]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 0.4)]
        lambda: f64,
        #[arg(long)]
        n_sys: Option<usize>,
        /// First and last one-based timestep of the coherence window.
        #[arg(long, num_args = 2, default_values_t = [1501, 1550])]
        window: Vec<usize>,
        /// Off-diagonal mass CSV (skipped when omitted).
        #[arg(long)]
        offdiag_out: Option<PathBuf>,
    },
    /// Classical baselines.
    Baseline {
        #[arg(value_enum)]
        model: BaselineKind,
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        m: Option<usize>,
        /// Comma-separated node budgets (ESN).
        #[arg(long, value_delimiter = ',')]
        nodes: Option<Vec<usize>>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long)]
        memory: Option<usize>,
    },
    /// Write input/target sequences, one CSV per task.
    Tasks {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "tasks")]
        out_dir: PathBuf,
        #[arg(long)]
        paper_scale: bool,
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Esn,
    Volterra,
}

fn load_config(common: &Common) -> Result<PlanConfig> {
    let mut cfg = match &common.config {
        Some(p) => PlanConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => PlanConfig::default(),
    };
    if common.paper_scale {
        cfg.paper_scale();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(n) = common.samples {
        cfg.n_samples = n;
    }
    if let Some(t) = &common.tasks {
        cfg.tasks = t.clone();
    }
    cfg.trace = common.trace.is_some();
    Ok(cfg)
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit_rows(common: &Common, rows: &[ResultRow]) -> Result<()> {
    harness::write_rows_csv(output(&common.out)?, rows)?;
    if let Some(p) = &common.json {
        harness::write_rows_json(BufWriter::new(File::create(p)?), rows)?;
    }
    Ok(())
}

fn run_plan(common: &Common, plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    let out = harness::run_experiment(plan)?;
    if let Some(dir) = &common.trace {
        fs::create_dir_all(dir)?;
        for t in out.traces() {
            let path = dir.join(format!("trace_{}.csv", t.name));
            harness::write_trace_csv(BufWriter::new(File::create(&path)?), t)?;
        }
    }
    if let Some(p) = &common.samples_out {
        harness::write_samples_csv(BufWriter::new(File::create(p)?), plan, &out)?;
    }
    if let ModelSpec::Sa { n_sys, .. } = plan.model {
        let attempts: Vec<usize> = out.samples.iter().filter_map(|s| s.attempts).collect();
        let total: usize = attempts.iter().sum();
        eprintln!(
            "n_sys={n_sys}: accepted {} reservoirs in {total} draws",
            attempts.len()
        );
    }
    Ok(out.rows)
}

fn parse_sizes(text: &str) -> Result<Vec<(usize, Vec<usize>)>> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|entry| {
            let (n, degrees) = entry
                .split_once(':')
                .with_context(|| format!("size entry '{entry}' is not n:R1,R2"))?;
            let degrees = degrees
                .split(',')
                .map(|d| d.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()?;
            Ok((n.trim().parse()?, degrees))
        })
        .collect()
}

fn write_tasks(
    seed: u64,
    out_dir: &Path,
    paper_scale: bool,
    tasks: Option<Vec<String>>,
) -> Result<()> {
    let mut cfg = PlanConfig {
        seed,
        ..PlanConfig::default()
    };
    if paper_scale {
        cfg.paper_scale();
    }
    cfg.tasks = tasks.unwrap_or_else(|| {
        TaskKind::BENCHMARKS
            .iter()
            .map(|t| t.name().to_string())
            .collect()
    });
    let plan = cfg.plan()?;
    let data = harness::sample_data(&plan)?;
    fs::create_dir_all(out_dir)?;
    for (task, y) in plan.tasks.iter().zip(&data.targets) {
        let path = out_dir.join(format!("{}.csv", task.name()));
        write_task_csv(BufWriter::new(File::create(&path)?), &data.input, y)?;
        eprintln!("wrote {} ({TOTAL_STEPS} steps)", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Converge {
            common,
            n_sys,
            encoding,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.model = "sa".into();
            if let Some(n) = n_sys {
                cfg.n_sys = n;
            }
            if let Some(e) = encoding {
                cfg.encoding = e;
            }
            let rows = harness::converge_study(&cfg.plan()?)?;
            harness::write_converge_csv(output(&common.out)?, &rows)?;
        }
        Command::Run {
            common,
            n_sys,
            degrees,
            encoding,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.model = "sa".into();
            if let Some(n) = n_sys {
                cfg.n_sys = n;
            }
            if let Some(d) = degrees {
                cfg.degrees = d;
            }
            if let Some(e) = encoding {
                cfg.encoding = e;
            }
            let rows = run_plan(&common, &cfg.plan()?)?;
            emit_rows(&common, &rows)?;
        }
        Command::Sweep { common, sizes } => {
            let mut cfg = load_config(&common)?;
            cfg.model = "sa".into();
            let sizes = match sizes {
                Some(s) => parse_sizes(&s)?,
                None => default_sweep_sizes(),
            };
            let rows = harness::sweep_nodes(&cfg.plan()?, &sizes)?;
            emit_rows(&common, &rows)?;
        }
        Command::Noise {
            common,
            kind,
            gamma,
            lambda,
            n_sys,
            window,
            offdiag_out,
        } => {
            let mut cfg = load_config(&common)?;
            cfg.model = "sa".into();
            if let Some(n) = n_sys {
                cfg.n_sys = n;
            }
            cfg.noise = kind;
            cfg.lambda = lambda;
            let (first, last) = (window[0], window[1]);
            if last < first {
                bail!("window end {last} precedes start {first}");
            }
            let mut rows = Vec::new();
            let mut offdiag = Vec::new();
            for g in gamma {
                cfg.gamma = g;
                let plan = cfg.plan()?;
                rows.extend(run_plan(&common, &plan)?);
                if offdiag_out.is_some() {
                    offdiag.push((g, harness::offdiag_report(&plan, first..last + 1)?));
                }
            }
            emit_rows(&common, &rows)?;
            if let Some(p) = offdiag_out {
                let mut w = BufWriter::new(File::create(&p)?);
                writeln!(w, "gamma,k,mean_offdiag_mass,n_samples")?;
                for (g, rs) in offdiag {
                    for r in rs {
                        writeln!(w, "{g},{},{},{}", r.k, r.mean_offdiag_mass, r.n_samples)?;
                    }
                }
            }
        }
        Command::Baseline {
            model,
            common,
            m,
            nodes,
            order,
            memory,
        } => {
            let mut cfg = load_config(&common)?;
            match model {
                BaselineKind::Esn => {
                    cfg.model = "esn".into();
                    if let Some(m) = m {
                        cfg.esn_m = m;
                    }
                    if let Some(n) = nodes {
                        cfg.esn_nodes = n;
                    }
                }
                BaselineKind::Volterra => {
                    cfg.model = "volterra".into();
                    if let Some(o) = order {
                        cfg.volterra_order = o;
                    }
                    if let Some(p) = memory {
                        cfg.volterra_memory = p;
                    }
                }
            }
            let rows = run_plan(&common, &cfg.plan()?)?;
            emit_rows(&common, &rows)?;
        }
        Command::Tasks {
            seed,
            out_dir,
            paper_scale,
            tasks,
        } => write_tasks(seed, &out_dir, paper_scale, tasks)?,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_parse() {
        assert_eq!(
            parse_sizes("4:1,2;6:3").unwrap(),
            vec![(4, vec![1, 2]), (6, vec![3])]
        );
        assert!(parse_sizes("4-1").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
