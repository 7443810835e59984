//! Experiment orchestration behind the `bfn-lab` binary.

pub mod config;
pub mod output;
pub mod plot;
pub mod verify;

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{BfnError, Result};
use crate::forward::OneHotBatch;
use crate::metrics::{convergence_slope, mean_endpoint_error, median, sliced_wasserstein2, tv_enumerated};
use crate::predictors::{
    encode_weights, heldout_loss, load_weights, mlp_train, LossSpec, Modality, OptimizerSpec, Predictor, ToyMLP,
    TrainingSet, WeightsSidecar,
};
use crate::rng::derive_seed;
use crate::samplers_cont::{init_mu, run_continuous, ContinuousSolver, DataStats, InitMode, SolverConfig};
use crate::samplers_disc::{init_z, run_discrete, DiscreteSolver, DiscreteSolverConfig, Readout, ReadoutValue};
use crate::schedules::{make_grid, GridPolicy};
use crate::tensor::Matrix;

pub use config::{ExperimentConfig, ModalityKind};
pub use output::{fmt_f64, runs_csv, OutputDir, RunRecord, RUNS_HEADER};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Train,
    Sample,
    Converge,
    AblateCs,
}

impl Command {
    pub const ALL: [Command; 5] = [Command::Verify, Command::Train, Command::Sample, Command::Converge, Command::AblateCs];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Train => "train",
            Command::Sample => "sample",
            Command::Converge => "converge",
            Command::AblateCs => "ablate-cs",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = BfnError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| BfnError::Argument(format!("unknown command '{s}'")))
    }
}

/// What a command produced. `passed` is false only for a failing `verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutcome {
    pub passed: bool,
    pub report: String,
    pub files: Vec<PathBuf>,
}

/// Files accumulated in memory and flushed once every cell has finished.
struct Pending {
    files: Vec<(String, Vec<u8>)>,
}

impl Pending {
    fn new(cmd: Command, cfg: &ExperimentConfig) -> Self {
        Self { files: vec![(format!("{}.config.toml", cmd.name()), cfg.source.clone().into_bytes())] }
    }

    fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    fn flush(self, out: &OutputDir) -> Result<Vec<PathBuf>> {
        let names: Vec<String> = self.files.iter().map(|(n, _)| n.clone()).collect();
        out.ensure_fresh(&names)?;
        self.files.into_iter().map(|(n, b)| out.write(&n, &b)).collect()
    }
}

/// Output directory from `--out`, else the config's `output_dir`, else `runs/<id>`.
pub fn output_root(cfg: &ExperimentConfig, cli_out: Option<&Path>) -> PathBuf {
    match (cli_out, &cfg.experiment.output_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => cfg.resolve(p),
        (None, None) => PathBuf::from("runs").join(&cfg.experiment.id),
    }
}

pub fn run_command(cmd: Command, cfg: &ExperimentConfig, out_root: &Path) -> Result<CommandOutcome> {
    let out = OutputDir::create(out_root)?;
    let mut pending = Pending::new(cmd, cfg);
    let (passed, report) = match cmd {
        Command::Verify => cmd_verify(cfg, &mut pending)?,
        Command::Train => cmd_train(cfg, &mut pending)?,
        Command::Sample => cmd_sample(cfg, &mut pending)?,
        Command::Converge => cmd_converge(cfg, &mut pending)?,
        Command::AblateCs => cmd_ablate_cs(cfg, &mut pending)?,
    };
    let files = pending.flush(&out)?;
    Ok(CommandOutcome { passed, report, files })
}

fn elapsed_ms(cfg: &ExperimentConfig, start: Instant) -> u64 {
    if cfg.experiment.timing {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn record(cfg: &ExperimentConfig, solver: &str, nfe: usize, eta: f64, seed: u64, metric: &str, value: f64, ms: u64) -> RunRecord {
    RunRecord {
        experiment: cfg.experiment.id.clone(),
        solver: solver.to_string(),
        nfe,
        eta,
        seed,
        metric: metric.to_string(),
        value,
        ms,
    }
}

fn cmd_verify(cfg: &ExperimentConfig, pending: &mut Pending) -> Result<(bool, String)> {
    let classes = match &cfg.data {
        Some(config::DataSection::Categorical { classes, .. }) => *classes,
        _ => 3,
    };
    let settings = verify::VerifySettings {
        sigma1: cfg.schedule.sigma1,
        beta1: cfg.schedule.beta1,
        classes,
        seed: cfg.experiment.seeds[0],
        mutation: cfg.verify.mutation,
    };
    let results = verify::run_suite(&settings);
    let mut csv = String::from("check,passed,statistic,tolerance\n");
    let mut table = String::new();
    let width = results.iter().map(|r| r.name.len()).max().unwrap_or(0);
    for r in &results {
        let _ = writeln!(csv, "{},{},{},{}", r.name, r.passed, fmt_f64(r.statistic), fmt_f64(r.tolerance));
        let _ = writeln!(table, "{:<width$}  {}  {}", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
    }
    pending.add("verify.csv", csv);
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.name).collect();
    match failed.first() {
        None => table.push_str("all checks passed\n"),
        Some(first) => {
            let _ = writeln!(table, "first failing check: {first} ({} failed)", failed.len());
        }
    }
    Ok((failed.is_empty(), table))
}

fn training_set(cfg: &ExperimentConfig, n: usize, seed: u64) -> Result<TrainingSet> {
    Ok(match cfg.experiment.modality {
        ModalityKind::Continuous => TrainingSet::Continuous(cfg.mixture()?.sample(n, seed)),
        ModalityKind::Discrete => TrainingSet::Discrete(cfg.categorical()?.sample(n, seed)),
    })
}

fn cmd_train(cfg: &ExperimentConfig, pending: &mut Pending) -> Result<(bool, String)> {
    let train = cfg.train.clone().unwrap_or_default();
    let (modality, loss) = match cfg.experiment.modality {
        ModalityKind::Continuous => {
            let dim = cfg.mixture()?.dim();
            (Modality::Continuous { dim }, LossSpec::ContinuousBfn(cfg.continuous_schedule()?))
        }
        ModalityKind::Discrete => {
            let data = cfg.categorical()?;
            (Modality::Discrete { dim: data.dim(), classes: data.classes() }, LossSpec::DiscreteBfn(cfg.discrete_schedule()?))
        }
    };
    let resume = match &train.resume {
        Some(p) => Some(load_weights(&cfg.resolve(p))?.0),
        None => None,
    };
    let opt = OptimizerSpec { kind: train.optimizer, lr: train.lr, batch_size: train.batch_size };

    struct Cell {
        seed: u64,
        model: ToyMLP,
        losses: Vec<f64>,
        initial: f64,
        fin: f64,
        audit: Option<f64>,
        ms: u64,
    }
    let cells = cfg
        .experiment
        .seeds
        .par_iter()
        .map(|&seed| -> Result<Cell> {
            let start = Instant::now();
            let set = training_set(cfg, train.n_train, derive_seed(seed, 1))?;
            let heldout = training_set(cfg, train.n_heldout, derive_seed(seed, 2))?;
            let model = match &resume {
                Some(m) => m.clone(),
                None => ToyMLP::new(modality, &train.hidden, seed)?,
            };
            if model.modality() != modality {
                return Err(BfnError::Config("resume weights are for a different data shape".into()));
            }
            let audit = if train.gradient_check {
                Some(crate::predictors::gradient_check(&model, &set, &loss, 20, seed)?.max_rel_error)
            } else {
                None
            };
            let eval_seed = derive_seed(seed, 3);
            let initial = heldout_loss(&model, &heldout, &loss, eval_seed)?;
            let (model, hist) = mlp_train(&model, &set, &loss, &opt, train.epochs, seed)?;
            let fin = heldout_loss(&model, &heldout, &loss, eval_seed)?;
            Ok(Cell { seed, model, losses: hist.epoch_losses, initial, fin, audit, ms: elapsed_ms(cfg, start) })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut curve = String::from("seed,epoch,loss\n");
    let mut report = String::new();
    let eta = cfg.schedule.eta;
    for c in &cells {
        for (e, l) in c.losses.iter().enumerate() {
            let _ = writeln!(curve, "{},{},{}", c.seed, e + 1, fmt_f64(*l));
        }
        records.push(record(cfg, "mlp", 0, eta, c.seed, "initial_heldout_loss", c.initial, c.ms));
        records.push(record(cfg, "mlp", 0, eta, c.seed, "final_heldout_loss", c.fin, c.ms));
        if let Some(a) = c.audit {
            records.push(record(cfg, "mlp", 0, eta, c.seed, "gradient_max_rel_error", a, c.ms));
            let _ = writeln!(report, "seed {}: gradient audit max rel error {a:.3e}", c.seed);
        }
        let _ = writeln!(report, "seed {}: held-out loss {:.6} -> {:.6}", c.seed, c.initial, c.fin);

        let mut sidecar = WeightsSidecar::for_model(&c.model);
        sidecar.sigma1 = (cfg.experiment.modality == ModalityKind::Continuous).then_some(cfg.schedule.sigma1);
        sidecar.beta1 = (cfg.experiment.modality == ModalityKind::Discrete).then_some(cfg.schedule.beta1);
        sidecar.optimizer = Some(opt);
        sidecar.epochs = train.epochs;
        sidecar.seed = c.seed;
        let name = format!("model_seed{}.bfnw", c.seed);
        let json = serde_json::to_string_pretty(&sidecar).map_err(|e| BfnError::Format(e.to_string()))?;
        pending.add(name.clone(), encode_weights(&c.model));
        pending.add(format!("{name}.json"), json + "\n");
    }
    pending.add("loss_curve.csv", curve);
    pending.add("runs.csv", runs_csv(&records));
    Ok((true, report))
}

enum SolverKind {
    Continuous(ContinuousSolver),
    Discrete(DiscreteSolver),
}

fn parse_solvers(cfg: &ExperimentConfig, names: &[String]) -> Result<Vec<SolverKind>> {
    names
        .iter()
        .map(|n| match cfg.experiment.modality {
            ModalityKind::Continuous => n.parse().map(SolverKind::Continuous),
            ModalityKind::Discrete => n.parse().map(SolverKind::Discrete),
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| BfnError::Config(e.to_string()))
}

fn matrix_csv(m: &Matrix) -> String {
    let mut s = String::new();
    for row in m.iter_rows() {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

fn sequences_txt(b: &OneHotBatch) -> String {
    let mut s = String::new();
    for i in 0..b.n() {
        let cells: Vec<String> = b.sequence(i).iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(" "));
        s.push('\n');
    }
    s
}

fn data_stats(cfg: &ExperimentConfig) -> Option<DataStats> {
    cfg.mixture().ok().map(|m| DataStats { mean: m.mean(), trace_cov: m.trace_cov() })
}

struct SampleCell {
    solver: &'static str,
    nfe: usize,
    seed: u64,
    file: (String, String),
    metrics: Vec<(&'static str, f64)>,
    ms: u64,
}

fn sample_cell(
    cfg: &ExperimentConfig,
    sampling: &config::SamplingSection,
    pred: &dyn Predictor,
    kind: &SolverKind,
    nfe: usize,
    seed: u64,
) -> Result<SampleCell> {
    let start = Instant::now();
    let eta = cfg.schedule.eta;
    let n = sampling.n_samples;
    let policy = cfg.grid_policy()?;
    match kind {
        SolverKind::Continuous(k) => {
            let sched = cfg.continuous_schedule()?;
            let dim = cfg.data_dim()?;
            let grid = make_grid(eta, k.steps_for_nfe(nfe).max(k.min_steps()), policy)?;
            let stats = data_stats(cfg);
            let init = init_mu(&sched, grid.steps()[0], dim, stats.as_ref(), sampling.init)?.sample(n, seed);
            let file = (format!("samples_{}_nfe{nfe}_seed{seed}.csv", k.name()), String::new());
            if n == 0 {
                return Ok(SampleCell { solver: k.name(), nfe, seed, file, metrics: vec![], ms: elapsed_ms(cfg, start) });
            }
            let mut config = SolverConfig::new(*k, grid, seed);
            config.final_step = sampling.final_step;
            let run = run_continuous(&config, pred, &sched, &init)?;
            let mut metrics = vec![("nfe_used", run.nfe as f64)];
            if let Ok(data) = cfg.mixture() {
                let reference = data.sample(n, derive_seed(seed, 7));
                let sw = sliced_wasserstein2(&run.samples, &reference, sampling.projections, seed)?;
                metrics.push(("sliced_w2", sw));
            }
            let file = (file.0, matrix_csv(&run.samples));
            Ok(SampleCell { solver: k.name(), nfe, seed, file, metrics, ms: elapsed_ms(cfg, start) })
        }
        SolverKind::Discrete(k) => {
            let sched = cfg.discrete_schedule()?;
            let dim = cfg.data_dim()?;
            let grid = make_grid(eta, k.steps_for_nfe(nfe), policy)?;
            let ext = if sampling.readout == Readout::SoftmaxTheta { "csv" } else { "txt" };
            let name = format!("samples_{}_nfe{nfe}_seed{seed}.{ext}", k.name());
            if n == 0 {
                return Ok(SampleCell { solver: k.name(), nfe, seed, file: (name, String::new()), metrics: vec![], ms: elapsed_ms(cfg, start) });
            }
            let init = init_z(&sched, grid.steps()[0], n, dim, seed)?;
            let mut config = DiscreteSolverConfig::new(*k, grid, seed);
            config.readout = sampling.readout;
            let run = run_discrete(&config, pred, &sched, &init)?;
            let mut metrics = vec![("nfe_used", run.nfe as f64)];
            let body = match &run.output {
                ReadoutValue::Sequences(seqs) => {
                    metrics.push(("tv", tv_enumerated(seqs, &cfg.categorical()?)?));
                    sequences_txt(seqs)
                }
                ReadoutValue::Theta(theta) => matrix_csv(theta),
            };
            Ok(SampleCell { solver: k.name(), nfe, seed, file: (name, body), metrics, ms: elapsed_ms(cfg, start) })
        }
    }
}

fn cmd_sample(cfg: &ExperimentConfig, pending: &mut Pending) -> Result<(bool, String)> {
    let sampling = cfg.sampling.clone().ok_or_else(|| BfnError::Config("sample needs a [sampling] section".into()))?;
    let solvers = parse_solvers(cfg, &sampling.solvers)?;
    let pred = cfg.predictor()?;
    let mut jobs = Vec::new();
    for (si, _) in solvers.iter().enumerate() {
        for &nfe in &sampling.nfe {
            for &seed in &cfg.experiment.seeds {
                jobs.push((si, nfe, seed));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(si, nfe, seed)| sample_cell(cfg, &sampling, pred.as_ref(), &solvers[si], nfe, seed))
        .collect::<Result<Vec<_>>>()?;

    let eta = cfg.schedule.eta;
    let mut records = Vec::new();
    for c in &cells {
        pending.add(c.file.0.clone(), c.file.1.clone());
        for (m, v) in &c.metrics {
            records.push(record(cfg, c.solver, c.nfe, eta, c.seed, m, *v, c.ms));
        }
    }
    // medians over seeds, one line per (solver, nfe, metric)
    let mut summary = String::from("solver,nfe,metric,median,n_seeds\n");
    let mut report = String::new();
    let mut keys: Vec<(&str, usize, &str)> = records.iter().map(|r| (r.solver.as_str(), r.nfe, r.metric.as_str())).collect();
    keys.sort();
    keys.dedup();
    for (solver, nfe, metric) in keys {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.solver == solver && r.nfe == nfe && r.metric == metric)
            .map(|r| r.value)
            .collect();
        let med = median(&vals)?;
        let _ = writeln!(summary, "{solver},{nfe},{metric},{},{}", fmt_f64(med), vals.len());
        if metric != "nfe_used" {
            let _ = writeln!(report, "{solver:<20} nfe {nfe:>4}  median {metric} = {med:.6}");
        }
    }
    pending.add("runs.csv", runs_csv(&records));
    pending.add("summary.csv", summary);
    Ok((true, report))
}

fn cmd_converge(cfg: &ExperimentConfig, pending: &mut Pending) -> Result<(bool, String)> {
    let conv = cfg.converge.clone().ok_or_else(|| BfnError::Config("converge needs a [converge] section".into()))?;
    let solvers = parse_solvers(cfg, &conv.solvers)?;
    let stochastic = solvers.iter().find(|s| match s {
        SolverKind::Continuous(k) => k.is_stochastic(),
        SolverKind::Discrete(k) => k.is_stochastic(),
    });
    if stochastic.is_some() {
        return Err(BfnError::Config("converge measures deterministic solvers only".into()));
    }
    let reference_kind = match &conv.reference_solver {
        Some(name) => parse_solvers(cfg, std::slice::from_ref(name))?.remove(0),
        None => match cfg.experiment.modality {
            ModalityKind::Continuous => SolverKind::Continuous(ContinuousSolver::BfnSolverpp2),
            ModalityKind::Discrete => SolverKind::Discrete(DiscreteSolver::OdeSolver2),
        },
    };
    let pred = cfg.predictor()?;
    let policy = cfg.grid_policy()?;
    let dim = cfg.data_dim()?;
    let etas = if conv.etas.is_empty() { vec![cfg.schedule.eta] } else { conv.etas.clone() };
    let n = conv.n_chains;

    // endpoint of a deterministic run, compared in the state space
    let endpoint = |kind: &SolverKind, steps: usize, eta: f64, seed: u64| -> Result<Matrix> {
        match kind {
            SolverKind::Continuous(k) => {
                let sched = cfg.continuous_schedule()?;
                let grid = make_grid(eta, steps.max(k.min_steps()), policy)?;
                let init = init_mu(&sched, grid.steps()[0], dim, None, InitMode::ZeroMean)?.sample(n, seed);
                Ok(run_continuous(&SolverConfig::new(*k, grid, seed), pred.as_ref(), &sched, &init)?.samples)
            }
            SolverKind::Discrete(k) => {
                let sched = cfg.discrete_schedule()?;
                let grid = make_grid(eta, steps, policy)?;
                let init = init_z(&sched, grid.steps()[0], n, dim, seed)?;
                Ok(run_discrete(&DiscreteSolverConfig::new(*k, grid, seed), pred.as_ref(), &sched, &init)?.final_z.values)
            }
        }
    };
    let steps_for = |kind: &SolverKind, nfe: usize| match kind {
        SolverKind::Continuous(k) => k.steps_for_nfe(nfe),
        SolverKind::Discrete(k) => k.steps_for_nfe(nfe),
    };
    let name_of = |kind: &SolverKind| match kind {
        SolverKind::Continuous(k) => k.name(),
        SolverKind::Discrete(k) => k.name(),
    };

    let mut ref_jobs = Vec::new();
    for (ei, _) in etas.iter().enumerate() {
        for &seed in &cfg.experiment.seeds {
            ref_jobs.push((ei, seed));
        }
    }
    let references = ref_jobs
        .par_iter()
        .map(|&(ei, seed)| {
            endpoint(&reference_kind, conv.reference_nfe, etas[ei], seed)
                .map_err(|e| BfnError::Config(format!("reference run failed (eta {}, seed {seed}): {e}", etas[ei])))
        })
        .collect::<Result<Vec<_>>>()?;
    let reference_of = |ei: usize, seed: u64| {
        let si = cfg.experiment.seeds.iter().position(|&s| s == seed).unwrap();
        &references[ei * cfg.experiment.seeds.len() + si]
    };

    let mut jobs = Vec::new();
    for (ei, _) in etas.iter().enumerate() {
        for (ki, _) in solvers.iter().enumerate() {
            for &nfe in &conv.nfe {
                for &seed in &cfg.experiment.seeds {
                    jobs.push((ei, ki, nfe, seed));
                }
            }
        }
    }
    let errors = jobs
        .par_iter()
        .map(|&(ei, ki, nfe, seed)| -> Result<(f64, u64)> {
            let start = Instant::now();
            let end = endpoint(&solvers[ki], steps_for(&solvers[ki], nfe), etas[ei], seed)?;
            let err = mean_endpoint_error(&end, reference_of(ei, seed))?;
            Ok((err, elapsed_ms(cfg, start)))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    for (&(ei, ki, nfe, seed), &(err, ms)) in jobs.iter().zip(&errors) {
        records.push(record(cfg, name_of(&solvers[ki]), nfe, etas[ei], seed, "endpoint_error", err, ms));
    }

    let mut slopes = String::from("solver,eta,seed,slope,intercept,r_squared\n");
    let mut report = String::new();
    let mut series = Vec::new();
    for (ei, &eta) in etas.iter().enumerate() {
        for (ki, kind) in solvers.iter().enumerate() {
            for &seed in &cfg.experiment.seeds {
                let pts: Vec<(usize, f64)> = jobs
                    .iter()
                    .zip(&errors)
                    .filter(|((e, k, _, s), _)| *e == ei && *k == ki && *s == seed)
                    .map(|((_, _, nfe, _), (err, _))| (*nfe, *err))
                    .collect();
                if pts.len() >= 3 {
                    let fit = convergence_slope(&pts)?;
                    let _ = writeln!(
                        slopes,
                        "{},{},{seed},{},{},{}",
                        name_of(kind),
                        fmt_f64(eta),
                        fmt_f64(fit.slope),
                        fmt_f64(fit.intercept),
                        fmt_f64(fit.r_squared)
                    );
                    let _ = writeln!(
                        report,
                        "{:<20} eta {eta:<8} seed {seed:<4} slope {:.3} (r² {:.4})",
                        name_of(kind),
                        fit.slope,
                        fit.r_squared
                    );
                }
                if seed == cfg.experiment.seeds[0] {
                    let label = if etas.len() > 1 { format!("{} eta={eta}", name_of(kind)) } else { name_of(kind).to_string() };
                    series.push(plot::Series { label, points: pts.iter().map(|(x, y)| (*x as f64, *y)).collect() });
                }
            }
        }
    }
    let title = format!("{}: endpoint error vs NFE", cfg.experiment.id);
    pending.add("runs.csv", runs_csv(&records));
    pending.add("slopes.csv", slopes);
    pending.add("convergence.svg", plot::loglog_svg(&title, "NFE", "mean endpoint error", &series));
    Ok((true, report))
}

/// Mean over replicas of `Σ ‖z_cs − z_sde‖₁` along paired trajectories.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationRow {
    pub step_size: f64,
    pub intervals: usize,
    pub seed: u64,
    /// Summed over the times shared by every grid in the sweep.
    pub mean_l1: f64,
    /// Summed over every time of this grid.
    pub mean_l1_all: f64,
}

/// Paired-noise ablation of the categorical step. Grid `i` has
/// `round(1/step)` uniform intervals; the shared times are those of the
/// coarsest grid.
pub fn ablate_cs(
    pred: &dyn Predictor,
    sched: &crate::schedules::DiscreteSchedule,
    dim: usize,
    eta: f64,
    step_sizes: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<AblationRow>> {
    if step_sizes.iter().any(|h| !(*h > 0.0 && *h <= 1.0)) {
        return Err(BfnError::Config("step sizes must lie in (0, 1]".into()));
    }
    let ms: Vec<usize> = step_sizes.iter().map(|h| ((1.0 / h).round() as usize).max(1)).collect();
    let coarse = *ms.iter().min().unwrap_or(&1);
    step_sizes
        .par_iter()
        .zip(&ms)
        .map(|(&h, &m)| {
            let grid = make_grid(eta, m, GridPolicy::UniformT)?;
            let init = init_z(sched, grid.steps()[0], replicas, dim, seed)?;
            let traj = |kind| -> Result<Vec<Matrix>> {
                let mut c = DiscreteSolverConfig::new(kind, grid.clone(), seed);
                c.record_trajectory = true;
                Ok(run_discrete(&c, pred, sched, &init)?.trajectory)
            };
            let a = traj(DiscreteSolver::BfnAncestralCs)?;
            let b = traj(DiscreteSolver::SdeSolver1)?;
            let mut shared = 0.0;
            let mut all = 0.0;
            for (i, (za, zb)) in a.iter().zip(&b).enumerate() {
                let l1: f64 = za.as_slice().iter().zip(zb.as_slice()).map(|(x, y)| (x - y).abs()).sum();
                all += l1;
                if (i * coarse) % m == 0 {
                    shared += l1;
                }
            }
            let r = replicas.max(1) as f64;
            Ok(AblationRow { step_size: h, intervals: m, seed, mean_l1: shared / r, mean_l1_all: all / r })
        })
        .collect()
}

fn cmd_ablate_cs(cfg: &ExperimentConfig, pending: &mut Pending) -> Result<(bool, String)> {
    if cfg.experiment.modality != ModalityKind::Discrete {
        return Err(BfnError::Config("ablate-cs needs discrete modality".into()));
    }
    let ab = cfg.ablate.clone().unwrap_or_default();
    if ab.step_sizes.is_empty() {
        return Err(BfnError::Config("ablate.step_sizes is empty".into()));
    }
    let pred = cfg.predictor()?;
    let sched = cfg.discrete_schedule()?;
    let dim = cfg.data_dim()?;
    let eta = cfg.schedule.eta;
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &seed in &cfg.experiment.seeds {
        let start = Instant::now();
        let r = ablate_cs(pred.as_ref(), &sched, dim, eta, &ab.step_sizes, ab.replicas, seed)?;
        let ms = elapsed_ms(cfg, start);
        for row in &r {
            records.push(record(cfg, "bfn-ancestral-cs-vs-sde-solver1", row.intervals, eta, seed, "mean_l1", row.mean_l1, ms));
            records.push(record(cfg, "bfn-ancestral-cs-vs-sde-solver1", row.intervals, eta, seed, "mean_l1_all", row.mean_l1_all, ms));
        }
        rows.extend(r);
    }
    let mut csv = String::from("step_size,intervals,seed,mean_l1,mean_l1_all\n");
    let mut report = String::new();
    for r in &rows {
        let _ = writeln!(csv, "{},{},{},{},{}", fmt_f64(r.step_size), r.intervals, r.seed, fmt_f64(r.mean_l1), fmt_f64(r.mean_l1_all));
        let _ = writeln!(report, "step {:<6} seed {:<4} mean L1 {:.4} (all points {:.4})", r.step_size, r.seed, r.mean_l1, r.mean_l1_all);
    }
    pending.add("ablation.csv", csv);
    pending.add("runs.csv", runs_csv(&records));
    Ok((true, report))
}
