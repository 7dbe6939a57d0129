//! Running one configured experiment: instance assembly, the accelerated run,
//! the optional plain baseline, traces, summaries and certificates.

use crate::config::{
    BudgetSpec, DataSpec, ExperimentConfig, GraphKind, InnerKind, LossSpec, MixingSpec, ProblemSpec, ScheduleSpec,
};
use crate::data::{self, Dataset};
use crate::synth::{self, SimilarityParams};
use crate::{HarnessError, Result};
use dcatalyst::inner::{InnerSolver, PmgtLsvrg, Puda, Sonata, SonataVariant, StepCounters};
use dcatalyst::linalg::{broadcast, disagreement_sq, row};
use dcatalyst::network::{Graph, Mixer, MixingScheme, PrimalDualMatrices, Topology};
use dcatalyst::oracle::{
    check_warm_start, estimating_sequence_certificate, merit_reference, moreau_metric, solve_centralized,
    CertificateReport, FistaOptions, WarmStartReport,
};
use dcatalyst::outer::{
    run_dcatalyst_observed, run_plain, BudgetPolicy, Flow, Momentum, OuterConfig, OuterEvent, RunTrace,
};
use dcatalyst::problems::{AgentLoss, CompositeProblem, Regularizer};
use dcatalyst::{Mat, Vector};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Gap targets reported in the summary.
pub const TARGETS: [f64; 7] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

/// One line of a trace CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_k: usize,
    pub inner_t: usize,
    pub comm_rounds_cum: u64,
    pub grad_components_cum: u64,
    pub prox_cum: u64,
    pub gap: f64,
    pub consensus_err: f64,
    pub merit: f64,
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoreauRow {
    pub outer_k: usize,
    pub moreau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetHit {
    pub target: f64,
    pub outer_k: Option<usize>,
    pub inner_t: Option<usize>,
    pub communications: Option<u64>,
    pub gradients: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub inner: String,
    pub m: usize,
    pub dim: usize,
    pub rho: f64,
    pub delta: f64,
    pub alpha0: f64,
    pub l: f64,
    pub mu: f64,
    pub beta: f64,
    pub l_max: f64,
    pub mu_min: f64,
    pub l_bar_max: f64,
    pub kappa_g: Option<f64>,
    pub u_star: f64,
    pub final_gap: f64,
    pub targets: Vec<TargetHit>,
    pub baseline_targets: Option<Vec<TargetHit>>,
}

/// Problem and network built from a config.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: CompositeProblem,
    pub topology: Topology,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    /// Fixed-point tolerance of the centralized reference solves.
    pub oracle_tol: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { oracle_tol: 1e-12 }
    }
}

impl RunOptions {
    pub fn fista(&self) -> FistaOptions {
        FistaOptions { tol: self.oracle_tol, max_iter: 1_000_000 }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<TraceRow>,
    pub baseline: Option<Vec<TraceRow>>,
    pub moreau: Option<Vec<MoreauRow>>,
    pub summary: Summary,
    pub trace: RunTrace,
    pub x_star: Vector,
}

fn topology(cfg: &ExperimentConfig) -> Result<Topology> {
    let m = cfg.topology.m;
    let g = match cfg.topology.graph {
        GraphKind::ErdosRenyi => Graph::erdos_renyi(m, cfg.topology.p, cfg.topology_seed())?,
        GraphKind::Path => Graph::path(m),
        GraphKind::Ring => Graph::ring(m),
        GraphKind::Complete => Graph::complete(m),
    };
    Ok(Topology::metropolis(g)?)
}

fn regularizer(spec: &ProblemSpec) -> Result<Regularizer> {
    Ok(match spec.r#box {
        Some([lo, hi]) => Regularizer::boxed(lo, hi)?,
        None if spec.l1 > 0.0 => Regularizer::l1(spec.l1)?,
        None => Regularizer::Zero,
    })
}

#[derive(Clone, Copy)]
enum DataLoss {
    Logistic,
    LeastSquares,
    Huber(f64, f64),
}

fn data_loss(loss: LossSpec, lambda: Option<f64>, gamma: Option<f64>) -> Result<DataLoss> {
    Ok(match loss {
        LossSpec::Logistic => DataLoss::Logistic,
        LossSpec::LeastSquares => DataLoss::LeastSquares,
        LossSpec::Huber => match (lambda, gamma) {
            (Some(l), Some(g)) => DataLoss::Huber(l, g),
            _ => return Err(HarnessError::Config("huber loss needs huber_lambda and huber_gamma".into())),
        },
    })
}

fn split_agents(d: &Dataset, m: usize, seed: u64, loss: DataLoss, ridge: f64) -> Result<Vec<AgentLoss>> {
    data::partition(d.len(), m, seed)?
        .iter()
        .map(|idx| {
            let (a, b) = d.dense(idx);
            Ok(match loss {
                DataLoss::Logistic => AgentLoss::logistic(a, b, ridge)?,
                DataLoss::LeastSquares => AgentLoss::least_squares(a, b, ridge)?,
                DataLoss::Huber(l, g) => {
                    if ridge > 0.0 {
                        return Err(HarnessError::Config("huber regression takes no ridge".into()));
                    }
                    AgentLoss::huber_regression(a, b, l, g)?
                }
            })
        })
        .collect()
}

/// Loads or generates the data, splits it and fixes the ridge.
pub fn build_problem(cfg: &ExperimentConfig) -> Result<CompositeProblem> {
    let spec = &cfg.problem;
    let m = cfg.topology.m;
    let seed = cfg.seed;
    let reg = regularizer(spec)?;
    let fixed = |agents: Vec<AgentLoss>| -> Result<CompositeProblem> {
        if spec.ridge > 0.0 || spec.kappa_g.is_some() || spec.kappa_s.is_some() {
            return Err(HarnessError::Config("quadratic instances fix their own curvature".into()));
        }
        Ok(CompositeProblem::new(agents, reg.clone())?)
    };
    let (dataset, loss) = match &spec.data {
        DataSpec::Libsvm { path, loss, normalize, huber_lambda, huber_gamma } => {
            let mut d = match loss {
                LossSpec::Logistic => data::parse_libsvm(path)?,
                _ => data::parse_libsvm_targets(path)?,
            };
            if *normalize {
                d.normalize_rows();
            }
            (d, data_loss(*loss, *huber_lambda, *huber_gamma)?)
        }
        DataSpec::Logistic { samples, dim, flip } => {
            (synth::logistic_data(*samples, *dim, *flip, seed), DataLoss::Logistic)
        }
        DataSpec::HardLogistic { samples, dim, min_scale, flip } => {
            (synth::hard_logistic_data(*samples, *dim, *min_scale, *flip, seed), DataLoss::Logistic)
        }
        DataSpec::Regression { samples, dim, noise, min_scale, huber_lambda, huber_gamma } => {
            let loss =
                if huber_lambda.is_some() || huber_gamma.is_some() { LossSpec::Huber } else { LossSpec::LeastSquares };
            (
                synth::regression_data(*samples, *dim, *noise, *min_scale, seed),
                data_loss(loss, *huber_lambda, *huber_gamma)?,
            )
        }
        DataSpec::Similarity { dim, kappa_g, beta, top, heterogeneity } => {
            let mut p = SimilarityParams::new(m, *dim, *kappa_g, seed);
            if let Some(t) = top {
                p.top = *t;
            }
            p.heterogeneity = *heterogeneity;
            let inst = synth::similarity_instance(&p, *beta)?;
            return fixed(inst.agents().to_vec());
        }
        DataSpec::Quadratic { dim } => {
            let inst = synth::quadratic_elastic_net(m, *dim, 0.0, seed)?;
            return fixed(inst.agents().to_vec());
        }
    };
    let ridge = match (spec.kappa_g, spec.kappa_s) {
        (Some(k), _) => {
            let c = CompositeProblem::new(split_agents(&dataset, m, seed, loss, 0.0)?, Regularizer::Zero)?
                .base_constants()
                .clone();
            synth::ridge_for_kappa(c.l, c.mu, k)?
        }
        (_, Some(k)) => {
            let c = CompositeProblem::new(split_agents(&dataset, m, seed, loss, 0.0)?, Regularizer::Zero)?
                .base_constants()
                .clone();
            synth::ridge_for_kappa(c.l_bar_max, c.mu_min, k)?
        }
        _ => spec.ridge,
    };
    Ok(CompositeProblem::new(split_agents(&dataset, m, seed, loss, ridge)?, reg)?)
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let topology = topology(cfg)?;
    Ok(Instance { problem: build_problem(cfg)?, topology })
}

/// Receives the configured inner solver with its concrete type.
pub trait SolverVisitor {
    type Output;
    fn visit<A: InnerSolver>(self, solver: &A, delta: f64) -> Result<Self::Output>;
}

fn sonata_mixer(cfg: &ExperimentConfig, inst: &Instance, variant: SonataVariant, delta: f64) -> Result<Mixer> {
    let t = &inst.topology;
    Ok(match cfg.algorithm.mixing {
        MixingSpec::Theory => {
            let sub = inst.problem.build_subproblem(&Mat::zeros(inst.problem.m(), inst.problem.dim()), delta)?;
            let target = Sonata::new(variant, Mixer::plain(t)).required_rho(&sub);
            Mixer::chebyshev_to(t, target)
        }
        MixingSpec::Plain => Mixer::plain(t),
        MixingSpec::Chebyshev { rounds } => Mixer::new(t, MixingScheme::Chebyshev { rounds }),
        MixingSpec::ChebyshevTarget { rho } => Mixer::chebyshev_to(t, rho),
        MixingSpec::Fastmix { rounds } => Mixer::new(t, MixingScheme::FastMix { rounds }),
    })
}

fn resolve_delta<A: InnerSolver>(cfg: &ExperimentConfig, solver: &A, problem: &CompositeProblem) -> Result<f64> {
    match cfg.algorithm.delta {
        Some(d) => Ok(d),
        None => Ok(solver.recommended_delta(problem)?),
    }
}

/// Builds the configured solver and hands it to `visitor` together with the proximal weight.
pub fn with_solver<V: SolverVisitor>(cfg: &ExperimentConfig, inst: &Instance, visitor: V) -> Result<V::Output> {
    let t = &inst.topology;
    let p = &inst.problem;
    match cfg.algorithm.inner {
        InnerKind::SonataL | InnerKind::SonataF => {
            let variant =
                if cfg.algorithm.inner == InnerKind::SonataL { SonataVariant::Linearized } else { SonataVariant::Full };
            let delta = resolve_delta(cfg, &Sonata::new(variant, Mixer::plain(t)), p)?;
            let mut s = Sonata::new(variant, sonata_mixer(cfg, inst, variant, delta)?);
            if let Some(tol) = cfg.algorithm.local_tol {
                s = s.with_local_tolerance(tol);
            }
            visitor.visit(&s, delta)
        }
        InnerKind::PudaProxEd | InnerKind::PudaExtra => {
            if !matches!(cfg.algorithm.mixing, MixingSpec::Theory | MixingSpec::Plain) {
                return Err(HarnessError::Config("primal-dual solvers use plain gossip".into()));
            }
            let mats = if cfg.algorithm.inner == InnerKind::PudaProxEd {
                PrimalDualMatrices::prox_ed(&t.w)?
            } else {
                PrimalDualMatrices::extra(&t.w)?
            };
            let s = Puda::new(mats);
            let delta = resolve_delta(cfg, &s, p)?;
            visitor.visit(&s, delta)
        }
        InnerKind::PmgtLsvrg => {
            let s = match cfg.algorithm.mixing {
                MixingSpec::Theory => PmgtLsvrg::new(t, cfg.seed),
                MixingSpec::Fastmix { rounds } => PmgtLsvrg::new(t, cfg.seed).with_rounds(rounds),
                _ => return Err(HarnessError::Config("the variance-reduced solver mixes with fastmix".into())),
            };
            let delta = resolve_delta(cfg, &s, p)?;
            visitor.visit(&s, delta)
        }
    }
}

fn budget(spec: &BudgetSpec) -> BudgetPolicy {
    match *spec {
        BudgetSpec::Fixed { steps } => BudgetPolicy::Fixed(steps),
        BudgetSpec::LogRatio { ratio } => BudgetPolicy::LogRatio(ratio),
        BudgetSpec::HalfLogRatio { ratio } => BudgetPolicy::HalfLogRatio(ratio),
        BudgetSpec::LogOuter => BudgetPolicy::LogOuter,
        BudgetSpec::TheoryStronglyConvex { c } => BudgetPolicy::TheoryStronglyConvex { c },
        BudgetSpec::TheoryConvex { r0 } => BudgetPolicy::TheoryConvex { r0 },
    }
}

pub fn outer_config<A: InnerSolver>(
    cfg: &ExperimentConfig,
    solver: &A,
    problem: &CompositeProblem,
    delta: f64,
) -> OuterConfig {
    OuterConfig {
        delta,
        momentum: match cfg.algorithm.schedule {
            ScheduleSpec::StronglyConvex => Momentum::StronglyConvex { mu: solver.strong_convexity(problem) },
            ScheduleSpec::Convex => Momentum::Convex,
        },
        budget: budget(&cfg.algorithm.budget),
        outer_iterations: cfg.algorithm.outer_iterations,
    }
}

/// Reference solution of the base problem.
pub fn reference_solution(problem: &CompositeProblem, opts: &RunOptions) -> Result<(Vector, f64)> {
    let sol = solve_centralized(problem, None, opts.fista()).into_converged()?;
    let u = problem.value(&sol.x);
    Ok((sol.x, u))
}

/// Gap of stacked iterates: mean squared distance to `x*` for strongly convex
/// runs, mean objective excess for convex ones.
pub fn gap(problem: &CompositeProblem, schedule: ScheduleSpec, x: &Mat, x_star: &Vector, u_star: f64) -> f64 {
    let m = x.nrows() as f64;
    match schedule {
        ScheduleSpec::StronglyConvex => (x - broadcast(x_star, x.nrows())).norm_squared() / m,
        ScheduleSpec::Convex => (0..x.nrows()).map(|i| problem.value(&row(x, i)) - u_star).sum::<f64>() / m,
    }
}

pub fn target_hits(rows: &[TraceRow]) -> Vec<TargetHit> {
    TARGETS
        .iter()
        .map(|&target| {
            let hit = rows.iter().find(|r| r.gap <= target);
            TargetHit {
                target,
                outer_k: hit.map(|r| r.outer_k),
                inner_t: hit.map(|r| r.inner_t),
                communications: hit.map(|r| r.comm_rounds_cum),
                gradients: hit.map(|r| r.grad_components_cum),
            }
        })
        .collect()
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    inst: &'a Instance,
    opts: RunOptions,
    x_star: Vector,
    u_star: f64,
}

impl SolverVisitor for Runner<'_> {
    type Output = ExperimentOutput;

    fn visit<A: InnerSolver>(self, solver: &A, delta: f64) -> Result<ExperimentOutput> {
        let Runner { cfg, inst, opts, x_star, u_star } = self;
        let p = &inst.problem;
        let (m, d) = (p.m(), p.dim());
        let schedule = cfg.algorithm.schedule;
        let out = &cfg.output;
        let start = Instant::now();
        let clock = || if out.wallclock { start.elapsed().as_millis() as u64 } else { 0 };
        let x0 = Mat::zeros(m, d);
        let row_of = |k: usize, t: usize, c: StepCounters, x: &Mat, merit: f64, ms: u64| TraceRow {
            outer_k: k,
            inner_t: t,
            comm_rounds_cum: c.communications,
            grad_components_cum: c.gradients,
            prox_cum: c.proxes,
            gap: gap(p, schedule, x, &x_star, u_star),
            consensus_err: disagreement_sq(x) / m as f64,
            merit,
            wallclock_ms: ms,
        };
        let outer = outer_config(cfg, solver, p, delta);
        log::info!(
            "{}: {} on {m} agents, delta {delta:.4e}, alpha {:.4e}",
            cfg.name,
            solver.name(),
            outer.momentum.initial(delta)?
        );
        let fista = opts.fista();
        let mut rows = vec![row_of(0, 0, StepCounters::default(), &x0, f64::NAN, 0)];
        let mut moreau = out.moreau.then(Vec::new);
        if let Some(mr) = moreau.as_mut() {
            mr.push(MoreauRow { outer_k: 0, moreau: moreau_metric(p, delta, &x0, fista)? });
        }
        let stop_gap = cfg.algorithm.stop_gap;
        let trace = run_dcatalyst_observed(p, solver, &outer, &x0, |event| {
            if let OuterEvent::LoopEnd { problem: sub, state, record, .. } = event {
                let merit = if out.merit {
                    let reference = merit_reference(solver, sub, fista)?;
                    solver.merit(state, sub, &reference)?
                } else {
                    f64::NAN
                };
                let r = row_of(record.k, record.inner_steps_cum, record.counters, &record.x, merit, clock());
                let done = stop_gap.is_some_and(|g| r.gap <= g);
                rows.push(r);
                if let Some(mr) = moreau.as_mut() {
                    mr.push(MoreauRow { outer_k: record.k, moreau: moreau_metric(p, delta, &record.x, fista)? });
                }
                if done {
                    return Ok(Flow::Stop);
                }
            }
            Ok(Flow::Continue)
        })?;
        let baseline = match cfg.algorithm.baseline_steps {
            None => None,
            Some(steps) => {
                let start = Instant::now();
                let mut brows = Vec::new();
                run_plain(p, solver, steps, cfg.algorithm.baseline_record_every, &x0, |rec, _| {
                    let ms = if out.wallclock { start.elapsed().as_millis() as u64 } else { 0 };
                    let r = row_of(0, rec.t, rec.counters, &rec.x, f64::NAN, ms);
                    let done = stop_gap.is_some_and(|g| r.gap <= g);
                    brows.push(r);
                    Ok(if done { Flow::Stop } else { Flow::Continue })
                })?;
                Some(brows)
            }
        };
        let c = p.base_constants();
        let summary = Summary {
            name: cfg.name.clone(),
            inner: solver.name().to_string(),
            m,
            dim: d,
            rho: inst.topology.rho,
            delta,
            alpha0: trace.records[0].alpha,
            l: c.l,
            mu: c.mu,
            beta: c.beta,
            l_max: c.l_max,
            mu_min: c.mu_min,
            l_bar_max: c.l_bar_max,
            kappa_g: c.kappa_g().ok(),
            u_star,
            final_gap: rows.last().unwrap().gap,
            targets: target_hits(&rows),
            baseline_targets: baseline.as_deref().map(target_hits),
        };
        Ok(ExperimentOutput { rows, baseline, moreau, summary, trace, x_star })
    }
}

/// Runs the configured experiment in memory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> Result<ExperimentOutput> {
    let inst = build_instance(cfg)?;
    let (x_star, u_star) = reference_solution(&inst.problem, &opts)?;
    with_solver(cfg, &inst, Runner { cfg, inst: &inst, opts, x_star, u_star })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))?;
    Ok(())
}

/// The CSV encoding of `rows`, byte for byte as [`write_csv`] writes it.
pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(HarnessError::from)).collect()
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct OutputFiles {
    pub trace: PathBuf,
    pub baseline: Option<PathBuf>,
    pub moreau: Option<PathBuf>,
    pub summary: PathBuf,
}

pub fn output_files(cfg: &ExperimentConfig, dir: &Path) -> OutputFiles {
    let f = |suffix: &str| dir.join(format!("{}{suffix}", cfg.name));
    OutputFiles {
        trace: f(".csv"),
        baseline: cfg.algorithm.baseline_steps.map(|_| f(".baseline.csv")),
        moreau: cfg.output.moreau.then(|| f(".moreau.csv")),
        summary: f(".summary.json"),
    }
}

pub fn write_outputs(cfg: &ExperimentConfig, dir: &Path, out: &ExperimentOutput) -> Result<OutputFiles> {
    let files = output_files(cfg, dir);
    write_csv(&files.trace, &out.rows)?;
    if let (Some(path), Some(rows)) = (&files.baseline, &out.baseline) {
        write_csv(path, rows)?;
    }
    if let (Some(path), Some(rows)) = (&files.moreau, &out.moreau) {
        write_csv(path, rows)?;
    }
    let json = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    std::fs::write(&files.summary, json + "\n").map_err(|e| HarnessError::io(&files.summary, e))?;
    Ok(files)
}

/// Outcome of `verify`.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    /// Whether rerunning the config reproduced the trace byte for byte.
    pub reproduced: bool,
    pub certificate: CertificateReport,
    pub warm_start: WarmStartReport,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.reproduced && self.certificate.passed() && self.warm_start.passed()
    }
}

struct Verifier<'a> {
    cfg: &'a ExperimentConfig,
    inst: &'a Instance,
    trace: RunTrace,
    x_star: Vector,
    u_star: f64,
    tol: f64,
    fista: FistaOptions,
}

impl SolverVisitor for Verifier<'_> {
    type Output = VerifyReport;

    fn visit<A: InnerSolver>(self, solver: &A, delta: f64) -> Result<VerifyReport> {
        let p = &self.inst.problem;
        let certificate =
            estimating_sequence_certificate(p, &self.trace, &self.x_star, self.u_star, self.tol, self.fista)?;
        let outer = outer_config(self.cfg, solver, p, delta);
        let transitions = self.trace.records.len().saturating_sub(2).clamp(1, 20);
        let x0 = Mat::zeros(p.m(), p.dim());
        let warm_start = check_warm_start(solver, p, &outer, &x0, transitions, self.tol, self.fista)?;
        Ok(VerifyReport { reproduced: true, certificate, warm_start })
    }
}

/// Reruns `cfg`, checks that it reproduces the trace at `trace_path` and certifies the run:
/// the estimating-sequence inequalities and the warm-start bound. A trace that the
/// config does not reproduce fails verification.
pub fn verify(trace_path: &Path, cfg: &ExperimentConfig, opts: RunOptions) -> Result<VerifyReport> {
    let recorded = std::fs::read(trace_path).map_err(|e| HarnessError::io(trace_path, e))?;
    let out = run_experiment(cfg, opts)?;
    let reproduced = csv_bytes(&out.rows)? == recorded;
    let inst = build_instance(cfg)?;
    let tol = (opts.oracle_tol * 1e3).max(1e-9);
    let v = Verifier {
        cfg,
        inst: &inst,
        trace: out.trace,
        x_star: out.x_star,
        u_star: out.summary.u_star,
        tol,
        fista: opts.fista(),
    };
    let report = with_solver(cfg, &inst, v)?;
    Ok(VerifyReport { reproduced, ..report })
}
