//! The outer loop: build `u^k`, warm start, run a budget of inner steps, extrapolate.

mod schedule;

pub use schedule::{
    alpha_convex_initial, alpha_convex_next, alpha_strongly_convex, extrapolate, lambda_products, BudgetContext,
    BudgetPolicy, Momentum,
};

use crate::inner::{InnerSolver, StepCounters};
use crate::problems::CompositeProblem;
use crate::{Error, Mat, Result};

#[derive(Debug, Clone)]
pub struct OuterConfig {
    pub delta: f64,
    pub momentum: Momentum,
    pub budget: BudgetPolicy,
    pub outer_iterations: usize,
}

/// State of the outer loop after `k` completed inner loops.
#[derive(Debug, Clone)]
pub struct OuterRecord {
    pub k: usize,
    /// `alpha^k`.
    pub alpha: f64,
    /// Inner steps of the loop that produced `x^k` (0 for `k = 0`).
    pub inner_steps: usize,
    pub inner_steps_cum: usize,
    pub counters: StepCounters,
    /// `x^k`.
    pub x: Mat,
    /// `z^k`.
    pub z: Mat,
}

#[derive(Debug, Clone)]
pub struct RunTrace {
    pub delta: f64,
    pub momentum: Momentum,
    pub records: Vec<OuterRecord>,
}

impl RunTrace {
    pub fn alphas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.alpha).collect()
    }
}

/// Points at which the outer loop hands control to an observer.
pub enum OuterEvent<'a, S> {
    /// Loop `k` is about to start from the (warm-started) `state` on `problem = u^k`.
    LoopStart { k: usize, problem: &'a CompositeProblem, state: &'a S },
    /// Loop `k` finished with `state`.
    LoopEnd { k: usize, problem: &'a CompositeProblem, state: &'a S, record: &'a OuterRecord },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

pub fn run_dcatalyst<A: InnerSolver>(
    problem: &CompositeProblem,
    inner: &A,
    config: &OuterConfig,
    x0: &Mat,
) -> Result<RunTrace> {
    run_dcatalyst_observed(problem, inner, config, x0, |_| Ok(Flow::Continue))
}

pub fn run_dcatalyst_observed<A, F>(
    problem: &CompositeProblem,
    inner: &A,
    config: &OuterConfig,
    x0: &Mat,
    mut observer: F,
) -> Result<RunTrace>
where
    A: InnerSolver,
    F: FnMut(OuterEvent<'_, A::State>) -> Result<Flow>,
{
    let base = problem.base();
    if x0.shape() != (base.m(), base.dim()) {
        return Err(Error::Dimension(format!("initial point {:?}", x0.shape())));
    }
    let delta = config.delta;
    let mut alpha = config.momentum.initial(delta)?;
    let mut records = vec![OuterRecord {
        k: 0,
        alpha,
        inner_steps: 0,
        inner_steps_cum: 0,
        counters: StepCounters::default(),
        x: x0.clone(),
        z: x0.clone(),
    }];
    let mut counters = StepCounters::default();
    let mut steps_cum = 0;
    let mut state: Option<A::State> = None;
    for k in 0..config.outer_iterations {
        let (x_k, z_k) = {
            let r = records.last().unwrap();
            (r.x.clone(), r.z.clone())
        };
        let sub = base.build_subproblem(&z_k, delta)?;
        let mut st = match state.take() {
            None => {
                let (s, c) = inner.init(&sub, x0)?;
                counters += c;
                s
            }
            Some(prev) => inner.warm_start(prev, &z_k, &records[k - 1].z, delta),
        };
        observer(OuterEvent::LoopStart { k, problem: &sub, state: &st })?;
        let ctx = if config.budget.needs_context() {
            let wc = inner.warm_start_constants(&sub)?;
            Some(crate::outer::BudgetContext {
                rate: inner.rate(&sub)?,
                c_m: wc.c_m,
                d_m: wc.d_m,
                m: base.m(),
                mu: inner.strong_convexity(&sub),
                delta,
                alpha,
            })
        } else {
            None
        };
        let t_k = config.budget.budget(k, ctx.as_ref())?;
        log::debug!("outer loop {k}: alpha {alpha:.4e}, {t_k} inner steps");
        for _ in 0..t_k {
            counters += inner.step(&mut st, &sub)?;
        }
        steps_cum += t_k;
        let x_next = inner.iterate(&st).clone();
        let alpha_next = config.momentum.next(alpha);
        let z_next = extrapolate(&x_next, &x_k, alpha, alpha_next);
        alpha = alpha_next;
        records.push(OuterRecord {
            k: k + 1,
            alpha,
            inner_steps: t_k,
            inner_steps_cum: steps_cum,
            counters,
            x: x_next,
            z: z_next,
        });
        let flow = observer(OuterEvent::LoopEnd { k, problem: &sub, state: &st, record: records.last().unwrap() })?;
        state = Some(st);
        if flow == Flow::Stop {
            break;
        }
    }
    Ok(RunTrace { delta, momentum: config.momentum, records })
}

/// Snapshot of a plain (non-accelerated) inner-solver run.
#[derive(Debug, Clone)]
pub struct PlainRecord {
    pub t: usize,
    pub counters: StepCounters,
    pub x: Mat,
}

/// Run the inner solver directly on `problem`, recording every `record_every` steps.
pub fn run_plain<A, F>(
    problem: &CompositeProblem,
    inner: &A,
    steps: usize,
    record_every: usize,
    x0: &Mat,
    mut observer: F,
) -> Result<Vec<PlainRecord>>
where
    A: InnerSolver,
    F: FnMut(&PlainRecord, &A::State) -> Result<Flow>,
{
    let every = record_every.max(1);
    let (mut st, mut counters) = inner.init(problem, x0)?;
    let first = PlainRecord { t: 0, counters, x: inner.iterate(&st).clone() };
    let mut out = Vec::new();
    let stop = observer(&first, &st)? == Flow::Stop;
    out.push(first);
    if stop {
        return Ok(out);
    }
    for t in 1..=steps {
        counters += inner.step(&mut st, problem)?;
        if t % every == 0 || t == steps {
            let rec = PlainRecord { t, counters, x: inner.iterate(&st).clone() };
            let flow = observer(&rec, &st)?;
            out.push(rec);
            if flow == Flow::Stop {
                break;
            }
        }
    }
    Ok(out)
}
