mod common;

use common::*;
use dcatalyst::inner::{InnerSolver, PmgtLsvrg, Puda, Sonata, SonataState, StepCounters, WarmStartConstants};
use dcatalyst::linalg::{broadcast, disagreement_sq, is_symmetric, psd_max_eigenvalue, row, sym_eigenvalues};
use dcatalyst::network::{chebyshev_mix, fastmix, Graph, Mixer, PrimalDualMatrices, Topology};
use dcatalyst::outer::{alpha_strongly_convex, lambda_products, run_dcatalyst, BudgetPolicy, Momentum, OuterConfig};
use dcatalyst::problems::{AgentLoss, CompositeProblem, Regularizer};
use dcatalyst::{Mat, Result, Vector};
use proptest::prelude::*;
use std::cell::RefCell;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

fn fd_gradient(f: &AgentLoss, x: &Vector, h: f64) -> Vector {
    Vector::from_fn(x.len(), |k, _| {
        let mut a = x.clone();
        let mut b = x.clone();
        a[k] += h;
        b[k] -= h;
        (f.value(&a) - f.value(&b)) / (2.0 * h)
    })
}

fn loss_kinds(seed: u64) -> Vec<AgentLoss> {
    let mut r = rng(seed);
    let (n, d) = (6, 4);
    let a = gaussian_mat(&mut r, n, d);
    let b = gaussian_vec(&mut r, n);
    let labels = b.map(|v| if v > 0.0 { 1.0 } else { -1.0 });
    vec![
        AgentLoss::logistic(a.clone(), labels, 0.1).unwrap(),
        AgentLoss::least_squares(a.clone(), b.clone(), 0.2).unwrap(),
        AgentLoss::huber_regression(a, b, 0.5, 2.0).unwrap(),
        AgentLoss::quadratic(random_spd(&mut r, d, 0.1), gaussian_vec(&mut r, d)).unwrap(),
    ]
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn gradients_match_finite_differences(seed in 0u64..10_000) {
        let mut r = rng(seed ^ 0xabc);
        for f in loss_kinds(seed) {
            let x = gaussian_vec(&mut r, 4);
            let g = f.gradient(&x);
            let fd = fd_gradient(&f, &x, 1e-6);
            prop_assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1.0), "{:?}", f.kind());
        }
    }

    #[test]
    fn l1_prox_satisfies_optimality(xs in prop::collection::vec(-5.0f64..5.0, 1..8), lambda in 0.0f64..3.0, theta in 0.0f64..3.0) {
        let r = Regularizer::l1(lambda).unwrap();
        let x = Vector::from_vec(xs);
        let y = r.prox(&x, theta);
        for k in 0..x.len() {
            let resid = x[k] - y[k];
            let t = theta * lambda;
            // x - y is recomputed in floating point, so allow rounding of x
            let ulp = 4.0 * f64::EPSILON * x[k].abs();
            if y[k] > 0.0 {
                prop_assert!((resid - t).abs() <= ulp);
            } else if y[k] < 0.0 {
                prop_assert!((resid + t).abs() <= ulp);
            } else {
                prop_assert!(resid.abs() <= t);
            }
        }
    }

    #[test]
    fn constants_are_ordered(seed in 0u64..10_000, m in 1usize..5, n in 2usize..8, ridge in 0.05f64..1.0) {
        let p = random_least_squares(seed, m, n, 3, ridge, Regularizer::Zero);
        let c = p.base_constants();
        let tol = 1e-9;
        let (kg, kl, ks) = (c.kappa_g().unwrap(), c.kappa_l().unwrap(), c.kappa_s().unwrap());
        prop_assert!(kg <= kl * (1.0 + tol));
        prop_assert!(kl <= ks * (1.0 + tol));
        prop_assert!(ks <= n as f64 * kl * (1.0 + tol));
        for i in 0..m {
            prop_assert!(c.mu_i[i] <= c.l_i[i] * (1.0 + tol));
        }
        prop_assert!(c.mu <= c.l * (1.0 + tol));
        prop_assert!(c.beta <= 2.0 * c.l_max * (1.0 + tol));
    }

    #[test]
    fn metropolis_is_doubly_stochastic(m in 1usize..12, p in 0.05f64..1.0, seed in 0u64..1000) {
        let t = Topology::metropolis(Graph::erdos_renyi(m, p, seed).unwrap()).unwrap();
        prop_assert!(is_symmetric(&t.w, 0.0));
        for i in 0..m {
            prop_assert!((t.w.row(i).sum() - 1.0).abs() <= 1e-12);
            for j in 0..m {
                if i != j && t.w[(i, j)] != 0.0 {
                    prop_assert!(t.graph.has_edge(i, j));
                }
            }
        }
        prop_assert!((0.0..1.0).contains(&t.rho));
    }

    #[test]
    fn accelerated_gossip_preserves_mean(m in 2usize..10, seed in 0u64..1000, rounds in 0usize..30) {
        let t = Topology::metropolis(Graph::erdos_renyi(m, 0.4, seed).unwrap()).unwrap();
        let mut r = rng(seed);
        let x = gaussian_mat(&mut r, m, 3);
        let mean = mean_row(&x);
        let scale = mean.norm().max(x.norm() / m as f64);
        for out in [fastmix(&x, rounds, &t.w, t.rho), chebyshev_mix(&x, rounds, &t.w, t.rho)] {
            prop_assert!((mean_row(&out) - &mean).norm() <= 1e-12 * scale.max(1.0));
        }
    }

    #[test]
    fn fastmix_disagreement_is_monotone(m in 2usize..10, seed in 0u64..1000, n in 0usize..40) {
        let t = Topology::metropolis(Graph::erdos_renyi(m, 0.4, seed).unwrap()).unwrap();
        prop_assume!(t.rho < 0.99);
        let mut r = rng(seed + 1);
        let x = gaussian_mat(&mut r, m, 3);
        let a = disagreement_sq(&fastmix(&x, n, &t.w, t.rho)).sqrt();
        let b = disagreement_sq(&fastmix(&x, n + 1, &t.w, t.rho)).sqrt();
        prop_assert!(b <= a + 1e-12, "N={} {} -> {}", n, a, b);
    }

    #[test]
    fn prox_ed_is_admissible(m in 1usize..10, p in 0.1f64..1.0, seed in 0u64..1000) {
        let t = Topology::metropolis(Graph::erdos_renyi(m, p, seed).unwrap()).unwrap();
        let pd = PrimalDualMatrices::prox_ed(&t.w).unwrap();
        let gap = Mat::identity(m, m) - &pd.hsq - &pd.w * &pd.w;
        prop_assert!(sym_eigenvalues(&gap)[0] >= -1e-10);
        prop_assert!(PrimalDualMatrices::extra(&t.w).is_ok());
    }

    #[test]
    fn sonata_tracks_through_steps_and_warm_starts(seed in 0u64..1000, full in any::<bool>()) {
        let base = random_quadratics(seed, 4, 3, Regularizer::l1(0.05).unwrap());
        let t = Topology::metropolis(Graph::ring(4)).unwrap();
        let mixer = Mixer::plain(&t);
        let s = if full { Sonata::full(mixer) } else { Sonata::linearized(mixer) };
        let mut r = rng(seed);
        let delta = 0.5;
        let mut z = gaussian_mat(&mut r, 4, 3);
        let mut sub = base.build_subproblem(&z, delta).unwrap();
        let (mut st, _) = s.init(&sub, &gaussian_mat(&mut r, 4, 3)).unwrap();
        for _ in 0..4 {
            for _ in 0..10 {
                s.step(&mut st, &sub).unwrap();
                prop_assert!(tracking_error(&st, &sub) <= 1e-10);
            }
            let z_new = gaussian_mat(&mut r, 4, 3);
            st = s.warm_start(st, &z_new, &z, delta);
            z = z_new;
            sub = base.build_subproblem(&z, delta).unwrap();
            prop_assert!(tracking_error(&st, &sub) <= 1e-10);
        }
    }

    #[test]
    fn puda_dual_stays_in_disagreement_space(seed in 0u64..1000) {
        let p = random_quadratics(seed, 5, 3, Regularizer::l1(0.1).unwrap());
        let t = Topology::metropolis(Graph::erdos_renyi(5, 0.5, seed).unwrap()).unwrap();
        let puda = Puda::new(PrimalDualMatrices::prox_ed(&t.w).unwrap());
        let mut r = rng(seed);
        let (mut st, _) = puda.init(&p, &gaussian_mat(&mut r, 5, 3)).unwrap();
        for _ in 0..100 {
            puda.step(&mut st, &p).unwrap();
            prop_assert!(mean_row(&st.yhat).amax() <= 1e-10);
        }
    }

    #[test]
    fn puda_single_agent_is_proximal_gradient(seed in 0u64..1000) {
        let p = random_quadratics(seed, 1, 3, Regularizer::l1(0.2).unwrap());
        let puda = Puda::new(PrimalDualMatrices::prox_ed(&Mat::identity(1, 1)).unwrap());
        let eta = puda.stepsize(&p);
        let mut r = rng(seed);
        let x0 = gaussian_mat(&mut r, 1, 3);
        let (mut st, _) = puda.init(&p, &x0).unwrap();
        let mut x = row(&x0, 0);
        for _ in 0..50 {
            puda.step(&mut st, &p).unwrap();
            x = p.prox(&(&x - eta * p.smooth_gradient(&x)), eta);
            prop_assert!((row(&st.x, 0) - &x).amax() <= 1e-12);
        }
    }

    #[test]
    fn pmgt_tracks_pathwise(seed in 0u64..1000) {
        let base = random_least_squares(seed, 3, 4, 3, 0.3, Regularizer::l1(0.05).unwrap());
        let t = Topology::metropolis(Graph::path(3)).unwrap();
        let pm = PmgtLsvrg::new(&t, seed).with_rounds(2);
        let mut r = rng(seed);
        let delta = 0.4;
        let mut z = gaussian_mat(&mut r, 3, 3);
        let mut sub = base.build_subproblem(&z, delta).unwrap();
        let (mut st, _) = pm.init(&sub, &gaussian_mat(&mut r, 3, 3)).unwrap();
        for _ in 0..3 {
            for _ in 0..20 {
                pm.step(&mut st, &sub).unwrap();
                prop_assert!((mean_row(&st.y) - mean_row(&st.g)).amax() <= 1e-10);
            }
            let z_new = gaussian_mat(&mut r, 3, 3);
            st = pm.warm_start(st, &z_new, &z, delta);
            z = z_new;
            sub = base.build_subproblem(&z, delta).unwrap();
            prop_assert!((mean_row(&st.y) - mean_row(&st.g)).amax() <= 1e-10);
            prop_assert!((&st.gtilde - sub.stacked_gradient(&st.v)).amax() <= 1e-10);
        }
    }

    #[test]
    fn strongly_convex_schedule_identity(mu in 1e-4f64..10.0, delta in 1e-4f64..10.0) {
        let a = alpha_strongly_convex(mu, delta).unwrap();
        let mu_m = delta * mu / (delta + mu);
        prop_assert!((delta * a * a - mu_m).abs() <= 1e-14 * mu_m.max(1.0));
    }
}

fn tracking_error(st: &SonataState, p: &CompositeProblem) -> f64 {
    (mean_row(&st.y) - mean_row(&p.stacked_gradient(&st.x))).amax()
}

#[test]
fn convex_lambda_sandwich_to_a_thousand() {
    let alphas = Momentum::Convex.sequence(1.0, 1001).unwrap();
    let lambdas = lambda_products(&alphas);
    for (k, l) in lambdas.iter().enumerate().take(1001) {
        let kk = (k + 2) as f64;
        assert!(*l >= 2.0 / (kk * kk) - 1e-12 && *l <= 4.0 / (kk * kk) + 1e-12, "k={k} lambda={l}");
    }
}

#[test]
fn pmgt_expected_cost_per_step() {
    let n = 10;
    let p = random_least_squares(7, 3, n, 2, 0.5, Regularizer::Zero);
    let t = Topology::metropolis(Graph::path(3)).unwrap();
    let pm = PmgtLsvrg::new(&t, 17).with_rounds(1);
    let (mut st, _) = pm.init(&p, &Mat::zeros(3, 2)).unwrap();
    let steps = 10_000;
    let mut total = StepCounters::default();
    for _ in 0..steps {
        total += pm.step(&mut st, &p).unwrap();
    }
    // per agent: 2 component gradients, plus n on a snapshot refresh with probability 1/n
    let per_agent_step = total.gradients as f64 / (3 * steps) as f64;
    assert!((per_agent_step - 3.0).abs() <= 0.05 * 3.0, "{per_agent_step}");
    assert_eq!(total.communications, 2 * steps as u64);
}

/// Delegating solver that tallies every counter the inner solver reports.
struct Tally<A> {
    inner: A,
    seen: RefCell<StepCounters>,
}

impl<A: InnerSolver> InnerSolver for Tally<A> {
    type State = A::State;
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn init(&self, p: &CompositeProblem, x0: &Mat) -> Result<(A::State, StepCounters)> {
        let (s, c) = self.inner.init(p, x0)?;
        *self.seen.borrow_mut() += c;
        Ok((s, c))
    }
    fn step(&self, s: &mut A::State, p: &CompositeProblem) -> Result<StepCounters> {
        let c = self.inner.step(s, p)?;
        *self.seen.borrow_mut() += c;
        Ok(c)
    }
    fn warm_start(&self, s: A::State, z_new: &Mat, z_old: &Mat, delta: f64) -> A::State {
        self.inner.warm_start(s, z_new, z_old, delta)
    }
    fn iterate<'a>(&self, s: &'a A::State) -> &'a Mat {
        self.inner.iterate(s)
    }
    fn rate(&self, p: &CompositeProblem) -> Result<f64> {
        self.inner.rate(p)
    }
    fn warm_start_constants(&self, p: &CompositeProblem) -> Result<WarmStartConstants> {
        self.inner.warm_start_constants(p)
    }
    fn recommended_delta(&self, p: &CompositeProblem) -> Result<f64> {
        self.inner.recommended_delta(p)
    }
    fn strong_convexity(&self, p: &CompositeProblem) -> f64 {
        self.inner.strong_convexity(p)
    }
    fn merit(&self, s: &A::State, p: &CompositeProblem, r: &dcatalyst::inner::MeritReference) -> Result<f64> {
        self.inner.merit(s, p, r)
    }
}

#[test]
fn trace_counters_are_conserved() {
    let p = random_least_squares(9, 4, 5, 3, 0.3, Regularizer::l1(0.01).unwrap());
    let t = Topology::metropolis(Graph::ring(4)).unwrap();
    let tally = Tally { inner: PmgtLsvrg::new(&t, 5).with_rounds(2), seen: RefCell::new(StepCounters::default()) };
    let delta = tally.recommended_delta(&p).unwrap();
    let cfg = OuterConfig {
        delta,
        momentum: Momentum::StronglyConvex { mu: p.base_constants().mu },
        budget: BudgetPolicy::LogOuter,
        outer_iterations: 12,
    };
    let trace = run_dcatalyst(&p, &tally, &cfg, &Mat::zeros(4, 3)).unwrap();
    let last = trace.records.last().unwrap();
    assert_eq!(last.counters, *tally.seen.borrow());
    for w in trace.records.windows(2) {
        assert!(w[1].counters.communications >= w[0].counters.communications);
        assert!(w[1].counters.gradients >= w[0].counters.gradients);
        assert!(w[1].counters.proxes >= w[0].counters.proxes);
        assert_eq!(w[1].inner_steps_cum, w[0].inner_steps_cum + w[1].inner_steps);
    }
}

#[test]
fn lipschitz_bounds_are_spectral_for_quadratics() {
    let p = random_quadratics(3, 2, 4, Regularizer::Zero);
    let c = p.base_constants();
    for i in 0..2 {
        let (h, _) = p.local_quadratic_form(i).unwrap();
        assert!((c.l_i[i] - psd_max_eigenvalue(&h)).abs() <= 1e-10);
    }
    assert!(broadcast(&Vector::zeros(4), 2).iter().all(|v| *v == 0.0));
}
