mod common;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{stack, stack_duals, Fixture};
use dssnal::dssnal::{
    dual_update, kkt_residual, Criterion, DualState, DualUpdateMode, InnerSolver, SigmaIndexMode, SolverConfig,
};
use dssnal::netsim::{ExecMode, Network};
use dssnal::problems::Family;
use dssnal::prox::Threshold;
use dssnal::{solve, SolveResult, Topology};

fn run(f: &Fixture, cfg: &SolverConfig) -> SolveResult {
    solve(&f.p, &f.graph, &f.l, cfg).unwrap()
}

fn rel(a: &[f64], b: &DVector<f64>) -> f64 {
    (DVector::from_row_slice(a) - b).norm() / b.norm().max(1e-300)
}

#[test]
fn tiny_instance_matches_centralized_reference() {
    let f = common::huber(5, 40, 4, Topology::Complete, 0.1, 1);
    let res = run(&f, &SolverConfig::default());
    assert!(res.converged && res.r_kkt < 1e-6, "{}", res.r_kkt);
    assert!(res.outer_iterations <= 100);
    let w = f.reference();
    assert!(rel(&res.w_bar, &w) < 1e-5, "{}", rel(&res.w_bar, &w));
    assert!((res.objective - f.objective(&w)).abs() <= 1e-8 * (1.0 + f.objective(&w).abs()));
}

#[test]
fn ridge_fixture_matches_normal_equations() {
    // With nu above every residual and gamma = 0 the Huber loss is r^2/(2 nu)
    // everywhere, so the minimizer solves (A^T A / nu + rho I) w = A^T b / nu.
    let nu = 100.0;
    let ds = dssnal::data::gen_random_regression(5, 60, 3).unwrap();
    let f = Fixture::new(ds, Family::Huber { nu }, 4, Topology::Complete, 1.0, 0.0, 3);
    let a = DMatrix::from_row_slice(f.ds.samples(), f.n, f.ds.features());
    let b = DVector::from_row_slice(f.ds.labels());
    let lhs = a.transpose() * &a / nu + DMatrix::identity(f.n, f.n) * f.rho;
    let w = lhs.lu().solve(&(a.transpose() * b / nu)).unwrap();
    let cfg = SolverConfig {
        tol: 1e-11,
        ..SolverConfig::default()
    };
    let res = run(&f, &cfg);
    assert!(res.converged, "{}", res.r_kkt);
    let err = (DVector::from_row_slice(&res.w_bar) - &w).norm();
    assert!(err <= 1e-8, "{err}");
}

#[test]
fn solution_does_not_depend_on_topology() {
    let cfg = SolverConfig {
        dual_update: DualUpdateMode::Plain,
        tol: 1e-9,
        ..SolverConfig::default()
    };
    let base = run(&common::huber(4, 60, 6, Topology::Complete, 0.2, 4), &cfg);
    assert!(base.converged);
    let w0 = DVector::from_row_slice(&base.w_bar);
    for topo in [Topology::Ring, Topology::Path, Topology::Grid] {
        let res = run(&common::huber(4, 60, 6, topo, 0.2, 4), &cfg);
        assert!(res.converged, "{topo}: {}", res.r_kkt);
        let d = (DVector::from_row_slice(&res.w_bar) - &w0).norm();
        assert!(d <= 1e-6, "{topo}: {d}");
    }
}

#[test]
fn upper_multiplier_update_matches_moreau_form() {
    for (seed, topo) in [(1u64, Topology::Ring), (2, Topology::Complete), (3, Topology::ErdosRenyi(0.5))] {
        let f = common::svc(3, 24, 5, topo, 0.4, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = common::random_blocks(&mut rng, f.m, f.n, 1.0);
        let duals = DualState {
            upper: common::random_blocks(&mut rng, f.m, f.n, 0.3),
            lower: common::random_blocks(&mut rng, f.m, f.n, 0.3),
        };
        let sigma = 2.5;
        let tau = f.level();
        let xd = stack(&x);
        let lu = stack(&duals.upper);
        let ll = stack(&duals.lower);
        // y = Prox_{G/sigma}(x - lambda/sigma), lambda+ = lambda - sigma (x - y)
        let y = (&xd - &lu / sigma).map(|t| t.signum() * (t.abs() - tau / sigma).max(0.0));
        let upper = &lu - (&xd - y) * sigma;
        let wx = f.dense_w() * &xd;
        let lower_plain = -(&wx * sigma - &ll);
        let lower_alg3 = -(f.dense_w() * (&wx * sigma - &ll));
        for (mode, lower) in [(DualUpdateMode::Plain, lower_plain), (DualUpdateMode::Algorithm3, lower_alg3)] {
            let mut net = Network::new(f.graph.clone(), ExecMode::Sequential);
            let u = dual_update(&mut net, &f.l, Threshold::new(tau).unwrap(), &x, sigma, &duals, mode).unwrap();
            assert!((stack(&u.duals.upper) - &upper).norm() <= 1e-12 * (1.0 + upper.norm()));
            assert!((stack(&u.duals.lower) - &lower).norm() <= 1e-12 * (1.0 + lower.norm()));
            let step = (stack_duals(&u.duals.upper, &u.duals.lower) - stack_duals(&duals.upper, &duals.lower)).norm();
            assert!((u.delta_norm - step).abs() <= 1e-12 * (1.0 + step));
        }
    }
}

#[test]
fn zero_l1_weight_turns_upper_update_into_plain_step() {
    let f = common::huber(3, 24, 4, Topology::Ring, 0.0, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = common::random_blocks(&mut rng, f.m, f.n, 1.0);
    let duals = DualState {
        upper: common::random_blocks(&mut rng, f.m, f.n, 0.3),
        lower: common::random_blocks(&mut rng, f.m, f.n, 0.3),
    };
    let mut net = Network::new(f.graph.clone(), ExecMode::Sequential);
    let u = dual_update(&mut net, &f.l, Threshold::new(0.0).unwrap(), &x, 2.0, &duals, DualUpdateMode::Plain).unwrap();
    // the conjugate of the zero function is the indicator of {0}, so the
    // upper multiplier is projected to zero
    assert_eq!(u.duals.upper.norm(), 0.0);
}

#[test]
fn kkt_residual_matches_dense_formula() {
    let f = common::huber(4, 40, 5, Topology::Path, 0.3, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = common::random_blocks(&mut rng, f.m, f.n, 1.0);
    let xd = stack(&x);
    let mut avg = DVector::zeros(f.n);
    for i in 0..f.m {
        avg += f.grad_f(i, &DVector::from_row_slice(x.block(i)));
    }
    avg /= f.m as f64;
    let tau = f.level();
    let mut stat = 0.0;
    for i in 0..f.m {
        let xi = DVector::from_row_slice(x.block(i));
        let p = (&xi - &avg).map(|t| t.signum() * (t.abs() - tau).max(0.0));
        stat += (xi - p).norm_squared();
    }
    let want = ((f.dense_w() * &xd).norm() + stat.sqrt()) / (1.0 + xd.norm());
    let got = kkt_residual(&x, &f.p, &f.l).value;
    assert!((got - want).abs() <= 1e-12 * want);

    let zero = dssnal::AgentBlocks::zeros(f.m, f.n);
    assert!(kkt_residual(&zero, &f.p, &f.l).value > 0.0);
    let w = f.reference();
    let opt = dssnal::AgentBlocks::replicate(f.m, w.as_slice());
    assert!(kkt_residual(&opt, &f.p, &f.l).value < 1e-10);
}

#[test]
fn run_invariants_hold() {
    let f = common::svc(6, 120, 6, Topology::Complete, 0.1, 3);
    let cfg = SolverConfig::default();
    let res = run(&f, &cfg);
    assert!(res.converged);
    // trace completeness
    assert_eq!(res.trace.len(), res.outer_iterations);
    for (k, r) in res.trace.iter().enumerate() {
        assert_eq!(r.iteration, k);
    }
    // sigma monotone and capped
    for w in res.trace.windows(2) {
        assert!(w[1].sigma >= w[0].sigma && w[1].sigma <= cfg.sigma_max);
    }
    // consensus at termination
    let xbar = DVector::from_row_slice(&res.w_bar);
    for i in 0..f.m {
        let d = (DVector::from_row_slice(res.x.block(i)) - &xbar).norm();
        assert!(d <= 10.0 * cfg.tol * (1.0 + xbar.norm()), "agent {i}: {d}");
    }
    // bounded multipliers
    let peak = res.trace.iter().map(|r| r.lambda_norm).fold(0.0, f64::max);
    let last = res.trace.last().unwrap().lambda_norm;
    assert!(peak.is_finite() && peak <= 10.0 * (1.0 + last), "{peak} vs {last}");
}

#[test]
fn average_iterate_approaches_reference_monotonically_in_the_tail() {
    let f = common::huber(5, 60, 4, Topology::Complete, 0.2, 12);
    let w = f.reference();
    let full = run(&f, &SolverConfig::default());
    assert!(full.converged);
    // runs are deterministic, so capping max_outer replays the prefix
    let errs: Vec<f64> = (1..=full.outer_iterations)
        .map(|k| {
            let res = run(&f, &SolverConfig { max_outer: k, ..SolverConfig::default() });
            assert_eq!(res.trace[..], full.trace[..k]);
            (DVector::from_row_slice(&res.w_bar) - &w).norm()
        })
        .collect();
    assert!(*errs.last().unwrap() < 1e-5 * (1.0 + w.norm()));
    let tail = &errs[errs.len().saturating_sub(4)..];
    for p in tail.windows(2) {
        assert!(p[1] <= p[0], "{errs:?}");
    }
}

#[test]
fn every_criterion_and_variant_converges() {
    let f = common::huber(5, 60, 4, Topology::Complete, 0.2, 8);
    let w = f.reference();
    let variants = [
        SolverConfig { criterion: Criterion::B, ..SolverConfig::default() },
        SolverConfig { criterion: Criterion::C, ..SolverConfig::default() },
        SolverConfig { criterion: Criterion::Combined, ..SolverConfig::default() },
        SolverConfig { sigma_index: SigmaIndexMode::Current, ..SolverConfig::default() },
        SolverConfig { dual_update: DualUpdateMode::Plain, ..SolverConfig::default() },
        SolverConfig { eta_schedule: dssnal::dissn::EtaSchedule::Quadratic, ..SolverConfig::default() },
        SolverConfig { inner: InnerSolver::Dapg, ..SolverConfig::default() },
        SolverConfig { exec: ExecMode::Parallel, ..SolverConfig::default() },
    ];
    for cfg in variants {
        let res = run(&f, &cfg);
        assert!(res.converged, "{cfg:?}: R_KKT {}", res.r_kkt);
        assert!(rel(&res.w_bar, &w) < 1e-5, "{cfg:?}");
        if cfg.criterion != Criterion::A {
            assert!(res.trace.iter().any(|r| r.trial_dual_updates > 0));
        }
        if cfg.inner == InnerSolver::Dapg {
            assert!(res.trace.iter().all(|r| r.inner_newton_iters == 0 && r.dapg_evals > 0));
        }
    }
}

#[test]
fn parallel_execution_reproduces_sequential_trace() {
    let f = common::svc(4, 80, 5, Topology::Ring, 0.1, 2);
    let cfg = SolverConfig { dual_update: DualUpdateMode::Plain, ..SolverConfig::default() };
    let a = run(&f, &cfg);
    let b = run(&f, &SolverConfig { exec: ExecMode::Parallel, ..cfg });
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.x, b.x);
}

#[test]
fn invalid_configuration_is_rejected() {
    let f = common::huber(3, 20, 3, Topology::Complete, 0.1, 1);
    let bad = SolverConfig { sigma0: -1.0, ..SolverConfig::default() };
    assert!(solve(&f.p, &f.graph, &f.l, &bad).is_err());
    let other = common::huber(3, 20, 4, Topology::Complete, 0.1, 1);
    assert!(solve(&f.p, &other.graph, &other.l, &SolverConfig::default()).is_err());
}
