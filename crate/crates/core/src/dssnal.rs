//! Augmented-Lagrangian outer loop.
//!
//! Each outer iteration solves the inner problem in `x` (semismooth Newton
//! or accelerated gradient) to an implementable accuracy, updates the
//! multipliers blockwise and raises the penalty. Progress is monitored with
//! the scaled KKT residual of the original consensus problem.

use std::str::FromStr;

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::blocks::AgentBlocks;
use crate::dapg::{dapg_run, warm_start, DapgOutcome, WARM_START_CAP, WARM_START_TOL};
use crate::dissn::{dissn_solve, DissnOptions, EtaSchedule, NewtonStepRecord};
use crate::error::{Error, Result};
use crate::netsim::{CommLedger, ExecMode, Network};
use crate::problems::{LocalObjective, ProblemInstance};
use crate::prox::{clip_into, soft_threshold, Threshold};
use crate::subproblem::{PhiGrad, PhiPoint, SubproblemState};
use crate::topology::{GossipMatrix, Graph};

/// Inner-solve acceptance test.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    /// `||grad phi||^2 <= eps_k^2 mu / sigma_k`
    #[default]
    A,
    /// `||grad phi||^2 <= delta_k^2 (mu / sigma_k) ||dlambda||^2`
    B,
    /// `||grad phi|| <= (delta'_k / sigma_k) ||dlambda||`
    C,
    /// All three at once.
    Combined,
}

impl Criterion {
    pub fn needs_dual_trial(&self) -> bool {
        !matches!(self, Criterion::A)
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Criterion::A),
            "B" | "b" => Ok(Criterion::B),
            "C" | "c" => Ok(Criterion::C),
            "combined" => Ok(Criterion::Combined),
            _ => Err(Error::Config(format!("unknown criterion {s:?} (expected A, B, C or combined)"))),
        }
    }
}

/// Lower-block multiplier rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualUpdateMode {
    /// [`Algorithm3`](Self::Algorithm3) when the gossip matrix is
    /// idempotent, [`Plain`](Self::Plain) otherwise.
    #[default]
    Auto,
    /// `lambda_{i+m} <- -sum_t L_it u_{t+m}` (one extra exchange). Its fixed
    /// points are ALM fixed points only when `L^2 = L`.
    Algorithm3,
    /// `lambda_{i+m} <- -u_{i+m}`.
    Plain,
}

impl DualUpdateMode {
    /// Replaces `Auto` by the concrete rule for `gossip`.
    pub fn resolve(self, gossip: &GossipMatrix) -> DualUpdateMode {
        match self {
            DualUpdateMode::Auto if gossip.is_idempotent(1e-10) => DualUpdateMode::Algorithm3,
            DualUpdateMode::Auto => DualUpdateMode::Plain,
            mode => mode,
        }
    }
}

impl FromStr for DualUpdateMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(DualUpdateMode::Auto),
            "algorithm3" => Ok(DualUpdateMode::Algorithm3),
            "plain" => Ok(DualUpdateMode::Plain),
            _ => Err(Error::Config(format!("unknown dual update mode {s:?} (expected auto, algorithm3 or plain)"))),
        }
    }
}

/// Which penalty the multiplier step uses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaIndexMode {
    /// The raised penalty `sigma_{k+1}`.
    #[default]
    Next,
    /// The penalty of the inner problem just solved, `sigma_k`.
    Current,
}

impl FromStr for SigmaIndexMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "next" => Ok(SigmaIndexMode::Next),
            "current" => Ok(SigmaIndexMode::Current),
            _ => Err(Error::Config(format!("unknown sigma index mode {s:?} (expected next or current)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerSolver {
    #[default]
    Newton,
    /// Accelerated gradient, the first-order baseline.
    Dapg,
}

impl FromStr for InnerSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dssnal" | "newton" => Ok(InnerSolver::Newton),
            "dapg" => Ok(InnerSolver::Dapg),
            _ => Err(Error::Config(format!("unknown solver {s:?} (expected dssnal or dapg)"))),
        }
    }
}

/// Outer-loop configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub sigma0: f64,
    pub sigma_growth: f64,
    pub sigma_max: f64,
    pub criterion: Criterion,
    /// `eps_k = delta_k = seq_scale * 2^-k`
    pub seq_scale: f64,
    /// `delta'_k = delta_prime_scale * 2^-k`
    pub delta_prime_scale: f64,
    pub eta_schedule: EtaSchedule,
    pub warm_start_tol: f64,
    pub warm_start_cap: usize,
    pub max_outer: usize,
    pub newton_cap: usize,
    pub newton_patience: usize,
    /// Iteration cap of each first-order inner solve (baseline solver and
    /// Newton fallback).
    pub dapg_cap: usize,
    pub tol: f64,
    pub dual_update: DualUpdateMode,
    pub sigma_index: SigmaIndexMode,
    pub inner: InnerSolver,
    #[serde(skip)]
    pub exec: ExecMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            sigma0: 1.0,
            sigma_growth: 1.5,
            sigma_max: 1e6,
            criterion: Criterion::A,
            seq_scale: 0.5,
            delta_prime_scale: 1.0,
            eta_schedule: EtaSchedule::Geometric,
            warm_start_tol: WARM_START_TOL,
            warm_start_cap: WARM_START_CAP,
            max_outer: 100,
            newton_cap: 50,
            newton_patience: 5,
            dapg_cap: 5000,
            tol: 1e-6,
            dual_update: DualUpdateMode::Auto,
            sigma_index: SigmaIndexMode::Next,
            inner: InnerSolver::Newton,
            exec: ExecMode::Sequential,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.sigma0 > 0.0 && self.sigma0.is_finite()) {
            return bad(format!("sigma0 must be positive, got {}", self.sigma0));
        }
        if !(self.sigma_growth >= 1.0) {
            return bad(format!("sigma_growth must be at least 1, got {}", self.sigma_growth));
        }
        if !(self.sigma_max >= self.sigma0) {
            return bad(format!("sigma_max {} is below sigma0 {}", self.sigma_max, self.sigma0));
        }
        if !(self.seq_scale > 0.0 && self.delta_prime_scale > 0.0) {
            return bad("tolerance sequence scales must be positive".into());
        }
        if !(self.warm_start_tol > 0.0) {
            return bad(format!("warm-start tolerance must be positive, got {}", self.warm_start_tol));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_outer == 0 {
            return bad("max_outer must be at least 1".into());
        }
        Ok(())
    }

    pub fn eps(&self, k: usize) -> f64 {
        self.seq_scale * 0.5f64.powi(k as i32)
    }

    pub fn delta(&self, k: usize) -> f64 {
        self.eps(k)
    }

    pub fn delta_prime(&self, k: usize) -> f64 {
        self.delta_prime_scale * 0.5f64.powi(k as i32)
    }

    fn sigma_after(&self, sigma: f64) -> f64 {
        (sigma * self.sigma_growth).min(self.sigma_max)
    }
}

/// Multipliers `lambda_i` and `lambda_{i+m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub upper: AgentBlocks,
    pub lower: AgentBlocks,
}

/// Outcome of one multiplier step.
#[derive(Debug, Clone)]
pub struct DualUpdate {
    pub duals: DualState,
    /// `||lambda^{k+1} - lambda^k||`
    pub delta_norm: f64,
    pub rounds: u64,
}

/// Exchange rounds of one multiplier step.
pub fn dual_update_rounds(mode: DualUpdateMode, gossip: &GossipMatrix) -> u64 {
    match mode.resolve(gossip) {
        DualUpdateMode::Plain => 1,
        _ => 2,
    }
}

/// `lambda_i <- -clip(sigma x_i - lambda_i, gamma/m)` and the lower block
/// per `mode`, from `u_{i+m} = sigma sum_t L_it x_t - lambda_{i+m}`. One
/// reduction for the step length.
pub fn dual_update(
    net: &mut Network,
    gossip: &GossipMatrix,
    level: Threshold,
    x: &AgentBlocks,
    sigma: f64,
    duals: &DualState,
    mode: DualUpdateMode,
) -> Result<DualUpdate> {
    let (m, n) = (x.agents(), x.dim());
    let mode = mode.resolve(gossip);
    let before = net.ledger().rounds;
    let mut upper = AgentBlocks::zeros(m, n);
    net.for_each_agent(&mut upper, |i, out| {
        let u: Vec<f64> = x
            .block(i)
            .iter()
            .zip(duals.upper.block(i))
            .map(|(&xi, &li)| sigma * xi - li)
            .collect();
        clip_into(&u, level, out);
        out.iter_mut().for_each(|v| *v = -*v);
        Ok(())
    })?;
    let mut u_lower = AgentBlocks::zeros(m, n);
    {
        let ex = net.exchange(x)?;
        net.for_each_agent(&mut u_lower, |i, out| {
            gossip.local_weighted_sum(i, &ex.inbox(i), out)?;
            for (o, &li) in out.iter_mut().zip(duals.lower.block(i)) {
                *o = sigma * *o - li;
            }
            Ok(())
        })?;
    }
    let lower = match mode {
        DualUpdateMode::Plain => {
            let mut lower = u_lower;
            lower.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
            lower
        }
        DualUpdateMode::Algorithm3 | DualUpdateMode::Auto => {
            let mut lower = AgentBlocks::zeros(m, n);
            let ex = net.exchange(&u_lower)?;
            net.for_each_agent(&mut lower, |i, out| {
                gossip.local_weighted_sum(i, &ex.inbox(i), out)?;
                out.iter_mut().for_each(|v| *v = -*v);
                Ok(())
            })?;
            lower
        }
    };
    let locals: Vec<f64> = (0..m)
        .map(|i| {
            let du = sq_dist(upper.block(i), duals.upper.block(i));
            let dl = sq_dist(lower.block(i), duals.lower.block(i));
            du + dl
        })
        .collect();
    let delta_norm = net.reduce_sum(&locals)?.sqrt();
    Ok(DualUpdate {
        duals: DualState { upper, lower },
        delta_norm,
        rounds: net.ledger().rounds - before,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Inputs of the inner acceptance test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopInputs {
    pub grad_phi_norm: f64,
    pub lambda_delta_norm: f64,
    pub sigma: f64,
    pub mu: f64,
    pub k: usize,
}

/// Pure acceptance predicate for outer iteration `k`.
pub fn check_stop(criterion: Criterion, s: &StopInputs, cfg: &SolverConfig) -> bool {
    let g2 = s.grad_phi_norm * s.grad_phi_norm;
    let a = || g2 <= cfg.eps(s.k).powi(2) * s.mu / s.sigma;
    let b = || g2 <= cfg.delta(s.k).powi(2) * s.mu / s.sigma * s.lambda_delta_norm.powi(2);
    let c = || s.grad_phi_norm <= cfg.delta_prime(s.k) / s.sigma * s.lambda_delta_norm;
    match criterion {
        Criterion::A => a(),
        Criterion::B => b(),
        Criterion::C => c(),
        Criterion::Combined => a() && b() && c(),
    }
}

/// Components of the scaled KKT residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResidual {
    pub value: f64,
    pub consensus: f64,
    pub stationarity: f64,
}

/// `(||W x|| + ||x - prox(x - avg grad F(x))||) / (1 + ||x||)`, evaluated in
/// one place (a monitoring gather, not part of the algorithm).
pub fn kkt_residual(x: &AgentBlocks, problem: &ProblemInstance, gossip: &GossipMatrix) -> KktResidual {
    let (m, n) = (x.agents(), x.dim());
    let consensus = gossip.apply(x).norm();
    let mut avg = vec![0.0; n];
    let mut g = vec![0.0; n];
    for i in 0..m {
        problem.agent(i).grad(x.block(i), &mut g);
        for (a, v) in avg.iter_mut().zip(&g) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= m as f64);
    let level = problem.l1_level();
    let mut stat_sq = 0.0;
    for i in 0..m {
        for (xi, a) in x.block(i).iter().zip(&avg) {
            let r = xi - soft_threshold(xi - a, level);
            stat_sq += r * r;
        }
    }
    let stationarity = stat_sq.sqrt();
    KktResidual {
        value: (consensus + stationarity) / (1.0 + x.norm()),
        consensus,
        stationarity,
    }
}

/// One record per outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    #[serde(rename = "R_KKT")]
    pub r_kkt: f64,
    pub grad_phi_norm: f64,
    pub lambda_delta_norm: f64,
    /// `||lambda^{k+1}||`
    pub lambda_norm: f64,
    pub sigma: f64,
    pub inner_newton_iters: usize,
    /// APG iterations inside Newton directions.
    pub apg_iters: usize,
    /// Cumulative exchange rounds at the end of the iteration.
    pub rounds: u64,
    /// Cumulative reductions at the end of the iteration.
    pub reduce_ops: u64,
    pub objective: f64,
    pub consensus_spread: f64,
    /// Gradient evaluations of the warm start (first iteration only).
    pub warm_start_evals: usize,
    /// Gradient evaluations at the start point after a multiplier change.
    pub restart_evals: usize,
    /// Gradient evaluations of first-order inner solves.
    pub dapg_evals: usize,
    /// Trial multiplier steps run by the acceptance test.
    pub trial_dual_updates: usize,
    /// Exchange rounds of the multiplier step itself (0 when a trial step
    /// was reused).
    pub dual_update_rounds: u64,
    pub inner_converged: bool,
    /// The Newton solve stalled and was finished by the first-order method.
    pub fallback: bool,
    pub newton_steps: Vec<NewtonStepRecord>,
}

pub type ConvergenceTrace = Vec<TraceRecord>;

/// Warm-start statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WarmStartInfo {
    pub iterations: usize,
    pub grad_evals: usize,
    pub capped: bool,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub x: AgentBlocks,
    pub w_bar: Vec<f64>,
    pub trace: ConvergenceTrace,
    pub r_kkt: f64,
    pub objective: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub ledger: CommLedger,
    pub warm_start: WarmStartInfo,
    pub duals: DualState,
}

struct Trial {
    x: AgentBlocks,
    update: DualUpdate,
}

/// Runs the outer loop on the simulated network over `graph`.
pub fn solve(
    problem: &ProblemInstance,
    graph: &Graph,
    gossip: &GossipMatrix,
    cfg: &SolverConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if graph.agents() != problem.agents() {
        return Err(Error::InvalidSize(format!(
            "graph has {} agents, problem has {}",
            graph.agents(),
            problem.agents()
        )));
    }
    let dual_mode = cfg.dual_update.resolve(gossip);
    if dual_mode == DualUpdateMode::Algorithm3 && !gossip.is_idempotent(1e-10) {
        warn!("the algorithm3 multiplier rule is only consistent for idempotent gossip matrices; consider the plain rule");
    }
    let mut net = Network::new(graph.clone(), cfg.exec);
    let mut sub = SubproblemState::with_zero_duals(problem, gossip, cfg.sigma0)?;
    let level = problem.l1_level();
    let newton_opts = DissnOptions {
        schedule: cfg.eta_schedule,
        newton_cap: cfg.newton_cap,
        patience: cfg.newton_patience,
    };

    let ws = warm_start(&mut net, &sub, cfg.warm_start_tol, cfg.warm_start_cap)?;
    let warm = WarmStartInfo {
        iterations: ws.iterations,
        grad_evals: ws.grad_evals,
        capped: ws.capped,
    };
    if ws.capped {
        warn!("warm start hit its cap of {} iterations", cfg.warm_start_cap);
    }
    debug!("warm start: {} iterations", ws.iterations);
    let mut start: Option<(PhiPoint, PhiGrad)> = Some((ws.point, ws.grad));
    let mut x = AgentBlocks::zeros(problem.agents(), problem.dim());
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last_kkt = f64::INFINITY;
    let mut last_obj = f64::NAN;

    for k in 0..cfg.max_outer {
        let sigma_k = sub.sigma();
        let sigma_next = cfg.sigma_after(sigma_k);
        let sigma_dual = match cfg.sigma_index {
            SigmaIndexMode::Next => sigma_next,
            SigmaIndexMode::Current => sigma_k,
        };
        let duals = DualState {
            upper: sub.lambda_upper().clone(),
            lower: sub.lambda_lower().clone(),
        };

        let mut restart_evals = 0;
        let (point0, grad0) = match start.take() {
            Some(s) => s,
            None => {
                restart_evals = 1;
                let pt = sub.refresh_u(&mut net, x.clone())?;
                let g = sub.grad_phi(&mut net, &pt)?;
                (pt, g)
            }
        };

        let mut trial: Option<Trial> = None;
        let mut trials = 0usize;
        let (point, grad, steps, dapg_evals, inner_converged, fallback) = {
            let mut stop = |net: &mut Network, sub: &SubproblemState<'_>, pt: &PhiPoint, g: &PhiGrad| -> Result<bool> {
                let mut inputs = StopInputs {
                    grad_phi_norm: g.norm(),
                    lambda_delta_norm: 0.0,
                    sigma: sub.sigma(),
                    mu: sub.constants().mu,
                    k,
                };
                if cfg.criterion.needs_dual_trial() && g.norm_sq > 0.0 {
                    let upd = dual_update(net, gossip, level, pt.x(), sigma_dual, &duals, dual_mode)?;
                    trials += 1;
                    inputs.lambda_delta_norm = upd.delta_norm;
                    trial = Some(Trial {
                        x: pt.x().clone(),
                        update: upd,
                    });
                }
                Ok(check_stop(cfg.criterion, &inputs, cfg))
            };
            match cfg.inner {
                InnerSolver::Newton => {
                    let out = dissn_solve(&mut net, &sub, (point0, grad0), &newton_opts, &mut stop)?;
                    if out.diverged {
                        info!(
                            "outer {k}: Newton stalled at ||grad phi|| = {:.3e}; finishing with accelerated gradient",
                            out.grad.norm()
                        );
                        let x_best = out.point.into_x();
                        let d: DapgOutcome = dapg_run(&mut net, &sub, x_best, &mut stop, cfg.dapg_cap)?;
                        (d.point, d.grad, out.steps, d.grad_evals, !d.capped, true)
                    } else {
                        (out.point, out.grad, out.steps, 0, out.converged, false)
                    }
                }
                InnerSolver::Dapg => {
                    let d = dapg_run(&mut net, &sub, point0.into_x(), &mut stop, cfg.dapg_cap)?;
                    (d.point, d.grad, Vec::new(), d.grad_evals, !d.capped, false)
                }
            }
        };

        x = point.into_x();
        let reused = trial.filter(|t| t.x == x);
        let (update, dual_update_rounds) = match reused {
            Some(t) => (t.update, 0),
            None => {
                let u = dual_update(&mut net, gossip, level, &x, sigma_dual, &duals, dual_mode)?;
                let r = u.rounds;
                (u, r)
            }
        };

        let kkt = kkt_residual(net.gather(&x), problem, gossip);
        let w_bar = x.mean_block();
        let objective = problem.objective(&w_bar);
        let lambda_norm = update.duals.upper.norm().hypot(update.duals.lower.norm());
        last_kkt = kkt.value;
        last_obj = objective;

        sub.set_duals(update.duals.upper, update.duals.lower)?;
        sub.set_sigma(sigma_next)?;

        let ledger = net.ledger();
        let apg_iters = steps.iter().map(|s| s.budget).sum();
        info!(
            "outer {k}: R_KKT={:.3e} |grad phi|={:.3e} sigma={sigma_k:.3e} newton={} apg={apg_iters} rounds={}",
            kkt.value,
            grad.norm(),
            steps.len(),
            ledger.rounds
        );
        trace.push(TraceRecord {
            iteration: k,
            r_kkt: kkt.value,
            grad_phi_norm: grad.norm(),
            lambda_delta_norm: update.delta_norm,
            lambda_norm,
            sigma: sigma_k,
            inner_newton_iters: steps.len(),
            apg_iters,
            rounds: ledger.rounds,
            reduce_ops: ledger.reduce_ops,
            objective,
            consensus_spread: x.consensus_spread(),
            warm_start_evals: if k == 0 { warm.grad_evals } else { 0 },
            restart_evals,
            dapg_evals,
            trial_dual_updates: trials,
            dual_update_rounds,
            inner_converged,
            fallback,
            newton_steps: steps,
        });
        if kkt.value < cfg.tol {
            converged = true;
            break;
        }
    }

    let w_bar = x.mean_block();
    Ok(SolveResult {
        outer_iterations: trace.len(),
        r_kkt: last_kkt,
        objective: last_obj,
        converged,
        ledger: net.ledger(),
        warm_start: warm,
        duals: DualState {
            upper: sub.lambda_upper().clone(),
            lower: sub.lambda_lower().clone(),
        },
        x,
        w_bar,
        trace,
    })
}
