//! Inexact semismooth Newton on `phi` without line search.
//!
//! Each step freezes the generalized-Jacobian selections at `x`, runs a
//! fixed number of accelerated gradient iterations on the Newton model
//! `q(d) = <d, M d>/2 + <grad phi(x), d>`, certifies the relative residual
//! with one extra product and takes the unit step.

use serde::{Deserialize, Serialize};

use crate::blocks::{axpy, AgentBlocks};
use crate::dapg::{beta_of, StopTest};
use crate::error::{Error, Result};
use crate::netsim::Network;
use crate::subproblem::{PhiGrad, PhiPoint, SubproblemState};

/// APG iterations that guarantee `||M d + g|| <= eta ||g||` when the
/// spectrum of `M` lies in `[mu, L]`:
/// `ceil(2 ln(sqrt(2L/mu)/eta) / ln(1/(1 - sqrt(mu/L))))`, and 1 when `mu = L`.
pub fn apg_budget(eta: f64, mu: f64, l: f64) -> Result<usize> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::Parameter(format!("forcing term must lie in (0, 1), got {eta}")));
    }
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(Error::Parameter(format!("budget needs 0 < mu <= L, got mu={mu}, L={l}")));
    }
    if mu == l {
        return Ok(1);
    }
    let q = (mu / l).sqrt();
    let num = 2.0 * ((2.0 * l / mu).sqrt() / eta).ln();
    let den = -(-q).ln_1p();
    Ok((num / den).ceil().max(1.0) as usize)
}

/// Forcing-term schedule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EtaSchedule {
    /// `min(0.5, 0.5^(t+1))`
    #[default]
    Geometric,
    /// `min(0.5, ||grad phi(x_t)||)`, floored at [`ETA_FLOOR`].
    Quadratic,
}

/// Smallest forcing term the quadratic schedule hands out.
pub const ETA_FLOOR: f64 = 1e-12;

impl EtaSchedule {
    pub fn eta(&self, t: usize, grad_norm: f64) -> f64 {
        match self {
            EtaSchedule::Geometric => 0.5f64.powi(t as i32 + 1).min(0.5),
            EtaSchedule::Quadratic => grad_norm.clamp(ETA_FLOOR, 0.5),
        }
    }
}

impl std::str::FromStr for EtaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(EtaSchedule::Geometric),
            "quadratic" => Ok(EtaSchedule::Quadratic),
            _ => Err(Error::Config(format!("unknown eta schedule {s:?}"))),
        }
    }
}

/// Certified Newton direction.
#[derive(Debug, Clone)]
pub struct Direction {
    pub d: AgentBlocks,
    /// APG iterations run, equal to the budget.
    pub iterations: usize,
    /// `||M d + g|| / ||g||`
    pub residual_ratio: f64,
}

/// Runs exactly `apg_budget(eta)` iterations of the momentum recursion on
/// the Newton model and certifies the result. A certificate failure is a
/// [`Error::BudgetMiss`].
pub fn newton_direction(
    net: &mut Network,
    sub: &SubproblemState<'_>,
    point: &PhiPoint,
    grad: &PhiGrad,
    eta: f64,
) -> Result<Direction> {
    let (m, n) = (grad.blocks.agents(), grad.blocks.dim());
    if grad.norm_sq == 0.0 {
        return Ok(Direction {
            d: AgentBlocks::zeros(m, n),
            iterations: 0,
            residual_ratio: 0.0,
        });
    }
    let c = sub.constants();
    let budget = apg_budget(eta, c.mu, c.l)?;
    let beta = beta_of(c.mu, c.l)?;
    let step = 1.0 / c.l;
    let sel = sub.select_newton(net, point)?;

    let mut d = AgentBlocks::zeros(m, n);
    let mut d_prev = AgentBlocks::zeros(m, n);
    for _ in 0..budget {
        let mut d_tilde = d.clone();
        for ((t, &a), &b) in d_tilde
            .as_mut_slice()
            .iter_mut()
            .zip(d.as_slice())
            .zip(d_prev.as_slice())
        {
            *t = a + beta * (a - b);
        }
        let mut r = sub.hessian_matvec(net, &sel, &d_tilde)?;
        axpy(1.0, grad.blocks.as_slice(), r.as_mut_slice());
        axpy(-step, r.as_slice(), d_tilde.as_mut_slice());
        d_prev = std::mem::replace(&mut d, d_tilde);
    }

    let mut r = sub.hessian_matvec(net, &sel, &d)?;
    axpy(1.0, grad.blocks.as_slice(), r.as_mut_slice());
    let residual_ratio = (net.reduce_norm_sq(&r)? / grad.norm_sq).sqrt();
    if !(residual_ratio <= eta) {
        return Err(Error::BudgetMiss {
            ratio: residual_ratio,
            eta,
            iterations: budget,
        });
    }
    Ok(Direction {
        d,
        iterations: budget,
        residual_ratio,
    })
}

/// Unit step `x + d`.
pub fn dissn_step(x: &AgentBlocks, d: &AgentBlocks) -> AgentBlocks {
    let mut next = x.clone();
    axpy(1.0, d.as_slice(), next.as_mut_slice());
    next
}

/// Per-step record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStepRecord {
    pub t: usize,
    pub eta: f64,
    pub budget: usize,
    pub residual_ratio: f64,
    /// `||grad phi||` at the point the step was taken from.
    pub grad_norm: f64,
    /// Exchange rounds spent on the direction, its certificate and the
    /// gradient at the new point.
    pub rounds: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissnOptions {
    pub schedule: EtaSchedule,
    pub newton_cap: usize,
    /// Steps without improving the best gradient norm before giving up.
    pub patience: usize,
}

impl Default for DissnOptions {
    fn default() -> Self {
        DissnOptions {
            schedule: EtaSchedule::Geometric,
            newton_cap: 50,
            patience: 5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DissnOutcome {
    /// Final point: the accepted one, or the best seen when the run diverged.
    pub point: PhiPoint,
    pub grad: PhiGrad,
    pub steps: Vec<NewtonStepRecord>,
    pub converged: bool,
    pub capped: bool,
    /// The gradient norm failed to improve for `patience` steps; the start
    /// point was likely outside the local convergence region.
    pub diverged: bool,
}

/// Newton iterations from a refreshed start point until `stop` accepts, the
/// step cap trips, or divergence is detected.
pub fn dissn_solve(
    net: &mut Network,
    sub: &SubproblemState<'_>,
    start: (PhiPoint, PhiGrad),
    opts: &DissnOptions,
    stop: &mut StopTest<'_>,
) -> Result<DissnOutcome> {
    let (mut point, mut grad) = start;
    let mut steps = Vec::new();
    let mut best: Option<(PhiPoint, PhiGrad)> = None;
    let mut stall = 0;
    let mut t = 0;
    loop {
        if grad.norm_sq == 0.0 || stop(net, sub, &point, &grad)? {
            return Ok(DissnOutcome {
                point,
                grad,
                steps,
                converged: true,
                capped: false,
                diverged: false,
            });
        }
        match &best {
            Some((_, g)) if grad.norm_sq >= g.norm_sq => stall += 1,
            _ => {
                stall = 0;
                best = Some((point.clone(), grad.clone()));
            }
        }
        let diverged = stall >= opts.patience;
        if diverged || t >= opts.newton_cap {
            let (point, grad) = if diverged { best.expect("best is set") } else { (point, grad) };
            return Ok(DissnOutcome {
                point,
                grad,
                steps,
                converged: false,
                capped: !diverged,
                diverged,
            });
        }

        let rounds_before = net.ledger().rounds;
        let grad_norm = grad.norm();
        let eta = opts.schedule.eta(t, grad_norm);
        let dir = newton_direction(net, sub, &point, &grad, eta)?;
        let x_next = dissn_step(point.x(), &dir.d);
        point = sub.refresh_u(net, x_next)?;
        grad = sub.grad_phi(net, &point)?;
        steps.push(NewtonStepRecord {
            t,
            eta,
            budget: dir.iterations,
            residual_ratio: dir.residual_ratio,
            grad_norm,
            rounds: net.ledger().rounds - rounds_before,
        });
        t += 1;
    }
}
