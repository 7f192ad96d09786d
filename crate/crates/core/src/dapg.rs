//! Distributed accelerated proximal gradient on `phi`.
//!
//! Each iteration extrapolates, refreshes `u` at the extrapolated point and
//! takes a `1/L` gradient step there: two exchange rounds. Used as the warm
//! start of the Newton solver and as a first-order inner solver.

use crate::blocks::{axpy, AgentBlocks};
use crate::error::{Error, Result};
use crate::netsim::Network;
use crate::subproblem::{PhiGrad, PhiPoint, SubproblemState};

/// `(sqrt(L) - sqrt(mu)) / (sqrt(L) + sqrt(mu))`.
pub fn beta_of(mu: f64, l: f64) -> Result<f64> {
    if !(mu > 0.0 && mu <= l && l.is_finite()) {
        return Err(Error::Parameter(format!(
            "momentum needs 0 < mu <= L, got mu={mu}, L={l}"
        )));
    }
    let (a, b) = (l.sqrt(), mu.sqrt());
    Ok((a - b) / (a + b))
}

/// Iterate pair of the momentum recursion.
#[derive(Debug, Clone)]
pub struct MomentumState {
    pub x_curr: AgentBlocks,
    pub x_prev: AgentBlocks,
    pub beta: f64,
    pub step: f64,
    pub j: usize,
}

impl MomentumState {
    /// Starts at `x0` with zero momentum.
    pub fn start(x0: AgentBlocks, sub: &SubproblemState<'_>) -> Result<Self> {
        let c = sub.constants();
        Ok(MomentumState {
            x_prev: x0.clone(),
            x_curr: x0,
            beta: beta_of(c.mu, c.l)?,
            step: 1.0 / c.l,
            j: 0,
        })
    }

    /// `x + beta (x - x_prev)`, computed locally by every agent.
    pub fn extrapolated(&self) -> AgentBlocks {
        let mut xt = self.x_curr.clone();
        for ((t, &x), &p) in xt
            .as_mut_slice()
            .iter_mut()
            .zip(self.x_curr.as_slice())
            .zip(self.x_prev.as_slice())
        {
            *t = x + self.beta * (x - p);
        }
        xt
    }

    /// Accepts the gradient step from the extrapolated point.
    fn advance(&mut self, point: &PhiPoint, grad: &PhiGrad) {
        let mut next = point.x().clone();
        axpy(-self.step, grad.blocks.as_slice(), next.as_mut_slice());
        self.x_prev = std::mem::replace(&mut self.x_curr, next);
        self.j += 1;
    }
}

/// One accelerated step; returns the refreshed extrapolated point and the
/// gradient used for the step.
pub fn dapg_iterate(
    net: &mut Network,
    state: &mut MomentumState,
    sub: &SubproblemState<'_>,
) -> Result<(PhiPoint, PhiGrad)> {
    let point = sub.refresh_u(net, state.extrapolated())?;
    let grad = sub.grad_phi(net, &point)?;
    state.advance(&point, &grad);
    Ok((point, grad))
}

/// Result of a tolerance-driven run.
#[derive(Debug, Clone)]
pub struct DapgOutcome {
    /// Point that met the stop test (or the last evaluated point), with its
    /// fresh caches and gradient.
    pub point: PhiPoint,
    pub grad: PhiGrad,
    /// Accelerated steps taken.
    pub iterations: usize,
    /// Gradient evaluations, two exchange rounds each.
    pub grad_evals: usize,
    pub capped: bool,
}

/// Stop test evaluated on a freshly refreshed point and its gradient. It may
/// communicate.
pub type StopTest<'s> =
    dyn FnMut(&mut Network, &SubproblemState<'_>, &PhiPoint, &PhiGrad) -> Result<bool> + 's;

/// Runs the recursion from `x0`, testing every extrapolated point before
/// stepping from it. Returns the first accepted point.
pub fn dapg_run(
    net: &mut Network,
    sub: &SubproblemState<'_>,
    x0: AgentBlocks,
    stop: &mut StopTest<'_>,
    cap: usize,
) -> Result<DapgOutcome> {
    let mut state = MomentumState::start(x0, sub)?;
    let mut grad_evals = 0;
    loop {
        let point = sub.refresh_u(net, state.extrapolated())?;
        let grad = sub.grad_phi(net, &point)?;
        grad_evals += 1;
        let done = stop(net, sub, &point, &grad)?;
        if done || state.j >= cap {
            return Ok(DapgOutcome {
                point,
                grad,
                iterations: state.j,
                grad_evals,
                capped: !done,
            });
        }
        state.advance(&point, &grad);
    }
}

/// Default warm-start tolerance on `||grad phi(x)|| / (1 + ||x||)`.
pub const WARM_START_TOL: f64 = 0.5;
/// Default warm-start iteration cap.
pub const WARM_START_CAP: usize = 5000;

/// Runs from zero until `||grad phi(x)|| / (1 + ||x||) <= tol_ws`. The norm
/// of `x` costs one reduction per test.
pub fn warm_start(
    net: &mut Network,
    sub: &SubproblemState<'_>,
    tol_ws: f64,
    cap: usize,
) -> Result<DapgOutcome> {
    if !(tol_ws > 0.0) {
        return Err(Error::Parameter(format!("warm-start tolerance must be positive, got {tol_ws}")));
    }
    let p = sub.problem();
    let x0 = AgentBlocks::zeros(p.agents(), p.dim());
    let mut stop = |net: &mut Network, _: &SubproblemState<'_>, pt: &PhiPoint, g: &PhiGrad| -> Result<bool> {
        if tol_ws.is_infinite() {
            return Ok(true);
        }
        let x_norm = net.reduce_norm_sq(pt.x())?.sqrt();
        Ok(g.norm() <= tol_ws * (1.0 + x_norm))
    };
    dapg_run(net, sub, x0, &mut stop, cap)
}
