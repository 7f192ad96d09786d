//! The inner objective `phi` of one augmented-Lagrangian iteration, for a
//! fixed penalty `sigma` and multipliers `lambda = (lambda_upper, lambda_lower)`:
//!
//! ```text
//! grad phi(x)_i = grad f_i(x_i) + clip(u_i) + sum_k L_ik u_{k+m}
//! u_i     = sigma x_i - lambda_i
//! u_{i+m} = sigma sum_k L_ik x_k - lambda_{i+m}
//! ```
//!
//! Every oracle goes through the network; gradients cost two exchange
//! rounds (`x`, then `u_lower`) and so do Hessian products (`d`, then `W d`).

use crate::blocks::{axpy, AgentBlocks};
use crate::error::{Error, Result};
use crate::netsim::Network;
use crate::problems::{HessianSelection, LocalObjective, ProblemInstance, ProxSelection, SmoothnessConstants};
use crate::topology::GossipMatrix;

/// Strong-convexity and smoothness constants of `phi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiConstants {
    pub mu: f64,
    pub l: f64,
}

/// `mu = min_i mu_i`, `L = max_i L_i + sigma (1 + lambda_max(L)^2)`.
pub fn phi_constants(sc: &SmoothnessConstants, sigma: f64, gossip: &GossipMatrix) -> PhiConstants {
    PhiConstants {
        mu: sc.mu,
        l: sc.l_f + sigma * gossip.b_norm_sq(),
    }
}

/// `u` caches at one point, tied to the state epoch they were computed in.
#[derive(Debug, Clone)]
pub struct PhiPoint {
    epoch: u64,
    x: AgentBlocks,
    u_upper: AgentBlocks,
    u_lower: AgentBlocks,
}

impl PhiPoint {
    pub fn x(&self) -> &AgentBlocks {
        &self.x
    }

    pub fn into_x(self) -> AgentBlocks {
        self.x
    }

    pub fn u_upper(&self) -> &AgentBlocks {
        &self.u_upper
    }

    pub fn u_lower(&self) -> &AgentBlocks {
        &self.u_lower
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }
}

/// `grad phi` blocks with the global squared norm.
#[derive(Debug, Clone)]
pub struct PhiGrad {
    pub blocks: AgentBlocks,
    pub norm_sq: f64,
}

impl PhiGrad {
    pub fn norm(&self) -> f64 {
        self.norm_sq.sqrt()
    }
}

/// Generalized-Jacobian selections frozen at a Newton point.
#[derive(Debug, Clone)]
pub struct NewtonSelection {
    epoch: u64,
    v: Vec<HessianSelection>,
    h: Vec<ProxSelection>,
}

impl NewtonSelection {
    pub fn hessian(&self, i: usize) -> &HessianSelection {
        &self.v[i]
    }

    pub fn prox(&self, i: usize) -> &ProxSelection {
        &self.h[i]
    }
}

/// Fixed `(sigma, lambda)` with the derived constants of `phi`.
#[derive(Debug, Clone)]
pub struct SubproblemState<'a> {
    problem: &'a ProblemInstance,
    gossip: &'a GossipMatrix,
    smooth: SmoothnessConstants,
    sigma: f64,
    lambda_upper: AgentBlocks,
    lambda_lower: AgentBlocks,
    consts: PhiConstants,
    epoch: u64,
}

impl<'a> SubproblemState<'a> {
    pub fn new(
        problem: &'a ProblemInstance,
        gossip: &'a GossipMatrix,
        sigma: f64,
        lambda_upper: AgentBlocks,
        lambda_lower: AgentBlocks,
    ) -> Result<Self> {
        if gossip.agents() != problem.agents() {
            return Err(Error::InvalidSize(format!(
                "gossip matrix is {0}x{0} for {1} agents",
                gossip.agents(),
                problem.agents()
            )));
        }
        let shape = (problem.agents(), problem.dim());
        for lam in [&lambda_upper, &lambda_lower] {
            if (lam.agents(), lam.dim()) != shape {
                return Err(Error::InvalidSize(format!(
                    "multiplier has shape {}x{}, expected {}x{}",
                    lam.agents(),
                    lam.dim(),
                    shape.0,
                    shape.1
                )));
            }
        }
        check_sigma(sigma)?;
        let smooth = problem.smoothness_constants();
        let consts = phi_constants(&smooth, sigma, gossip);
        Ok(SubproblemState {
            problem,
            gossip,
            smooth,
            sigma,
            lambda_upper,
            lambda_lower,
            consts,
            epoch: 0,
        })
    }

    /// Zero multipliers.
    pub fn with_zero_duals(problem: &'a ProblemInstance, gossip: &'a GossipMatrix, sigma: f64) -> Result<Self> {
        let (m, n) = (problem.agents(), problem.dim());
        Self::new(problem, gossip, sigma, AgentBlocks::zeros(m, n), AgentBlocks::zeros(m, n))
    }

    pub fn problem(&self) -> &'a ProblemInstance {
        self.problem
    }

    pub fn gossip(&self) -> &'a GossipMatrix {
        self.gossip
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda_upper(&self) -> &AgentBlocks {
        &self.lambda_upper
    }

    pub fn lambda_lower(&self) -> &AgentBlocks {
        &self.lambda_lower
    }

    pub fn constants(&self) -> PhiConstants {
        self.consts
    }

    pub fn smoothness(&self) -> &SmoothnessConstants {
        &self.smooth
    }

    /// Bumped whenever `sigma` or `lambda` change; older caches go stale.
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn set_sigma(&mut self, sigma: f64) -> Result<()> {
        check_sigma(sigma)?;
        self.sigma = sigma;
        self.consts = phi_constants(&self.smooth, sigma, self.gossip);
        self.epoch += 1;
        Ok(())
    }

    pub fn set_duals(&mut self, lambda_upper: AgentBlocks, lambda_lower: AgentBlocks) -> Result<()> {
        if !lambda_upper.same_shape(&self.lambda_upper) || !lambda_lower.same_shape(&self.lambda_lower) {
            return Err(Error::InvalidSize("multiplier shape changed".into()));
        }
        self.lambda_upper = lambda_upper;
        self.lambda_lower = lambda_lower;
        self.epoch += 1;
        Ok(())
    }

    fn check_point(&self, epoch: u64) -> Result<()> {
        if epoch == self.epoch {
            Ok(())
        } else {
            Err(Error::StaleCache {
                point: epoch,
                state: self.epoch,
            })
        }
    }

    /// Computes `u_upper` locally and `u_lower` after one exchange of `x`.
    pub fn refresh_u(&self, net: &mut Network, x: AgentBlocks) -> Result<PhiPoint> {
        let (m, n) = (self.problem.agents(), self.problem.dim());
        if (x.agents(), x.dim()) != (m, n) {
            return Err(Error::InvalidSize(format!(
                "iterate has shape {}x{}, expected {m}x{n}",
                x.agents(),
                x.dim()
            )));
        }
        let sigma = self.sigma;
        let mut u_upper = AgentBlocks::zeros(m, n);
        net.for_each_agent(&mut u_upper, |i, out| {
            for ((o, &xi), &li) in out.iter_mut().zip(x.block(i)).zip(self.lambda_upper.block(i)) {
                *o = sigma * xi - li;
            }
            Ok(())
        })?;
        let mut u_lower = AgentBlocks::zeros(m, n);
        {
            let ex = net.exchange(&x)?;
            net.for_each_agent(&mut u_lower, |i, out| {
                self.gossip.local_weighted_sum(i, &ex.inbox(i), out)?;
                for (o, &li) in out.iter_mut().zip(self.lambda_lower.block(i)) {
                    *o = sigma * *o - li;
                }
                Ok(())
            })?;
        }
        Ok(PhiPoint {
            epoch: self.epoch,
            x,
            u_upper,
            u_lower,
        })
    }

    /// `grad phi` at a refreshed point: one exchange of `u_lower` and one
    /// reduction for the norm.
    pub fn grad_phi(&self, net: &mut Network, point: &PhiPoint) -> Result<PhiGrad> {
        self.check_point(point.epoch)?;
        let (m, n) = (self.problem.agents(), self.problem.dim());
        let level = self.problem.l1_level();
        let mut blocks = AgentBlocks::zeros(m, n);
        {
            let ex = net.exchange(&point.u_lower)?;
            net.for_each_agent(&mut blocks, |i, out| {
                self.gossip.local_weighted_sum(i, &ex.inbox(i), out)?;
                let agent = self.problem.agent(i);
                let mut scratch = vec![0.0; n];
                agent.grad(point.x.block(i), &mut scratch);
                axpy(1.0, &scratch, out);
                crate::prox::clip_into(point.u_upper.block(i), level, &mut scratch);
                axpy(1.0, &scratch, out);
                Ok(())
            })?;
        }
        let norm_sq = net.reduce_norm_sq(&blocks)?;
        Ok(PhiGrad { blocks, norm_sq })
    }

    /// Freezes `V_i` at `x_i` and `H_i` at `u_i`. Purely local.
    pub fn select_newton(&self, net: &Network, point: &PhiPoint) -> Result<NewtonSelection> {
        self.check_point(point.epoch)?;
        let pairs = net.map_agents(|i| {
            let agent = self.problem.agent(i);
            Ok((
                agent.select_hessian(point.x.block(i)),
                agent.select_prox_jacobian(point.u_upper.block(i), self.sigma),
            ))
        })?;
        let (v, h) = pairs.into_iter().unzip();
        Ok(NewtonSelection {
            epoch: self.epoch,
            v,
            h,
        })
    }

    /// `M d = V d + sigma H d + sigma W^2 d` with frozen selections.
    /// Two exchange rounds: `d`, then `d_hat = W d`.
    pub fn hessian_matvec(&self, net: &mut Network, sel: &NewtonSelection, d: &AgentBlocks) -> Result<AgentBlocks> {
        self.check_point(sel.epoch)?;
        let (m, n) = (self.problem.agents(), self.problem.dim());
        let sigma = self.sigma;
        let mut d_hat = AgentBlocks::zeros(m, n);
        {
            let ex = net.exchange(d)?;
            net.for_each_agent(&mut d_hat, |i, out| self.gossip.local_weighted_sum(i, &ex.inbox(i), out))?;
        }
        let mut out_blocks = AgentBlocks::zeros(m, n);
        {
            let ex = net.exchange(&d_hat)?;
            net.for_each_agent(&mut out_blocks, |i, out| {
                self.gossip.local_weighted_sum(i, &ex.inbox(i), out)?;
                out.iter_mut().for_each(|v| *v *= sigma);
                let agent = self.problem.agent(i);
                let di = d.block(i);
                let mut scratch = vec![0.0; n];
                agent.hess_matvec_with(&sel.v[i], di, &mut scratch);
                axpy(1.0, &scratch, out);
                agent.prox_conj_jac_matvec(&sel.h[i], di, &mut scratch);
                axpy(sigma, &scratch, out);
                Ok(())
            })?;
        }
        Ok(out_blocks)
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("sigma must be positive and finite, got {sigma}")))
    }
}
