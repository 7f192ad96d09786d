//! Problem families: per-agent smooth losses `f_i` with an L1 term
//! `g_i = (gamma/m) ||.||_1`.
//!
//! Both families put `(rho / 2m) ||w||^2` into every `f_i`, so each `f_i` is
//! `(rho/m)`-strongly convex. Generalized Hessians are applied matrix-free
//! from a per-sample weight vector frozen at the selection point.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::{axpy, dot};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::prox::{clip, clip_jacobian, relu_jacobian, Threshold};

/// Loss family with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// Huber loss with clip level `nu`.
    Huber { nu: f64 },
    /// Squared hinge loss with weight `c`.
    Svc { c: f64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Huber { .. } => "huber",
            Family::Svc { .. } => "svc",
        }
    }
}

/// Generalized-Hessian selection of `∇f_i` frozen at a point: one weight
/// per local sample (`D(r_j)/nu` for Huber, `2C P(1 - b_j a_j^T w)` for SVC).
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSelection {
    weights: Vec<f64>,
}

impl HessianSelection {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Diagonal generalized-Jacobian selection of `Prox_{sigma g_i^*}`, entries in `{0, 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxSelection {
    diag: Vec<f64>,
}

impl ProxSelection {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }
}

/// Oracles of one agent's local objective `f_i + g_i`.
pub trait LocalObjective {
    fn dim(&self) -> usize;

    /// `f_i(w)`.
    fn value(&self, w: &[f64]) -> f64;

    /// `g_i(w)`.
    fn reg_value(&self, w: &[f64]) -> f64;

    fn grad(&self, w: &[f64], out: &mut [f64]);

    fn select_hessian(&self, w: &[f64]) -> HessianSelection;

    /// `V_i d` for the frozen selection.
    fn hess_matvec_with(&self, sel: &HessianSelection, d: &[f64], out: &mut [f64]);

    fn hess_matvec(&self, w: &[f64], d: &[f64], out: &mut [f64]) {
        let sel = self.select_hessian(w);
        self.hess_matvec_with(&sel, d, out);
    }

    /// `Prox_{sigma g_i^*}(u)`.
    fn prox_conj(&self, u: &[f64], sigma: f64, out: &mut [f64]);

    fn select_prox_jacobian(&self, u: &[f64], sigma: f64) -> ProxSelection;

    /// `H_i d` for the frozen selection.
    fn prox_conj_jac_matvec(&self, sel: &ProxSelection, d: &[f64], out: &mut [f64]) {
        for ((o, &h), &v) in out.iter_mut().zip(&sel.diag).zip(d) {
            *o = h * v;
        }
    }

    /// Strong-convexity modulus `mu_i`.
    fn mu(&self) -> f64;

    /// Smoothness modulus `L_i`.
    fn lipschitz(&self) -> f64;
}

/// One agent's share of the data and parameters.
#[derive(Debug, Clone)]
pub struct AgentObjective {
    family: Family,
    n: usize,
    rows: Vec<f64>,
    labels: Vec<f64>,
    /// `rho / m`
    ridge: f64,
    l1_level: Threshold,
    gram_bound: f64,
}

impl AgentObjective {
    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.n..(j + 1) * self.n]
    }

    /// Upper estimate of `lambda_max(sum_j a_j a_j^T)` over local samples.
    pub fn gram_bound(&self) -> f64 {
        self.gram_bound
    }

    pub fn l1_level(&self) -> Threshold {
        self.l1_level
    }

    fn loss_scale(&self) -> f64 {
        match self.family {
            Family::Huber { nu } => 1.0 / nu,
            Family::Svc { c } => 2.0 * c,
        }
    }
}

impl LocalObjective for AgentObjective {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, w: &[f64]) -> f64 {
        let loss: f64 = (0..self.samples())
            .map(|j| {
                let a = self.row(j);
                let b = self.labels[j];
                match self.family {
                    Family::Huber { nu } => {
                        let r = dot(a, w) - b;
                        if r.abs() <= nu {
                            r * r / (2.0 * nu)
                        } else {
                            r.abs() - nu / 2.0
                        }
                    }
                    Family::Svc { c } => c * (1.0 - b * dot(a, w)).max(0.0).powi(2),
                }
            })
            .sum();
        loss + 0.5 * self.ridge * dot(w, w)
    }

    fn reg_value(&self, w: &[f64]) -> f64 {
        self.l1_level.value() * w.iter().map(|v| v.abs()).sum::<f64>()
    }

    fn grad(&self, w: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(w) {
            *o = self.ridge * v;
        }
        for j in 0..self.samples() {
            let a = self.row(j);
            let b = self.labels[j];
            let coef = match self.family {
                Family::Huber { nu } => clip(dot(a, w) - b, Threshold(nu)) / nu,
                Family::Svc { c } => -2.0 * c * (1.0 - b * dot(a, w)).max(0.0) * b,
            };
            if coef != 0.0 {
                axpy(coef, a, out);
            }
        }
    }

    fn select_hessian(&self, w: &[f64]) -> HessianSelection {
        let scale = self.loss_scale();
        let weights = (0..self.samples())
            .map(|j| {
                let a = self.row(j);
                let b = self.labels[j];
                scale
                    * match self.family {
                        Family::Huber { nu } => clip_jacobian(dot(a, w) - b, Threshold(nu)),
                        Family::Svc { .. } => relu_jacobian(1.0 - b * dot(a, w)),
                    }
            })
            .collect();
        HessianSelection { weights }
    }

    fn hess_matvec_with(&self, sel: &HessianSelection, d: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(d) {
            *o = self.ridge * v;
        }
        for (j, &wt) in sel.weights.iter().enumerate() {
            if wt != 0.0 {
                let a = self.row(j);
                axpy(wt * dot(a, d), a, out);
            }
        }
    }

    fn prox_conj(&self, u: &[f64], _sigma: f64, out: &mut [f64]) {
        crate::prox::clip_into(u, self.l1_level, out);
    }

    fn select_prox_jacobian(&self, u: &[f64], _sigma: f64) -> ProxSelection {
        ProxSelection {
            diag: u.iter().map(|&t| clip_jacobian(t, self.l1_level)).collect(),
        }
    }

    fn mu(&self) -> f64 {
        self.ridge
    }

    fn lipschitz(&self) -> f64 {
        self.ridge + self.loss_scale() * self.gram_bound
    }
}

/// Power-iteration budget for the Gram-matrix bound.
pub const POWER_ITERS: usize = 50;
/// Relative change in the Rayleigh quotient that counts as converged.
pub const POWER_RTOL: f64 = 1e-6;

/// Upper estimate of `lambda_max(A^T A)` for row-major `rows` (`k x n`).
///
/// Power iteration on `A^T A`; the Rayleigh quotient plus the residual norm
/// bounds the eigenvalue the iterate has converged to. Falls back to the
/// Frobenius bound `||A||_F^2` when the iteration has not settled, and never
/// exceeds it.
pub fn gram_lambda_max(rows: &[f64], n: usize) -> f64 {
    if rows.is_empty() || n == 0 {
        return 0.0;
    }
    let k = rows.len() / n;
    let frob: f64 = dot(rows, rows);
    let apply = |x: &[f64], out: &mut [f64]| {
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..k {
            let a = &rows[j * n..(j + 1) * n];
            axpy(dot(a, x), a, out);
        }
    };
    let mut x: Vec<f64> = (0..n).map(|j| 1.0 + 0.01 * j as f64).collect();
    let nx = dot(&x, &x).sqrt();
    x.iter_mut().for_each(|v| *v /= nx);
    let mut y = vec![0.0; n];
    let mut theta_prev = f64::NAN;
    for _ in 0..POWER_ITERS {
        apply(&x, &mut y);
        let theta = dot(&x, &y);
        let ny = dot(&y, &y).sqrt();
        if ny == 0.0 {
            return 0.0;
        }
        let residual: f64 = y
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - theta * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if (theta - theta_prev).abs() <= POWER_RTOL * theta {
            return (theta + residual).min(frob);
        }
        theta_prev = theta;
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    frob
}

/// How samples are assigned to agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Partition {
    /// Consecutive blocks; sizes differ by at most one.
    #[default]
    Contiguous,
    /// Seeded random shuffle, then contiguous blocks.
    Random(u64),
}

/// Disjoint index sets `J_1, ..., J_m` covering `0..s`.
pub fn partition_indices(s: usize, m: usize, how: Partition) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..s).collect();
    if let Partition::Random(seed) = how {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let base = s / m;
    let extra = s % m;
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    for i in 0..m {
        let len = base + usize::from(i < extra);
        out.push(order[start..start + len].to_vec());
        start += len;
    }
    out
}

/// Constants of the local objectives and of `F = sum_i f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothnessConstants {
    /// `min_i mu_i`
    pub mu: f64,
    /// `max_i L_i`
    pub l_f: f64,
    pub mu_i: Vec<f64>,
    pub l_i: Vec<f64>,
}

/// Partitioned dataset with family parameters.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    n: usize,
    m: usize,
    family: Family,
    rho: f64,
    gamma: f64,
    partition: Vec<Vec<usize>>,
    agents: Vec<AgentObjective>,
}

impl ProblemInstance {
    pub fn new(
        data: &Dataset,
        m: usize,
        family: Family,
        rho: f64,
        gamma: f64,
        partition: Partition,
    ) -> Result<Self> {
        let parts = partition_indices(data.samples(), m.max(1), partition);
        Self::with_partition(data, m, family, rho, gamma, parts)
    }

    /// Uses the given index sets, which must be disjoint and cover every sample.
    pub fn with_partition(
        data: &Dataset,
        m: usize,
        family: Family,
        rho: f64,
        gamma: f64,
        partition: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if m == 0 || partition.len() != m {
            return Err(Error::InvalidSize(format!(
                "partition has {} parts for {m} agents",
                partition.len()
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::Parameter(format!("gamma must be nonnegative, got {gamma}")));
        }
        match family {
            Family::Huber { nu } if !(nu > 0.0 && nu.is_finite()) => {
                return Err(Error::Parameter(format!("nu must be positive, got {nu}")))
            }
            Family::Svc { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::Parameter(format!("C must be positive, got {c}")))
            }
            Family::Svc { .. } => data.check_binary_labels()?,
            _ => {}
        }
        let mut seen = vec![false; data.samples()];
        for &j in partition.iter().flatten() {
            if j >= seen.len() || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Data(format!(
                    "partition index {j} is out of range or repeated"
                )));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Data("partition does not cover every sample".into()));
        }

        let n = data.dim();
        let l1_level = Threshold::new(gamma / m as f64)?;
        let agents = partition
            .iter()
            .map(|idx| {
                let mut rows = Vec::with_capacity(idx.len() * n);
                for &j in idx {
                    rows.extend_from_slice(data.row(j));
                }
                let labels = idx.iter().map(|&j| data.labels()[j]).collect();
                let gram_bound = gram_lambda_max(&rows, n);
                AgentObjective {
                    family,
                    n,
                    rows,
                    labels,
                    ridge: rho / m as f64,
                    l1_level,
                    gram_bound,
                }
            })
            .collect();
        Ok(ProblemInstance {
            n,
            m,
            family,
            rho,
            gamma,
            partition,
            agents,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn agents(&self) -> usize {
        self.m
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn agent(&self, i: usize) -> &AgentObjective {
        &self.agents[i]
    }

    /// L1 level `gamma / m` of every `g_i`.
    pub fn l1_level(&self) -> Threshold {
        self.agents[0].l1_level
    }

    fn expect(&self, expected: &'static str) -> Result<()> {
        if self.family.name() == expected {
            Ok(())
        } else {
            Err(Error::FamilyMismatch {
                expected,
                actual: self.family.name(),
            })
        }
    }

    fn agent_checked(&self, i: usize, w: &[f64]) -> Result<&AgentObjective> {
        if i >= self.m {
            return Err(Error::InvalidSize(format!("agent {i} out of range for {} agents", self.m)));
        }
        if w.len() != self.n {
            return Err(Error::InvalidSize(format!("vector has length {}, expected {}", w.len(), self.n)));
        }
        Ok(&self.agents[i])
    }

    /// `(1/nu) sum_{j in J_i} T_nu(a_j^T w - b_j) a_j + (rho/m) w`.
    pub fn huber_grad(&self, i: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.expect("huber")?;
        let mut out = vec![0.0; self.n];
        self.agent_checked(i, w)?.grad(w, &mut out);
        Ok(out)
    }

    pub fn huber_hess_matvec(&self, i: usize, w: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        self.expect("huber")?;
        let a = self.agent_checked(i, w)?;
        let mut out = vec![0.0; self.n];
        a.hess_matvec(w, d, &mut out);
        Ok(out)
    }

    /// `-2C sum_{j in J_i} max(0, 1 - b_j a_j^T w) b_j a_j + (rho/m) w`.
    pub fn svc_grad(&self, i: usize, w: &[f64]) -> Result<Vec<f64>> {
        self.expect("svc")?;
        let mut out = vec![0.0; self.n];
        self.agent_checked(i, w)?.grad(w, &mut out);
        Ok(out)
    }

    pub fn svc_hess_matvec(&self, i: usize, w: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        self.expect("svc")?;
        let a = self.agent_checked(i, w)?;
        let mut out = vec![0.0; self.n];
        a.hess_matvec(w, d, &mut out);
        Ok(out)
    }

    pub fn smoothness_constants(&self) -> SmoothnessConstants {
        let mu_i: Vec<f64> = self.agents.iter().map(|a| a.mu()).collect();
        let l_i: Vec<f64> = self.agents.iter().map(|a| a.lipschitz()).collect();
        SmoothnessConstants {
            mu: mu_i.iter().cloned().fold(f64::INFINITY, f64::min),
            l_f: l_i.iter().cloned().fold(0.0, f64::max),
            mu_i,
            l_i,
        }
    }

    /// Global objective `sum_i (f_i(w) + g_i(w))` at a common point.
    pub fn objective(&self, w: &[f64]) -> f64 {
        self.agents
            .iter()
            .map(|a| a.value(w) + a.reg_value(w))
            .sum()
    }
}
