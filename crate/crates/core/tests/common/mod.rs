//! Dense single-process oracles. Everything here is computed from the raw
//! dataset and the dense gossip matrix, without the library's agent oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dssnal::data::{gen_random_classification, gen_random_regression, Dataset};
use dssnal::problems::{Family, Partition, ProblemInstance};
use dssnal::{AgentBlocks, GossipMatrix, Graph, Topology};

pub struct Fixture {
    pub ds: Dataset,
    pub p: ProblemInstance,
    pub graph: Graph,
    pub l: GossipMatrix,
    pub family: Family,
    pub rho: f64,
    pub gamma: f64,
    pub m: usize,
    pub n: usize,
}

pub fn huber(n: usize, s: usize, m: usize, topo: Topology, gamma: f64, seed: u64) -> Fixture {
    let ds = gen_random_regression(n, s, seed).unwrap();
    Fixture::new(ds, Family::Huber { nu: 1.0 }, m, topo, 1.0, gamma, seed)
}

pub fn svc(n: usize, s: usize, m: usize, topo: Topology, gamma: f64, seed: u64) -> Fixture {
    let ds = gen_random_classification(n, s, seed).unwrap();
    Fixture::new(ds, Family::Svc { c: 1.0 }, m, topo, 1.0, gamma, seed)
}

impl Fixture {
    pub fn new(ds: Dataset, family: Family, m: usize, topo: Topology, rho: f64, gamma: f64, seed: u64) -> Self {
        let p = ProblemInstance::new(&ds, m, family, rho, gamma, Partition::Contiguous).unwrap();
        let (graph, l) = topo.build(m, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let n = ds.dim();
        Fixture {
            ds,
            p,
            graph,
            l,
            family,
            rho,
            gamma,
            m,
            n,
        }
    }

    pub fn level(&self) -> f64 {
        self.gamma / self.m as f64
    }

    fn row(&self, j: usize) -> DVector<f64> {
        DVector::from_row_slice(self.ds.row(j))
    }

    /// Per-sample loss derivative coefficient and generalized second
    /// derivative weight at `w`.
    fn sample_terms(&self, j: usize, w: &DVector<f64>) -> (f64, f64) {
        let a = self.row(j);
        let b = self.ds.labels()[j];
        let t = a.dot(w);
        match self.family {
            Family::Huber { nu } => {
                let r = t - b;
                let slope = r.clamp(-nu, nu) / nu;
                let curv = if r.abs() < nu { 1.0 / nu } else { 0.0 };
                (slope, curv)
            }
            Family::Svc { c } => {
                let h = 1.0 - b * t;
                (-2.0 * c * h.max(0.0) * b, if h > 0.0 { 2.0 * c } else { 0.0 })
            }
        }
    }

    pub fn value_f(&self, i: usize, w: &DVector<f64>) -> f64 {
        let mut v = 0.5 * self.rho / self.m as f64 * w.norm_squared();
        for &j in &self.p.partition()[i] {
            let t = self.row(j).dot(w);
            let b = self.ds.labels()[j];
            v += match self.family {
                Family::Huber { nu } => {
                    let r = t - b;
                    if r.abs() <= nu {
                        r * r / (2.0 * nu)
                    } else {
                        r.abs() - nu / 2.0
                    }
                }
                Family::Svc { c } => c * (1.0 - b * t).max(0.0).powi(2),
            };
        }
        v
    }

    pub fn grad_f(&self, i: usize, w: &DVector<f64>) -> DVector<f64> {
        let mut g = w * (self.rho / self.m as f64);
        for &j in &self.p.partition()[i] {
            let (coef, _) = self.sample_terms(j, w);
            g += self.row(j) * coef;
        }
        g
    }

    pub fn hess_f(&self, i: usize, w: &DVector<f64>) -> DMatrix<f64> {
        let mut h = DMatrix::identity(self.n, self.n) * (self.rho / self.m as f64);
        for &j in &self.p.partition()[i] {
            let (_, wt) = self.sample_terms(j, w);
            let a = self.row(j);
            h += &a * a.transpose() * wt;
        }
        h
    }

    pub fn dense_l(&self) -> DMatrix<f64> {
        self.l.dense()
    }

    /// `W = L ⊗ I_n`.
    pub fn dense_w(&self) -> DMatrix<f64> {
        self.dense_l().kronecker(&DMatrix::identity(self.n, self.n))
    }

    /// `B = [I; W]`.
    pub fn dense_b(&self) -> DMatrix<f64> {
        let mn = self.m * self.n;
        let mut b = DMatrix::zeros(2 * mn, mn);
        b.view_mut((0, 0), (mn, mn)).copy_from(&DMatrix::identity(mn, mn));
        b.view_mut((mn, 0), (mn, mn)).copy_from(&self.dense_w());
        b
    }

    fn block(&self, x: &DVector<f64>, i: usize) -> DVector<f64> {
        x.rows(i * self.n, self.n).into_owned()
    }

    /// `grad F(x) + B^T Prox_{sigma G*}(sigma B x - lambda)`: the upper prox
    /// clips at `gamma/m`, the lower one is the identity.
    pub fn grad_phi(&self, sigma: f64, lambda: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let mn = self.m * self.n;
        let u = self.dense_b() * x * sigma - lambda;
        let mut p = u.clone();
        let tau = self.level();
        for k in 0..mn {
            p[k] = u[k].clamp(-tau, tau);
        }
        let mut g = self.dense_b().transpose() * p;
        for i in 0..self.m {
            let gi = self.grad_f(i, &self.block(x, i));
            let mut seg = g.rows_mut(i * self.n, self.n);
            seg += gi;
        }
        g
    }

    /// `M = V + sigma B^T H B` with the same selection rules as the library.
    pub fn hessian(&self, sigma: f64, lambda: &DVector<f64>, x: &DVector<f64>) -> DMatrix<f64> {
        let mn = self.m * self.n;
        let u = self.dense_b() * x * sigma - lambda;
        let tau = self.level();
        let mut h = DMatrix::zeros(2 * mn, 2 * mn);
        for k in 0..mn {
            h[(k, k)] = if u[k].abs() < tau { 1.0 } else { 0.0 };
            h[(mn + k, mn + k)] = 1.0;
        }
        let b = self.dense_b();
        let mut mat = b.transpose() * h * &b * sigma;
        for i in 0..self.m {
            let hi = self.hess_f(i, &self.block(x, i));
            let mut v = mat.view_mut((i * self.n, i * self.n), (self.n, self.n));
            v += hi;
        }
        mat
    }

    /// Minimizer of `phi` by accelerated gradient followed by semismooth
    /// Newton polishing with a dense LU solve.
    pub fn phi_minimizer(&self, sigma: f64, lambda: &DVector<f64>) -> DVector<f64> {
        let mn = self.m * self.n;
        let mu = self.rho / self.m as f64;
        let lmax_f = (0..self.m)
            .map(|i| self.hess_bound(i))
            .fold(0.0, f64::max);
        let b = self.dense_b();
        let lmax_b = (b.transpose() * &b).symmetric_eigenvalues().max();
        let l = lmax_f + sigma * lmax_b;
        let beta = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
        let mut x = DVector::zeros(mn);
        let mut x_prev = x.clone();
        for _ in 0..200_000 {
            let y = &x + (&x - &x_prev) * beta;
            let g = self.grad_phi(sigma, lambda, &y);
            x_prev = std::mem::replace(&mut x, &y - g * (1.0 / l));
            if self.grad_phi(sigma, lambda, &x).norm() < 1e-9 {
                break;
            }
        }
        for _ in 0..50 {
            let g = self.grad_phi(sigma, lambda, &x);
            if g.norm() < 1e-14 {
                break;
            }
            let d = self.hessian(sigma, lambda, &x).lu().solve(&(-&g)).unwrap();
            let trial = &x + d;
            if self.grad_phi(sigma, lambda, &trial).norm() >= g.norm() {
                break;
            }
            x = trial;
        }
        x
    }

    /// `rho/m + scale * lambda_max(A_i^T A_i)` by dense eigensolve.
    pub fn hess_bound(&self, i: usize) -> f64 {
        let mut g = DMatrix::<f64>::zeros(self.n, self.n);
        for &j in &self.p.partition()[i] {
            let a = self.row(j);
            g += &a * a.transpose();
        }
        let lam = if self.p.partition()[i].is_empty() {
            0.0
        } else {
            g.symmetric_eigenvalues().max()
        };
        let scale = match self.family {
            Family::Huber { nu } => 1.0 / nu,
            Family::Svc { c } => 2.0 * c,
        };
        self.rho / self.m as f64 + scale * lam
    }

    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        (0..self.m).map(|i| self.value_f(i, w)).sum::<f64>() + self.gamma * w.lp_norm(1)
    }

    /// Centralized minimizer of `sum_i f_i(w) + gamma ||w||_1` by strongly
    /// convex accelerated proximal gradient, run to a prox-gradient residual
    /// of about 1e-13.
    pub fn reference(&self) -> DVector<f64> {
        let mu = self.rho;
        let mut gram = DMatrix::<f64>::zeros(self.n, self.n);
        for j in 0..self.ds.samples() {
            let a = self.row(j);
            gram += &a * a.transpose();
        }
        let scale = match self.family {
            Family::Huber { nu } => 1.0 / nu,
            Family::Svc { c } => 2.0 * c,
        };
        let l = self.rho + scale * gram.symmetric_eigenvalues().max();
        let beta = (l.sqrt() - mu.sqrt()) / (l.sqrt() + mu.sqrt());
        let grad = |w: &DVector<f64>| (0..self.m).map(|i| self.grad_f(i, w)).fold(DVector::zeros(self.n), |a, b| a + b);
        let prox = |v: DVector<f64>, t: f64| v.map(|z| z.signum() * (z.abs() - t).max(0.0));
        let mut w = DVector::zeros(self.n);
        let mut w_prev = w.clone();
        for _ in 0..500_000 {
            let y = &w + (&w - &w_prev) * beta;
            let next = prox(&y - grad(&y) / l, self.gamma / l);
            w_prev = std::mem::replace(&mut w, next);
            let res = (&w - prox(&w - grad(&w), self.gamma)).norm();
            if res <= 1e-13 * (1.0 + w.norm()) {
                break;
            }
        }
        w
    }
}

pub fn stack(x: &AgentBlocks) -> DVector<f64> {
    DVector::from_row_slice(x.as_slice())
}

pub fn unstack(v: &DVector<f64>, m: usize, n: usize) -> AgentBlocks {
    AgentBlocks::from_vec(m, n, v.as_slice().to_vec())
}

/// `[lambda_upper; lambda_lower]` as one dense vector.
pub fn stack_duals(upper: &AgentBlocks, lower: &AgentBlocks) -> DVector<f64> {
    let mut v = upper.as_slice().to_vec();
    v.extend_from_slice(lower.as_slice());
    DVector::from_vec(v)
}

pub fn random_blocks(rng: &mut ChaCha8Rng, m: usize, n: usize, scale: f64) -> AgentBlocks {
    use rand::Rng;
    AgentBlocks::from_vec(m, n, (0..m * n).map(|_| rng.random_range(-scale..scale)).collect())
}

pub fn rel_err(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}
