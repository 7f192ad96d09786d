use serde::{Deserialize, Serialize};

/// Stacked per-agent vectors: `m` blocks of dimension `n`, stored contiguously.
///
/// Block `i` is owned by agent `i`; it is the `i`-th `n`-slice of the
/// stacked vector `x = [x_1; ...; x_m]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentBlocks {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl AgentBlocks {
    pub fn zeros(m: usize, n: usize) -> Self {
        AgentBlocks {
            m,
            n,
            data: vec![0.0; m * n],
        }
    }

    /// Panics if `data.len() != m * n`.
    pub fn from_vec(m: usize, n: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), m * n, "block data has wrong length");
        AgentBlocks { m, n, data }
    }

    /// Every agent holds a copy of `w`.
    pub fn replicate(m: usize, w: &[f64]) -> Self {
        let n = w.len();
        let mut data = Vec::with_capacity(m * n);
        for _ in 0..m {
            data.extend_from_slice(w);
        }
        AgentBlocks { m, n, data }
    }

    #[inline]
    pub fn agents(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &AgentBlocks) -> bool {
        self.m == other.m && self.n == other.n
    }

    /// Squared norm of each block, in agent order.
    pub fn block_norms_sq(&self) -> Vec<f64> {
        (0..self.m).map(|i| dot(self.block(i), self.block(i))).collect()
    }

    /// Agent average `(1/m) sum_i x_i`.
    pub fn mean_block(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        for i in 0..self.m {
            axpy(1.0, self.block(i), &mut w);
        }
        let inv = 1.0 / self.m as f64;
        w.iter_mut().for_each(|v| *v *= inv);
        w
    }

    /// `max_i ||x_i - mean||`.
    pub fn consensus_spread(&self) -> f64 {
        let w = self.mean_block();
        (0..self.m)
            .map(|i| {
                self.block(i)
                    .iter()
                    .zip(&w)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        dot(&self.data, &self.data).sqrt()
    }

    pub fn sub(&self, other: &AgentBlocks) -> AgentBlocks {
        assert!(self.same_shape(other));
        AgentBlocks {
            m: self.m,
            n: self.n,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
