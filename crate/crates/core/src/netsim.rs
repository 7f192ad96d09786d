//! Synchronous round-based network simulator.
//!
//! Agents publish one vector each per round; after the barrier an agent can
//! read only its own payload and those of its graph neighbors. Global
//! scalar reductions and monitoring gathers are separate primitives and are
//! billed separately in the [`CommLedger`].

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::AgentBlocks;
use crate::error::{Error, Result};
use crate::topology::{BlockSource, Graph};

/// Communication counters. All fields are monotone.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    /// Completed neighbor-exchange rounds (one per barrier).
    pub rounds: u64,
    /// `n`-vectors transmitted, counted per direction along each edge.
    pub vectors_sent: u64,
    /// Global scalar reductions.
    pub reduce_ops: u64,
    /// Monitoring gathers of the full iterate.
    pub gathers: u64,
}

impl CommLedger {
    /// Counter increments since `earlier`.
    pub fn since(&self, earlier: &CommLedger) -> CommLedger {
        CommLedger {
            rounds: self.rounds - earlier.rounds,
            vectors_sent: self.vectors_sent - earlier.vectors_sent,
            reduce_ops: self.reduce_ops - earlier.reduce_ops,
            gathers: self.gathers - earlier.gathers,
        }
    }
}

/// How agent programs run inside a round. Both modes give bit-identical
/// results.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExecMode {
    #[default]
    Sequential,
    Parallel,
}

/// Result of [`Network::run_rounds`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub iterations: usize,
    /// The iteration cap tripped before the stop predicate held.
    pub capped: bool,
}

pub struct Network {
    graph: Arc<Graph>,
    mode: ExecMode,
    ledger: CommLedger,
}

impl Network {
    pub fn new(graph: Graph, mode: ExecMode) -> Self {
        Network {
            graph: Arc::new(graph),
            mode,
            ledger: CommLedger::default(),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn agents(&self) -> usize {
        self.graph.agents()
    }

    pub fn mode(&self) -> ExecMode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: ExecMode) {
        self.mode = mode;
    }

    pub fn ledger(&self) -> CommLedger {
        self.ledger
    }

    /// One barrier-synchronized round: every agent publishes its block of
    /// `payload` to its neighbors.
    pub fn exchange<'a>(&mut self, payload: &'a AgentBlocks) -> Result<Exchange<'a>> {
        if payload.agents() != self.graph.agents() {
            return Err(Error::Protocol(format!(
                "payload has {} blocks for {} agents",
                payload.agents(),
                self.graph.agents()
            )));
        }
        self.ledger.rounds += 1;
        self.ledger.vectors_sent += 2 * self.graph.edges().len() as u64;
        Ok(Exchange {
            graph: Arc::clone(&self.graph),
            payload,
        })
    }

    /// Runs `program(i, block_i)` for every agent, writing into `out`.
    pub fn for_each_agent<F>(&self, out: &mut AgentBlocks, program: F) -> Result<()>
    where
        F: Fn(usize, &mut [f64]) -> Result<()> + Sync + Send,
    {
        let n = out.dim();
        if n == 0 {
            return (0..out.agents()).try_for_each(|i| program(i, &mut []));
        }
        match self.mode {
            ExecMode::Sequential => out
                .as_mut_slice()
                .chunks_mut(n)
                .enumerate()
                .try_for_each(|(i, b)| program(i, b)),
            ExecMode::Parallel => out
                .as_mut_slice()
                .par_chunks_mut(n)
                .enumerate()
                .try_for_each(|(i, b)| program(i, b)),
        }
    }

    /// Runs `program(i)` for every agent and collects the local results in
    /// agent order.
    pub fn map_agents<T, F>(&self, program: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        let m = self.graph.agents();
        match self.mode {
            ExecMode::Sequential => (0..m).map(program).collect(),
            ExecMode::Parallel => (0..m).into_par_iter().map(program).collect(),
        }
    }

    /// Global sum of one scalar per agent, summed in agent order so the
    /// result is bit-reproducible. Every agent receives the same value.
    pub fn reduce_sum(&mut self, locals: &[f64]) -> Result<f64> {
        if locals.len() != self.graph.agents() {
            return Err(Error::Protocol(format!(
                "reduction got {} values for {} agents",
                locals.len(),
                self.graph.agents()
            )));
        }
        self.ledger.reduce_ops += 1;
        Ok(locals.iter().fold(0.0, |acc, v| acc + v))
    }

    /// Global squared Euclidean norm of a stacked vector (one reduction).
    pub fn reduce_norm_sq(&mut self, blocks: &AgentBlocks) -> Result<f64> {
        let locals = blocks.block_norms_sq();
        self.reduce_sum(&locals)
    }

    /// Collects the full stacked vector at a monitor. Billed as a gather;
    /// solvers must not feed the result back into agent state.
    pub fn gather<'a>(&mut self, blocks: &'a AgentBlocks) -> &'a AgentBlocks {
        self.ledger.gathers += 1;
        blocks
    }

    /// Repeats `program` until `until` holds or `cap` iterations have run.
    /// `until` is checked before each iteration.
    pub fn run_rounds<S>(
        &mut self,
        state: &mut S,
        mut program: impl FnMut(&mut Network, &mut S) -> Result<()>,
        mut until: impl FnMut(&Network, &S) -> bool,
        cap: usize,
    ) -> Result<RunOutcome> {
        let mut iterations = 0;
        loop {
            if until(self, state) {
                return Ok(RunOutcome {
                    iterations,
                    capped: false,
                });
            }
            if iterations == cap {
                return Ok(RunOutcome {
                    iterations,
                    capped: true,
                });
            }
            program(self, state)?;
            iterations += 1;
        }
    }
}

/// Payloads published in one round.
pub struct Exchange<'a> {
    graph: Arc<Graph>,
    payload: &'a AgentBlocks,
}

impl<'a> Exchange<'a> {
    /// What agent `i` can see after the barrier.
    pub fn inbox(&self, i: usize) -> Inbox<'_> {
        Inbox {
            agent: i,
            graph: &self.graph,
            payload: self.payload,
        }
    }
}

/// One agent's view after an exchange: its neighbors' payloads, plus its
/// own published value.
pub struct Inbox<'a> {
    agent: usize,
    graph: &'a Graph,
    payload: &'a AgentBlocks,
}

impl<'a> Inbox<'a> {
    pub fn agent(&self) -> usize {
        self.agent
    }

    /// Payload of agent `k`; `None` unless `k` is a neighbor or the owner.
    pub fn get(&self, k: usize) -> Option<&'a [f64]> {
        if k == self.agent || self.graph.has_edge(self.agent, k) {
            Some(self.payload.block(k))
        } else {
            None
        }
    }

    /// Received `(neighbor, payload)` entries, excluding the owner.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &'a [f64])> + '_ {
        self.graph
            .neighbors(self.agent)
            .iter()
            .map(move |&k| (k, self.payload.block(k)))
    }
}

impl BlockSource for Inbox<'_> {
    fn block_of(&self, k: usize) -> Option<&[f64]> {
        self.get(k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_laplacian_gossip;

    fn payloads(m: usize) -> AgentBlocks {
        AgentBlocks::from_vec(m, 2, (0..2 * m).map(|v| v as f64).collect())
    }

    #[test]
    fn inbox_holds_exactly_the_neighbors() {
        let mut net = Network::new(Graph::ring(3).unwrap(), ExecMode::Sequential);
        let p = payloads(3);
        let ex = net.exchange(&p).unwrap();
        let got: Vec<(usize, Vec<f64>)> =
            ex.inbox(0).entries().map(|(k, v)| (k, v.to_vec())).collect();
        assert_eq!(got, vec![(1, vec![2.0, 3.0]), (2, vec![4.0, 5.0])]);

        let mut net = Network::new(Graph::path(3).unwrap(), ExecMode::Sequential);
        let ex = net.exchange(&p).unwrap();
        let inbox = ex.inbox(0);
        assert_eq!(inbox.entries().count(), 1);
        assert_eq!(inbox.get(1), Some(&[2.0, 3.0][..]));
        assert_eq!(inbox.get(2), None);
    }

    #[test]
    fn ledger_counts_rounds_and_vectors() {
        let g = Graph::grid(2, 3).unwrap();
        let edges = g.edges().len() as u64;
        let mut net = Network::new(g, ExecMode::Sequential);
        let p = payloads(6);
        for r in 0..4 {
            assert_eq!(net.ledger().rounds, r);
            net.exchange(&p).unwrap();
        }
        assert_eq!(net.ledger().vectors_sent, 2 * edges * 4);
        assert!(net.exchange(&payloads(5)).is_err());
        assert_eq!(net.ledger().rounds, 4);
    }

    #[test]
    fn reduce_examples() {
        let mut net = Network::new(Graph::path(3).unwrap(), ExecMode::Sequential);
        assert_eq!(net.reduce_sum(&[1.0, 4.0, 9.0]).unwrap(), 14.0);
        assert_eq!(net.reduce_sum(&[0.0; 3]).unwrap(), 0.0);
        let vals = [0.1, 0.7, 1e-17];
        let mut seq = 0.0;
        for v in vals {
            seq += v;
        }
        assert_eq!(net.reduce_sum(&vals).unwrap().to_bits(), seq.to_bits());
        assert_eq!(net.ledger().reduce_ops, 3);
        assert_eq!(net.ledger().rounds, 0);
        assert!(net.reduce_sum(&[1.0]).is_err());
    }

    #[test]
    fn run_rounds_stops_on_predicate_and_cap() {
        let mut net = Network::new(Graph::ring(4).unwrap(), ExecMode::Sequential);
        let p = payloads(4);
        let out = net
            .run_rounds(
                &mut (),
                |net, _| net.exchange(&p).map(|_| ()),
                |net, _| net.ledger().rounds >= 5,
                100,
            )
            .unwrap();
        assert_eq!(out, RunOutcome { iterations: 5, capped: false });
        assert_eq!(net.ledger().rounds, 5);

        let out = net
            .run_rounds(&mut (), |net, _| net.exchange(&p).map(|_| ()), |_, _| false, 3)
            .unwrap();
        assert!(out.capped);
        assert_eq!(net.ledger().rounds, 8);
    }

    #[test]
    fn gossip_round_matches_central_product_in_both_modes() {
        let g = Graph::grid(3, 3).unwrap();
        let l = build_laplacian_gossip(&g).unwrap();
        let v = AgentBlocks::from_vec(9, 3, (0..27).map(|k| ((k * 7) % 11) as f64 - 5.0).collect());
        let expected = l.apply(&v);
        for mode in [ExecMode::Sequential, ExecMode::Parallel] {
            let mut net = Network::new(g.clone(), mode);
            let ex = net.exchange(&v).unwrap();
            let mut out = AgentBlocks::zeros(9, 3);
            net.for_each_agent(&mut out, |i, o| l.local_weighted_sum(i, &ex.inbox(i), o))
                .unwrap();
            assert_eq!(out, expected);
        }
    }

    #[test]
    fn agents_cannot_read_non_neighbors() {
        // The complete-graph gossip needs every block; on a ring the inbox
        // must refuse the non-neighbor read.
        let g = Graph::ring(5).unwrap();
        let l = crate::topology::build_projection_gossip(5).unwrap();
        let mut net = Network::new(g, ExecMode::Sequential);
        let v = payloads(5);
        let ex = net.exchange(&v).unwrap();
        let mut out = [0.0; 2];
        assert!(matches!(
            l.local_weighted_sum(0, &ex.inbox(0), &mut out),
            Err(Error::IncompleteExchange { agent: 0, missing: 2 })
        ));
    }
}
