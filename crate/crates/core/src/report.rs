//! Run outputs: JSON-lines trace, solution vector, summary, bench table.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dssnal::{SolveResult, TraceRecord};
use crate::error::Result;

/// End-of-run totals. Contains nothing machine-dependent, so identical runs
/// produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "R_KKT")]
    pub r_kkt: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub apg_iterations: usize,
    pub warm_start_iterations: usize,
    pub total_rounds: u64,
    pub total_reduces: u64,
    pub vectors_sent: u64,
    pub gathers: u64,
    pub objective: f64,
    pub consensus_spread: f64,
}

impl Summary {
    pub fn of(res: &SolveResult) -> Self {
        Summary {
            r_kkt: res.r_kkt,
            converged: res.converged,
            outer_iterations: res.outer_iterations,
            inner_iterations: res.trace.iter().map(|r| r.inner_newton_iters).sum(),
            apg_iterations: res.trace.iter().map(|r| r.apg_iters).sum(),
            warm_start_iterations: res.warm_start.iterations,
            total_rounds: res.ledger.rounds,
            total_reduces: res.ledger.reduce_ops,
            vectors_sent: res.ledger.vectors_sent,
            gathers: res.ledger.gathers,
            objective: res.objective,
            consensus_spread: res.x.consensus_spread(),
        }
    }

    /// `outer(inner)` iteration counts.
    pub fn iter_label(&self) -> String {
        format!("{}({})", self.outer_iterations, self.inner_iterations)
    }
}

pub fn write_trace<W: Write>(trace: &[TraceRecord], mut w: W) -> Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Vec<TraceRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Ok(serde_json::from_str(l)?))
        .collect()
}

/// One value per line, shortest round-trip formatting.
pub fn write_solution<W: Write>(w_bar: &[f64], mut w: W) -> Result<()> {
    for v in w_bar {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `trace.jsonl`, `solution.txt` and `summary.json` into `dir`.
pub fn write_run(dir: &Path, res: &SolveResult) -> Result<Summary> {
    std::fs::create_dir_all(dir)?;
    write_trace(&res.trace, BufWriter::new(File::create(dir.join("trace.jsonl"))?))?;
    write_solution(&res.w_bar, BufWriter::new(File::create(dir.join("solution.txt"))?))?;
    let summary = Summary::of(res);
    let mut f = BufWriter::new(File::create(dir.join("summary.json"))?);
    serde_json::to_writer_pretty(&mut f, &summary)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(summary)
}

/// One row of the bench table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub label: String,
    pub r_kkt: f64,
    pub seconds: f64,
    pub iter: String,
    pub objective: f64,
    pub m: usize,
    pub n: usize,
    pub s: usize,
}

pub const BENCH_HEADER: &str = "label,R_KKT,time,iter,obj,m,n,S";

pub fn write_bench<W: Write>(rows: &[BenchRow], mut w: W) -> Result<()> {
    writeln!(w, "{BENCH_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.3e},{:.3},{},{:.10e},{},{},{}",
            r.label.replace(',', ";"),
            r.r_kkt,
            r.seconds,
            r.iter,
            r.objective,
            r.m,
            r.n,
            r.s
        )?;
    }
    w.flush()?;
    Ok(())
}
