use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dssnal::config::{parse_spec_list, FamilyKind, RunSpec};
use dssnal::report::{self, BenchRow, Summary};
use dssnal::topology::validate_gossip;
use dssnal::{Error, Graph, Result, Topology};

#[derive(Parser)]
#[command(name = "dssnal", version, about = "Distributed semismooth Newton ALM solver for consensus problems")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Cmd {
    /// Solve one instance and write trace, solution and summary.
    Solve(SpecArgs),
    /// Write a generated dataset in svmlight format.
    GenData {
        #[arg(long)]
        family: String,
        /// Generator sizes, e.g. `n=20,S=200`.
        #[arg(long, num_args = 1.., required = true)]
        gen: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Check a topology's gossip matrix.
    ValidateGossip {
        #[arg(long, required_unless_present = "edges")]
        topology: Option<String>,
        #[arg(long, required_unless_present = "edges")]
        m: Option<usize>,
        /// Edge-list file instead of a built-in family.
        #[arg(long, conflicts_with_all = ["topology", "m"])]
        edges: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run every spec of a `---`-separated spec file and tabulate results.
    Bench {
        #[arg(long)]
        specs: PathBuf,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

/// Run settings; every flag overrides the same key of `--config`.
#[derive(Args)]
struct SpecArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["huber", "svc"])]
    family: Option<String>,
    #[arg(long, conflicts_with = "gen")]
    data: Option<PathBuf>,
    /// Generator sizes, e.g. `n=20,S=200` or `n=20 S=200`.
    #[arg(long, num_args = 1..)]
    gen: Option<Vec<String>>,
    #[arg(long)]
    zscore: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    rho: Option<String>,
    #[arg(long)]
    nu: Option<String>,
    #[arg(long = "C")]
    c: Option<String>,
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    partition: Option<String>,
    #[arg(long, value_parser = ["dssnal", "dapg"])]
    solver: Option<String>,
    #[arg(long)]
    sigma0: Option<String>,
    #[arg(long)]
    sigma_growth: Option<String>,
    #[arg(long)]
    sigma_max: Option<String>,
    #[arg(long, value_parser = ["next", "current"])]
    sigma_index: Option<String>,
    #[arg(long, value_parser = ["A", "B", "C", "combined"])]
    criterion: Option<String>,
    #[arg(long, value_parser = ["auto", "algorithm3", "plain"])]
    dual_update: Option<String>,
    #[arg(long, value_parser = ["geometric", "quadratic"])]
    eta: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    max_outer: Option<String>,
    #[arg(long)]
    newton_cap: Option<String>,
    #[arg(long)]
    warm_start_tol: Option<String>,
    #[arg(long, value_parser = ["sequential", "parallel"])]
    exec: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl SpecArgs {
    fn into_spec(self) -> Result<RunSpec> {
        let mut spec = match &self.config {
            Some(path) => RunSpec::from_file(path)?,
            None => RunSpec::default(),
        };
        let path = |p: Option<PathBuf>| p.map(|p| p.to_string_lossy().into_owned());
        // seed first so that `partition = random` picks up the override
        let pairs = [
            ("seed", self.seed),
            ("family", self.family),
            ("data", path(self.data)),
            ("gen", self.gen.map(|g| g.join(","))),
            ("zscore", self.zscore),
            ("gamma", self.gamma),
            ("rho", self.rho),
            ("nu", self.nu),
            ("C", self.c),
            ("m", self.m),
            ("topology", self.topology),
            ("partition", self.partition),
            ("solver", self.solver),
            ("sigma0", self.sigma0),
            ("sigma-growth", self.sigma_growth),
            ("sigma-max", self.sigma_max),
            ("sigma-index", self.sigma_index),
            ("criterion", self.criterion),
            ("dual-update", self.dual_update),
            ("eta", self.eta),
            ("tol", self.tol),
            ("max-outer", self.max_outer),
            ("newton-cap", self.newton_cap),
            ("warm-start-tol", self.warm_start_tol),
            ("exec", self.exec),
            ("out", path(self.out)),
        ];
        spec.apply(pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))))?;
        spec.validate()?;
        Ok(spec)
    }
}

struct Timed {
    summary: Summary,
    seconds: f64,
    dims: (usize, usize, usize),
}

fn run_spec(spec: &RunSpec) -> Result<Timed> {
    let ds = spec.dataset()?;
    let (problem, graph, gossip) = spec.build()?;
    let t0 = Instant::now();
    let res = dssnal::solve(&problem, &graph, &gossip, &spec.solver)?;
    let seconds = t0.elapsed().as_secs_f64();
    let summary = match &spec.out {
        Some(dir) => {
            let s = report::write_run(dir, &res)?;
            let timing = serde_json::json!({ "seconds": seconds });
            std::fs::write(dir.join("timing.json"), format!("{timing}\n"))?;
            s
        }
        None => Summary::of(&res),
    };
    if !res.converged {
        log::warn!(
            "stopped after {} outer iterations with R_KKT = {:.3e}",
            res.outer_iterations,
            res.r_kkt
        );
    }
    Ok(Timed {
        summary,
        seconds,
        dims: (problem.agents(), ds.dim(), ds.samples()),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Solve(args) => {
            let spec = args.into_spec()?;
            let t = run_spec(&spec)?;
            println!("{}", serde_json::to_string_pretty(&t.summary)?);
            eprintln!("time: {:.3}s", t.seconds);
            Ok(ExitCode::SUCCESS)
        }
        Cmd::GenData {
            family,
            gen,
            seed,
            output,
        } => {
            let mut spec = RunSpec::default();
            spec.apply([("family", family), ("gen", gen.join(",")), ("seed", seed.to_string())])?;
            let ds = spec.dataset()?;
            let f = std::io::BufWriter::new(std::fs::File::create(&output)?);
            dssnal::data::write_svmlight(&ds, f)?;
            let kind = spec.family.unwrap_or(FamilyKind::Huber);
            eprintln!("wrote {} {kind} samples of dimension {} to {}", ds.samples(), ds.dim(), output.display());
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ValidateGossip {
            topology,
            m,
            edges,
            seed,
        } => {
            let (graph, gossip) = match edges {
                Some(path) => {
                    let g = Graph::load_edge_list(path)?;
                    let l = dssnal::topology::build_laplacian_gossip(&g)?;
                    (g, l)
                }
                None => {
                    let topo: Topology = topology.expect("required by clap").parse()?;
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
                    topo.build(m.expect("required by clap"), &mut rng)?
                }
            };
            let rep = validate_gossip(&gossip, &graph)?;
            let mark = |ok: bool| if ok { "pass" } else { "FAIL" };
            let mut out = std::io::stdout().lock();
            writeln!(out, "agents: {}  edges: {}", graph.agents(), graph.edges().len())?;
            writeln!(out, "(a) symmetric:              {}", mark(rep.symmetric))?;
            writeln!(out, "(b) positive semidefinite:  {}", mark(rep.positive_semidefinite))?;
            writeln!(out, "(c) null space = span(1):   {}", mark(rep.null_space_is_consensus))?;
            writeln!(out, "(d) graph induced:          {}", mark(rep.graph_induced))?;
            writeln!(
                out,
                "eigenvalues: min {:.3e}, second {:.6}, max {:.6}",
                rep.min_eigenvalue, rep.second_smallest_eigenvalue, rep.max_eigenvalue
            )?;
            Ok(if rep.all_pass() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
        Cmd::Bench { specs, csv } => {
            let list = parse_spec_list(&std::fs::read_to_string(&specs)?)?;
            if list.is_empty() {
                return Err(Error::Config(format!("no specs in {}", specs.display())));
            }
            let mut rows = Vec::with_capacity(list.len());
            for (idx, spec) in list.iter().enumerate() {
                spec.validate()?;
                let t = run_spec(spec)?;
                let (m, n, s) = t.dims;
                rows.push(BenchRow {
                    label: spec.label.clone().unwrap_or_else(|| format!("run{}", idx + 1)),
                    r_kkt: t.summary.r_kkt,
                    seconds: t.seconds,
                    iter: t.summary.iter_label(),
                    objective: t.summary.objective,
                    m,
                    n,
                    s,
                });
            }
            match csv {
                Some(path) => report::write_bench(&rows, std::io::BufWriter::new(std::fs::File::create(path)?))?,
                None => report::write_bench(&rows, std::io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("DSSNAL_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
