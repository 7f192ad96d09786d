//! Run specifications: a flat `key = value` text format shared by config
//! files and command-line flags (flags override the file).

use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{self, Dataset};
use crate::dissn::EtaSchedule;
use crate::dssnal::SolverConfig;
use crate::error::{Error, Result};
use crate::netsim::ExecMode;
use crate::problems::{Family, Partition, ProblemInstance};
use crate::topology::{GossipMatrix, Graph, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Huber,
    Svc,
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FamilyKind::Huber => "huber",
            FamilyKind::Svc => "svc",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Generated { n: usize, s: usize },
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: Option<String>,
    pub family: Option<FamilyKind>,
    pub source: Option<DataSource>,
    /// `None` standardizes loaded files and leaves generated data alone.
    pub zscore: Option<bool>,
    pub gamma: f64,
    pub rho: f64,
    pub nu: f64,
    pub c: f64,
    pub m: Option<usize>,
    pub topology: Topology,
    pub partition: Partition,
    pub solver: SolverConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            label: None,
            family: None,
            source: None,
            zscore: None,
            gamma: 0.1,
            rho: 1.0,
            nu: 1.0,
            c: 1.0,
            m: None,
            topology: Topology::Complete,
            partition: Partition::Contiguous,
            solver: SolverConfig::default(),
            seed: 0,
            out: None,
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {v:?} for {key}"))),
    }
}

/// Parses `n=20,S=200` (commas or whitespace between entries).
pub fn parse_gen(v: &str) -> Result<DataSource> {
    let (mut n, mut s) = (None, None);
    for part in v.split([',', ' ']).filter(|p| !p.trim().is_empty()) {
        let (k, val) = part
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value in generator spec, got {part:?}")))?;
        match k.trim() {
            "n" => n = Some(num::<usize>("gen n", val)?),
            "S" | "s" => s = Some(num::<usize>("gen S", val)?),
            other => return Err(Error::Config(format!("unknown generator key {other:?}"))),
        }
    }
    match (n, s) {
        (Some(n), Some(s)) if n > 0 && s > 0 => Ok(DataSource::Generated { n, s }),
        _ => Err(Error::Config(format!("generator spec {v:?} needs positive n and S"))),
    }
}

/// Splits flat `key = value` text into pairs. `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: format!("expected key = value, got {line:?}"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunSpec {
    /// Applies one setting. Keys match the long flag names; `_` and `-` are
    /// interchangeable.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let s = &mut self.solver;
        match key.as_str() {
            "label" | "name" => self.label = Some(v.to_string()),
            "family" => {
                self.family = Some(match v {
                    "huber" => FamilyKind::Huber,
                    "svc" => FamilyKind::Svc,
                    _ => return Err(Error::Config(format!("unknown family {v:?} (expected huber or svc)"))),
                })
            }
            "data" => self.source = Some(DataSource::File(PathBuf::from(v))),
            "gen" => self.source = Some(parse_gen(v)?),
            "zscore" => self.zscore = Some(boolean(&key, v)?),
            "gamma" => self.gamma = num(&key, v)?,
            "rho" => self.rho = num(&key, v)?,
            "nu" => self.nu = num(&key, v)?,
            "C" | "c" => self.c = num(&key, v)?,
            "m" => self.m = Some(num(&key, v)?),
            "topology" => self.topology = v.parse()?,
            "partition" => {
                self.partition = match v {
                    "contiguous" => Partition::Contiguous,
                    _ => match v.strip_prefix("random:") {
                        Some(seed) => Partition::Random(num(&key, seed)?),
                        None if v == "random" => Partition::Random(self.seed),
                        None => return Err(Error::Config(format!("unknown partition {v:?}"))),
                    },
                }
            }
            "solver" => s.inner = v.parse()?,
            "sigma0" => s.sigma0 = num(&key, v)?,
            "sigma-growth" => s.sigma_growth = num(&key, v)?,
            "sigma-max" => s.sigma_max = num(&key, v)?,
            "sigma-index" => s.sigma_index = v.parse()?,
            "criterion" => s.criterion = v.parse()?,
            "dual-update" => s.dual_update = v.parse()?,
            "eta" | "eta-schedule" => s.eta_schedule = v.parse::<EtaSchedule>()?,
            "tol" => s.tol = num(&key, v)?,
            "max-outer" => s.max_outer = num(&key, v)?,
            "newton-cap" => s.newton_cap = num(&key, v)?,
            "dapg-cap" => s.dapg_cap = num(&key, v)?,
            "warm-start-tol" => s.warm_start_tol = num(&key, v)?,
            "warm-start-cap" => s.warm_start_cap = num(&key, v)?,
            "exec" => {
                s.exec = match v {
                    "sequential" => ExecMode::Sequential,
                    "parallel" => ExecMode::Parallel,
                    _ => return Err(Error::Config(format!("unknown exec mode {v:?}"))),
                }
            }
            "seed" => self.seed = num(&key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn apply<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: impl IntoIterator<Item = (K, V)>) -> Result<()> {
        pairs.into_iter().try_for_each(|(k, v)| self.set(k.as_ref(), v.as_ref()))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = RunSpec::default();
        spec.apply(parse_pairs(text)?)?;
        Ok(spec)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Checks that the required fields are present and the solver settings
    /// are valid.
    pub fn validate(&self) -> Result<()> {
        if self.family.is_none() {
            return Err(Error::Config("missing required setting: family".into()));
        }
        if self.source.is_none() {
            return Err(Error::Config("missing required setting: data or gen".into()));
        }
        match self.m {
            None => return Err(Error::Config("missing required setting: m".into())),
            Some(m) if m < 2 => return Err(Error::Config(format!("m must be at least 2, got {m}"))),
            _ => {}
        }
        self.solver.validate()
    }

    pub fn family(&self) -> Result<Family> {
        match self.family {
            Some(FamilyKind::Huber) => Ok(Family::Huber { nu: self.nu }),
            Some(FamilyKind::Svc) => Ok(Family::Svc { c: self.c }),
            None => Err(Error::Config("missing required setting: family".into())),
        }
    }

    /// Loads or generates the dataset. Generated data uses the family's
    /// generator; files are standardized unless `zscore = false`.
    pub fn dataset(&self) -> Result<Dataset> {
        let kind = self.family.ok_or_else(|| Error::Config("missing required setting: family".into()))?;
        match self.source.as_ref() {
            Some(DataSource::Generated { n, s }) => {
                let ds = match kind {
                    FamilyKind::Huber => data::gen_random_regression(*n, *s, self.seed)?,
                    FamilyKind::Svc => data::gen_random_classification(*n, *s, self.seed)?,
                };
                if self.zscore == Some(true) {
                    data::zscore(&ds)
                } else {
                    Ok(ds)
                }
            }
            Some(DataSource::File(path)) => {
                let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
                let ds = if is_csv {
                    data::load_csv(path)?
                } else {
                    data::load_svmlight(path, None)?
                };
                if self.zscore.unwrap_or(true) {
                    data::zscore(&ds)
                } else {
                    Ok(ds)
                }
            }
            None => Err(Error::Config("missing required setting: data or gen".into())),
        }
    }

    /// Dataset, partitioned instance, graph and gossip matrix.
    pub fn build(&self) -> Result<(ProblemInstance, Graph, GossipMatrix)> {
        self.validate()?;
        let m = self.m.expect("validated");
        let ds = self.dataset()?;
        let problem = ProblemInstance::new(&ds, m, self.family()?, self.rho, self.gamma, self.partition)?;
        // separate stream from the data generator
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let (graph, gossip) = self.topology.build(m, &mut rng)?;
        Ok((problem, graph, gossip))
    }
}

/// Splits a multi-spec file on lines consisting of `---`.
pub fn parse_spec_list(text: &str) -> Result<Vec<RunSpec>> {
    let mut specs = Vec::new();
    let mut chunk = String::new();
    let mut flush = |chunk: &mut String| -> Result<()> {
        if chunk.lines().any(|l| !l.split('#').next().unwrap_or("").trim().is_empty()) {
            specs.push(RunSpec::from_text(chunk)?);
        }
        chunk.clear();
        Ok(())
    };
    for line in text.lines() {
        if line.trim() == "---" {
            flush(&mut chunk)?;
        } else {
            chunk.push_str(line);
            chunk.push('\n');
        }
    }
    flush(&mut chunk)?;
    Ok(specs)
}
