//! Datasets: sparse/dense text loaders, z-score normalization and the
//! random-instance generators.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Samples `a_j ∈ R^n` with labels `b_j`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    features: Vec<f64>,
    labels: Vec<f64>,
    pub provenance: String,
}

impl Dataset {
    pub fn new(n: usize, features: Vec<f64>, labels: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        if features.len() != n * labels.len() {
            return Err(Error::Data(format!(
                "{} feature values for {} samples of dimension {n}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature in sample {}",
                k / n.max(1)
            )));
        }
        if let Some(j) = labels.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite label in sample {j}")));
        }
        Ok(Dataset {
            n,
            features,
            labels,
            provenance: provenance.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.features[j * self.n..(j + 1) * self.n]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Fails unless every label is exactly `-1` or `+1`.
    pub fn check_binary_labels(&self) -> Result<()> {
        match self.labels.iter().position(|&b| b != 1.0 && b != -1.0) {
            Some(j) => Err(Error::Data(format!(
                "label {} of sample {j} is not in {{-1, +1}}",
                self.labels[j]
            ))),
            None => Ok(()),
        }
    }
}

/// Parses `label idx:val ...` lines with 1-indexed feature ids. `n` is the
/// largest index seen unless `n_override` is given.
pub fn parse_svmlight(text: &str, n_override: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_idx = 0;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").replace('\u{2212}', "-");
        let mut tokens = body.split_whitespace();
        let Some(label) = tokens.next() else { continue };
        let label: f64 = label.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad label {label:?}"),
        })?;
        let mut row = Vec::new();
        for tok in tokens {
            if tok.starts_with("qid:") {
                continue;
            }
            let (idx, val) = tok.split_once(':').ok_or(Error::Parse {
                line,
                msg: format!("expected idx:val, got {tok:?}"),
            })?;
            let idx: usize = match idx.parse() {
                Ok(i) if i >= 1 => i,
                _ => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("bad feature index {idx:?}"),
                    })
                }
            };
            let val: f64 = val.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("bad feature value {val:?}"),
            })?;
            if !val.is_finite() || !label.is_finite() {
                return Err(Error::Parse {
                    line,
                    msg: "non-finite value".into(),
                });
            }
            max_idx = max_idx.max(idx);
            row.push((idx - 1, val));
        }
        labels.push(label);
        rows.push(row);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = match n_override {
        Some(n) if n < max_idx => {
            return Err(Error::Data(format!(
                "feature index {max_idx} exceeds the requested dimension {n}"
            )))
        }
        Some(n) => n,
        None => max_idx,
    };
    let mut features = vec![0.0; n * labels.len()];
    for (j, row) in rows.iter().enumerate() {
        for &(i, v) in row {
            features[j * n + i] = v;
        }
    }
    Dataset::new(n, features, labels, "svmlight")
}

pub fn load_svmlight(path: impl AsRef<Path>, n_override: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut ds = parse_svmlight(&std::fs::read_to_string(path)?, n_override)?;
    ds.provenance = path.display().to_string();
    Ok(ds)
}

/// Writes the sparse format, omitting zero features. Values use Rust's
/// shortest round-trip float formatting.
pub fn write_svmlight<W: Write>(ds: &Dataset, mut w: W) -> Result<()> {
    for j in 0..ds.samples() {
        let mut line = format!("{}", ds.labels[j]);
        for (i, &v) in ds.row(j).iter().enumerate() {
            if v != 0.0 {
                let _ = write!(line, " {}:{}", i + 1, v);
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Dense comma-separated rows with the label in the last column. A first
/// line that does not parse as numbers is treated as a header.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut n = None;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            raw.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let vals = match vals {
            Ok(v) => v,
            Err(_) if labels.is_empty() && n.is_none() => {
                n = Some(raw.split(',').count() - 1);
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    msg: e.to_string(),
                })
            }
        };
        let width = *n.get_or_insert(vals.len().saturating_sub(1));
        if vals.len() != width + 1 || vals.is_empty() {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} columns, got {}", width + 1, vals.len()),
            });
        }
        features.extend_from_slice(&vals[..width]);
        labels.push(vals[width]);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Dataset::new(n.unwrap_or(0), features, labels, "csv")
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut ds = parse_csv(&std::fs::read_to_string(path)?)?;
    ds.provenance = path.display().to_string();
    Ok(ds)
}

/// Standard deviations below this are treated as constant features.
pub const ZSCORE_STD_FLOOR: f64 = 1e-12;

/// Per-feature standardization to mean 0 and unit sample standard
/// deviation (denominator `S - 1`). Constant features become 0.
pub fn zscore(ds: &Dataset) -> Result<Dataset> {
    let s = ds.samples();
    if s < 2 {
        return Err(Error::Data(format!("z-score needs at least 2 samples, got {s}")));
    }
    let n = ds.dim();
    let mut out = ds.features.clone();
    for i in 0..n {
        let mean = (0..s).map(|j| ds.features[j * n + i]).sum::<f64>() / s as f64;
        let var = (0..s)
            .map(|j| (ds.features[j * n + i] - mean).powi(2))
            .sum::<f64>()
            / (s - 1) as f64;
        let sd = var.sqrt();
        for j in 0..s {
            out[j * n + i] = if sd < ZSCORE_STD_FLOOR {
                0.0
            } else {
                (ds.features[j * n + i] - mean) / sd
            };
        }
    }
    Dataset::new(n, out, ds.labels.clone(), ds.provenance.clone())
}

const RANGE_FLOOR: f64 = 1e-10;

/// Standard normal features, each sample min-max scaled to `[0, 1]`.
fn gen_scaled_features(rng: &mut ChaCha8Rng, n: usize, s: usize) -> Vec<f64> {
    let mut features = Vec::with_capacity(n * s);
    for _ in 0..s {
        let col: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let range = (hi - lo).max(RANGE_FLOOR);
        features.extend(col.iter().map(|v| (v - lo) / range));
    }
    features
}

/// Random regression data: labels uniform on `[0, 1)`, features standard
/// normal and min-max scaled per sample (not per feature).
pub fn gen_random_regression(n: usize, s: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || s == 0 {
        return Err(Error::InvalidSize(format!("need n >= 1 and S >= 1, got n={n}, S={s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<f64> = (0..s).map(|_| rng.random::<f64>()).collect();
    let features = gen_scaled_features(&mut rng, n, s);
    Dataset::new(n, features, labels, format!("random-regression(n={n},S={s},seed={seed})"))
}

/// Fraction of classification labels flipped after thresholding.
pub const LABEL_NOISE: f64 = 0.05;

/// Random classification data: features as in [`gen_random_regression`],
/// labels from a planted standard-normal direction thresholded at the
/// median score, with [`LABEL_NOISE`] of them flipped.
pub fn gen_random_classification(n: usize, s: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || s == 0 {
        return Err(Error::InvalidSize(format!("need n >= 1 and S >= 1, got n={n}, S={s}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = gen_scaled_features(&mut rng, n, s);
    let planted: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let scores: Vec<f64> = (0..s)
        .map(|j| {
            features[j * n..(j + 1) * n]
                .iter()
                .zip(&planted)
                .map(|(a, w)| a * w)
                .sum()
        })
        .collect();
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[s / 2];
    let labels = scores
        .iter()
        .map(|&sc| {
            let b = if sc >= median { 1.0 } else { -1.0 };
            if rng.random::<f64>() < LABEL_NOISE {
                -b
            } else {
                b
            }
        })
        .collect();
    Dataset::new(n, features, labels, format!("random-classification(n={n},S={s},seed={seed})"))
}
