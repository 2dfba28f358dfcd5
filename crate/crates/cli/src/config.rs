//! Run configuration: a flat `key = value` file overridden by CLI flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Errors that end the run with exit status 2.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config file {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid value for `{key}`: {msg}")]
    Value { key: String, msg: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    SpectralCheck,
    KernelCheck,
    Hormander,
    Counterexample,
    Table,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::SpectralCheck => "spectral-check",
            Suite::KernelCheck => "kernel-check",
            Suite::Hormander => "hormander",
            Suite::Counterexample => "counterexample",
            Suite::Table => "table",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub suite: Suite,
    pub dims: Vec<usize>,
    pub xi: Vec<f64>,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Gauss–Legendre nodes per panel for the outer quadratures.
    pub order: usize,
    pub seed: u64,
    /// Random samples for the pointwise-bound check.
    pub samples: usize,
    /// Random expansion pairs per adjoint pairing.
    pub pairs: usize,
    pub out: Option<PathBuf>,
    /// Replace the multiplier by one with `m(0) = 1` (fault injection).
    pub inject_m0: bool,
}

impl RunConfig {
    pub fn defaults(suite: Suite) -> Self {
        let (dims, xi, rel_tol) = match suite {
            Suite::SpectralCheck => (vec![1, 2, 3], vec![], 1e-10),
            Suite::KernelCheck => (vec![1], vec![], 1e-10),
            Suite::Hormander => (vec![2], vec![2.0, 4.0, 8.0], 1e-8),
            Suite::Counterexample => (vec![2], vec![8.0, 16.0, 32.0, 64.0], 1e-8),
            Suite::Table => (vec![1, 2], vec![8.0, 16.0, 32.0, 64.0], 1e-8),
        };
        Self {
            suite,
            dims,
            xi,
            abs_tol: 1e-13,
            rel_tol,
            order: 0,
            seed: 0,
            samples: 10_000,
            pairs: 100,
            out: None,
            inject_m0: false,
        }
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |msg: String| ConfigError::Value {
            key: key.to_string(),
            msg,
        };
        match key {
            "dim" => self.dims = parse_list(value).map_err(bad)?,
            "xi" => self.xi = parse_list(value).map_err(bad)?,
            "tol" | "rel_tol" => self.rel_tol = parse_one(value).map_err(bad)?,
            "abs_tol" => self.abs_tol = parse_one(value).map_err(bad)?,
            "order" => self.order = parse_one(value).map_err(bad)?,
            "seed" => self.seed = parse_one(value).map_err(bad)?,
            "samples" => self.samples = parse_one(value).map_err(bad)?,
            "pairs" => self.pairs = parse_one(value).map_err(bad)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Reads a flat config: `key = value` per line, `#` comments, optional
    /// quotes around values.
    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        for (k, v) in parse_flat(&text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: &str| {
            Err(ConfigError::Value {
                key: key.into(),
                msg: msg.into(),
            })
        };
        if self.dims.is_empty() || self.dims.contains(&0) {
            return bad("dim", "dimensions must be >= 1");
        }
        if self.xi.iter().any(|x| !(x.is_finite() && *x > 0.0)) || self.xi.windows(2).any(|w| w[1] <= w[0]) {
            return bad("xi", "ladder must be positive and strictly increasing");
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return bad("tol", "tolerances must be > 0");
        }
        if self.samples == 0 || self.pairs == 0 {
            return bad("samples", "sample counts must be >= 1");
        }
        Ok(())
    }
}

fn parse_one<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    s.trim().parse::<T>().map_err(|e| format!("{s:?}: {e}"))
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let s = s.trim().trim_start_matches('[').trim_end_matches(']');
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_one).collect()
}

/// `key = value` pairs in file order; later keys win when applied.
pub fn parse_flat(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: n + 1,
            msg: format!("expected `key = value`, got {raw:?}"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax {
                line: n + 1,
                msg: "empty key".into(),
            });
        }
        let v = v.trim().trim_matches('"');
        out.insert(k.to_string(), v.to_string());
    }
    Ok(out)
}
