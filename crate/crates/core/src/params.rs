//! Sparse feature and weight vectors, and the weight file format.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const HEADER: &str = "# egomedia-params v1";

#[derive(Debug, Error)]
pub enum ParamsError {
    #[error("params line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("feature key {0:?} cannot be stored")]
    BadKey(String),
    #[error("non-finite weight for {0:?}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// φ(x, z): sparse feature counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(BTreeMap<String, f64>);

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, key: impl Into<String>, v: f64) {
        *self.0.entry(key.into()).or_insert(0.0) += v;
    }

    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &FeatureVector, scale: f64) {
        for (k, v) in other.iter() {
            self.add(k, scale * v);
        }
    }
}

impl<K: Into<String>> FromIterator<(K, f64)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (K, f64)>>(iter: I) -> Self {
        let mut f = FeatureVector::new();
        for (k, v) in iter {
            f.add(k, v);
        }
        f
    }
}

/// Who a parameter vector belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Owner {
    Shared,
    User(String),
}

impl Owner {
    fn parse(s: &str) -> Self {
        match s.strip_prefix("user:") {
            Some(u) => Owner::User(u.to_string()),
            None => Owner::Shared,
        }
    }
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Shared => f.write_str("shared"),
            Owner::User(u) => write!(f, "user:{u}"),
        }
    }
}

/// θ: sparse weights; a missing key weighs 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub owner: Owner,
    pub version: u64,
    pub config_hash: String,
    weights: BTreeMap<String, f64>,
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::zero(Owner::Shared)
    }
}

/// Hex SHA-256 of a configuration rendering.
pub fn config_hash(rendered: &str) -> String {
    hex::encode(Sha256::digest(rendered.as_bytes()))
}

impl ParamVector {
    pub fn zero(owner: Owner) -> Self {
        Self {
            owner,
            version: 0,
            config_hash: String::new(),
            weights: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.weights.get(key).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, key: impl Into<String>, w: f64) {
        let key = key.into();
        if w == 0.0 {
            self.weights.remove(&key);
        } else {
            self.weights.insert(key, w);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dot(&self, phi: &FeatureVector) -> f64 {
        phi.iter().map(|(k, v)| self.get(k) * v).sum()
    }

    /// `θ += scale * g`
    pub fn add_scaled(&mut self, g: &FeatureVector, scale: f64) {
        for (k, v) in g.iter() {
            let w = self.get(k) + scale * v;
            self.set(k, w);
        }
    }

    /// `θ *= factor`
    pub fn scale(&mut self, factor: f64) {
        if factor == 0.0 {
            self.weights.clear();
        } else {
            self.weights.values_mut().for_each(|w| *w *= factor);
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.weights.values().map(|w| w * w).sum()
    }

    /// Same weights, new owner and version 0.
    pub fn fork_as(&self, owner: Owner) -> Self {
        Self {
            owner,
            version: 0,
            config_hash: self.config_hash.clone(),
            weights: self.weights.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ParamsError> {
        writeln!(w, "{HEADER}")?;
        writeln!(w, "owner={}", self.owner)?;
        writeln!(w, "version={}", self.version)?;
        writeln!(w, "config_hash={}", self.config_hash)?;
        for (k, v) in &self.weights {
            if k.is_empty() || k.contains(['\t', '\n', '\r']) {
                return Err(ParamsError::BadKey(k.clone()));
            }
            if !v.is_finite() {
                return Err(ParamsError::NonFinite(k.clone()));
            }
            // Display for f64 is the shortest string that parses back exactly
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, ParamsError> {
        let fmt_err = |line: usize, message: &str| ParamsError::Format {
            line,
            message: message.to_string(),
        };
        let mut lines = r.lines();
        let mut header = |n: usize, field: &str| -> Result<String, ParamsError> {
            let l = lines.next().ok_or_else(|| fmt_err(n, "truncated header"))??;
            if field.is_empty() {
                return if l == HEADER { Ok(l) } else { Err(fmt_err(n, "not a params file")) };
            }
            l.strip_prefix(field)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_string)
                .ok_or_else(|| fmt_err(n, &format!("expected {field}=")))
        };
        header(1, "")?;
        let owner = Owner::parse(&header(2, "owner")?);
        let version = header(3, "version")?.parse().map_err(|_| fmt_err(3, "bad version"))?;
        let config_hash = header(4, "config_hash")?;
        let mut p = ParamVector {
            owner,
            version,
            config_hash,
            weights: BTreeMap::new(),
        };
        for (i, l) in lines.enumerate() {
            let n = i + 5;
            let l = l?;
            if l.is_empty() {
                continue;
            }
            let (k, v) = l.split_once('\t').ok_or_else(|| fmt_err(n, "expected key<TAB>weight"))?;
            let v: f64 = v.parse().map_err(|_| fmt_err(n, "bad weight"))?;
            if !v.is_finite() {
                return Err(ParamsError::NonFinite(k.to_string()));
            }
            p.set(k, v);
        }
        Ok(p)
    }
}
