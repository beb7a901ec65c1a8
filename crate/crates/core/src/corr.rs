//! Pearson and Spearman correlation matrices and the correlation distance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::NumericTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationMethod {
    Pearson,
    #[default]
    Spearman,
}

impl FromStr for CorrelationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pearson" => Ok(Self::Pearson),
            "spearman" => Ok(Self::Spearman),
            other => Err(Error::InvalidArgument(format!(
                "unknown correlation method '{other}'"
            ))),
        }
    }
}

impl fmt::Display for CorrelationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pearson => "pearson",
            Self::Spearman => "spearman",
        })
    }
}

/// Symmetric `p x p` matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    p: usize,
    values: Vec<f64>,
    method: CorrelationMethod,
}

impl CorrelationMatrix {
    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn method(&self) -> CorrelationMethod {
        self.method
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.p).map(<[f64]>::to_vec).collect()
    }
}

/// Mid-ranks (1-based); tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn centered_unit(col: &[f64]) -> Vec<f64> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    centered.into_iter().map(|v| v / norm).collect()
}

fn is_constant(col: &[f64]) -> bool {
    col.iter().all(|v| *v == col[0])
}

pub fn correlation_matrix(table: &NumericTable, method: CorrelationMethod) -> Result<CorrelationMatrix> {
    let p = table.n_cols();
    let mut cols = table.columns();
    for (j, c) in cols.iter().enumerate() {
        if is_constant(c) {
            return Err(Error::ZeroVarianceColumn(table.column_names()[j].clone()));
        }
    }
    if method == CorrelationMethod::Spearman {
        cols = cols.iter().map(|c| average_ranks(c)).collect();
    }
    let units: Vec<Vec<f64>> = cols.iter().map(|c| centered_unit(c)).collect();
    let mut values = vec![0.0; p * p];
    for i in 0..p {
        values[i * p + i] = 1.0;
        for j in (i + 1)..p {
            let r: f64 = units[i].iter().zip(&units[j]).map(|(a, b)| a * b).sum();
            let r = r.clamp(-1.0, 1.0);
            values[i * p + j] = r;
            values[j * p + i] = r;
        }
    }
    Ok(CorrelationMatrix { p, values, method })
}

/// Pearson (or Spearman) correlation of two equal-length series; `None` when
/// either is constant.
pub fn pairwise_correlation(x: &[f64], y: &[f64], method: CorrelationMethod) -> Option<f64> {
    if x.len() != y.len() || x.is_empty() || is_constant(x) || is_constant(y) {
        return None;
    }
    let (x, y) = match method {
        CorrelationMethod::Pearson => (x.to_vec(), y.to_vec()),
        CorrelationMethod::Spearman => (average_ranks(x), average_ranks(y)),
    };
    let (ux, uy) = (centered_unit(&x), centered_unit(&y));
    Some(ux.iter().zip(&uy).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0))
}

/// Symmetric distance matrix, row-major `p x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    p: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Accepts a square matrix given as rows; it must be symmetric, with zero
    /// diagonal and nonnegative finite entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.len();
        if p == 0 {
            return Err(Error::InvalidArgument("empty distance matrix".into()));
        }
        let mut values = Vec::with_capacity(p * p);
        for r in rows {
            if r.len() != p {
                return Err(Error::InvalidArgument("distance matrix is not square".into()));
            }
            values.extend_from_slice(r);
        }
        for i in 0..p {
            if values[i * p + i] != 0.0 {
                return Err(Error::InvalidArgument("distance diagonal must be zero".into()));
            }
            for j in 0..p {
                let d = values[i * p + j];
                if !d.is_finite() || d < 0.0 || d != values[j * p + i] {
                    return Err(Error::InvalidArgument(format!(
                        "distance ({i}, {j}) = {d} must be finite, nonnegative and symmetric"
                    )));
                }
            }
        }
        Ok(Self { p, values })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.p + j]
    }
}

/// `d(i, j) = 1 - |r(i, j)|`.
pub fn cor_distance(c: &CorrelationMatrix) -> DistanceMatrix {
    let p = c.dim();
    let mut values: Vec<f64> = c.values.iter().map(|r| 1.0 - r.abs()).collect();
    for i in 0..p {
        values[i * p + i] = 0.0;
    }
    DistanceMatrix { p, values }
}
