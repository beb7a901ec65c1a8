//! Numeric tables, explained observations and aspect partitions.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt::format_sig;
use crate::rng::{uniform_index, RngStream};

/// An `n x p` all-numeric dataset with unique column names, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    names: Vec<String>,
    values: Vec<f64>,
    n: usize,
}

impl NumericTable {
    /// Builds a table from row-major `values`. Rejects empty tables, duplicate
    /// names, non-finite values and a value count that is not a multiple of `p`.
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let p = names.len();
        if p == 0 || values.is_empty() {
            return Err(Error::EmptyTable);
        }
        check_unique(&names)?;
        if !values.len().is_multiple_of(p) {
            return Err(Error::LengthMismatch {
                expected: (values.len() / p + 1) * p,
                found: values.len(),
            });
        }
        let n = values.len() / p;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonNumericCell {
                row: pos / p,
                col: names[pos % p].clone(),
            });
        }
        Ok(Self { names, values, n })
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let p = names.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::RaggedRow {
                    row: i,
                    found: r.len(),
                    expected: p,
                });
            }
        }
        Self::new(names, rows.concat())
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if columns.len() != names.len() {
            return Err(Error::LengthMismatch {
                expected: names.len(),
                found: columns.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        let mut values = Vec::with_capacity(n * columns.len());
        for i in 0..n {
            values.extend(columns.iter().map(|c| c[i]));
        }
        Self::new(names, values)
    }

    /// Same schema, new values. Callers guarantee the values were copied from
    /// a valid table.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len() % self.names.len(), 0);
        Self {
            names: self.names.clone(),
            n: values.len() / self.names.len(),
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column_names(&self) -> &[String] {
        &self.names
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|c| c == name)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_cols()).map(|j| self.column(j)).collect()
    }

    /// Table made of the given rows (repeats allowed), in the given order.
    pub fn select_rows(&self, ids: &[usize]) -> Self {
        let mut values = Vec::with_capacity(ids.len() * self.n_cols());
        for &i in ids {
            values.extend_from_slice(self.row(i));
        }
        self.with_values(values)
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols()];
        for r in self.rows() {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums.iter().map(|s| s / self.n as f64).collect()
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for name in names {
        if !seen.insert(name.as_str()) {
            return Err(Error::DuplicateColumn(name.clone()));
        }
    }
    Ok(())
}

/// The observation being explained, aligned to a table's columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    values: Vec<f64>,
}

impl Observation {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(*v));
        }
        Ok(Self { values })
    }

    pub fn from_row(table: &NumericTable, i: usize) -> Result<Self> {
        if i >= table.n_rows() {
            return Err(Error::InvalidArgument(format!(
                "row {i} out of range for {} rows",
                table.n_rows()
            )));
        }
        Ok(Self {
            values: table.row(i).to_vec(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn check_against(&self, table: &NumericTable) -> Result<()> {
        if self.len() != table.n_cols() {
            return Err(Error::LengthMismatch {
                expected: table.n_cols(),
                found: self.len(),
            });
        }
        Ok(())
    }
}

/// One named group of column indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aspect {
    pub name: String,
    /// Sorted, distinct column indices.
    pub members: Vec<usize>,
}

/// Named groups of column indices, meant to partition `0..p`.
///
/// Construction does not validate; use [`validate_partition`] or
/// [`AspectPartition::checked`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AspectPartition {
    groups: Vec<Aspect>,
}

impl AspectPartition {
    pub fn new<S: Into<String>>(groups: impl IntoIterator<Item = (S, Vec<usize>)>) -> Self {
        let groups = groups
            .into_iter()
            .map(|(name, members)| {
                let set: BTreeSet<usize> = members.into_iter().collect();
                Aspect {
                    name: name.into(),
                    members: set.into_iter().collect(),
                }
            })
            .collect();
        Self { groups }
    }

    pub fn checked<S: Into<String>>(
        groups: impl IntoIterator<Item = (S, Vec<usize>)>,
        p: usize,
    ) -> Result<Self> {
        let part = Self::new(groups);
        validate_partition(&part, p)?;
        Ok(part)
    }

    /// Every column in its own group, named after the column.
    pub fn singletons(names: &[String]) -> Self {
        Self::new(names.iter().cloned().enumerate().map(|(j, n)| (n, vec![j])))
    }

    /// Resolves groups given by column name against `names`.
    pub fn from_named_columns(groups: &[(String, Vec<String>)], names: &[String]) -> Result<Self> {
        let mut out = Vec::with_capacity(groups.len());
        for (group, cols) in groups {
            let mut members = Vec::with_capacity(cols.len());
            for c in cols {
                let j = names
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::UnknownColumn(c.clone()))?;
                members.push(j);
            }
            out.push((group.clone(), members));
        }
        Self::checked(out, names.len())
    }

    /// Reads a JSON object mapping group name to an array of column names.
    /// Groups keep the order in which they appear in the document.
    pub fn from_json(text: &str, names: &[String]) -> Result<Self> {
        let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
        let mut groups = Vec::with_capacity(map.len());
        for (group, cols) in map {
            let cols: Vec<String> = serde_json::from_value(cols)?;
            groups.push((group, cols));
        }
        Self::from_named_columns(&groups, names)
    }

    /// The JSON form read by [`AspectPartition::from_json`].
    pub fn to_json(&self, names: &[String]) -> String {
        let map: serde_json::Map<String, serde_json::Value> = self
            .groups
            .iter()
            .map(|g| {
                let cols = g.members.iter().map(|&j| serde_json::Value::from(names[j].as_str()));
                (g.name.clone(), serde_json::Value::Array(cols.collect()))
            })
            .collect();
        serde_json::to_string_pretty(&map).expect("serializable")
    }

    pub fn groups(&self) -> &[Aspect] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// For each column, the index of the group containing it.
    /// Assumes the partition is valid for `p`.
    pub fn group_of_column(&self, p: usize) -> Vec<usize> {
        let mut owner = vec![usize::MAX; p];
        for (g, a) in self.groups.iter().enumerate() {
            for &j in &a.members {
                owner[j] = g;
            }
        }
        owner
    }
}

/// Checks that `partition` is a partition of `0..p` into nonempty, uniquely
/// named groups.
pub fn validate_partition(partition: &AspectPartition, p: usize) -> Result<()> {
    let mut names = HashSet::new();
    let mut seen = vec![false; p];
    for a in partition.groups() {
        if a.members.is_empty() {
            return Err(Error::EmptyGroup(a.name.clone()));
        }
        if !names.insert(a.name.as_str()) {
            return Err(Error::DuplicateGroup(a.name.clone()));
        }
        for &j in &a.members {
            if j >= p {
                return Err(Error::BadIndex { index: j, p });
            }
            if seen[j] {
                return Err(Error::OverlappingGroups(j));
            }
            seen[j] = true;
        }
    }
    let missing: Vec<usize> = (0..p).filter(|&j| !seen[j]).collect();
    if !missing.is_empty() {
        return Err(Error::NotCovering(missing));
    }
    Ok(())
}

/// Draws `count` rows uniformly with replacement.
pub fn sample_rows(table: &NumericTable, count: usize, stream: RngStream) -> Result<NumericTable> {
    let ids = sample_row_ids(table.n_rows(), count, stream)?;
    Ok(table.select_rows(&ids))
}

pub(crate) fn sample_row_ids(n: usize, count: usize, stream: RngStream) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::InvalidArgument(
            "sample size must be at least 1".into(),
        ));
    }
    let mut rng = stream.rng();
    Ok((0..count).map(|_| uniform_index(&mut rng, n)).collect())
}

/// Reads a comma-separated table with a header row. When `target` is given,
/// that column is split out and returned separately.
pub fn load_table(
    path: impl AsRef<Path>,
    target: Option<&str>,
) -> Result<(NumericTable, Option<Vec<f64>>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_table(file, target)
}

pub fn read_table<R: Read>(
    reader: R,
    target: Option<&str>,
) -> Result<(NumericTable, Option<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    check_unique(&header)?;
    let target_col = match target {
        Some(t) => Some(
            header
                .iter()
                .position(|h| h == t)
                .ok_or_else(|| Error::MissingTarget(t.to_string()))?,
        ),
        None => None,
    };

    let mut values = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::RaggedRow {
                row,
                found: rec.len(),
                expected: header.len(),
            });
        }
        for (col, cell) in rec.iter().enumerate() {
            let v = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row,
                    col: header[col].clone(),
                })?;
            if Some(col) == target_col {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let names: Vec<String> = header
        .into_iter()
        .enumerate()
        .filter(|(c, _)| Some(*c) != target_col)
        .map(|(_, h)| h)
        .collect();
    let table = NumericTable::new(names, values)?;
    Ok((table, target_col.map(|_| y)))
}

/// Writes `table` (and optionally a target column, placed last) in the same
/// dialect `load_table` reads, with 17 significant digits per value.
pub fn save_table(
    path: impl AsRef<Path>,
    table: &NumericTable,
    target: Option<(&str, &[f64])>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_table(file, table, target)
}

pub fn write_table<W: Write>(
    writer: W,
    table: &NumericTable,
    target: Option<(&str, &[f64])>,
) -> Result<()> {
    if let Some((_, y)) = target {
        if y.len() != table.n_rows() {
            return Err(Error::LengthMismatch {
                expected: table.n_rows(),
                found: y.len(),
            });
        }
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = table.column_names().iter().map(String::as_str).collect();
    if let Some((name, _)) = target {
        header.push(name);
    }
    w.write_record(&header)?;
    for (i, r) in table.rows().enumerate() {
        let mut rec: Vec<String> = r.iter().map(|v| format_sig(*v, 17)).collect();
        if let Some((_, y)) = target {
            rec.push(format_sig(y[i], 17));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}
