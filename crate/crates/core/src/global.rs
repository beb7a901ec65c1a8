//! Permutation importance for single variables and variable groups.
//!
//! A group is permuted as a block: one row permutation is applied jointly to
//! all of its columns, so the group's internal structure survives while its
//! association with the other columns and the target is broken. Importance is
//! the mean permuted loss minus the loss of the unpermuted model.

use std::fmt::Write as _;

use serde::Serialize;

use crate::data::{validate_partition, AspectPartition, NumericTable};
use crate::error::{Error, Result};
use crate::model::{predict, LossFn, ModelAdapter};
use crate::numfmt::format_sig;
use crate::rng::{permutation, sample_without_replacement, RngStream};

const GLOBAL_STREAM: u64 = 0x676c_6f62;
const SUBSAMPLE_KEY: u64 = 0;
const PERMUTE_KEY: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationConfig {
    /// Number of permutation repetitions (B).
    pub repetitions: usize,
    /// Row subsample size (N); all rows when `None`.
    pub sample_size: Option<usize>,
    pub loss: LossFn,
    pub seed: u64,
}

impl PermutationConfig {
    pub fn new(loss: LossFn, seed: u64) -> Self {
        Self {
            repetitions: 10,
            sample_size: None,
            loss,
            seed,
        }
    }

    pub fn repetitions(mut self, b: usize) -> Self {
        self.repetitions = b;
        self
    }

    pub fn sample_size(mut self, n: Option<usize>) -> Self {
        self.sample_size = n;
        self
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidArgument("repetitions must be at least 1".into()));
        }
        match self.sample_size {
            Some(0) => Err(Error::InvalidArgument("sample size must be at least 1".into())),
            Some(s) if s > n => Err(Error::InvalidArgument(format!(
                "sample size {s} exceeds the {n} available rows"
            ))),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupImportance {
    #[serde(rename = "group")]
    pub name: String,
    #[serde(skip)]
    pub members: Vec<usize>,
    #[serde(rename = "members")]
    pub member_names: Vec<String>,
    pub importance: f64,
    pub mean_permuted_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalImportance {
    pub loss: LossFn,
    pub full_model_loss: f64,
    pub baseline_loss: f64,
    pub repetitions: usize,
    pub sample_size: usize,
    pub seed: u64,
    pub groups: Vec<GroupImportance>,
}

impl GlobalImportance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Metadata as `#`-prefixed header lines, then one row per group.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# loss\t{}", self.loss);
        let _ = writeln!(s, "# full_model_loss\t{}", format_sig(self.full_model_loss, 17));
        let _ = writeln!(s, "# baseline_loss\t{}", format_sig(self.baseline_loss, 17));
        let _ = writeln!(s, "# repetitions\t{}", self.repetitions);
        let _ = writeln!(s, "# sample_size\t{}", self.sample_size);
        let _ = writeln!(s, "# seed\t{}", self.seed);
        s.push_str("group\tmembers\timportance\tmean_permuted_loss\n");
        for g in &self.groups {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}",
                g.name,
                g.member_names.join(","),
                format_sig(g.importance, 17),
                format_sig(g.mean_permuted_loss, 17)
            );
        }
        s
    }
}

/// Applies one shared random row permutation to every column in `group`.
pub fn permute_group(table: &NumericTable, group: &[usize], stream: RngStream) -> Result<NumericTable> {
    if group.is_empty() {
        return Err(Error::InvalidArgument("cannot permute an empty group".into()));
    }
    let p = table.n_cols();
    if let Some(&bad) = group.iter().find(|&&j| j >= p) {
        return Err(Error::BadIndex { index: bad, p });
    }
    let perm = permutation(&mut stream.rng(), table.n_rows());
    let mut values = table.values().to_vec();
    for (i, &src) in perm.iter().enumerate() {
        for &j in group {
            values[i * p + j] = table.get(src, j);
        }
    }
    Ok(table.with_values(values))
}

/// A subsampled evaluation context: the rows, their targets and the
/// unpermuted loss are fixed once, and any member set can then be scored.
///
/// The permutation used for repetition `b` of a member set depends only on
/// `(seed, members, b)`, so the same set always gets the same permutations no
/// matter which partition or node it is evaluated for.
pub struct PermutationRun<'a> {
    model: &'a dyn ModelAdapter,
    table: NumericTable,
    y: Vec<f64>,
    cfg: PermutationConfig,
    full_model_loss: f64,
    stream: RngStream,
}

impl<'a> PermutationRun<'a> {
    pub fn new(
        model: &'a dyn ModelAdapter,
        table: &NumericTable,
        y: &[f64],
        cfg: PermutationConfig,
    ) -> Result<Self> {
        if y.len() != table.n_rows() {
            return Err(Error::LengthMismatch {
                expected: table.n_rows(),
                found: y.len(),
            });
        }
        cfg.validate(table.n_rows())?;
        let stream = RngStream::new(cfg.seed, GLOBAL_STREAM);
        let (table, y) = match cfg.sample_size {
            Some(s) if s < table.n_rows() => {
                let ids = sample_without_replacement(
                    &mut stream.derive(SUBSAMPLE_KEY).rng(),
                    table.n_rows(),
                    s,
                );
                let ys = ids.iter().map(|&i| y[i]).collect();
                (table.select_rows(&ids), ys)
            }
            _ => (table.clone(), y.to_vec()),
        };
        let full_model_loss = cfg.loss.loss(&y, &predict(model, &table)?)?;
        Ok(Self {
            model,
            table,
            y,
            cfg,
            full_model_loss,
            stream,
        })
    }

    pub fn table(&self) -> &NumericTable {
        &self.table
    }

    pub fn full_model_loss(&self) -> f64 {
        self.full_model_loss
    }

    /// Substream for repetition `rep` of the (sorted) member set.
    pub fn permutation_stream(&self, members: &[usize], rep: usize) -> RngStream {
        self.stream
            .derive(PERMUTE_KEY)
            .derive_slice(members)
            .derive(rep as u64)
    }

    /// Loss after one block permutation of `members` (repetition `rep`).
    pub fn permuted_loss(&self, members: &[usize], rep: usize) -> Result<f64> {
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let permuted = permute_group(&self.table, &sorted, self.permutation_stream(&sorted, rep))?;
        self.cfg.loss.loss(&self.y, &predict(self.model, &permuted)?)
    }

    /// Mean over repetitions of `permuted loss - full model loss`. Averaging
    /// the differences keeps the result exactly zero when permuting leaves
    /// the predictions unchanged.
    pub fn importance(&self, members: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for rep in 0..self.cfg.repetitions {
            total += self.permuted_loss(members, rep)? - self.full_model_loss;
        }
        Ok(total / self.cfg.repetitions as f64)
    }

    pub fn mean_permuted_loss(&self, members: &[usize]) -> Result<f64> {
        Ok(self.full_model_loss + self.importance(members)?)
    }

    /// Mean loss with every column permuted jointly.
    pub fn baseline_loss(&self) -> Result<f64> {
        let all: Vec<usize> = (0..self.table.n_cols()).collect();
        self.mean_permuted_loss(&all)
    }

    pub fn evaluate(&self, groups: &AspectPartition) -> Result<GlobalImportance> {
        validate_partition(groups, self.table.n_cols())?;
        let names = self.table.column_names();
        let mut out = Vec::with_capacity(groups.len());
        for a in groups.groups() {
            let importance = self.importance(&a.members)?;
            out.push(GroupImportance {
                name: a.name.clone(),
                members: a.members.clone(),
                member_names: a.members.iter().map(|&j| names[j].clone()).collect(),
                importance,
                mean_permuted_loss: self.full_model_loss + importance,
            });
        }
        Ok(GlobalImportance {
            loss: self.cfg.loss,
            full_model_loss: self.full_model_loss,
            baseline_loss: self.baseline_loss()?,
            repetitions: self.cfg.repetitions,
            sample_size: self.table.n_rows(),
            seed: self.cfg.seed,
            groups: out,
        })
    }
}

/// Block-permutation importance of each group in `groups`.
pub fn group_importance(
    model: &dyn ModelAdapter,
    table: &NumericTable,
    y: &[f64],
    groups: &AspectPartition,
    cfg: PermutationConfig,
) -> Result<GlobalImportance> {
    PermutationRun::new(model, table, y, cfg)?.evaluate(groups)
}

/// [`group_importance`] over the all-singletons partition.
pub fn single_variable_importance(
    model: &dyn ModelAdapter,
    table: &NumericTable,
    y: &[f64],
    cfg: PermutationConfig,
) -> Result<GlobalImportance> {
    let groups = AspectPartition::singletons(table.column_names());
    group_importance(model, table, y, &groups, cfg)
}
