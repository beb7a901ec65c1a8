//! Triplot assembly: single-variable importances, the importance of every
//! node in the variable clustering tree, and the tree itself.

use serde::{Deserialize, Serialize, Serializer};

use crate::aspect::{fit_partition, AspectOptions};
use crate::cluster::{correlation_tree, cut_after_merges, Linkage, MergeTree};
use crate::corr::CorrelationMethod;
use crate::data::{AspectPartition, NumericTable, Observation};
use crate::error::{Error, Result};
use crate::global::{PermutationConfig, PermutationRun};
use crate::model::{LossFn, ModelAdapter};
use crate::numfmt::round_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriplotMode {
    Global,
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModeSettings {
    Global(PermutationConfig),
    Local(AspectOptions),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriplotConfig {
    pub method: CorrelationMethod,
    pub linkage: Linkage,
    pub settings: ModeSettings,
}

impl TriplotConfig {
    pub fn global(cfg: PermutationConfig) -> Self {
        Self {
            method: CorrelationMethod::default(),
            linkage: Linkage::default(),
            settings: ModeSettings::Global(cfg),
        }
    }

    pub fn local(opts: AspectOptions) -> Self {
        Self {
            method: CorrelationMethod::default(),
            linkage: Linkage::default(),
            settings: ModeSettings::Local(opts),
        }
    }

    pub fn method(mut self, method: CorrelationMethod) -> Self {
        self.method = method;
        self
    }

    pub fn linkage(mut self, linkage: Linkage) -> Self {
        self.linkage = linkage;
        self
    }

    pub fn mode(&self) -> TriplotMode {
        match self.settings {
            ModeSettings::Global(_) => TriplotMode::Global,
            ModeSettings::Local(_) => TriplotMode::Local,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafImportance {
    pub name: String,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeImportance {
    pub members: Vec<String>,
    #[serde(serialize_with = "height_12_digits")]
    pub height: f64,
    pub importance: f64,
}

fn height_12_digits<S: Serializer>(h: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*h, 12))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriplotMetadata {
    pub method: CorrelationMethod,
    pub linkage: Linkage,
    pub seed: u64,
    /// Rows used: the permutation subsample (global) or N (local).
    pub sample_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<LossFn>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_model_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Vec<f64>>,
}

/// Leaves follow column order; `nodes[t]` belongs to `tree.merges()[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTriplot")]
pub struct TriplotResult {
    pub tree: MergeTree,
    pub leaves: Vec<LeafImportance>,
    pub nodes: Vec<NodeImportance>,
    pub mode: TriplotMode,
    pub metadata: TriplotMetadata,
}

#[derive(Deserialize)]
struct RawTriplot {
    tree: MergeTree,
    leaves: Vec<LeafImportance>,
    nodes: Vec<NodeImportance>,
    mode: TriplotMode,
    metadata: TriplotMetadata,
}

impl TryFrom<RawTriplot> for TriplotResult {
    type Error = Error;

    fn try_from(r: RawTriplot) -> Result<Self> {
        if r.leaves.len() != r.tree.n_leaves() || r.nodes.len() != r.tree.merges().len() {
            return Err(Error::InvalidArgument(format!(
                "{} leaves and {} nodes do not fit a tree over {} leaves",
                r.leaves.len(),
                r.nodes.len(),
                r.tree.n_leaves()
            )));
        }
        Ok(Self {
            tree: r.tree,
            leaves: r.leaves,
            nodes: r.nodes,
            mode: r.mode,
            metadata: r.metadata,
        })
    }
}

impl TriplotResult {
    pub fn leaf_importance(&self) -> Vec<f64> {
        self.leaves.iter().map(|l| l.importance).collect()
    }

    pub fn node_importance(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.importance).collect()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.leaves.iter().map(|l| l.name.clone()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One row per leaf and node: `kind, members, height, importance`.
    pub fn to_tsv(&self) -> String {
        use crate::numfmt::format_sig;
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = writeln!(s, "# mode\t{}", serde_json::to_value(self.mode).expect("enum").as_str().unwrap_or(""));
        let _ = writeln!(s, "# seed\t{}", self.metadata.seed);
        if let Some(b) = self.metadata.baseline_loss {
            let _ = writeln!(s, "# baseline_loss\t{}", format_sig(b, 17));
        }
        if let Some(f) = self.metadata.full_model_loss {
            let _ = writeln!(s, "# full_model_loss\t{}", format_sig(f, 17));
        }
        s.push_str("kind\tmembers\theight\timportance\n");
        for l in &self.leaves {
            let _ = writeln!(s, "leaf\t{}\t0\t{}", l.name, format_sig(l.importance, 17));
        }
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "node\t{}\t{}\t{}",
                n.members.join(","),
                format_sig(round_sig(n.height, 12), 12),
                format_sig(n.importance, 17)
            );
        }
        s
    }
}

fn leaves_and_nodes(
    table: &NumericTable,
    tree: &MergeTree,
    leaf: Vec<f64>,
    node: Vec<f64>,
) -> (Vec<LeafImportance>, Vec<NodeImportance>) {
    let names = table.column_names();
    let leaves = names
        .iter()
        .zip(leaf)
        .map(|(n, importance)| LeafImportance {
            name: n.clone(),
            importance,
        })
        .collect();
    let nodes = tree
        .merges()
        .iter()
        .zip(node)
        .map(|(m, importance)| NodeImportance {
            members: m.members.iter().map(|&j| names[j].clone()).collect(),
            height: m.height,
            importance,
        })
        .collect();
    (leaves, nodes)
}

/// Global triplot: permutation importance of every column and of every
/// tree node's member set, all on one row subsample.
pub fn model_triplot(
    model: &dyn ModelAdapter,
    table: &NumericTable,
    y: &[f64],
    cfg: &TriplotConfig,
) -> Result<TriplotResult> {
    let ModeSettings::Global(perm) = cfg.settings else {
        return Err(Error::InvalidArgument("global triplot needs permutation settings".into()));
    };
    let tree = correlation_tree(table, cfg.method, cfg.linkage)?;
    let run = PermutationRun::new(model, table, y, perm)?;
    let leaf = (0..table.n_cols())
        .map(|j| run.importance(&[j]))
        .collect::<Result<Vec<_>>>()?;
    let node = tree
        .merges()
        .iter()
        .map(|m| run.importance(&m.members))
        .collect::<Result<Vec<_>>>()?;
    let (leaves, nodes) = leaves_and_nodes(table, &tree, leaf, node);
    Ok(TriplotResult {
        tree,
        leaves,
        nodes,
        mode: TriplotMode::Global,
        metadata: TriplotMetadata {
            method: cfg.method,
            linkage: cfg.linkage,
            seed: perm.seed,
            sample_size: run.table().n_rows(),
            loss: Some(perm.loss),
            repetitions: Some(perm.repetitions),
            full_model_loss: Some(run.full_model_loss()),
            baseline_loss: Some(run.baseline_loss()?),
            limit: None,
            observation: None,
        },
    })
}

/// Local triplot: aspect contributions for the singleton partition and for
/// the tree cut after each merge, with the same sampled rows at every level.
/// `nodes[t]` is the contribution of the cluster created by merge `t`.
pub fn predict_triplot(
    model: &dyn ModelAdapter,
    table: &NumericTable,
    x_star: &Observation,
    cfg: &TriplotConfig,
) -> Result<TriplotResult> {
    let ModeSettings::Local(opts) = cfg.settings else {
        return Err(Error::InvalidArgument("local triplot needs aspect settings".into()));
    };
    let opts = opts.method(cfg.method);
    x_star.check_against(table)?;
    let names = table.column_names();
    let tree = if table.n_cols() == 1 {
        MergeTree::from_merges(Vec::new())?
    } else {
        correlation_tree(table, cfg.method, cfg.linkage)?
    };
    let singles = AspectPartition::singletons(names);
    let leaf = fit_partition(model, table, x_star, &singles, &opts)?.gamma;
    let mut node = Vec::with_capacity(tree.merges().len());
    for (t, m) in tree.merges().iter().enumerate() {
        let partition = cut_after_merges(&tree, t + 1, names);
        let fit = fit_partition(model, table, x_star, &partition, &opts)?;
        let slot = partition
            .groups()
            .iter()
            .position(|g| g.members == m.members)
            .expect("a merge's cluster is part of the cut right after it");
        node.push(fit.gamma[slot]);
    }
    let (leaves, nodes) = leaves_and_nodes(table, &tree, leaf, node);
    Ok(TriplotResult {
        tree,
        leaves,
        nodes,
        mode: TriplotMode::Local,
        metadata: TriplotMetadata {
            method: cfg.method,
            linkage: cfg.linkage,
            seed: opts.seed,
            sample_size: opts.n_samples,
            loss: None,
            repetitions: None,
            full_model_loss: None,
            baseline_loss: None,
            limit: opts.limit,
            observation: Some(x_star.values().to_vec()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aspect::{predict_aspects, Grouping};
    use crate::global::group_importance;
    use crate::model::{FnModel, LinearModel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn correlated_table(n: usize, seed: u64) -> NumericTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols = vec![Vec::new(); 4];
        for _ in 0..n {
            let z: f64 = rng.gen();
            cols[0].push(z + 0.1 * rng.gen::<f64>());
            cols[1].push(z + 0.1 * rng.gen::<f64>());
            cols[2].push(rng.gen());
            cols[3].push(rng.gen());
        }
        NumericTable::from_columns(vec!["a".into(), "b".into(), "c".into(), "d".into()], &cols).unwrap()
    }

    #[test]
    fn global_nodes_match_direct_group_importance() {
        let t = correlated_table(200, 1);
        let y: Vec<f64> = t.rows().map(|r| r[0] + 2.0 * r[1] - r[2]).collect();
        let m = FnModel::new("f", |r: &[f64]| r[0] + 2.0 * r[1] - r[2] + 0.1 * r[3]);
        let perm = PermutationConfig::new(LossFn::Rmse, 5).repetitions(3).sample_size(Some(150));
        let res = model_triplot(&m, &t, &y, &TriplotConfig::global(perm)).unwrap();
        assert_eq!(res.leaves.len(), 4);
        assert_eq!(res.nodes.len(), 3);
        for (merge, node) in res.tree.merges().iter().zip(&res.nodes) {
            let part = AspectPartition::new([("g", merge.members.clone())]);
            let rest: Vec<(String, Vec<usize>)> = (0..4)
                .filter(|j| !merge.members.contains(j))
                .map(|j| (format!("s{j}"), vec![j]))
                .collect();
            let part = AspectPartition::new(part.groups().iter().map(|g| (g.name.clone(), g.members.clone())).chain(rest));
            let direct = group_importance(&m, &t, &y, &part, perm).unwrap();
            assert_eq!(direct.groups[0].importance, node.importance);
        }
        let root = res.nodes.last().unwrap().importance;
        let md = &res.metadata;
        assert!((root - (md.baseline_loss.unwrap() - md.full_model_loss.unwrap())).abs() <= 1e-12);
    }

    #[test]
    fn local_leaves_match_singleton_explanation() {
        let t = correlated_table(100, 2);
        let m = LinearModel::new(0.5, vec![1.0, -1.0, 2.0, 0.0]);
        let x = Observation::from_row(&t, 3).unwrap();
        let opts = AspectOptions::new(500, 9);
        let res = predict_triplot(&m, &t, &x, &TriplotConfig::local(opts)).unwrap();
        let single = predict_aspects(
            &m,
            &t,
            &x,
            &Grouping::Partition(AspectPartition::singletons(t.column_names())),
            opts,
        )
        .unwrap();
        for l in &res.leaves {
            assert_eq!(Some(l.importance), single.contribution_of(&l.name));
        }
        let again = predict_triplot(&m, &t, &x, &TriplotConfig::local(opts)).unwrap();
        assert_eq!(res.to_json(), again.to_json());
    }

    #[test]
    fn constant_model_is_all_zero() {
        let t = correlated_table(60, 3);
        let y = t.column(0);
        let m = LinearModel::constant(1.0, 4);
        let g = model_triplot(&m, &t, &y, &TriplotConfig::global(PermutationConfig::new(LossFn::Rmse, 1))).unwrap();
        let x = Observation::from_row(&t, 0).unwrap();
        let l = predict_triplot(&m, &t, &x, &TriplotConfig::local(AspectOptions::new(100, 1))).unwrap();
        for r in [g, l] {
            assert!(r.leaf_importance().iter().chain(&r.node_importance()).all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_column_local_has_no_nodes() {
        let t = NumericTable::from_columns(vec!["a".into()], &[vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        let m = LinearModel::new(0.0, vec![2.0]);
        let x = Observation::new(vec![4.0]).unwrap();
        let r = predict_triplot(&m, &t, &x, &TriplotConfig::local(AspectOptions::new(50, 2))).unwrap();
        assert!(r.nodes.is_empty());
        assert_eq!(r.leaves.len(), 1);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let t = correlated_table(80, 4);
        let y = t.column(1);
        let m = LinearModel::new(0.0, vec![0.0, 1.0, 0.0, 0.0]);
        let r = model_triplot(&m, &t, &y, &TriplotConfig::global(PermutationConfig::new(LossFn::Mae, 2))).unwrap();
        let json = r.to_json();
        let back = TriplotResult::from_json(&json).unwrap();
        assert_eq!(back.to_json(), json);
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["nodes"].as_array_mut().unwrap().pop();
        assert!(TriplotResult::from_json(&v.to_string()).is_err());
        assert!(r.to_tsv().contains("kind\tmembers\theight\timportance\nleaf\ta\t0\t"));
    }

    #[test]
    fn mode_mismatch_is_rejected() {
        let t = correlated_table(30, 5);
        let m = LinearModel::constant(0.0, 4);
        let x = Observation::from_row(&t, 0).unwrap();
        let global = TriplotConfig::global(PermutationConfig::new(LossFn::Rmse, 0));
        assert!(predict_triplot(&m, &t, &x, &global).is_err());
        let local = TriplotConfig::local(AspectOptions::new(10, 0));
        assert!(model_triplot(&m, &t, &t.column(0), &local).is_err());
    }
}
