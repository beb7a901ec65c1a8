//! Agglomerative clustering of variables on correlation distance, tree cuts,
//! and correlation-cutoff grouping.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corr::{cor_distance, correlation_matrix, CorrelationMethod, DistanceMatrix};
use crate::data::{AspectPartition, NumericTable};
use crate::error::{Error, Result};
use crate::numfmt::round_sig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Complete,
    Single,
    Average,
}

impl FromStr for Linkage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(Self::Complete),
            "single" => Ok(Self::Single),
            "average" => Ok(Self::Average),
            other => Err(Error::InvalidArgument(format!("unknown linkage '{other}'"))),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Complete => "complete",
            Self::Single => "single",
            Self::Average => "average",
        })
    }
}

/// One agglomeration step. Leaves are nodes `0..p`; merge `t` creates node
/// `p + t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    #[serde(serialize_with = "height_12_digits")]
    pub height: f64,
    /// Sorted column indices under this node.
    pub members: Vec<usize>,
}

fn height_12_digits<S: Serializer>(h: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(round_sig(*h, 12))
}

/// The `p - 1` merges of an agglomerative clustering, in merge order.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MergeTree {
    merges: Vec<Merge>,
}

impl<'de> Deserialize<'de> for MergeTree {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let merges = Vec::<Merge>::deserialize(d)?;
        MergeTree::from_merges(merges).map_err(serde::de::Error::custom)
    }
}

impl MergeTree {
    /// Validates the structural invariants: children exist and are used once,
    /// members are the union of the children's members, and the root covers
    /// every leaf.
    pub fn from_merges(merges: Vec<Merge>) -> Result<Self> {
        let p = merges.len() + 1;
        let mut node_members: Vec<Option<Vec<usize>>> =
            (0..p).map(|j| Some(vec![j])).collect();
        let mut used = vec![false; 2 * p - 1];
        for (t, m) in merges.iter().enumerate() {
            let id = p + t;
            for child in [m.left, m.right] {
                if child >= id || used[child] || m.left == m.right {
                    return Err(Error::InvalidArgument(format!(
                        "merge {t} references invalid child {child}"
                    )));
                }
                used[child] = true;
            }
            if !m.height.is_finite() {
                return Err(Error::NonFinite(m.height));
            }
            let mut members = node_members[m.left].clone().unwrap_or_default();
            members.extend(node_members[m.right].clone().unwrap_or_default());
            members.sort_unstable();
            if members != m.members {
                return Err(Error::InvalidArgument(format!(
                    "merge {t} members are not the union of its children"
                )));
            }
            node_members.push(Some(members));
        }
        Ok(Self { merges })
    }

    pub fn n_leaves(&self) -> usize {
        self.merges.len() + 1
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.merges.windows(2).all(|w| w[0].height <= w[1].height)
    }

    /// Members of node `id` (leaf or internal).
    pub fn node_members(&self, id: usize) -> Vec<usize> {
        let p = self.n_leaves();
        if id < p {
            vec![id]
        } else {
            self.merges[id - p].members.clone()
        }
    }

    /// Leaves in dendrogram order: depth-first from the root, left child first.
    pub fn leaf_order(&self) -> Vec<usize> {
        let p = self.n_leaves();
        let mut out = Vec::with_capacity(p);
        let mut stack = vec![2 * p - 2];
        while let Some(id) = stack.pop() {
            if id < p {
                out.push(id);
            } else {
                let m = &self.merges[id - p];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }

    /// Clusters formed by the first `steps` merges, ordered by smallest member.
    pub fn clusters_after(&self, steps: usize) -> Vec<Vec<usize>> {
        self.components(self.merges.iter().take(steps))
    }

    fn components<'a>(&self, merges: impl Iterator<Item = &'a Merge>) -> Vec<Vec<usize>> {
        let p = self.n_leaves();
        let mut uf = UnionFind::new(p);
        for m in merges {
            for w in m.members.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; p];
        for j in 0..p {
            let r = uf.find(j);
            if slot[r] == usize::MAX {
                slot[r] = groups.len();
                groups.push(Vec::new());
            }
            groups[slot[r]].push(j);
        }
        groups
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Agglomerative clustering with Lance-Williams distance updates.
///
/// At every step the pair of active clusters at minimal linkage distance is
/// merged; ties go to the lexicographically smallest `(left, right)` node-id
/// pair, with `left < right`.
pub fn agglomerative(d: &DistanceMatrix, linkage: Linkage) -> MergeTree {
    let p = d.dim();
    let total = 2 * p - 1;
    let mut dist = vec![f64::INFINITY; total * total];
    for i in 0..p {
        for j in 0..p {
            dist[i * total + j] = d.get(i, j);
        }
    }
    let mut size = vec![0usize; total];
    size[..p].fill(1);
    let mut members: Vec<Vec<usize>> = (0..p).map(|j| vec![j]).collect();
    let mut active: Vec<usize> = (0..p).collect();
    let mut merges = Vec::with_capacity(p.saturating_sub(1));

    for t in 0..p.saturating_sub(1) {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (ai, &a) in active.iter().enumerate() {
            for &b in &active[ai + 1..] {
                let dab = dist[a * total + b];
                if dab < best.0 {
                    best = (dab, a, b);
                }
            }
        }
        let (height, a, b) = best;
        let id = p + t;
        active.retain(|&k| k != a && k != b);
        for &k in &active {
            let (da, db) = (dist[a * total + k], dist[b * total + k]);
            let dk = match linkage {
                Linkage::Complete => da.max(db),
                Linkage::Single => da.min(db),
                Linkage::Average => {
                    (size[a] as f64 * da + size[b] as f64 * db) / (size[a] + size[b]) as f64
                }
            };
            dist[id * total + k] = dk;
            dist[k * total + id] = dk;
        }
        // active stays sorted: the new id is larger than every existing one
        active.push(id);
        size[id] = size[a] + size[b];
        let mut m: Vec<usize> = members[a].iter().chain(&members[b]).copied().collect();
        m.sort_unstable();
        members.push(m.clone());
        merges.push(Merge {
            left: a,
            right: b,
            height,
            members: m,
        });
    }
    let tree = MergeTree { merges };
    debug_assert!(linkage == Linkage::Average || tree.is_monotone());
    tree
}

/// Connected components of all merges with height `<= h`.
pub fn cut_tree(tree: &MergeTree, h: f64, names: &[String]) -> AspectPartition {
    let groups = tree.components(tree.merges.iter().filter(|m| m.height <= h));
    named_partition(groups, names)
}

/// Partition after the first `steps` merges, named like [`cut_tree`].
pub fn cut_after_merges(tree: &MergeTree, steps: usize, names: &[String]) -> AspectPartition {
    named_partition(tree.clusters_after(steps), names)
}

const MAX_GROUP_NAME: usize = 40;

/// Joins member column names with `_`, truncated at 40 characters.
pub fn group_name(members: &[usize], names: &[String]) -> String {
    let joined = members
        .iter()
        .map(|&j| names[j].as_str())
        .collect::<Vec<_>>()
        .join("_");
    joined.chars().take(MAX_GROUP_NAME).collect()
}

fn named_partition(groups: Vec<Vec<usize>>, names: &[String]) -> AspectPartition {
    let mut taken = HashSet::new();
    let named: Vec<(String, Vec<usize>)> = groups
        .into_iter()
        .map(|g| {
            let base = group_name(&g, names);
            let mut name = base.clone();
            let mut k = 2;
            while !taken.insert(name.clone()) {
                name = format!("{base}~{k}");
                k += 1;
            }
            (name, g)
        })
        .collect();
    AspectPartition::new(named)
}

/// Groups variables so that every within-group pair has `|r| >= cutoff`:
/// complete-linkage clustering on `1 - |r|`, cut at `1 - cutoff`.
pub fn group_variables(
    table: &NumericTable,
    cutoff: f64,
    method: CorrelationMethod,
) -> Result<AspectPartition> {
    if !(0.0..=1.0).contains(&cutoff) {
        return Err(Error::InvalidArgument(format!(
            "cutoff {cutoff} must lie in [0, 1]"
        )));
    }
    let tree = correlation_tree(table, method, Linkage::Complete)?;
    Ok(cut_tree(&tree, 1.0 - cutoff, table.column_names()))
}

/// Clustering tree of the table's columns on correlation distance.
pub fn correlation_tree(
    table: &NumericTable,
    method: CorrelationMethod,
    linkage: Linkage,
) -> Result<MergeTree> {
    let c = correlation_matrix(table, method)?;
    Ok(agglomerative(&cor_distance(&c), linkage))
}
