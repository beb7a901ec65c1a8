//! Local importance of variable groups for a single prediction.
//!
//! Sampled rows `A` get some of their aspects overwritten with the explained
//! observation's values, as directed by a binary design `X'` (each row flags
//! two aspect indices drawn with replacement, so one or two aspects). The
//! prediction change `Y_m = f(A') - f(A)` is then regressed on `X'` without an
//! intercept; the coefficients are the aspect contributions. A lasso variant
//! caps the number of nonzero contributions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::group_variables;
use crate::corr::{pairwise_correlation, CorrelationMethod};
use crate::data::{sample_row_ids, validate_partition, AspectPartition, NumericTable, Observation};
use crate::error::{Error, Result};
use crate::linalg::cholesky_solve;
use crate::model::{predict, ModelAdapter};
use crate::numfmt::format_sig;
use crate::rng::{uniform_index, RngStream};

const LOCAL_STREAM: u64 = 0x6c6f_6361;
const ROWS_KEY: u64 = 0;
const FLAGS_KEY: u64 = 1;

const CD_TOLERANCE: f64 = 1e-10;
const CD_MAX_SWEEPS: usize = 100_000;
const BISECTION_TOLERANCE: f64 = 1e-6;

/// The sampled rows, the replacement design and the modified rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleDesign {
    pub row_ids: Vec<usize>,
    /// `N x m` indicator matrix, row-major.
    x_prime: Vec<u8>,
    m: usize,
    pub aspect_names: Vec<String>,
    pub a: NumericTable,
    pub a_prime: NumericTable,
}

impl SampleDesign {
    pub fn n_samples(&self) -> usize {
        self.row_ids.len()
    }

    pub fn n_aspects(&self) -> usize {
        self.m
    }

    /// `sigma_j(i)`: whether aspect `j` was replaced in sampled row `i`.
    pub fn flag(&self, i: usize, j: usize) -> bool {
        self.x_prime[i * self.m + j] == 1
    }

    pub fn flag_row(&self, i: usize) -> &[u8] {
        &self.x_prime[i * self.m..(i + 1) * self.m]
    }

    /// `W = X'^T X'` as exact counts.
    pub fn gram_counts(&self) -> Vec<u64> {
        let m = self.m;
        let mut w = vec![0u64; m * m];
        for row in self.x_prime.chunks_exact(m) {
            for (i, &si) in row.iter().enumerate() {
                if si == 0 {
                    continue;
                }
                for (j, &sj) in row.iter().enumerate() {
                    w[i * m + j] += u64::from(sj);
                }
            }
        }
        w
    }

    /// `Z = X'^T Y_m`.
    pub fn cross_product(&self, ym: &DeltaPredictions) -> Vec<f64> {
        let m = self.m;
        let mut z = vec![0.0; m];
        for (row, y) in self.x_prime.chunks_exact(m).zip(&ym.values) {
            for (zj, &s) in z.iter_mut().zip(row) {
                if s == 1 {
                    *zj += y;
                }
            }
        }
        z
    }
}

/// Draws `A` and `X'` and builds `A'`.
///
/// Rows and flags come from separate substreams of `stream`, so designs for
/// different partitions built from the same stream share the same rows `A`.
pub fn build_design(
    table: &NumericTable,
    x_star: &Observation,
    partition: &AspectPartition,
    n_samples: usize,
    stream: RngStream,
) -> Result<SampleDesign> {
    let p = table.n_cols();
    validate_partition(partition, p)?;
    x_star.check_against(table)?;
    let m = partition.len();
    if n_samples < m {
        return Err(Error::InvalidArgument(format!(
            "need at least as many samples as aspects ({n_samples} < {m})"
        )));
    }
    let row_ids = sample_row_ids(table.n_rows(), n_samples, stream.derive(ROWS_KEY))?;
    let a = table.select_rows(&row_ids);

    let mut rng = stream.derive(FLAGS_KEY).rng();
    let mut x_prime = vec![0u8; n_samples * m];
    for row in x_prime.chunks_exact_mut(m) {
        let k = uniform_index(&mut rng, m);
        let l = uniform_index(&mut rng, m);
        row[k] = 1;
        row[l] = 1;
    }

    let groups = partition.groups();
    let mut values = a.values().to_vec();
    for (i, flags) in x_prime.chunks_exact(m).enumerate() {
        for (g, _) in flags.iter().enumerate().filter(|(_, &s)| s == 1) {
            for &j in &groups[g].members {
                values[i * p + j] = x_star.values()[j];
            }
        }
    }
    let a_prime = a.with_values(values);
    Ok(SampleDesign {
        row_ids,
        x_prime,
        m,
        aspect_names: groups.iter().map(|g| g.name.clone()).collect(),
        a,
        a_prime,
    })
}

/// `Y_m = f(A') - f(A)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaPredictions {
    pub values: Vec<f64>,
}

pub fn delta_predictions(model: &dyn ModelAdapter, design: &SampleDesign) -> Result<DeltaPredictions> {
    let modified = predict(model, &design.a_prime)?;
    let original = predict(model, &design.a)?;
    Ok(DeltaPredictions {
        values: modified.iter().zip(&original).map(|(a, b)| a - b).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateFit {
    pub gamma: Vec<f64>,
    /// `m x m`, row-major.
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub residual_norm: f64,
}

impl SurrogateFit {
    pub fn nonzero_count(&self) -> usize {
        self.gamma.iter().filter(|g| **g != 0.0).count()
    }
}

fn residual_norm(design: &SampleDesign, ym: &DeltaPredictions, gamma: &[f64]) -> f64 {
    (0..design.n_samples())
        .map(|i| {
            let fitted: f64 = design
                .flag_row(i)
                .iter()
                .zip(gamma)
                .map(|(&s, g)| if s == 1 { *g } else { 0.0 })
                .sum();
            (ym.values[i] - fitted).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

fn check_lengths(design: &SampleDesign, ym: &DeltaPredictions) -> Result<()> {
    if ym.values.len() != design.n_samples() {
        return Err(Error::LengthMismatch {
            expected: design.n_samples(),
            found: ym.values.len(),
        });
    }
    Ok(())
}

fn gram(design: &SampleDesign) -> Vec<f64> {
    design.gram_counts().into_iter().map(|c| c as f64).collect()
}

/// Least squares without intercept: solves `W gamma = Z`.
pub fn fit_ols(design: &SampleDesign, ym: &DeltaPredictions) -> Result<SurrogateFit> {
    check_lengths(design, ym)?;
    let m = design.n_aspects();
    let w = gram(design);
    let z = design.cross_product(ym);
    let gamma = cholesky_solve(&w, m, &z).map_err(|_| singular_reason(design, &w))?;
    let residual_norm = residual_norm(design, ym, &gamma);
    Ok(SurrogateFit {
        gamma,
        w,
        z,
        residual_norm,
    })
}

fn singular_reason(design: &SampleDesign, w: &[f64]) -> Error {
    let m = design.n_aspects();
    let unsampled: Vec<&str> = (0..m)
        .filter(|&i| w[i * m + i] == 0.0)
        .map(|i| design.aspect_names[i].as_str())
        .collect();
    if unsampled.is_empty() {
        Error::SingularDesign("aspect indicators are collinear".into())
    } else {
        Error::SingularDesign(format!("aspects never replaced: {}", unsampled.join(", ")))
    }
}

/// Cyclic coordinate descent for
/// `(1 / 2N) ||Y_m - X' gamma||^2 + lambda ||gamma||_1`, using `W` and `Z`.
pub fn lasso_coordinate_descent(w: &[f64], z: &[f64], n: usize, lambda: f64) -> Vec<f64> {
    let m = z.len();
    let n = n as f64;
    let mut gamma = vec![0.0; m];
    for _ in 0..CD_MAX_SWEEPS {
        let mut max_change = 0.0f64;
        for j in 0..m {
            let wjj = w[j * m + j];
            if wjj == 0.0 {
                gamma[j] = 0.0;
                continue;
            }
            let partial: f64 = (0..m)
                .filter(|&k| k != j)
                .map(|k| w[j * m + k] * gamma[k])
                .sum();
            let rho = (z[j] - partial) / n;
            let updated = soft_threshold(rho, lambda) / (wjj / n);
            max_change = max_change.max((updated - gamma[j]).abs());
            gamma[j] = updated;
        }
        if max_change < CD_TOLERANCE {
            break;
        }
    }
    gamma
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub fit: SurrogateFit,
    pub lambda: f64,
    /// Every `(lambda, nonzero count)` evaluated during the search.
    pub trace: Vec<(f64, usize)>,
}

/// Lasso surrogate with at most `limit` nonzero contributions, at the
/// smallest penalty (found by bisection on `[0, lambda_max]`) that keeps the
/// limit. `limit >= m` gives the least-squares fit with `lambda = 0`.
pub fn fit_lasso(design: &SampleDesign, ym: &DeltaPredictions, limit: usize) -> Result<LassoFit> {
    check_lengths(design, ym)?;
    let m = design.n_aspects();
    let n = design.n_samples();
    if limit >= m {
        return Ok(LassoFit {
            fit: fit_ols(design, ym)?,
            lambda: 0.0,
            trace: Vec::new(),
        });
    }
    let w = gram(design);
    let z = design.cross_product(ym);
    let lambda_max = z.iter().fold(0.0f64, |acc, v| acc.max(v.abs())) / n as f64;
    let finish = |gamma: Vec<f64>, lambda: f64, trace: Vec<(f64, usize)>| LassoFit {
        fit: SurrogateFit {
            residual_norm: residual_norm(design, ym, &gamma),
            gamma,
            w: w.clone(),
            z: z.clone(),
        },
        lambda,
        trace,
    };

    let mut trace = vec![(lambda_max, 0)];
    if limit == 0 || lambda_max == 0.0 {
        return Ok(finish(vec![0.0; m], lambda_max, trace));
    }
    if let Ok(ols) = cholesky_solve(&w, m, &z) {
        let nnz = ols.iter().filter(|g| **g != 0.0).count();
        trace.push((0.0, nnz));
        if nnz <= limit {
            return Ok(finish(ols, 0.0, trace));
        }
    }

    let (mut lo, mut hi) = (0.0, lambda_max);
    let mut best = vec![0.0; m];
    while hi - lo > BISECTION_TOLERANCE * lambda_max {
        let mid = 0.5 * (lo + hi);
        let gamma = lasso_coordinate_descent(&w, &z, n, mid);
        let nnz = gamma.iter().filter(|g| **g != 0.0).count();
        trace.push((mid, nnz));
        if nnz <= limit {
            hi = mid;
            best = gamma;
        } else {
            lo = mid;
        }
    }
    Ok(finish(best, hi, trace))
}

/// How aspects are formed for an explanation.
#[derive(Debug, Clone, PartialEq)]
pub enum Grouping {
    Partition(AspectPartition),
    /// Groups with pairwise `|r| >= cutoff` (see [`group_variables`]).
    Cutoff(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AspectOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub limit: Option<usize>,
    /// Used for cutoff grouping and for the correlation annotations.
    pub method: CorrelationMethod,
}

impl AspectOptions {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            n_samples,
            seed,
            limit: None,
            method: CorrelationMethod::default(),
        }
    }

    pub fn limit(mut self, limit: Option<usize>) -> Self {
        self.limit = limit;
        self
    }

    pub fn method(mut self, method: CorrelationMethod) -> Self {
        self.method = method;
        self
    }

    pub(crate) fn stream(&self) -> RngStream {
        RngStream::new(self.seed, LOCAL_STREAM)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectContribution {
    pub aspect: String,
    pub members: Vec<String>,
    pub contribution: f64,
    /// Smallest within-aspect `|r|`; 1 for singletons.
    pub min_abs_cor: f64,
    /// All within-aspect correlations share one sign.
    pub sign_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectExplanation {
    pub n_samples: usize,
    pub seed: u64,
    pub limit: Option<usize>,
    pub lambda: Option<f64>,
    pub method: CorrelationMethod,
    /// Ordered by decreasing `|contribution|`.
    pub aspects: Vec<AspectContribution>,
}

impl AspectExplanation {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# n_samples\t{}", self.n_samples);
        let _ = writeln!(s, "# seed\t{}", self.seed);
        if let Some(l) = self.lambda {
            let _ = writeln!(s, "# lambda\t{}", format_sig(l, 17));
        }
        s.push_str("aspect\tmembers\tcontribution\tmin_abs_cor\tsign_consistent\n");
        for a in &self.aspects {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}",
                a.aspect,
                a.members.join(","),
                format_sig(a.contribution, 17),
                format_sig(a.min_abs_cor, 17),
                a.sign_consistent
            );
        }
        s
    }

    pub fn contribution_of(&self, aspect: &str) -> Option<f64> {
        self.aspects
            .iter()
            .find(|a| a.aspect == aspect)
            .map(|a| a.contribution)
    }
}

/// Everything one surrogate fit produced.
pub(crate) struct LocalFit {
    pub gamma: Vec<f64>,
    pub lambda: Option<f64>,
}

/// Design, delta predictions and surrogate for one partition.
pub(crate) fn fit_partition(
    model: &dyn ModelAdapter,
    table: &NumericTable,
    x_star: &Observation,
    partition: &AspectPartition,
    opts: &AspectOptions,
) -> Result<LocalFit> {
    let design = build_design(table, x_star, partition, opts.n_samples, opts.stream())?;
    let ym = delta_predictions(model, &design)?;
    Ok(match opts.limit {
        Some(limit) => {
            let l = fit_lasso(&design, &ym, limit)?;
            LocalFit {
                gamma: l.fit.gamma,
                lambda: Some(l.lambda),
            }
        }
        None => LocalFit {
            gamma: fit_ols(&design, &ym)?.gamma,
            lambda: None,
        },
    })
}

/// Contribution of each aspect to the prediction at `x_star`.
pub fn predict_aspects(
    model: &dyn ModelAdapter,
    table: &NumericTable,
    x_star: &Observation,
    grouping: &Grouping,
    opts: AspectOptions,
) -> Result<AspectExplanation> {
    let partition = match grouping {
        Grouping::Partition(p) => p.clone(),
        Grouping::Cutoff(c) => group_variables(table, *c, opts.method)?,
    };
    let fit = fit_partition(model, table, x_star, &partition, &opts)?;
    let columns = table.columns();
    let names = table.column_names();
    let mut aspects: Vec<AspectContribution> = partition
        .groups()
        .iter()
        .zip(&fit.gamma)
        .map(|(g, &contribution)| {
            let (min_abs_cor, sign_consistent) = within_correlation(&columns, &g.members, opts.method);
            AspectContribution {
                aspect: g.name.clone(),
                members: g.members.iter().map(|&j| names[j].clone()).collect(),
                contribution,
                min_abs_cor,
                sign_consistent,
            }
        })
        .collect();
    aspects.sort_by(|a, b| b.contribution.abs().total_cmp(&a.contribution.abs()));
    Ok(AspectExplanation {
        n_samples: opts.n_samples,
        seed: opts.seed,
        limit: opts.limit,
        lambda: fit.lambda,
        method: opts.method,
        aspects,
    })
}

/// Minimum `|r|` over member pairs and whether all pairs share a sign. A pair
/// involving a constant column counts as `r = 0`.
fn within_correlation(columns: &[Vec<f64>], members: &[usize], method: CorrelationMethod) -> (f64, bool) {
    let mut min_abs = 1.0f64;
    let (mut pos, mut neg, mut zero) = (false, false, false);
    for (x, &i) in members.iter().enumerate() {
        for &j in &members[x + 1..] {
            let r = pairwise_correlation(&columns[i], &columns[j], method).unwrap_or(0.0);
            min_abs = min_abs.min(r.abs());
            match r.partial_cmp(&0.0) {
                Some(std::cmp::Ordering::Greater) => pos = true,
                Some(std::cmp::Ordering::Less) => neg = true,
                _ => zero = true,
            }
        }
    }
    (min_abs, !zero && !(pos && neg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FnModel, LinearModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_table(n: usize, p: usize, seed: u64) -> NumericTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.gen()).collect()).collect();
        NumericTable::from_columns((0..p).map(|j| format!("x{j}")).collect(), &cols).unwrap()
    }

    /// Design with a hand-written `X'`; `A` and `A'` are placeholders.
    fn manual_design(rows: &[Vec<u8>]) -> SampleDesign {
        let m = rows[0].len();
        let n = rows.len();
        let t = NumericTable::new(vec!["c".into()], vec![0.0; n]).unwrap();
        SampleDesign {
            row_ids: vec![0; n],
            x_prime: rows.concat(),
            m,
            aspect_names: (0..m).map(|j| format!("a{j}")).collect(),
            a: t.clone(),
            a_prime: t,
        }
    }

    fn ym(v: &[f64]) -> DeltaPredictions {
        DeltaPredictions { values: v.to_vec() }
    }

    #[test]
    fn one_aspect_replaces_everything() {
        let t = uniform_table(20, 3, 1);
        let x = Observation::new(vec![5.0, 6.0, 7.0]).unwrap();
        let part = AspectPartition::new([("all", vec![0, 1, 2])]);
        let d = build_design(&t, &x, &part, 10, RngStream::new(1, 0)).unwrap();
        assert!((0..10).all(|i| d.flag(i, 0)));
        assert!(d.a_prime.rows().all(|r| r == [5.0, 6.0, 7.0]));
        for (i, &id) in d.row_ids.iter().enumerate() {
            assert_eq!(d.a.row(i), t.row(id));
        }
    }

    #[test]
    fn replacing_with_identical_values_is_a_no_op() {
        let t = NumericTable::new(vec!["a".into(), "b".into()], vec![2.0, 3.0]).unwrap();
        let x = Observation::from_row(&t, 0).unwrap();
        let part = AspectPartition::singletons(t.column_names());
        let d = build_design(&t, &x, &part, 8, RngStream::new(2, 0)).unwrap();
        assert_eq!(d.a_prime, d.a);
    }

    #[test]
    fn flag_counts_follow_with_replacement_draws() {
        let t = uniform_table(50, 4, 3);
        let x = Observation::from_row(&t, 0).unwrap();
        let part = AspectPartition::singletons(t.column_names());
        let d = build_design(&t, &x, &part, 10_000, RngStream::new(3, 0)).unwrap();
        let mut single = 0;
        for i in 0..d.n_samples() {
            let c: u32 = d.flag_row(i).iter().map(|&s| u32::from(s)).sum();
            assert!(c == 1 || c == 2);
            single += usize::from(c == 1);
        }
        let frac = single as f64 / 10_000.0;
        assert!((frac - 0.25).abs() < 0.02, "{frac}");
    }

    #[test]
    fn replacement_follows_flags() {
        let t = uniform_table(30, 5, 4);
        let x = Observation::new(vec![9.0; 5]).unwrap();
        let part = AspectPartition::new([("a", vec![0, 3]), ("b", vec![1]), ("c", vec![2, 4])]);
        let d = build_design(&t, &x, &part, 40, RngStream::new(4, 1)).unwrap();
        let owner = part.group_of_column(5);
        for i in 0..40 {
            for j in 0..5 {
                let expect = if d.flag(i, owner[j]) { 9.0 } else { d.a.get(i, j) };
                assert_eq!(d.a_prime.get(i, j), expect);
            }
        }
        assert!(build_design(&t, &x, &part, 2, RngStream::new(4, 1)).is_err());
        let bad = Observation::new(vec![1.0; 4]).unwrap();
        assert!(build_design(&t, &bad, &part, 40, RngStream::new(4, 1)).is_err());
    }

    #[test]
    fn delta_for_constant_and_linear_models() {
        let t = uniform_table(25, 3, 5);
        let x = Observation::new(vec![0.5, 2.0, -1.0]).unwrap();
        let part = AspectPartition::singletons(t.column_names());
        let d = build_design(&t, &x, &part, 30, RngStream::new(5, 0)).unwrap();
        let c = delta_predictions(&LinearModel::constant(3.0, 3), &d).unwrap();
        assert!(c.values.iter().all(|v| *v == 0.0));

        let lin = LinearModel::new(1.0, vec![0.0, 4.0, 0.0]);
        let dy = delta_predictions(&lin, &d).unwrap();
        for i in 0..30 {
            let expect = if d.flag(i, 1) { 4.0 * (2.0 - d.a.get(i, 1)) } else { 0.0 };
            assert!((dy.values[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_matches_per_row_evaluation() {
        let t = uniform_table(20, 3, 6);
        let y: Vec<f64> = t.rows().map(|r| (r[0] * 3.0).sin() + r[1] * r[2]).collect();
        let knn = crate::model::fit_knn(&t, &y, 3).unwrap();
        let x = Observation::from_row(&t, 4).unwrap();
        let part = AspectPartition::new([("a", vec![0, 1]), ("b", vec![2])]);
        let d = build_design(&t, &x, &part, 15, RngStream::new(6, 0)).unwrap();
        let dy = delta_predictions(&knn, &d).unwrap();
        for i in 0..15 {
            let expect = knn.predict_row(d.a_prime.row(i)) - knn.predict_row(d.a.row(i));
            assert_eq!(dy.values[i], expect);
        }
    }

    #[test]
    fn hand_instance() {
        let d = manual_design(&[vec![1, 0], vec![0, 1], vec![1, 1]]);
        let f = fit_ols(&d, &ym(&[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(f.w, vec![2.0, 1.0, 1.0, 2.0]);
        assert_eq!(f.z, vec![4.0, 5.0]);
        assert!((f.gamma[0] - 1.0).abs() < 1e-14 && (f.gamma[1] - 2.0).abs() < 1e-14);
        assert!(f.residual_norm < 1e-12);
        let zero = fit_ols(&d, &ym(&[0.0; 3])).unwrap();
        assert!(zero.gamma.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn singular_designs_are_reported() {
        let d = manual_design(&[vec![1, 0, 0], vec![1, 0, 0], vec![1, 1, 0]]);
        match fit_ols(&d, &ym(&[1.0, 2.0, 3.0])) {
            Err(Error::SingularDesign(msg)) => assert!(msg.contains("a2"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let d = manual_design(&[vec![1, 1], vec![1, 1]]);
        assert!(matches!(fit_ols(&d, &ym(&[1.0, 2.0])), Err(Error::SingularDesign(_))));
    }

    /// Element-wise sums over sigma products, solved by Gauss-Jordan with
    /// partial pivoting.
    fn summation_oracle(d: &SampleDesign, y: &[f64]) -> Vec<f64> {
        let m = d.n_aspects();
        let sigma = |j: usize, k: usize| if d.flag(k, j) { 1.0 } else { 0.0 };
        let mut aug = vec![vec![0.0; m + 1]; m];
        for i in 0..m {
            for j in 0..m {
                aug[i][j] = if i == j {
                    (0..d.n_samples()).map(|k| sigma(i, k)).sum()
                } else {
                    (0..d.n_samples()).map(|k| sigma(i, k) * sigma(j, k)).sum()
                };
            }
            aug[i][m] = (0..d.n_samples()).map(|k| sigma(i, k) * y[k]).sum();
        }
        for c in 0..m {
            let piv = (c..m).max_by(|&a, &b| aug[a][c].abs().total_cmp(&aug[b][c].abs())).unwrap();
            aug.swap(c, piv);
            for r in 0..m {
                if r != c {
                    let f = aug[r][c] / aug[c][c];
                    for k in c..=m {
                        aug[r][k] -= f * aug[c][k];
                    }
                }
            }
        }
        (0..m).map(|i| aug[i][m] / aug[i][i]).collect()
    }

    #[test]
    fn matches_summation_oracle_on_small_design() {
        let mut found = 0;
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows: Vec<Vec<u8>> = (0..5)
                .map(|_| {
                    let mut r = vec![0u8; 2];
                    r[rng.gen_range(0..2)] = 1;
                    r[rng.gen_range(0..2)] = 1;
                    r
                })
                .collect();
            let d = manual_design(&rows);
            let y: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            if let Ok(f) = fit_ols(&d, &ym(&y)) {
                let g = summation_oracle(&d, &y);
                for (a, b) in f.gamma.iter().zip(&g) {
                    assert!((a - b).abs() < 1e-12);
                }
                found += 1;
            }
        }
        assert!(found > 10);
    }

    #[test]
    fn lasso_edges() {
        let t = uniform_table(60, 3, 7);
        let x = Observation::new(vec![1.0, 0.0, 0.5]).unwrap();
        let part = AspectPartition::singletons(t.column_names());
        let d = build_design(&t, &x, &part, 200, RngStream::new(7, 0)).unwrap();
        let m = FnModel::new("f", |r: &[f64]| 3.0 * r[0] - 2.0 * r[1] + r[2] * r[2]);
        let y = delta_predictions(&m, &d).unwrap();
        let ols = fit_ols(&d, &y).unwrap();
        let full = fit_lasso(&d, &y, 3).unwrap();
        assert_eq!(full.lambda, 0.0);
        for (a, b) in full.fit.gamma.iter().zip(&ols.gamma) {
            assert!((a - b).abs() < 1e-8);
        }
        let none = fit_lasso(&d, &y, 0).unwrap();
        assert!(none.fit.gamma.iter().all(|g| *g == 0.0));
        let lmax = ols.z.iter().fold(0.0f64, |a, v| a.max(v.abs())) / 200.0;
        assert_eq!(none.lambda, lmax);

        let two = fit_lasso(&d, &y, 2).unwrap();
        assert!(two.fit.nonzero_count() <= 2);
        let below = lasso_coordinate_descent(&two.fit.w, &two.fit.z, 200, two.lambda * (1.0 - 1e-3));
        assert_eq!(below.iter().filter(|g| **g != 0.0).count(), 3);
    }

    #[test]
    fn lasso_at_lambda_max_is_zero_and_zero_penalty_is_ols() {
        let d = manual_design(&[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1], vec![1, 1, 0], vec![0, 1, 1]]);
        let y = ym(&[1.0, -2.0, 0.5, 3.0, 1.0]);
        let ols = fit_ols(&d, &y).unwrap();
        let lmax = ols.z.iter().fold(0.0f64, |a, v| a.max(v.abs())) / 5.0;
        assert!(lasso_coordinate_descent(&ols.w, &ols.z, 5, lmax).iter().all(|g| *g == 0.0));
        let g0 = lasso_coordinate_descent(&ols.w, &ols.z, 5, 0.0);
        for (a, b) in g0.iter().zip(&ols.gamma) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn explanation_ordering_and_annotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 300;
        let z: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let a: Vec<f64> = z.iter().map(|v| v + 0.05 * rng.gen::<f64>()).collect();
        let b: Vec<f64> = z.iter().map(|v| -v + 0.05 * rng.gen::<f64>()).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let t = NumericTable::from_columns(vec!["a".into(), "b".into(), "c".into()], &[a, b, c]).unwrap();
        let m = LinearModel::new(0.0, vec![1.0, 0.0, 10.0]);
        let x = Observation::new(vec![0.9, -0.9, 0.0]).unwrap();
        let part = AspectPartition::new([("ab", vec![0, 1]), ("c", vec![2])]);
        let e = predict_aspects(&m, &t, &x, &Grouping::Partition(part), AspectOptions::new(2000, 1)).unwrap();
        assert_eq!(e.aspects[0].aspect, "c");
        let ab = &e.aspects[1];
        assert!(ab.min_abs_cor > 0.9 && ab.sign_consistent);
        assert_eq!(e.aspects[0].min_abs_cor, 1.0);
        assert!(e.aspects[0].sign_consistent);
        let again = predict_aspects(
            &m,
            &t,
            &x,
            &Grouping::Partition(AspectPartition::new([("ab", vec![0, 1]), ("c", vec![2])])),
            AspectOptions::new(2000, 1),
        )
        .unwrap();
        assert_eq!(e, again);

        let by_cutoff = predict_aspects(&m, &t, &x, &Grouping::Cutoff(0.8), AspectOptions::new(2000, 1)).unwrap();
        assert_eq!(by_cutoff.aspects.len(), 2);
        let tsv = by_cutoff.to_tsv();
        assert!(tsv.contains("aspect\tmembers\tcontribution\tmin_abs_cor\tsign_consistent\n"));
    }

    proptest! {
        #[test]
        fn gram_counts_are_exact(seed in any::<u64>(), m in 1usize..6, n in 6usize..40) {
            let t = uniform_table(12, m, seed);
            let x = Observation::from_row(&t, 0).unwrap();
            let part = AspectPartition::singletons(t.column_names());
            let d = build_design(&t, &x, &part, n, RngStream::new(seed, 3)).unwrap();
            let w = d.gram_counts();
            for i in 0..m {
                let diag = (0..n).filter(|&k| d.flag(k, i)).count() as u64;
                prop_assert_eq!(w[i * m + i], diag);
                for j in 0..m {
                    let both = (0..n).filter(|&k| d.flag(k, i) && d.flag(k, j)).count() as u64;
                    prop_assert_eq!(w[i * m + j], both);
                    prop_assert_eq!(w[i * m + j], w[j * m + i]);
                }
            }
        }

        #[test]
        fn z_matches_elementwise_sum(seed in any::<u64>()) {
            let t = uniform_table(15, 4, seed);
            let x = Observation::from_row(&t, 1).unwrap();
            let part = AspectPartition::singletons(t.column_names());
            let d = build_design(&t, &x, &part, 25, RngStream::new(seed, 4)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y: Vec<f64> = (0..25).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let z = d.cross_product(&ym(&y));
            for (i, zi) in z.iter().enumerate() {
                let direct: f64 = (0..25).map(|k| if d.flag(k, i) { y[k] } else { 0.0 }).sum();
                prop_assert!((zi - direct).abs() < 1e-12);
            }
        }

        #[test]
        fn ols_is_linear_in_response(seed in any::<u64>(), alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let t = uniform_table(15, 3, seed);
            let x = Observation::from_row(&t, 2).unwrap();
            let part = AspectPartition::singletons(t.column_names());
            let d = build_design(&t, &x, &part, 40, RngStream::new(seed, 5)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            let y1: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y2: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let comb: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| alpha * a + beta * b).collect();
            if let (Ok(f1), Ok(f2), Ok(fc)) = (fit_ols(&d, &ym(&y1)), fit_ols(&d, &ym(&y2)), fit_ols(&d, &ym(&comb))) {
                for j in 0..3 {
                    prop_assert!((fc.gamma[j] - (alpha * f1.gamma[j] + beta * f2.gamma[j])).abs() < 1e-10);
                }
            }
        }

        #[test]
        fn lasso_trace_is_monotone(seed in any::<u64>(), limit in 0usize..4) {
            let t = uniform_table(40, 4, seed);
            let x = Observation::from_row(&t, 0).unwrap();
            let part = AspectPartition::singletons(t.column_names());
            let d = build_design(&t, &x, &part, 60, RngStream::new(seed, 6)).unwrap();
            let m = FnModel::new("f", |r: &[f64]| r[0] - 2.0 * r[1] + 0.5 * r[2] * r[3]);
            let y = delta_predictions(&m, &d).unwrap();
            let fit = fit_lasso(&d, &y, limit).unwrap();
            prop_assert!(fit.fit.nonzero_count() <= limit);
            let mut trace = fit.trace.clone();
            trace.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in trace.windows(2) {
                prop_assert!(w[0].1 >= w[1].1, "{:?}", trace);
            }
        }
    }
}
