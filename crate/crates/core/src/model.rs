//! The prediction contract every explainer is written against, the built-in
//! reference models, losses, and the subprocess adapter for external models.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::NumericTable;
use crate::error::{Error, Result};
use crate::linalg::qr_least_squares;

/// Environment variable consulted for the external model command.
pub const MODEL_CMD_ENV: &str = "ASPECTRA_MODEL_CMD";

/// A deterministic prediction function over tables with a fixed column schema.
///
/// Implementations may rely on being called from one thread at a time per
/// instance; use [`predict`] rather than calling `predict_raw` directly so the
/// schema and output checks are applied.
pub trait ModelAdapter {
    fn predict_raw(&self, table: &NumericTable) -> Result<Vec<f64>>;

    /// Column names the model was built on, if it knows them.
    fn schema(&self) -> Option<&[String]> {
        None
    }

    fn label(&self) -> &str;
}

/// Evaluates `model` on `table`, checking the schema and that the output is
/// finite with one prediction per row.
pub fn predict(model: &dyn ModelAdapter, table: &NumericTable) -> Result<Vec<f64>> {
    if let Some(schema) = model.schema() {
        if schema != table.column_names() {
            return Err(Error::SchemaMismatch(format!(
                "model expects [{}], table has [{}]",
                schema.join(", "),
                table.column_names().join(", ")
            )));
        }
    }
    let out = model.predict_raw(table)?;
    if out.len() != table.n_rows() {
        return Err(Error::LengthMismatch {
            expected: table.n_rows(),
            found: out.len(),
        });
    }
    if let Some(i) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinitePrediction(i));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFn {
    #[default]
    Rmse,
    Mae,
}

impl LossFn {
    pub fn loss(&self, y: &[f64], yhat: &[f64]) -> Result<f64> {
        if y.len() != yhat.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                found: yhat.len(),
            });
        }
        if y.is_empty() {
            return Err(Error::InvalidArgument("loss of an empty vector".into()));
        }
        let n = y.len() as f64;
        let diffs = y.iter().zip(yhat).map(|(a, b)| a - b);
        Ok(match self {
            LossFn::Rmse => (diffs.map(|d| d * d).sum::<f64>() / n).sqrt(),
            LossFn::Mae => diffs.map(f64::abs).sum::<f64>() / n,
        })
    }
}

impl FromStr for LossFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmse" => Ok(Self::Rmse),
            "mae" => Ok(Self::Mae),
            other => Err(Error::InvalidArgument(format!("unknown loss '{other}'"))),
        }
    }
}

impl fmt::Display for LossFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rmse => "rmse",
            Self::Mae => "mae",
        })
    }
}

/// `intercept + sum_j coefficients[j] * x[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    schema: Option<Vec<String>>,
    label: String,
}

impl LinearModel {
    pub fn new(intercept: f64, coefficients: Vec<f64>) -> Self {
        Self {
            intercept,
            coefficients,
            schema: None,
            label: "linear".into(),
        }
    }

    /// A model predicting `value` everywhere.
    pub fn constant(value: f64, p: usize) -> Self {
        Self {
            label: "constant".into(),
            ..Self::new(value, vec![0.0; p])
        }
    }

    pub fn with_schema(mut self, names: Vec<String>) -> Self {
        self.schema = Some(names);
        self
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }
}

impl ModelAdapter for LinearModel {
    fn predict_raw(&self, table: &NumericTable) -> Result<Vec<f64>> {
        if table.n_cols() != self.coefficients.len() {
            return Err(Error::SchemaMismatch(format!(
                "model has {} coefficients, table has {} columns",
                self.coefficients.len(),
                table.n_cols()
            )));
        }
        Ok(table.rows().map(|r| self.predict_row(r)).collect())
    }

    fn schema(&self) -> Option<&[String]> {
        self.schema.as_deref()
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// Ordinary least squares with an intercept, solved by Householder QR.
pub fn fit_linear(table: &NumericTable, y: &[f64]) -> Result<LinearModel> {
    let (n, p) = (table.n_rows(), table.n_cols());
    if y.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n <= p {
        return Err(Error::RankDeficient);
    }
    let cols = p + 1;
    let mut design = Vec::with_capacity(n * cols);
    for r in table.rows() {
        design.push(1.0);
        design.extend_from_slice(r);
    }
    let beta = qr_least_squares(&design, n, cols, y).ok_or(Error::RankDeficient)?;
    Ok(LinearModel::new(beta[0], beta[1..].to_vec()).with_schema(table.column_names().to_vec()))
}

/// Mean target of the `k` nearest training rows (Euclidean), ties on distance
/// going to the lower row index.
#[derive(Debug, Clone)]
pub struct KnnModel {
    k: usize,
    train: NumericTable,
    y: Vec<f64>,
}

impl KnnModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .train
            .rows()
            .enumerate()
            .map(|(i, r)| {
                let s: f64 = r.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                (s, i)
            })
            .collect();
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k, order);
            d.truncate(self.k);
        }
        d.sort_by(order);
        d.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let idx = self.neighbors(x);
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }
}

impl ModelAdapter for KnnModel {
    fn predict_raw(&self, table: &NumericTable) -> Result<Vec<f64>> {
        Ok(table.rows().map(|r| self.predict_row(r)).collect())
    }

    fn schema(&self) -> Option<&[String]> {
        Some(self.train.column_names())
    }

    fn label(&self) -> &str {
        "knn"
    }
}

pub fn fit_knn(table: &NumericTable, y: &[f64], k: usize) -> Result<KnnModel> {
    if y.len() != table.n_rows() {
        return Err(Error::LengthMismatch {
            expected: table.n_rows(),
            found: y.len(),
        });
    }
    if k == 0 || k > table.n_rows() {
        return Err(Error::BadK {
            k,
            n: table.n_rows(),
        });
    }
    Ok(KnnModel {
        k,
        train: table.clone(),
        y: y.to_vec(),
    })
}

/// Wraps a plain function of one row. Mostly useful in tests and examples.
pub struct FnModel<F> {
    f: F,
    label: String,
}

impl<F: Fn(&[f64]) -> f64> FnModel<F> {
    pub fn new(label: impl Into<String>, f: F) -> Self {
        Self {
            f,
            label: label.into(),
        }
    }
}

impl<F: Fn(&[f64]) -> f64> ModelAdapter for FnModel<F> {
    fn predict_raw(&self, table: &NumericTable) -> Result<Vec<f64>> {
        Ok(table.rows().map(|r| (self.f)(r)).collect())
    }

    fn label(&self) -> &str {
        &self.label
    }
}

/// An external model behind a line protocol on the child's stdin/stdout.
///
/// Request: `PREDICT <n> <p>`, the comma-joined column names, then `n` rows
/// of comma-joined values. Response: exactly `n` lines with one number each.
/// The child is kept alive between calls; a child that exits after answering
/// is restarted for the next request.
pub struct SubprocessModel {
    program: String,
    args: Vec<String>,
    label: String,
    double_check: bool,
    child: Mutex<Option<ChildIo>>,
}

struct ChildIo {
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

impl SubprocessModel {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        let program = program.into();
        let label = std::iter::once(program.as_str())
            .chain(args.iter().map(String::as_str))
            .collect::<Vec<_>>()
            .join(" ");
        Self {
            program,
            args,
            label,
            double_check: false,
            child: Mutex::new(None),
        }
    }

    /// Runs `cmd` through `sh -c`.
    pub fn from_shell(cmd: &str) -> Self {
        let mut m = Self::new("sh", vec!["-c".into(), cmd.into()]);
        m.label = cmd.to_string();
        m
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(MODEL_CMD_ENV)
            .ok()
            .filter(|s| !s.trim().is_empty())
            .map(|s| Self::from_shell(&s))
    }

    /// Evaluate every request twice and fail if the answers differ.
    pub fn with_double_check(mut self, on: bool) -> Self {
        self.double_check = on;
        self
    }

    fn spawn(&self) -> Result<ChildIo> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::SubprocessFailure(format!("cannot start '{}': {e}", self.label)))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ChildIo {
            child,
            stdin,
            stdout,
        })
    }

    fn exchange(&self, io: &mut ChildIo, table: &NumericTable) -> Exchange {
        let request = encode_request(table);
        if io
            .stdin
            .write_all(request.as_bytes())
            .and_then(|_| io.stdin.flush())
            .is_err()
        {
            return Exchange::Closed;
        }
        let n = table.n_rows();
        let mut out = Vec::with_capacity(n);
        let mut line = String::new();
        for i in 0..n {
            line.clear();
            match io.stdout.read_line(&mut line) {
                Ok(0) if i == 0 => return Exchange::Closed,
                Ok(0) => {
                    return Exchange::Failed(Error::SubprocessFailure(format!(
                        "short output: got {i} of {n} lines"
                    )))
                }
                Ok(_) => {}
                Err(e) => return Exchange::Failed(Error::SubprocessFailure(e.to_string())),
            }
            match line.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => out.push(v),
                _ => {
                    return Exchange::Failed(Error::SubprocessFailure(format!(
                        "line {} is not a finite number: {:?}",
                        i + 1,
                        line.trim_end()
                    )))
                }
            }
        }
        Exchange::Done(out)
    }

    fn request(&self, table: &NumericTable) -> Result<Vec<f64>> {
        let mut guard = self.child.lock().unwrap_or_else(|e| e.into_inner());
        let mut fresh = false;
        if let Some(io) = guard.as_mut() {
            if !matches!(io.child.try_wait(), Ok(None)) {
                *guard = None;
            }
        }
        if guard.is_none() {
            *guard = Some(self.spawn()?);
            fresh = true;
        }
        loop {
            let io = guard.as_mut().expect("child present");
            match self.exchange(io, table) {
                Exchange::Done(v) => return Ok(v),
                Exchange::Closed if !fresh => {
                    // the previous child exited after its last answer
                    shutdown(guard.take());
                    *guard = Some(self.spawn()?);
                    fresh = true;
                }
                Exchange::Closed => {
                    shutdown(guard.take());
                    return Err(Error::SubprocessFailure(
                        "model process closed its output without answering".into(),
                    ));
                }
                Exchange::Failed(e) => {
                    shutdown(guard.take());
                    return Err(e);
                }
            }
        }
    }
}

enum Exchange {
    Done(Vec<f64>),
    Closed,
    Failed(Error),
}

fn shutdown(io: Option<ChildIo>) {
    if let Some(mut io) = io {
        drop(io.stdin);
        let _ = io.child.kill();
        let _ = io.child.wait();
    }
}

/// The request text for `table`, exactly as written to the child.
pub fn encode_request(table: &NumericTable) -> String {
    let mut s = format!(
        "PREDICT {} {}\n{}\n",
        table.n_rows(),
        table.n_cols(),
        table.column_names().join(",")
    );
    for r in table.rows() {
        let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

impl Drop for SubprocessModel {
    fn drop(&mut self) {
        let io = self.child.get_mut().ok().and_then(Option::take);
        shutdown(io);
    }
}

impl ModelAdapter for SubprocessModel {
    fn predict_raw(&self, table: &NumericTable) -> Result<Vec<f64>> {
        let first = self.request(table)?;
        if self.double_check {
            let second = self.request(table)?;
            if let Some(i) = first.iter().zip(&second).position(|(a, b)| a != b) {
                return Err(Error::NonDeterministic(i));
            }
        }
        Ok(first)
    }

    fn label(&self) -> &str {
        &self.label
    }
}
