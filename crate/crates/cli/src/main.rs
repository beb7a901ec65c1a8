use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aspectra::{
    fit_knn, fit_linear, group_importance, group_variables, load_table, model_triplot,
    predict_aspects, predict_triplot, render_aspects, render_triplot, AspectExplanation,
    AspectOptions, AspectPartition, CorrelationMethod, Grouping, Linkage, LossFn, ModelAdapter,
    NumericTable, Observation, PermutationConfig, RenderSpec, SubprocessModel, TriplotConfig,
    TriplotResult, MODEL_CMD_ENV,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const DEFAULT_LOCAL_SAMPLES: usize = 1000;

#[derive(Parser)]
#[command(name = "aspectra", version, about = "Importance of groups of correlated variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Group columns whose pairwise |correlation| reaches the cutoff.
    GroupVars(GroupVarsArgs),
    /// Block-permutation importance of variable groups.
    GlobalImportance(GlobalArgs),
    /// Contribution of variable groups to one prediction.
    PredictAspects(AspectArgs),
    /// Importance of every node of the variable clustering tree.
    Triplot(TriplotArgs),
    /// Render a triplot or aspect explanation document as SVG.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Global,
    Local,
}

#[derive(Args)]
struct Common {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Target column, removed from the explanatory variables.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// linear | knn:K | cmd:<shell command>; defaults to $ASPECTRA_MODEL_CMD.
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct GroupingArgs {
    /// JSON object mapping group name to column names.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ObservationArgs {
    /// Zero-based row of the data file to explain.
    #[arg(long)]
    row: Option<usize>,
    /// CSV file whose first data row is the observation to explain.
    #[arg(long)]
    obs: Option<PathBuf>,
}

#[derive(Args)]
struct GroupVarsArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    cutoff: f64,
    #[arg(long, default_value = "spearman")]
    method: CorrelationMethod,
}

#[derive(Args)]
struct GlobalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[arg(long, default_value = "spearman")]
    method: CorrelationMethod,
    /// Permutation repetitions.
    #[arg(long = "B", default_value_t = 10)]
    b: usize,
    /// Row subsample size (all rows when omitted).
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "rmse")]
    loss: LossFn,
}

#[derive(Args)]
struct AspectArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    observation: ObservationArgs,
    #[command(flatten)]
    grouping: GroupingArgs,
    #[arg(long, default_value = "spearman")]
    method: CorrelationMethod,
    /// Number of sampled rows.
    #[arg(long = "N", default_value_t = DEFAULT_LOCAL_SAMPLES)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum number of nonzero contributions (lasso).
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct TriplotArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Zero-based row to explain (local mode).
    #[arg(long, conflicts_with = "obs")]
    row: Option<usize>,
    /// CSV with the observation to explain (local mode).
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long, default_value = "spearman")]
    method: CorrelationMethod,
    #[arg(long, default_value = "complete")]
    linkage: Linkage,
    #[arg(long = "B", default_value_t = 10)]
    b: usize,
    /// Subsample size (global) or number of sampled rows (local).
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "rmse")]
    loss: LossFn,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1200.0)]
    width: f64,
    #[arg(long, default_value_t = 500.0)]
    height: f64,
}

enum Failure {
    Usage(String),
    Compute(String),
}

impl From<aspectra::Error> for Failure {
    fn from(e: aspectra::Error) -> Self {
        Failure::Compute(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GroupVars(a) => group_vars(a),
        Command::GlobalImportance(a) => global_importance(a),
        Command::PredictAspects(a) => aspects(a),
        Command::Triplot(a) => triplot(a),
        Command::Render(a) => render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)
            .map_err(|e| Failure::Compute(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn ensure_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn load(common: &Common) -> CliResult<(NumericTable, Option<Vec<f64>>)> {
    Ok(load_table(&common.data, common.target.as_deref())?)
}

fn require_target(y: Option<Vec<f64>>) -> CliResult<Vec<f64>> {
    y.ok_or_else(|| Failure::Usage("--target is required".into()))
}

fn build_model(
    spec: Option<&str>,
    table: &NumericTable,
    y: Option<&[f64]>,
) -> CliResult<Box<dyn ModelAdapter>> {
    let env = std::env::var(MODEL_CMD_ENV).ok().filter(|s| !s.trim().is_empty());
    let spec = match (spec, env) {
        (Some(s), _) => s.to_string(),
        (None, Some(cmd)) => format!("cmd:{cmd}"),
        (None, None) => {
            return Err(Failure::Usage(format!(
                "no model given: use --model or set {MODEL_CMD_ENV}"
            )))
        }
    };
    let need_y = || y.ok_or_else(|| Failure::Usage(format!("--target is required to fit '{spec}'")));
    if spec == "linear" {
        let names = table.column_names().to_vec();
        Ok(Box::new(fit_linear(table, need_y()?)?.with_schema(names)))
    } else if let Some(k) = spec.strip_prefix("knn:") {
        let k: usize = k
            .parse()
            .map_err(|_| Failure::Usage(format!("bad neighbour count in '{spec}'")))?;
        Ok(Box::new(fit_knn(table, need_y()?, k)?))
    } else if let Some(cmd) = spec.strip_prefix("cmd:") {
        Ok(Box::new(SubprocessModel::from_shell(cmd)))
    } else {
        Err(Failure::Usage(format!("unknown model '{spec}'")))
    }
}

fn grouping(args: &GroupingArgs, names: &[String]) -> CliResult<Grouping> {
    match (&args.groups, args.cutoff) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Compute(format!("cannot read {}: {e}", path.display())))?;
            Ok(Grouping::Partition(AspectPartition::from_json(&text, names)?))
        }
        (None, Some(c)) => Ok(Grouping::Cutoff(c)),
        (None, None) => Err(Failure::Usage("one of --groups or --cutoff is required".into())),
    }
}

fn observation(
    table: &NumericTable,
    row: Option<usize>,
    obs: Option<&Path>,
) -> CliResult<Observation> {
    match (row, obs) {
        (Some(i), _) => Ok(Observation::from_row(table, i)?),
        (None, Some(path)) => {
            let (o, _) = load_table(path, None)?;
            if o.n_rows() == 0 {
                return Err(Failure::Compute(format!("{} has no data rows", path.display())));
            }
            let values = table
                .column_names()
                .iter()
                .map(|n| {
                    o.column_index(n)
                        .map(|j| o.get(0, j))
                        .ok_or_else(|| Failure::Compute(format!("{} lacks column '{n}'", path.display())))
                })
                .collect::<CliResult<Vec<f64>>>()?;
            Ok(Observation::new(values)?)
        }
        (None, None) => Err(Failure::Usage("one of --row or --obs is required".into())),
    }
}

fn group_vars(a: GroupVarsArgs) -> CliResult<()> {
    let (table, _) = load(&a.common)?;
    let part = group_variables(&table, a.cutoff, a.method)?;
    let names = table.column_names();
    let text = match a.common.format {
        Format::Json => ensure_newline(part.to_json(names)),
        Format::Tsv => {
            let mut s = String::from("group\tmembers\n");
            for g in part.groups() {
                let members: Vec<&str> = g.members.iter().map(|&j| names[j].as_str()).collect();
                s.push_str(&format!("{}\t{}\n", g.name, members.join(",")));
            }
            s
        }
    };
    emit(a.common.out.as_deref(), &text)
}

fn global_importance(a: GlobalArgs) -> CliResult<()> {
    let (table, y) = load(&a.common)?;
    let y = require_target(y)?;
    let model = build_model(a.model.model.as_deref(), &table, Some(&y))?;
    let groups = match grouping(&a.grouping, table.column_names())? {
        Grouping::Partition(p) => p,
        Grouping::Cutoff(c) => group_variables(&table, c, a.method)?,
    };
    let cfg = PermutationConfig::new(a.loss, a.seed)
        .repetitions(a.b)
        .sample_size(a.n);
    let result = group_importance(model.as_ref(), &table, &y, &groups, cfg)?;
    let text = match a.common.format {
        Format::Json => ensure_newline(result.to_json()),
        Format::Tsv => result.to_tsv(),
    };
    emit(a.common.out.as_deref(), &text)
}

fn aspects(a: AspectArgs) -> CliResult<()> {
    let (table, y) = load(&a.common)?;
    let model = build_model(a.model.model.as_deref(), &table, y.as_deref())?;
    let x = observation(&table, a.observation.row, a.observation.obs.as_deref())?;
    let grouping = grouping(&a.grouping, table.column_names())?;
    let opts = AspectOptions::new(a.n, a.seed).limit(a.limit).method(a.method);
    let result = predict_aspects(model.as_ref(), &table, &x, &grouping, opts)?;
    let text = match a.common.format {
        Format::Json => ensure_newline(result.to_json()),
        Format::Tsv => result.to_tsv(),
    };
    emit(a.common.out.as_deref(), &text)
}

fn triplot(a: TriplotArgs) -> CliResult<()> {
    let (table, y) = load(&a.common)?;
    let result = match a.mode {
        Mode::Global => {
            let y = require_target(y)?;
            let model = build_model(a.model.model.as_deref(), &table, Some(&y))?;
            let perm = PermutationConfig::new(a.loss, a.seed)
                .repetitions(a.b)
                .sample_size(a.n);
            let cfg = TriplotConfig::global(perm).method(a.method).linkage(a.linkage);
            model_triplot(model.as_ref(), &table, &y, &cfg)?
        }
        Mode::Local => {
            let model = build_model(a.model.model.as_deref(), &table, y.as_deref())?;
            let x = observation(&table, a.row, a.obs.as_deref())?;
            let opts = AspectOptions::new(a.n.unwrap_or(DEFAULT_LOCAL_SAMPLES), a.seed).limit(a.limit);
            let cfg = TriplotConfig::local(opts).method(a.method).linkage(a.linkage);
            predict_triplot(model.as_ref(), &table, &x, &cfg)?
        }
    };
    let text = match a.common.format {
        Format::Json => ensure_newline(result.to_json()),
        Format::Tsv => result.to_tsv(),
    };
    emit(a.common.out.as_deref(), &text)
}

fn render(a: RenderArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.input)
        .map_err(|e| Failure::Compute(format!("cannot read {}: {e}", a.input.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::Compute(format!("{} is not JSON: {e}", a.input.display())))?;
    if !(a.width > 0.0 && a.height > 0.0) {
        return Err(Failure::Usage("width and height must be positive".into()));
    }
    let spec = RenderSpec {
        width: a.width,
        height: a.height,
        ..RenderSpec::default()
    };
    let svg = if doc.get("tree").is_some() {
        let result: TriplotResult = serde_json::from_value(doc)
            .map_err(|e| Failure::Compute(format!("invalid triplot document: {e}")))?;
        render_triplot(&result, &spec)
    } else if doc.get("aspects").is_some() {
        let result: AspectExplanation = serde_json::from_value(doc)
            .map_err(|e| Failure::Compute(format!("invalid aspect document: {e}")))?;
        render_aspects(&result, &spec)
    } else {
        return Err(Failure::Compute(
            "document is neither a triplot nor an aspect explanation".into(),
        ));
    };
    emit(a.out.as_deref(), &svg)
}
