//! Command-line front end.
//!
//! Flags are first resolved into a [`CommandRequest`] with every matrix and
//! series inlined, so a request saved with `--save-request` can be replayed
//! with `frechet run <file>` and produces the same report byte for byte.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::algebra::{MatrixElement, ScalarField};
use crate::error::{Error, Result};
use crate::frechet::{
    curve_derivative, frechet, frechet_compare_with, integral_identity_check, CompareOptions,
    DifferentialResult, MatrixCurve,
};
use crate::identities::run_identity_suite;
use crate::json::{matrix_from_json, matrix_to_json, parse, Json};
use crate::series::{
    eval_matrix, EvalDiagnostics, PowerSeries, TruncationPolicy, DEFAULT_MAX_TERMS,
    DEFAULT_TOLERANCE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Eval,
    Diff,
    Compare,
    Curve,
    Integral,
    Identities,
}

impl CommandKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandKind::Eval => "eval",
            CommandKind::Diff => "diff",
            CommandKind::Compare => "compare",
            CommandKind::Curve => "curve",
            CommandKind::Integral => "integral",
            CommandKind::Identities => "identities",
        }
    }
}

/// A fully resolved command. Matrices and the series are stored as their
/// JSON encodings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRequest {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_t: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_h: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    /// Coefficient matrices `A_0, A_1, …` of `T(t) = Σ t^k A_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_w: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_terms: Option<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_terms")]
    pub max_terms: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
}

fn default_tol() -> f64 {
    DEFAULT_TOLERANCE
}

fn default_max_terms() -> usize {
    DEFAULT_MAX_TERMS
}

impl CommandRequest {
    pub fn new(command: CommandKind) -> Self {
        Self {
            command,
            series: None,
            matrix_t: None,
            matrix_h: None,
            algorithm: None,
            curve: None,
            t: None,
            matrix_w: None,
            u1: None,
            u2: None,
            trials: None,
            dim: None,
            seed: None,
            field: None,
            probe_terms: None,
            tol: DEFAULT_TOLERANCE,
            max_terms: DEFAULT_MAX_TERMS,
            output_path: None,
        }
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("request serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::MalformedJson(e.to_string()))
    }
}

/// Report text and process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub report: String,
    pub exit_code: i32,
}

fn error_report(e: &Error) -> Json {
    Json::object([
        ("detail", Json::str(e.to_string())),
        ("error", Json::str(e.code())),
    ])
}

/// Executes a request and renders its report. Validation failures yield the
/// error object and exit code 2.
pub fn run(request: &CommandRequest) -> Outcome {
    match dispatch(request) {
        Ok((report, converged)) => Outcome {
            report: report.render(),
            exit_code: if converged { EXIT_OK } else { EXIT_NUMERICAL },
        },
        Err(e) => Outcome {
            report: error_report(&e).render(),
            exit_code: EXIT_VALIDATION,
        },
    }
}

fn required<'a, T>(value: &'a Option<T>, name: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| Error::InvalidInput(format!("missing {name}")))
}

fn series_of(request: &CommandRequest) -> Result<PowerSeries> {
    PowerSeries::from_json(required(&request.series, "series")?)
}

fn matrix_of(value: &Option<Value>, name: &str) -> Result<MatrixElement> {
    matrix_from_json(required(value, name)?)
}

fn diagnostics_json(d: &EvalDiagnostics) -> Json {
    Json::object([
        ("ball_radius_used", Json::Float(d.ball_radius_used)),
        ("cap_hit", Json::Bool(d.cap_hit)),
        (
            "inner_terms",
            d.inner_terms.map_or(Json::Null, |n| Json::Int(n as i64)),
        ),
        ("tail_bound", Json::Float(d.tail_bound)),
        ("terms_used", Json::Int(d.terms_used as i64)),
        ("within_radius", Json::Bool(d.within_radius)),
    ])
}

fn result_json(r: &DifferentialResult) -> Json {
    Json::object([
        ("algorithm", Json::str(r.algorithm.as_str())),
        ("diagnostics", diagnostics_json(&r.diagnostics)),
        ("value", matrix_to_json(&r.value)),
    ])
}

fn report(command: CommandKind, results: Vec<Json>, comparisons: Json) -> Json {
    Json::object([
        ("command", Json::str(command.as_str())),
        ("comparisons", comparisons),
        ("error", Json::Null),
        ("results", Json::Array(results)),
    ])
}

fn policy_of(request: &CommandRequest) -> Result<TruncationPolicy> {
    TruncationPolicy::new(request.tol, request.max_terms)
}

fn dispatch(request: &CommandRequest) -> Result<(Json, bool)> {
    let policy = policy_of(request)?;
    let tol = policy.tolerance;
    match request.command {
        CommandKind::Eval => {
            let g = series_of(request)?;
            let t = matrix_of(&request.matrix_t, "matrix T")?;
            let (value, d) = eval_matrix(&g, &t, &policy)?;
            let entry = Json::object([
                ("algorithm", Json::str("eval")),
                ("diagnostics", diagnostics_json(&d)),
                ("value", matrix_to_json(&value)),
            ]);
            Ok((
                report(request.command, vec![entry], Json::Null),
                d.converged(tol),
            ))
        }
        CommandKind::Diff | CommandKind::Compare => {
            let g = series_of(request)?;
            let t = matrix_of(&request.matrix_t, "matrix T")?;
            let h = matrix_of(&request.matrix_h, "matrix h")?;
            let algorithm = request
                .algorithm
                .as_deref()
                .unwrap_or(match request.command {
                    CommandKind::Diff => "direct",
                    _ => "all",
                });
            if algorithm == "all" {
                compare(request, &g, &t, &h, &policy)
            } else {
                let r = frechet(algorithm.parse()?, &g, &t, &h, &policy)?;
                let ok = r.diagnostics.converged(tol);
                Ok((
                    report(request.command, vec![result_json(&r)], Json::Null),
                    ok,
                ))
            }
        }
        CommandKind::Curve => {
            let g = series_of(request)?;
            let coeffs = required(&request.curve, "curve")?
                .iter()
                .map(matrix_from_json)
                .collect::<Result<Vec<_>>>()?;
            let curve = MatrixCurve::polynomial(coeffs)?;
            let t = *required(&request.t, "t")?;
            let r = curve_derivative(&g, &curve, t, &policy)?;
            let ok = r.diagnostics.converged(tol);
            Ok((
                report(request.command, vec![result_json(&r)], Json::Null),
                ok,
            ))
        }
        CommandKind::Integral => {
            let g = series_of(request)?;
            let w = matrix_of(&request.matrix_w, "matrix W")?;
            let check = integral_identity_check(
                &g,
                &w,
                *required(&request.u1, "u1")?,
                *required(&request.u2, "u2")?,
                &policy,
            )?;
            let entry = Json::object([
                ("algorithm", Json::str("integral")),
                ("difference_side", matrix_to_json(&check.difference_side)),
                ("evaluations", Json::Int(check.evaluations as i64)),
                ("integral_side", matrix_to_json(&check.integral_side)),
                ("residual", Json::Float(check.residual)),
            ]);
            Ok((report(request.command, vec![entry], Json::Null), true))
        }
        CommandKind::Identities => {
            let field: ScalarField = request.field.as_deref().unwrap_or("real").parse()?;
            let reports = run_identity_suite(
                request.trials.unwrap_or(100),
                request.dim.unwrap_or(4),
                request.seed.unwrap_or(0),
                field,
            )?;
            let results = reports.iter().map(|r| r.to_json()).collect();
            Ok((report(request.command, results, Json::Null), true))
        }
    }
}

fn compare(
    request: &CommandRequest,
    g: &PowerSeries,
    t: &MatrixElement,
    h: &MatrixElement,
    policy: &TruncationPolicy,
) -> Result<(Json, bool)> {
    let options = CompareOptions {
        probe_terms: request.probe_terms,
    };
    let cmp = frechet_compare_with(g, t, h, policy, options)?;
    let ok = cmp
        .results
        .iter()
        .all(|r| r.diagnostics.converged(policy.tolerance));
    let mut results: Vec<Json> = cmp.results.iter().map(result_json).collect();
    for skip in &cmp.skipped {
        let growth = match &skip.growth {
            Some(p) => Json::object([
                (
                    "partial_sum_norms",
                    Json::Array(
                        p.partial_sum_norms
                            .iter()
                            .map(|&x| Json::Float(x))
                            .collect(),
                    ),
                ),
                (
                    "term_norms",
                    Json::Array(p.term_norms.iter().map(|&x| Json::Float(x)).collect()),
                ),
            ]),
            None => Json::Null,
        };
        results.push(Json::object([
            ("algorithm", Json::str(skip.algorithm.as_str())),
            ("growth", growth),
            ("skipped", Json::str(skip.reason.clone())),
        ]));
    }
    let pairs = cmp
        .pairwise
        .iter()
        .map(|p| {
            Json::object([
                ("first", Json::str(p.first.as_str())),
                ("relative_difference", Json::Float(p.relative_difference)),
                ("second", Json::str(p.second.as_str())),
            ])
        })
        .collect();
    let comparisons = Json::object([
        (
            "max_relative_difference",
            Json::Float(cmp.max_relative_difference()),
        ),
        ("pairs", Json::Array(pairs)),
    ]);
    Ok((report(request.command, results, comparisons), ok))
}

#[derive(Debug, Parser)]
#[command(
    name = "frechet",
    version,
    about = "Power series of matrices and their Fréchet differentials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate g(T).
    Eval(CommonArgs),
    /// Fréchet differential g^[1](T)(h) with one algorithm (default direct).
    Diff(DiffArgs),
    /// Run all applicable algorithms and compare them.
    Compare(DiffArgs),
    /// d/dt g(T(t)) for a polynomial curve T(t).
    Curve(CurveArgs),
    /// Check W·∫ g'(tW) dt = g(u2 W) − g(u1 W).
    Integral(IntegralArgs),
    /// Run the randomized identity suite.
    Identities(IdentityArgs),
    /// Replay a saved request.
    Run {
        request: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the resolved request JSON here.
    #[arg(long)]
    pub save_request: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_TERMS)]
    pub max_terms: usize,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Series JSON: a file path, inline JSON, or a builtin name.
    #[arg(long)]
    pub series: String,
    #[arg(long = "matrix-T")]
    pub matrix_t: String,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct DiffArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long = "matrix-h")]
    pub matrix_h: String,
    /// direct, commutant, power-commutant, derivative-series or all.
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Derivative-series partial sums to report when that form is skipped.
    #[arg(long)]
    pub probe_terms: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub series: String,
    /// `poly:A0.json,A1.json,...` for T(t) = A0 + t A1 + t² A2 + ...
    #[arg(long)]
    pub curve: String,
    #[arg(long, allow_negative_numbers = true)]
    pub t: f64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct IntegralArgs {
    #[arg(long)]
    pub series: String,
    #[arg(long = "W")]
    pub w: String,
    #[arg(long, allow_negative_numbers = true)]
    pub u1: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub u2: f64,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct IdentityArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 4)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "real")]
    pub field: String,
    #[command(flatten)]
    pub output: Output,
}

/// Reads `arg` as inline JSON if it parses, otherwise as a file path.
fn load_json(arg: &str, base: &Path) -> Result<Value> {
    if let Ok(v) = serde_json::from_str::<Value>(arg) {
        return Ok(v);
    }
    let path = base.join(arg);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse(&text)
}

fn load_series(arg: &str, base: &Path) -> Result<Value> {
    if crate::series::Builtin::ALL.iter().any(|b| b.name() == arg) {
        return Ok(serde_json::json!({ "builtin": arg }));
    }
    load_json(arg, base)
}

fn load_curve(arg: &str, base: &Path) -> Result<Vec<Value>> {
    let files = arg.strip_prefix("poly:").ok_or_else(|| {
        Error::InvalidInput(format!("curve must look like poly:<files>, got {arg}"))
    })?;
    files
        .split(',')
        .filter(|f| !f.is_empty())
        .map(|f| load_json(f, base))
        .collect()
}

fn with_policy(mut r: CommandRequest, p: &PolicyArgs) -> CommandRequest {
    r.tol = p.tol;
    r.max_terms = p.max_terms;
    r
}

/// Resolves parsed flags into a request, reading any referenced files
/// relative to `base`.
pub fn build_request(command: Command, base: &Path) -> Result<(CommandRequest, Option<PathBuf>)> {
    let (request, save) = match command {
        Command::Eval(a) => {
            let mut r = CommandRequest::new(CommandKind::Eval);
            r.series = Some(load_series(&a.series, base)?);
            r.matrix_t = Some(load_json(&a.matrix_t, base)?);
            r.output_path = a.output.out;
            (with_policy(r, &a.policy), a.output.save_request)
        }
        Command::Diff(a) => diff_request(CommandKind::Diff, a, base)?,
        Command::Compare(a) => diff_request(CommandKind::Compare, a, base)?,
        Command::Curve(a) => {
            let mut r = CommandRequest::new(CommandKind::Curve);
            r.series = Some(load_series(&a.series, base)?);
            r.curve = Some(load_curve(&a.curve, base)?);
            r.t = Some(a.t);
            r.output_path = a.output.out;
            (with_policy(r, &a.policy), a.output.save_request)
        }
        Command::Integral(a) => {
            let mut r = CommandRequest::new(CommandKind::Integral);
            r.series = Some(load_series(&a.series, base)?);
            r.matrix_w = Some(load_json(&a.w, base)?);
            r.u1 = Some(a.u1);
            r.u2 = Some(a.u2);
            r.output_path = a.output.out;
            (with_policy(r, &a.policy), a.output.save_request)
        }
        Command::Identities(a) => {
            let mut r = CommandRequest::new(CommandKind::Identities);
            r.trials = Some(a.trials);
            r.dim = Some(a.dim);
            r.seed = Some(a.seed);
            r.field = Some(a.field);
            r.output_path = a.output.out;
            (r, a.output.save_request)
        }
        Command::Run { request, out } => {
            let path = base.join(request);
            let text = fs::read_to_string(&path)
                .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
            let mut r = CommandRequest::from_json_str(&text)?;
            if out.is_some() {
                r.output_path = out;
            }
            (r, None)
        }
    };
    Ok((request, save))
}

fn diff_request(
    kind: CommandKind,
    a: DiffArgs,
    base: &Path,
) -> Result<(CommandRequest, Option<PathBuf>)> {
    let mut r = CommandRequest::new(kind);
    r.series = Some(load_series(&a.common.series, base)?);
    r.matrix_t = Some(load_json(&a.common.matrix_t, base)?);
    r.matrix_h = Some(load_json(&a.matrix_h, base)?);
    r.algorithm = a.algorithm;
    r.probe_terms = a.probe_terms;
    r.output_path = a.common.output.out;
    Ok((
        with_policy(r, &a.common.policy),
        a.common.output.save_request,
    ))
}

/// Parses arguments, runs the command and writes the report. Returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let (request, save) = match build_request(cli.command, Path::new(".")) {
        Ok(r) => r,
        Err(e) => {
            println!("{}", error_report(&e).render());
            return EXIT_VALIDATION;
        }
    };
    if let Some(path) = save {
        if let Err(e) = fs::write(&path, request.to_json_string()) {
            eprintln!("cannot write {}: {e}", path.display());
            return EXIT_VALIDATION;
        }
    }
    let outcome = run(&request);
    match &request.output_path {
        Some(path) => {
            if let Err(e) = fs::write(path, format!("{}\n", outcome.report)) {
                eprintln!("cannot write {}: {e}", path.display());
                return EXIT_VALIDATION;
            }
        }
        None => println!("{}", outcome.report),
    }
    outcome.exit_code
}
