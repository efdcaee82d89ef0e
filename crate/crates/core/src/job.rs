//! Job files, result files, and the operations behind the command line:
//! compute, verify, explain.
//!
//! Jobs are JSON objects validated field by field; validation errors carry
//! a JSON-pointer path to the offending value.  Result files are written
//! with a fixed field order and canonical scalar strings, so identical
//! jobs always produce byte-identical outputs.  The job fingerprint is a
//! SHA-256 hash of the canonical job serialization without the method
//! field: it identifies the mathematical task, and the same task computed
//! by two methods yields result files differing only in the recorded
//! method.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::formulas::{self, SplitArity};
use crate::reps::{Assembly, Case, ModuleSpec, Realization};
use crate::scalar::Scalar;
use crate::trace::{
    self, confirm_weight, weight_trace_apply, Composition, Direction, VarCollection,
};
use crate::verify::{self, has_failures, run_suite, ReportEntry, Scale, Suite, VerifyError};

/// Version string recorded in every manifest.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum JobError {
    /// The job fails validation; `path` is a JSON pointer to the offending
    /// value.
    #[error("invalid job at {path}: {reason}")]
    Validation { path: String, reason: String },
    /// A denominator of the requested evaluation vanishes.
    #[error("pole: the factor {factor} vanishes at the requested point")]
    Pole { factor: String },
    /// A structural precondition fails at evaluation time.
    #[error("precondition failed: {reason}")]
    Precondition { reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl JobError {
    fn invalid(path: impl Into<String>, reason: impl Into<String>) -> JobError {
        JobError::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code class: 2 for validation and i/o problems, 3 for
    /// poles and failed evaluation preconditions.
    pub fn exit_code(&self) -> u8 {
        match self {
            JobError::Validation { .. } | JobError::Io(_) => 2,
            JobError::Pole { .. } | JobError::Precondition { .. } => 3,
        }
    }
}

/// Classifies an evaluation error: poles keep their vanishing factor,
/// everything else becomes a precondition failure.
fn evaluation_error(err: impl Into<VerifyError>) -> JobError {
    let err = err.into();
    match verify::pole_reason(&err) {
        Some(factor) => JobError::Pole { factor },
        None => JobError::Precondition {
            reason: err.to_string(),
        },
    }
}

/// How the coordinates of a job are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Trace,
    RecursionFirst,
    RecursionLast,
    ClosedFirst,
    ClosedLast,
    TensorSplit,
}

impl Method {
    pub const TOKENS: [&'static str; 6] = [
        "trace",
        "recursion-first",
        "recursion-last",
        "closed-first",
        "closed-last",
        "tensor-split",
    ];

    pub fn parse(token: &str) -> Option<Method> {
        match token {
            "trace" => Some(Method::Trace),
            "recursion-first" => Some(Method::RecursionFirst),
            "recursion-last" => Some(Method::RecursionLast),
            "closed-first" => Some(Method::ClosedFirst),
            "closed-last" => Some(Method::ClosedLast),
            "tensor-split" => Some(Method::TensorSplit),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Method::Trace => "trace",
            Method::RecursionFirst => "recursion-first",
            Method::RecursionLast => "recursion-last",
            Method::ClosedFirst => "closed-first",
            Method::ClosedLast => "closed-last",
            Method::TensorSplit => "tensor-split",
        }
    }
}

/// A fully validated computation job.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSpec {
    pub case: Case,
    pub n: usize,
    pub q: Option<Scalar>,
    pub modules: Vec<ModuleSpec>,
    pub xi: Vec<usize>,
    pub t: Vec<Vec<Scalar>>,
    pub method: Method,
}

// ---------------------------------------------------------------------------
// Field-by-field validation with JSON-pointer paths.
// ---------------------------------------------------------------------------

fn expect_object<'v>(
    value: &'v Value,
    path: &str,
) -> Result<&'v serde_json::Map<String, Value>, JobError> {
    value
        .as_object()
        .ok_or_else(|| JobError::invalid(path, "expected an object"))
}

fn expect_array<'v>(value: &'v Value, path: &str) -> Result<&'v Vec<Value>, JobError> {
    value
        .as_array()
        .ok_or_else(|| JobError::invalid(path, "expected an array"))
}

fn expect_string<'v>(value: &'v Value, path: &str) -> Result<&'v str, JobError> {
    value
        .as_str()
        .ok_or_else(|| JobError::invalid(path, "expected a string"))
}

fn expect_usize(value: &Value, path: &str) -> Result<usize, JobError> {
    value
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| JobError::invalid(path, "expected a nonnegative integer"))
}

fn require<'v>(
    map: &'v serde_json::Map<String, Value>,
    parent: &str,
    key: &str,
) -> Result<&'v Value, JobError> {
    map.get(key)
        .ok_or_else(|| JobError::invalid(format!("{parent}/{key}"), "missing field"))
}

fn parse_scalar(value: &Value, path: &str) -> Result<Scalar, JobError> {
    let text = expect_string(value, path)?;
    text.parse::<Scalar>()
        .map_err(|err| JobError::invalid(path, err.to_string()))
}

fn parse_realization(value: &Value, path: &str, n: usize) -> Result<Realization, JobError> {
    let map = expect_object(value, path)?;
    let kind = expect_string(require(map, path, "kind")?, &format!("{path}/kind"))?;
    let get_k = || -> Result<usize, JobError> {
        let k_path = format!("{path}/k");
        let k = expect_usize(require(map, path, "k")?, &k_path)?;
        if k == 0 {
            return Err(JobError::invalid(k_path, "power must be at least 1"));
        }
        Ok(k)
    };
    match kind {
        "vector" => Ok(Realization::Vector),
        "wedge_power" => {
            let k = get_k()?;
            if k > n {
                return Err(JobError::invalid(
                    format!("{path}/k"),
                    format!("wedge power must not exceed the rank {n}"),
                ));
            }
            Ok(Realization::WedgePower { k })
        }
        "symmetric_power" => Ok(Realization::SymmetricPower { k: get_k()? }),
        "cyclic_span" => {
            let word_path = format!("{path}/word");
            let raw = expect_array(require(map, path, "word")?, &word_path)?;
            if raw.is_empty() {
                return Err(JobError::invalid(word_path, "word must be non-empty"));
            }
            let mut word = Vec::with_capacity(raw.len());
            for (i, item) in raw.iter().enumerate() {
                let item_path = format!("{word_path}/{i}");
                let letter = expect_usize(item, &item_path)?;
                if letter == 0 || letter > n {
                    return Err(JobError::invalid(
                        item_path,
                        format!("letters must lie in 1..={n}"),
                    ));
                }
                word.push(letter);
            }
            Ok(Realization::CyclicSpan { word })
        }
        other => Err(JobError::invalid(
            format!("{path}/kind"),
            format!(
                "unknown realization {other:?}; expected vector, wedge_power, symmetric_power, or cyclic_span"
            ),
        )),
    }
}

fn parse_module(value: &Value, path: &str, n: usize, case: Case) -> Result<ModuleSpec, JobError> {
    let map = expect_object(value, path)?;
    let module_n = expect_usize(require(map, path, "n")?, &format!("{path}/n"))?;
    if module_n != n {
        return Err(JobError::invalid(
            format!("{path}/n"),
            format!("module rank {module_n} must match the job rank {n}"),
        ));
    }
    let realization = parse_realization(
        require(map, path, "realization")?,
        &format!("{path}/realization"),
        n,
    )?;
    let x = parse_scalar(require(map, path, "x")?, &format!("{path}/x"))?;
    if case == Case::Trigonometric && x.is_zero() {
        return Err(JobError::invalid(
            format!("{path}/x"),
            "trigonometric evaluation parameters must be nonzero",
        ));
    }
    let weight = match map.get("weight") {
        None | Some(Value::Null) => None,
        Some(raw) => {
            let weight_path = format!("{path}/weight");
            let items = expect_array(raw, &weight_path)?;
            if items.len() != n {
                return Err(JobError::invalid(
                    weight_path,
                    format!("weight must have {n} entries"),
                ));
            }
            let mut weight = Vec::with_capacity(n);
            for (i, item) in items.iter().enumerate() {
                let item_path = format!("{weight_path}/{i}");
                let entry = item
                    .as_i64()
                    .ok_or_else(|| JobError::invalid(&item_path, "expected an integer"))?;
                weight.push(entry);
            }
            Some(weight)
        }
    };
    if matches!(realization, Realization::CyclicSpan { .. }) && weight.is_none() {
        return Err(JobError::invalid(
            format!("{path}/weight"),
            "cyclic_span modules must declare their highest weight",
        ));
    }
    Ok(ModuleSpec {
        n,
        realization,
        x,
        weight,
    })
}

/// Validates a parsed JSON value as a [`JobSpec`].  Errors name the
/// offending value by JSON pointer, e.g. `/t/0/0` for a bad first
/// variable.
pub fn validate_job(value: &Value) -> Result<JobSpec, JobError> {
    let map = expect_object(value, "")?;
    for key in map.keys() {
        if !matches!(
            key.as_str(),
            "case" | "n" | "q" | "modules" | "xi" | "t" | "method"
        ) {
            return Err(JobError::invalid(format!("/{key}"), "unknown field"));
        }
    }
    let case = match expect_string(require(map, "", "case")?, "/case")? {
        "rational" => Case::Rational,
        "trigonometric" => Case::Trigonometric,
        other => {
            return Err(JobError::invalid(
                "/case",
                format!("unknown case {other:?}; expected rational or trigonometric"),
            ))
        }
    };
    let n = expect_usize(require(map, "", "n")?, "/n")?;
    if n < 2 {
        return Err(JobError::invalid("/n", "rank must be at least 2"));
    }
    let q = match (case, map.get("q")) {
        (Case::Rational, None) | (Case::Rational, Some(Value::Null)) => None,
        (Case::Rational, Some(_)) => {
            return Err(JobError::invalid(
                "/q",
                "q is only allowed for trigonometric jobs",
            ))
        }
        (Case::Trigonometric, None) | (Case::Trigonometric, Some(Value::Null)) => {
            return Err(JobError::invalid("/q", "missing field"))
        }
        (Case::Trigonometric, Some(raw)) => {
            let q = parse_scalar(raw, "/q")?;
            let one = Scalar::one();
            if q.is_zero() || q == one || q == -&one {
                return Err(JobError::invalid("/q", "q must avoid 0, 1, and -1"));
            }
            Some(q)
        }
    };
    let modules_raw = expect_array(require(map, "", "modules")?, "/modules")?;
    if modules_raw.is_empty() {
        return Err(JobError::invalid("/modules", "at least one module is required"));
    }
    let mut modules = Vec::with_capacity(modules_raw.len());
    for (i, raw) in modules_raw.iter().enumerate() {
        modules.push(parse_module(raw, &format!("/modules/{i}"), n, case)?);
    }
    let xi_raw = expect_array(require(map, "", "xi")?, "/xi")?;
    if xi_raw.len() != n - 1 {
        return Err(JobError::invalid(
            "/xi",
            format!("expected rank - 1 = {} entries", n - 1),
        ));
    }
    let mut xi = Vec::with_capacity(xi_raw.len());
    for (i, raw) in xi_raw.iter().enumerate() {
        xi.push(expect_usize(raw, &format!("/xi/{i}"))?);
    }
    let t_raw = expect_array(require(map, "", "t")?, "/t")?;
    if t_raw.len() != n - 1 {
        return Err(JobError::invalid(
            "/t",
            format!("expected rank - 1 = {} blocks", n - 1),
        ));
    }
    let mut t = Vec::with_capacity(t_raw.len());
    for (i, raw_block) in t_raw.iter().enumerate() {
        let block_path = format!("/t/{i}");
        let block_raw = expect_array(raw_block, &block_path)?;
        if block_raw.len() != xi[i] {
            return Err(JobError::invalid(
                block_path,
                format!("expected {} variables to match xi", xi[i]),
            ));
        }
        let mut block = Vec::with_capacity(block_raw.len());
        for (j, raw) in block_raw.iter().enumerate() {
            block.push(parse_scalar(raw, &format!("{block_path}/{j}"))?);
        }
        t.push(block);
    }
    let method_token = expect_string(require(map, "", "method")?, "/method")?;
    let method = Method::parse(method_token).ok_or_else(|| {
        JobError::invalid(
            "/method",
            format!("unknown method {method_token:?}; expected one of {:?}", Method::TOKENS),
        )
    })?;
    Ok(JobSpec {
        case,
        n,
        q,
        modules,
        xi,
        t,
        method,
    })
}

// ---------------------------------------------------------------------------
// Canonical serialization and fingerprinting.
// ---------------------------------------------------------------------------

fn scalar_value(s: &Scalar) -> Value {
    Value::String(s.to_string())
}

/// The canonical JSON form of a job.  Keys are sorted, scalars use their
/// canonical text form, and the method is included only on request — the
/// fingerprint hashes the method-free form.
pub fn canonical_job_value(job: &JobSpec, include_method: bool) -> Value {
    let mut map = serde_json::Map::new();
    map.insert(
        "case".into(),
        Value::String(job.case.to_string()),
    );
    map.insert("n".into(), Value::from(job.n as u64));
    if let Some(q) = &job.q {
        map.insert("q".into(), scalar_value(q));
    }
    map.insert(
        "modules".into(),
        Value::Array(
            job.modules
                .iter()
                .map(|m| serde_json::to_value(m).expect("module specs serialize"))
                .collect(),
        ),
    );
    map.insert(
        "xi".into(),
        Value::Array(job.xi.iter().map(|&k| Value::from(k as u64)).collect()),
    );
    map.insert(
        "t".into(),
        Value::Array(
            job.t
                .iter()
                .map(|block| Value::Array(block.iter().map(scalar_value).collect()))
                .collect(),
        ),
    );
    if include_method {
        map.insert("method".into(), Value::String(job.method.token().into()));
    }
    Value::Object(map)
}

/// SHA-256 hex fingerprint of the canonical, method-free job form.
/// Identical mathematical tasks always share a fingerprint.
pub fn fingerprint(job: &JobSpec) -> String {
    let canonical =
        serde_json::to_string(&canonical_job_value(job, false)).expect("canonical jobs serialize");
    let digest = Sha256::digest(canonical.as_bytes());
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Provenance block recorded in result files and echoed to stderr.
/// Timing is deliberately not part of the file bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: String,
    pub method: String,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// The contents of a compute result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub basis: Vec<String>,
    pub coordinates: Vec<Scalar>,
    pub weight: Vec<i64>,
    pub manifest: Manifest,
}

/// One line of an expansion file: a monodromy monomial and its exact
/// coefficient at the job's variable values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionLine {
    pub monomial: String,
    pub coefficient: Scalar,
}

/// The contents of an explain output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionFile {
    pub terms: Vec<ExpansionLine>,
    pub manifest: Manifest,
}

// ---------------------------------------------------------------------------
// Evaluation.
// ---------------------------------------------------------------------------

fn build_assembly(job: &JobSpec) -> Result<Assembly, JobError> {
    Assembly::build(job.case, job.q.as_ref(), &job.modules).map_err(evaluation_error)
}

/// Computes the job's coordinates by its requested method.
pub fn compute_route(job: &JobSpec) -> Result<Vec<Scalar>, JobError> {
    let asm = build_assembly(job)?;
    let xi = Composition::new(job.xi.clone());
    let t = VarCollection::new(job.t.clone());
    let coords = match job.method {
        Method::Trace => {
            let node = asm.node();
            let columns = vec![asm.joint_singular()];
            let mut images =
                weight_trace_apply(job.case, job.q.as_ref(), &node, &xi, &t, &columns)
                    .map_err(evaluation_error)?;
            images.pop().expect("one column in, one column out")
        }
        Method::RecursionFirst => {
            formulas::rank_recursion(&asm, &xi, &t, Direction::First).map_err(evaluation_error)?
        }
        Method::RecursionLast => {
            formulas::rank_recursion(&asm, &xi, &t, Direction::Last).map_err(evaluation_error)?
        }
        Method::ClosedFirst => {
            formulas::closed_form(&asm, &xi, &t, Direction::First).map_err(evaluation_error)?
        }
        Method::ClosedLast => {
            formulas::closed_form(&asm, &xi, &t, Direction::Last).map_err(evaluation_error)?
        }
        Method::TensorSplit => formulas::tensor_split(&asm, &xi, &t, SplitArity::Binary)
            .map_err(evaluation_error)?,
    };
    Ok(coords)
}

fn read_job(path: &Path) -> Result<JobSpec, JobError> {
    let bytes = std::fs::read(path)?;
    let value: Value = serde_json::from_slice(&bytes)
        .map_err(|err| JobError::invalid("", format!("malformed JSON: {err}")))?;
    validate_job(&value)
}

fn write_pretty(path: &Path, value: &impl Serialize) -> Result<(), JobError> {
    let mut text = serde_json::to_string_pretty(value).expect("output files serialize");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a job file, computes its coordinates, and writes the result file.
/// Returns the manifest for logging.
pub fn cmd_compute(job_path: &Path, out_path: &Path) -> Result<Manifest, JobError> {
    let job = read_job(job_path)?;
    let asm = build_assembly(&job)?;
    let coords = compute_route(&job)?;
    let xi = Composition::new(job.xi.clone());
    let weight = confirm_weight(&asm, &xi, &coords).map_err(evaluation_error)?;
    let manifest = Manifest {
        fingerprint: fingerprint(&job),
        method: job.method.token().into(),
        tool_version: TOOL_VERSION.into(),
        seed: None,
    };
    let file = ResultFile {
        basis: asm.basis_labels(),
        coordinates: coords,
        weight,
        manifest: manifest.clone(),
    };
    write_pretty(out_path, &file)?;
    Ok(manifest)
}

/// Runs a verification suite and writes the report file (a JSON array of
/// report entries).  Returns the entries so the caller can set the exit
/// status: nonzero iff any entry failed.
pub fn cmd_verify(
    suite_token: &str,
    seed: u64,
    scale_token: &str,
    out_path: &Path,
) -> Result<Vec<ReportEntry>, JobError> {
    let suite = Suite::parse(suite_token).ok_or_else(|| {
        JobError::invalid(
            "/suite",
            format!("unknown suite {suite_token:?}; expected one of {:?}", Suite::TOKENS),
        )
    })?;
    let scale = Scale::parse(scale_token).ok_or_else(|| {
        JobError::invalid(
            "/scale",
            format!("unknown scale {scale_token:?}; expected small or full"),
        )
    })?;
    let entries = run_suite(suite, seed, scale);
    write_pretty(out_path, &entries)?;
    Ok(entries)
}

/// Whether a verify report warrants a failing exit status.
pub fn report_failed(entries: &[ReportEntry]) -> bool {
    has_failures(entries)
}

fn monomial_label(case: Case, factor: &trace::ExpansionFactor) -> String {
    match case {
        Case::Rational => format!(
            "T_{{{}{}}}(t^{}_{})",
            factor.row, factor.col, factor.block, factor.index
        ),
        Case::Trigonometric => format!(
            "L^-_{{{}{}}}(t^{}_{})",
            factor.row, factor.col, factor.block, factor.index
        ),
    }
}

/// Reads a job file and writes the operator expansion of its weight
/// function: one monomial in monodromy entries per line with the exact
/// coefficient at the job's variable values.  Requires `method: trace`
/// and at most three variables.
pub fn cmd_explain(job_path: &Path, out_path: &Path) -> Result<Manifest, JobError> {
    let job = read_job(job_path)?;
    if job.method != Method::Trace {
        return Err(JobError::invalid(
            "/method",
            "explain requires method \"trace\"",
        ));
    }
    let total: usize = job.xi.iter().sum();
    if total > 3 {
        return Err(JobError::invalid(
            "/xi",
            format!("size cap exceeded: expansion is limited to 3 variables, got {total}"),
        ));
    }
    let xi = Composition::new(job.xi.clone());
    let t = VarCollection::new(job.t.clone());
    let terms = trace::expansion(job.case, job.q.as_ref(), job.n, &xi, &t)
        .map_err(evaluation_error)?;
    let manifest = Manifest {
        fingerprint: fingerprint(&job),
        method: job.method.token().into(),
        tool_version: TOOL_VERSION.into(),
        seed: None,
    };
    let file = ExpansionFile {
        terms: terms
            .iter()
            .map(|term| ExpansionLine {
                monomial: term
                    .factors
                    .iter()
                    .map(|f| monomial_label(job.case, f))
                    .collect::<Vec<_>>()
                    .join(""),
                coefficient: term.coefficient.clone(),
            })
            .collect(),
        manifest: manifest.clone(),
    };
    write_pretty(out_path, &file)?;
    Ok(manifest)
}
