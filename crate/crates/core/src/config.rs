//! Run configuration: one TOML document with sections `model`, `domain`,
//! `solver`, `noise`, `initial`, `crossing`, `experiment` and `output`.
//!
//! Parsing validates every field and reports all problems at once. The parsed
//! config holds every default explicitly, so [`RunConfig::to_toml`] followed
//! by [`parse_config`] reproduces the same [`RunConfig::digest`].

use std::fmt;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::blowup::{theoretical_tn, CrossingSpec, Statistic};
use crate::experiments::{
    BlowupProbabilityStudy, Comparison, DeterministicLimit, EpsilonConvergence, JMonotonicity, PassageTimeStudy,
    SimulateExperiment, UpperDomain, DEFAULT_LEAK_THRESHOLD,
};
use crate::integrator::{InitialProfile, NegativityPolicy, Scheme, SolverConfig, DEFAULT_FIELD_CAP};
use crate::lattice::{Boundary, LatticeDomain};
use crate::model::{drift_catalog, sigma_catalog, Expr, GridSpec, ModelSpec, ScalarFn};

/// Hex SHA-256 of the JSON serialization.
pub fn digest_of<T: Serialize>(value: &T) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_vec(value).expect("config values serialize");
    hex::encode(Sha256::digest(json))
}

/// Machine-readable reason for rejecting a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Syntax,
    UnknownKey,
    MissingKey,
    WrongType,
    OutOfRange,
    UnknownName,
    BadExpression,
    /// `dt > ε²/2` for the explicit scheme.
    Stability,
    /// Crossing window `a ∉ (0, ½)`.
    Window,
    /// Step, interval and horizon do not fit together.
    Alignment,
    /// Standing hypotheses on `b` or `σ` fail.
    Model,
}

impl ErrorCode {
    pub fn name(self) -> &'static str {
        match self {
            ErrorCode::Syntax => "syntax",
            ErrorCode::UnknownKey => "unknown_key",
            ErrorCode::MissingKey => "missing_key",
            ErrorCode::WrongType => "wrong_type",
            ErrorCode::OutOfRange => "out_of_range",
            ErrorCode::UnknownName => "unknown_name",
            ErrorCode::BadExpression => "bad_expression",
            ErrorCode::Stability => "stability",
            ErrorCode::Window => "window",
            ErrorCode::Alignment => "alignment",
            ErrorCode::Model => "model",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigError {
    /// Dotted key path, e.g. `solver.dt`; empty for syntax errors.
    pub path: String,
    pub code: ErrorCode,
    pub message: String,
    /// 1-based position, for syntax errors.
    pub line: Option<usize>,
    pub column: Option<usize>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if !self.path.is_empty() {
            write!(f, "{}: ", self.path)?;
        }
        write!(f, "{} [{}]", self.message, self.code.name())
    }
}

/// Every problem found in one config document.
#[derive(Debug, Clone, PartialEq, Default, thiserror::Error)]
pub struct ConfigErrors {
    pub errors: Vec<ConfigError>,
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "invalid config ({} error{})",
            self.errors.len(),
            if self.errors.len() == 1 { "" } else { "s" }
        )?;
        for e in &self.errors {
            write!(f, "\n  {e}")?;
        }
        Ok(())
    }
}

impl ConfigErrors {
    pub fn codes(&self) -> Vec<ErrorCode> {
        self.errors.iter().map(|e| e.code).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentName {
    Simulate,
    CompareLine,
    CompareBoundary,
    JMonotonicity,
    EpsilonConvergence,
    DeterministicLimit,
    PassageTime,
    BlowupProbability,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        ExperimentName::Simulate,
        ExperimentName::CompareLine,
        ExperimentName::CompareBoundary,
        ExperimentName::JMonotonicity,
        ExperimentName::EpsilonConvergence,
        ExperimentName::DeterministicLimit,
        ExperimentName::PassageTime,
        ExperimentName::BlowupProbability,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentName::Simulate => "simulate",
            ExperimentName::CompareLine => "compare_line",
            ExperimentName::CompareBoundary => "compare_boundary",
            ExperimentName::JMonotonicity => "j_monotonicity",
            ExperimentName::EpsilonConvergence => "epsilon_convergence",
            ExperimentName::DeterministicLimit => "deterministic_limit",
            ExperimentName::PassageTime => "passage_time",
            ExperimentName::BlowupProbability => "blowup_probability",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    /// Drift catalog key, or an expression in `x`.
    pub drift: String,
    /// Diffusion catalog key (`zero`, `linear`, `sqrt`, `bounded`), or an
    /// expression in `x`.
    pub diffusion: String,
    pub drift_scale: f64,
    pub sigma_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSection {
    pub epsilon: f64,
    pub x0: f64,
    pub x1: f64,
    pub boundary: Boundary,
}

/// Solver settings; the snapshot stride lives in the output section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift_cap: Option<f64>,
    pub field_cap: f64,
    pub negativity: NegativityPolicy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub splitting_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSection {
    pub master_seed: u64,
    pub first_replica: u32,
    pub replicas: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub name: ExperimentName,
    pub dt_halvings: u32,
    /// Truncation half-width `R` of the line; `0` selects `24·√t_end`.
    pub half_width: f64,
    pub upper_boundary: Boundary,
    pub leak_threshold: f64,
    pub caps: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub p: u32,
    pub sigma_scales: Vec<f64>,
    pub level_lo: i32,
    pub level_hi: i32,
    pub amplitudes: Vec<i32>,
    pub support: Vec<f64>,
    /// `0` selects `solver.t_end`.
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    pub directory: String,
    pub formats: Vec<String>,
    pub record_every: u64,
}

/// A fully validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: ModelSection,
    pub domain: DomainSection,
    pub solver: SolverSection,
    pub noise: NoiseSection,
    pub initial: InitialProfile,
    pub crossing: CrossingSpec,
    pub experiment: ExperimentSection,
    pub output: OutputSection,
}

/// One documented key: `(path, default, description)`.
pub type KeyDoc = (&'static str, &'static str, &'static str);

/// Every accepted key with its default.
pub const SCHEMA: &[KeyDoc] = &[
    ("model.drift", "required", "drift catalog key (x^2, x^3, x^1.5, x*log(e+x)^2, x*log(e+x), x, kpp) or expression in x"),
    ("model.diffusion", "\"zero\"", "diffusion catalog key (zero, linear, sqrt, bounded) or expression in x"),
    ("model.drift_scale", "1", "factor multiplying b"),
    ("model.sigma_scale", "1", "factor multiplying sigma"),
    ("domain.epsilon", "required", "lattice spacing"),
    ("domain.x0", "0", "left end, a multiple of epsilon"),
    ("domain.x1", "1", "right end, a multiple of epsilon (excluded when periodic)"),
    ("domain.boundary", "\"dirichlet\"", "dirichlet | neumann | periodic | free_truncated"),
    ("solver.dt", "epsilon^2/4", "time step; at most epsilon^2/2 for euler_maruyama"),
    ("solver.t_end", "required", "final time"),
    ("solver.scheme", "\"euler_maruyama\"", "euler_maruyama | alternating"),
    ("solver.drift_cap", "none", "J in b(u ∧ J)"),
    ("solver.field_cap", "2^30", "numerical blowup threshold"),
    ("solver.negativity", "\"clamp_to_zero\"", "clamp_to_zero | allow"),
    ("solver.splitting_interval", "none", "alternating scheme interval, a multiple of dt dividing t_end"),
    ("noise.master_seed", "0", "seed of every noise draw"),
    ("noise.first_replica", "0", "first replica id"),
    ("noise.replicas", "1", "number of replicas"),
    ("initial.kind", "\"constant\"", "constant | indicator | expr"),
    ("initial.value", "1", "constant: value"),
    ("initial.lo", "required", "indicator: left end"),
    ("initial.hi", "required", "indicator: right end"),
    ("initial.height", "1", "indicator: height"),
    ("initial.expr", "required", "expr: expression in x"),
    ("crossing.statistic", "\"inf_over_window\"", "inf_over_window | sup_over_domain"),
    ("crossing.window_a", "1/3", "window [a, 1 - a], 0 < a < 1/2"),
    ("crossing.min_level", "0", "lowest reported level"),
    ("experiment.name", "\"simulate\"", "simulate | compare_line | compare_boundary | j_monotonicity | epsilon_convergence | deterministic_limit | passage_time | blowup_probability"),
    ("experiment.dt_halvings", "0", "comparisons: extra runs at dt/2, dt/4, ..."),
    ("experiment.half_width", "24*sqrt(t_end)", "compare_line: truncation half-width R"),
    ("experiment.upper_boundary", "\"neumann\"", "compare_boundary: neumann | periodic"),
    ("experiment.leak_threshold", "1e-6", "compare_line: largest admissible truncation leak"),
    ("experiment.caps", "[2^10, 2^20, 2^30]", "j_monotonicity: ascending drift caps"),
    ("experiment.epsilons", "[2^-4, 2^-5, 2^-6, 2^-7]", "epsilon_convergence: dyadic spacings, coarse to fine"),
    ("experiment.p", "2", "epsilon_convergence: moment, 2 or 4"),
    ("experiment.sigma_scales", "[1, 0.5, 0.25, 0]", "deterministic_limit: sigma factors"),
    ("experiment.level_lo", "3", "passage_time: lowest level"),
    ("experiment.level_hi", "9", "passage_time: highest level"),
    ("experiment.amplitudes", "[2, 4, 6]", "blowup_probability: exponents n0 of 2^n0"),
    ("experiment.support", "[1/3, 2/3]", "blowup_probability: support of the initial indicator"),
    ("experiment.horizon", "t_end", "blowup_probability: time horizon"),
    ("output.directory", "\"out\"", "directory for every emitted file"),
    ("output.formats", "[\"tsv\"]", "tsv (a json manifest is always written)"),
    ("output.record_every", "0", "snapshot stride in steps; 0 keeps initial, crossing and final states"),
];

/// Keys of the sections consumed by an experiment.
pub fn keys_for(sections: &[&str]) -> Vec<KeyDoc> {
    SCHEMA
        .iter()
        .filter(|(k, _, _)| sections.iter().any(|s| k.split('.').next() == Some(s)))
        .copied()
        .collect()
}

struct Walker {
    errors: Vec<ConfigError>,
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "string",
        Value::Integer(_) => "integer",
        Value::Float(_) => "float",
        Value::Boolean(_) => "boolean",
        Value::Datetime(_) => "datetime",
        Value::Array(_) => "array",
        Value::Table(_) => "table",
    }
}

impl Walker {
    fn err(&mut self, path: impl Into<String>, code: ErrorCode, message: impl Into<String>) {
        self.errors.push(ConfigError {
            path: path.into(),
            code,
            message: message.into(),
            line: None,
            column: None,
        });
    }

    fn section<'a>(&mut self, root: &'a Table, name: &str, allowed: &[&str]) -> Option<&'a Table> {
        match root.get(name) {
            None => None,
            Some(Value::Table(t)) => {
                for k in t.keys() {
                    if !allowed.contains(&k.as_str()) {
                        self.err(
                            format!("{name}.{k}"),
                            ErrorCode::UnknownKey,
                            format!("unknown key; expected one of {}", allowed.join(", ")),
                        );
                    }
                }
                Some(t)
            }
            Some(v) => {
                self.err(
                    name,
                    ErrorCode::WrongType,
                    format!("expected a table, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn float(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<f64> {
        let path = format!("{sec}.{key}");
        match t?.get(key)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            v => {
                self.err(
                    path,
                    ErrorCode::WrongType,
                    format!("expected a number, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn int(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<i64> {
        let path = format!("{sec}.{key}");
        match t?.get(key)? {
            Value::Integer(i) => Some(*i),
            v => {
                self.err(
                    path,
                    ErrorCode::WrongType,
                    format!("expected an integer, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn nonneg_int(&mut self, t: Option<&Table>, sec: &str, key: &str, max: i64) -> Option<i64> {
        let i = self.int(t, sec, key)?;
        if i < 0 || i > max {
            self.err(
                format!("{sec}.{key}"),
                ErrorCode::OutOfRange,
                format!("{i} is not in [0, {max}]"),
            );
            return None;
        }
        Some(i)
    }

    fn string(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<String> {
        match t?.get(key)? {
            Value::String(s) => Some(s.clone()),
            v => {
                self.err(
                    format!("{sec}.{key}"),
                    ErrorCode::WrongType,
                    format!("expected a string, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn floats(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<Vec<f64>> {
        let path = format!("{sec}.{key}");
        match t?.get(key)? {
            Value::Array(a) => {
                let mut out = Vec::new();
                for v in a {
                    match v {
                        Value::Float(x) => out.push(*x),
                        Value::Integer(i) => out.push(*i as f64),
                        v => {
                            self.err(
                                path,
                                ErrorCode::WrongType,
                                format!("expected numbers, found {}", type_name(v)),
                            );
                            return None;
                        }
                    }
                }
                Some(out)
            }
            v => {
                self.err(
                    path,
                    ErrorCode::WrongType,
                    format!("expected an array, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn strings(&mut self, t: Option<&Table>, sec: &str, key: &str) -> Option<Vec<String>> {
        let path = format!("{sec}.{key}");
        match t?.get(key)? {
            Value::Array(a) if a.iter().all(|v| v.is_str()) => {
                Some(a.iter().map(|v| v.as_str().unwrap_or_default().to_string()).collect())
            }
            v => {
                self.err(
                    path,
                    ErrorCode::WrongType,
                    format!("expected an array of strings, found {}", type_name(v)),
                );
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, t: Option<&Table>, sec: &str, key: &str, options: &[(&str, T)]) -> Option<T> {
        let s = self.string(t, sec, key)?;
        match options.iter().find(|(n, _)| *n == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(
                    format!("{sec}.{key}"),
                    ErrorCode::UnknownName,
                    format!("'{s}' is not one of {}", names.join(", ")),
                );
                None
            }
        }
    }

    fn positive(&mut self, path: &str, x: f64) -> bool {
        if !(x > 0.0 && x.is_finite()) {
            self.err(
                path,
                ErrorCode::OutOfRange,
                format!("must be positive and finite, got {x}"),
            );
            return false;
        }
        true
    }
}

const BOUNDARIES: [(&str, Boundary); 4] = [
    ("dirichlet", Boundary::Dirichlet),
    ("neumann", Boundary::Neumann),
    ("periodic", Boundary::Periodic),
    ("free_truncated", Boundary::FreeTruncated),
];

fn drift_fn(key: &str) -> Result<ScalarFn, String> {
    if let Some((_, f)) = drift_catalog().into_iter().find(|(k, _)| *k == key) {
        return Ok(f);
    }
    ScalarFn::expr(key).map_err(|e| format!("'{key}' is neither a catalog drift nor a valid expression: {e}"))
}

fn diffusion_fn(key: &str) -> Result<ScalarFn, String> {
    if key == "zero" {
        return Ok(ScalarFn::Zero);
    }
    if let Some((_, f)) = sigma_catalog().into_iter().find(|(k, _)| *k == key) {
        return Ok(f);
    }
    ScalarFn::expr(key).map_err(|e| format!("'{key}' is neither a catalog diffusion nor a valid expression: {e}"))
}

/// `factor · f`, folded into the coefficient of power laws.
fn scaled(f: ScalarFn, factor: f64) -> ScalarFn {
    match f {
        _ if factor == 1.0 => f,
        _ if factor == 0.0 => ScalarFn::Zero,
        ScalarFn::Zero => ScalarFn::Zero,
        ScalarFn::Power { coef, exponent } => ScalarFn::Power {
            coef: coef * factor,
            exponent,
        },
        other => ScalarFn::Scaled {
            factor,
            inner: Box::new(other),
        },
    }
}

impl ModelSection {
    pub fn build(&self) -> Result<ModelSpec, String> {
        let b = scaled(drift_fn(&self.drift)?, self.drift_scale);
        let s = scaled(diffusion_fn(&self.diffusion)?, self.sigma_scale);
        Ok(ModelSpec::new(format!("{}|{}", self.drift, self.diffusion), b, s))
    }
}

fn syntax_error(text: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (Some(line), Some(column))
        }
        None => (None, None),
    };
    ConfigError {
        path: String::new(),
        code: ErrorCode::Syntax,
        message: e.message().trim().to_string(),
        line,
        column,
    }
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let root: Table = toml::from_str(text).map_err(|e| ConfigErrors {
        errors: vec![syntax_error(text, &e)],
    })?;
    let mut w = Walker { errors: Vec::new() };
    const SECTIONS: [&str; 8] = [
        "model",
        "domain",
        "solver",
        "noise",
        "initial",
        "crossing",
        "experiment",
        "output",
    ];
    for k in root.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            w.err(
                k.clone(),
                ErrorCode::UnknownKey,
                format!("unknown section; expected one of {}", SECTIONS.join(", ")),
            );
        }
    }

    // model
    let m = w.section(&root, "model", &["drift", "diffusion", "drift_scale", "sigma_scale"]);
    if m.is_none() {
        w.err("model", ErrorCode::MissingKey, "section is required");
    }
    let drift = w.string(m, "model", "drift");
    if m.is_some() && drift.is_none() && !m.is_some_and(|t| t.contains_key("drift")) {
        w.err("model.drift", ErrorCode::MissingKey, "required");
    }
    let model_sec = ModelSection {
        drift: drift.unwrap_or_default(),
        diffusion: w.string(m, "model", "diffusion").unwrap_or_else(|| "zero".into()),
        drift_scale: w.float(m, "model", "drift_scale").unwrap_or(1.0),
        sigma_scale: w.float(m, "model", "sigma_scale").unwrap_or(1.0),
    };
    for (k, v) in [
        ("drift_scale", model_sec.drift_scale),
        ("sigma_scale", model_sec.sigma_scale),
    ] {
        if !(v >= 0.0 && v.is_finite()) {
            w.err(
                format!("model.{k}"),
                ErrorCode::OutOfRange,
                format!("must be nonnegative, got {v}"),
            );
        }
    }
    let model = if model_sec.drift.is_empty() {
        None
    } else {
        match (drift_fn(&model_sec.drift), diffusion_fn(&model_sec.diffusion)) {
            (Err(e), _) => {
                w.err("model.drift", ErrorCode::BadExpression, e);
                None
            }
            (_, Err(e)) => {
                w.err("model.diffusion", ErrorCode::BadExpression, e);
                None
            }
            _ => {
                let spec = model_sec.build().expect("both parts parsed");
                match spec.validate(&GridSpec::new(1e-3, 1e6, 20)) {
                    Ok(()) => Some(spec),
                    Err(e) => {
                        w.err("model", ErrorCode::Model, e.to_string());
                        None
                    }
                }
            }
        }
    };

    // domain
    let d = w.section(&root, "domain", &["epsilon", "x0", "x1", "boundary"]);
    let epsilon = w.float(d, "domain", "epsilon");
    if epsilon.is_none() && !d.is_some_and(|t| t.contains_key("epsilon")) {
        w.err("domain.epsilon", ErrorCode::MissingKey, "required");
    }
    let domain_sec = DomainSection {
        epsilon: epsilon.unwrap_or(f64::NAN),
        x0: w.float(d, "domain", "x0").unwrap_or(0.0),
        x1: w.float(d, "domain", "x1").unwrap_or(1.0),
        boundary: w
            .choice(d, "domain", "boundary", &BOUNDARIES)
            .unwrap_or(Boundary::Dirichlet),
    };
    let mut domain = None;
    if epsilon.is_some() && w.positive("domain.epsilon", domain_sec.epsilon) {
        match LatticeDomain::interval(domain_sec.x0, domain_sec.x1, domain_sec.epsilon, domain_sec.boundary) {
            Ok(dom) => domain = Some(dom),
            Err(e) => w.err("domain", ErrorCode::OutOfRange, e.to_string()),
        }
    }

    // solver
    let s = w.section(
        &root,
        "solver",
        &[
            "dt",
            "t_end",
            "scheme",
            "drift_cap",
            "field_cap",
            "negativity",
            "splitting_interval",
        ],
    );
    let t_end = w.float(s, "solver", "t_end");
    if t_end.is_none() && !s.is_some_and(|t| t.contains_key("t_end")) {
        w.err("solver.t_end", ErrorCode::MissingKey, "required");
    }
    let eps = domain_sec.epsilon;
    let solver = SolverConfig {
        dt: w.float(s, "solver", "dt").unwrap_or(0.25 * eps * eps),
        t_end: t_end.unwrap_or(f64::NAN),
        scheme: w
            .choice(
                s,
                "solver",
                "scheme",
                &[
                    ("euler_maruyama", Scheme::EulerMaruyama),
                    ("alternating", Scheme::Alternating),
                ],
            )
            .unwrap_or(Scheme::EulerMaruyama),
        drift_cap: w.float(s, "solver", "drift_cap"),
        field_cap: w.float(s, "solver", "field_cap").unwrap_or(DEFAULT_FIELD_CAP),
        negativity: w
            .choice(
                s,
                "solver",
                "negativity",
                &[
                    ("clamp_to_zero", NegativityPolicy::ClampToZero),
                    ("allow", NegativityPolicy::Allow),
                ],
            )
            .unwrap_or(NegativityPolicy::ClampToZero),
        record_every: 0,
        splitting_interval: w.float(s, "solver", "splitting_interval"),
    };
    if t_end.is_some() && !(solver.t_end > 0.0 && solver.t_end.is_finite()) {
        w.err(
            "solver.t_end",
            ErrorCode::OutOfRange,
            format!("must be positive, got {}", solver.t_end),
        );
    }
    if eps.is_finite() {
        w.positive("solver.dt", solver.dt);
    }
    w.positive("solver.field_cap", solver.field_cap);
    if let Some(j) = solver.drift_cap {
        w.positive("solver.drift_cap", j);
    }
    match solver.scheme {
        Scheme::EulerMaruyama => {
            if eps.is_finite() && solver.dt > 0.5 * eps * eps * (1.0 + 1e-12) {
                w.err(
                    "solver.dt",
                    ErrorCode::Stability,
                    format!(
                        "dt = {} exceeds the explicit stability bound epsilon^2/2 = {}",
                        solver.dt,
                        0.5 * eps * eps
                    ),
                );
            }
        }
        Scheme::Alternating => match solver.splitting_interval {
            None => w.err(
                "solver.splitting_interval",
                ErrorCode::MissingKey,
                "required by the alternating scheme",
            ),
            Some(h) => {
                if w.positive("solver.splitting_interval", h) && solver.dt > 0.0 && solver.t_end > 0.0 {
                    if let Err(e) = solver.substeps().and_then(|_| solver.n_steps()) {
                        w.err("solver.splitting_interval", ErrorCode::Alignment, e.to_string());
                    }
                }
            }
        },
    }

    // noise
    let n = w.section(&root, "noise", &["master_seed", "first_replica", "replicas"]);
    let noise = NoiseSection {
        master_seed: w.nonneg_int(n, "noise", "master_seed", i64::MAX).unwrap_or(0) as u64,
        first_replica: w.nonneg_int(n, "noise", "first_replica", u32::MAX as i64).unwrap_or(0) as u32,
        replicas: w.nonneg_int(n, "noise", "replicas", u32::MAX as i64).unwrap_or(1) as u32,
    };
    if noise.replicas == 0 {
        w.err("noise.replicas", ErrorCode::OutOfRange, "need at least one replica");
    }
    if noise.first_replica as u64 + noise.replicas as u64 > u32::MAX as u64 + 1 {
        w.err("noise.replicas", ErrorCode::OutOfRange, "replica ids exceed 32 bits");
    }

    // initial
    let i = w.section(&root, "initial", &["kind", "value", "lo", "hi", "height", "expr"]);
    #[derive(Clone, Copy)]
    enum Kind {
        Constant,
        Indicator,
        Expr,
    }
    let kind = w
        .choice(
            i,
            "initial",
            "kind",
            &[
                ("constant", Kind::Constant),
                ("indicator", Kind::Indicator),
                ("expr", Kind::Expr),
            ],
        )
        .unwrap_or(Kind::Constant);
    let stray = |keys: &[&str]| -> Vec<String> {
        i.map(|t| {
            t.keys()
                .filter(|k| *k != "kind" && !keys.contains(&k.as_str()))
                .cloned()
                .collect()
        })
        .unwrap_or_default()
    };
    let initial = match kind {
        Kind::Constant => {
            for k in stray(&["value"]) {
                w.err(
                    format!("initial.{k}"),
                    ErrorCode::UnknownKey,
                    "not used by kind = constant",
                );
            }
            InitialProfile::Constant {
                value: w.float(i, "initial", "value").unwrap_or(1.0),
            }
        }
        Kind::Indicator => {
            for k in stray(&["lo", "hi", "height"]) {
                w.err(
                    format!("initial.{k}"),
                    ErrorCode::UnknownKey,
                    "not used by kind = indicator",
                );
            }
            let lo = w.float(i, "initial", "lo");
            let hi = w.float(i, "initial", "hi");
            for (k, v) in [("lo", lo), ("hi", hi)] {
                if v.is_none() && !i.is_some_and(|t| t.contains_key(k)) {
                    w.err(
                        format!("initial.{k}"),
                        ErrorCode::MissingKey,
                        "required by kind = indicator",
                    );
                }
            }
            let (lo, hi) = (lo.unwrap_or(0.0), hi.unwrap_or(0.0));
            if hi < lo {
                w.err(
                    "initial.hi",
                    ErrorCode::OutOfRange,
                    format!("hi = {hi} is below lo = {lo}"),
                );
            }
            InitialProfile::Indicator {
                lo,
                hi,
                height: w.float(i, "initial", "height").unwrap_or(1.0),
            }
        }
        Kind::Expr => {
            for k in stray(&["expr"]) {
                w.err(format!("initial.{k}"), ErrorCode::UnknownKey, "not used by kind = expr");
            }
            let src = w.string(i, "initial", "expr");
            let parsed = match src {
                None => {
                    w.err("initial.expr", ErrorCode::MissingKey, "required by kind = expr");
                    None
                }
                Some(src) => match Expr::parse(&src) {
                    Ok(e) => Some(e),
                    Err(e) => {
                        w.err("initial.expr", ErrorCode::BadExpression, e.to_string());
                        None
                    }
                },
            };
            match parsed {
                Some(expr) => InitialProfile::Expr { expr },
                None => InitialProfile::Constant { value: 0.0 },
            }
        }
    };
    if let InitialProfile::Constant { value } | InitialProfile::Indicator { height: value, .. } = &initial {
        if !(*value >= 0.0 && value.is_finite()) {
            w.err(
                "initial",
                ErrorCode::OutOfRange,
                format!("initial data must be nonnegative, got {value}"),
            );
        }
    }

    // crossing
    let c = w.section(&root, "crossing", &["statistic", "window_a", "min_level"]);
    let crossing = CrossingSpec {
        statistic: w
            .choice(
                c,
                "crossing",
                "statistic",
                &[
                    ("inf_over_window", Statistic::InfOverWindow),
                    ("sup_over_domain", Statistic::SupOverDomain),
                ],
            )
            .unwrap_or(Statistic::InfOverWindow),
        window_a: w.float(c, "crossing", "window_a").unwrap_or(1.0 / 3.0),
        min_level: w.int(c, "crossing", "min_level").unwrap_or(0).clamp(-1100, 1100) as i32,
    };
    if !(crossing.window_a > 0.0 && crossing.window_a < 0.5) {
        w.err(
            "crossing.window_a",
            ErrorCode::Window,
            format!("a = {} must satisfy 0 < a < 1/2", crossing.window_a),
        );
    }

    // experiment
    let e = w.section(
        &root,
        "experiment",
        &[
            "name",
            "dt_halvings",
            "half_width",
            "upper_boundary",
            "leak_threshold",
            "caps",
            "epsilons",
            "p",
            "sigma_scales",
            "level_lo",
            "level_hi",
            "amplitudes",
            "support",
            "horizon",
        ],
    );
    let name = match w.string(e, "experiment", "name") {
        None => ExperimentName::Simulate,
        Some(s) => ExperimentName::parse(&s).unwrap_or_else(|| {
            let names: Vec<&str> = ExperimentName::ALL.iter().map(|n| n.name()).collect();
            w.err(
                "experiment.name",
                ErrorCode::UnknownName,
                format!("'{s}' is not one of {}", names.join(", ")),
            );
            ExperimentName::Simulate
        }),
    };
    let experiment = ExperimentSection {
        name,
        dt_halvings: w.nonneg_int(e, "experiment", "dt_halvings", 16).unwrap_or(0) as u32,
        half_width: w.float(e, "experiment", "half_width").unwrap_or(0.0),
        upper_boundary: w
            .choice(
                e,
                "experiment",
                "upper_boundary",
                &[("neumann", Boundary::Neumann), ("periodic", Boundary::Periodic)],
            )
            .unwrap_or(Boundary::Neumann),
        leak_threshold: w
            .float(e, "experiment", "leak_threshold")
            .unwrap_or(DEFAULT_LEAK_THRESHOLD),
        caps: w
            .floats(e, "experiment", "caps")
            .unwrap_or_else(|| vec![1024.0, 1_048_576.0, DEFAULT_FIELD_CAP]),
        epsilons: w
            .floats(e, "experiment", "epsilons")
            .unwrap_or_else(|| vec![1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]),
        p: w.nonneg_int(e, "experiment", "p", 64).unwrap_or(2) as u32,
        sigma_scales: w
            .floats(e, "experiment", "sigma_scales")
            .unwrap_or_else(|| vec![1.0, 0.5, 0.25, 0.0]),
        level_lo: w.int(e, "experiment", "level_lo").unwrap_or(3).clamp(-1100, 1100) as i32,
        level_hi: w.int(e, "experiment", "level_hi").unwrap_or(9).clamp(-1100, 1100) as i32,
        amplitudes: w
            .floats(e, "experiment", "amplitudes")
            .map(|v| v.into_iter().map(|x| x as i32).collect())
            .unwrap_or_else(|| vec![2, 4, 6]),
        support: w
            .floats(e, "experiment", "support")
            .unwrap_or_else(|| vec![1.0 / 3.0, 2.0 / 3.0]),
        horizon: w.float(e, "experiment", "horizon").unwrap_or(0.0),
    };
    validate_experiment(&mut w, &experiment, &solver, &crossing, model.as_ref(), domain.as_ref());

    // output
    let o = w.section(&root, "output", &["directory", "formats", "record_every"]);
    let output = OutputSection {
        directory: w.string(o, "output", "directory").unwrap_or_else(|| "out".into()),
        formats: w.strings(o, "output", "formats").unwrap_or_else(|| vec!["tsv".into()]),
        record_every: w.nonneg_int(o, "output", "record_every", i64::MAX).unwrap_or(0) as u64,
    };
    for f in &output.formats {
        if f != "tsv" {
            w.err(
                "output.formats",
                ErrorCode::UnknownName,
                format!("format '{f}' is not supported; use tsv"),
            );
        }
    }
    if output.directory.is_empty() {
        w.err("output.directory", ErrorCode::OutOfRange, "must not be empty");
    }
    if name == ExperimentName::PassageTime && output.record_every > 0 {
        if let Some(m) = &model {
            if let Ok(tn) = theoretical_tn(m, experiment.level_hi) {
                let interval = output.record_every as f64 * solver.dt;
                if interval > tn / 4.0 {
                    w.err(
                        "output.record_every",
                        ErrorCode::Alignment,
                        format!(
                            "record interval {interval} exceeds t_n/4 = {} at level {}",
                            tn / 4.0,
                            experiment.level_hi
                        ),
                    );
                }
            }
        }
    }

    if !w.errors.is_empty() {
        return Err(ConfigErrors { errors: w.errors });
    }
    Ok(RunConfig {
        model: model_sec,
        domain: domain_sec,
        solver: SolverSection {
            dt: solver.dt,
            t_end: solver.t_end,
            scheme: solver.scheme,
            drift_cap: solver.drift_cap,
            field_cap: solver.field_cap,
            negativity: solver.negativity,
            splitting_interval: solver.splitting_interval,
        },
        noise,
        initial,
        crossing,
        experiment,
        output,
    })
}

fn is_dyadic_multiple(x: f64, base: f64) -> bool {
    let r = x / base;
    let k = r.log2().round();
    k >= 0.0 && (r - 2f64.powi(k as i32)).abs() <= 1e-9 * r
}

fn validate_experiment(
    w: &mut Walker,
    e: &ExperimentSection,
    solver: &SolverConfig,
    crossing: &CrossingSpec,
    model: Option<&ModelSpec>,
    domain: Option<&LatticeDomain>,
) {
    let needs_window = crossing.statistic == Statistic::InfOverWindow;
    match e.name {
        ExperimentName::Simulate | ExperimentName::PassageTime => {
            if let Some(d) = domain {
                let (x0, x1) = d.extent();
                if needs_window && (crossing.window_a < x0 || 1.0 - crossing.window_a > x1) {
                    w.err(
                        "crossing.window_a",
                        ErrorCode::Window,
                        format!("window [a, 1 - a] is not inside the domain [{x0}, {x1}]"),
                    );
                }
            }
            if e.name == ExperimentName::PassageTime && e.level_lo > e.level_hi {
                w.err(
                    "experiment.level_hi",
                    ErrorCode::OutOfRange,
                    "level_hi is below level_lo",
                );
            }
        }
        ExperimentName::CompareLine | ExperimentName::CompareBoundary => {
            if e.half_width < 0.0 {
                w.err("experiment.half_width", ErrorCode::OutOfRange, "must be nonnegative");
            }
            if !(e.leak_threshold > 0.0) {
                w.err("experiment.leak_threshold", ErrorCode::OutOfRange, "must be positive");
            }
            if solver.scheme != Scheme::EulerMaruyama {
                w.err(
                    "solver.scheme",
                    ErrorCode::OutOfRange,
                    "comparisons use the euler_maruyama scheme",
                );
            }
        }
        ExperimentName::JMonotonicity => {
            if e.caps.is_empty() || e.caps.iter().any(|c| !(*c > 0.0)) || e.caps.windows(2).any(|p| !(p[0] < p[1])) {
                w.err(
                    "experiment.caps",
                    ErrorCode::OutOfRange,
                    "caps must be positive and strictly ascending",
                );
            }
        }
        ExperimentName::EpsilonConvergence => {
            if e.epsilons.is_empty() || e.epsilons.iter().any(|x| !(*x > 0.0)) {
                w.err("experiment.epsilons", ErrorCode::OutOfRange, "need positive spacings");
            } else {
                let fine = e.epsilons[e.epsilons.len() - 1];
                if e.epsilons.iter().any(|&x| !is_dyadic_multiple(x, fine))
                    || e.epsilons.windows(2).any(|p| p[1] > p[0])
                {
                    w.err(
                        "experiment.epsilons",
                        ErrorCode::OutOfRange,
                        "spacings must be power-of-two multiples of the last, coarse to fine",
                    );
                }
            }
            if e.p != 2 && e.p != 4 {
                w.err(
                    "experiment.p",
                    ErrorCode::OutOfRange,
                    format!("p = {} must be 2 or 4", e.p),
                );
            }
            if let Some(m) = model {
                if !m.sigma_global_lipschitz
                    || !matches!(m.drift, ScalarFn::Zero | ScalarFn::Power { exponent: 1.0, .. })
                {
                    w.err(
                        "model",
                        ErrorCode::Model,
                        "epsilon_convergence needs linear or zero drift and a globally Lipschitz sigma",
                    );
                }
            }
        }
        ExperimentName::DeterministicLimit => {
            if e.sigma_scales.is_empty() || e.sigma_scales.iter().any(|s| !(*s >= 0.0)) {
                w.err(
                    "experiment.sigma_scales",
                    ErrorCode::OutOfRange,
                    "need nonnegative factors",
                );
            }
        }
        ExperimentName::BlowupProbability => {
            if e.amplitudes.is_empty() || e.amplitudes.windows(2).any(|p| !(p[0] < p[1])) {
                w.err(
                    "experiment.amplitudes",
                    ErrorCode::OutOfRange,
                    "amplitudes must be strictly ascending",
                );
            }
            if e.support.len() != 2 || !(e.support[0] < e.support[1]) {
                w.err(
                    "experiment.support",
                    ErrorCode::OutOfRange,
                    "support must be [lo, hi] with lo < hi",
                );
            }
            if e.horizon < 0.0 || e.horizon > solver.t_end {
                w.err(
                    "experiment.horizon",
                    ErrorCode::OutOfRange,
                    "horizon must lie in (0, t_end]",
                );
            }
        }
    }
}

/// An experiment ready for [`crate::experiments::mc_drive`].
#[derive(Debug, Clone)]
pub enum ExperimentSpec {
    Simulate(SimulateExperiment),
    Comparison(Comparison),
    JMonotonicity(JMonotonicity),
    EpsilonConvergence(EpsilonConvergence),
    DeterministicLimit(DeterministicLimit),
    PassageTime(PassageTimeStudy),
    BlowupProbability(BlowupProbabilityStudy),
}

impl RunConfig {
    /// Digest of every field, defaults included, except `output.directory`.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output.directory.clear();
        digest_of(&c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn model(&self) -> ModelSpec {
        self.model.build().expect("validated")
    }

    pub fn domain(&self) -> LatticeDomain {
        let d = &self.domain;
        LatticeDomain::interval(d.x0, d.x1, d.epsilon, d.boundary).expect("validated")
    }

    pub fn solver(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            dt: s.dt,
            t_end: s.t_end,
            scheme: s.scheme,
            drift_cap: s.drift_cap,
            field_cap: s.field_cap,
            negativity: s.negativity,
            record_every: self.output.record_every,
            splitting_interval: s.splitting_interval,
        }
    }

    pub fn replicas(&self) -> std::ops::Range<u32> {
        let first = self.noise.first_replica;
        first..first.saturating_add(self.noise.replicas)
    }

    pub fn experiment(&self) -> ExperimentSpec {
        let e = &self.experiment;
        let seed = self.noise.master_seed;
        let model = self.model();
        let solver = self.solver();
        match e.name {
            ExperimentName::Simulate => ExperimentSpec::Simulate(SimulateExperiment {
                model,
                domain: self.domain(),
                solver,
                initial: self.initial.clone(),
                crossing: Some(self.crossing.clone()),
                master_seed: seed,
            }),
            ExperimentName::CompareLine | ExperimentName::CompareBoundary => {
                let upper = if e.name == ExperimentName::CompareLine {
                    let r = if e.half_width > 0.0 {
                        e.half_width
                    } else {
                        Comparison::default_half_width(solver.t_end, self.domain.epsilon)
                    };
                    UpperDomain::Line { half_width: r }
                } else {
                    UpperDomain::Interval {
                        boundary: e.upper_boundary,
                    }
                };
                let mut c = Comparison::new(upper, model, self.domain.epsilon, solver, self.initial.clone(), seed);
                c.dt_halvings = e.dt_halvings;
                c.leak_threshold = e.leak_threshold;
                ExperimentSpec::Comparison(c)
            }
            ExperimentName::JMonotonicity => ExperimentSpec::JMonotonicity(JMonotonicity {
                model,
                domain: self.domain(),
                solver,
                dt_halvings: e.dt_halvings,
                caps: e.caps.clone(),
                initial: self.initial.clone(),
                master_seed: seed,
            }),
            ExperimentName::EpsilonConvergence => ExperimentSpec::EpsilonConvergence(EpsilonConvergence {
                model,
                epsilons: e.epsilons.clone(),
                t_end: solver.t_end,
                dt: None,
                initial: self.initial.clone(),
                p: e.p,
                master_seed: seed,
            }),
            ExperimentName::DeterministicLimit => ExperimentSpec::DeterministicLimit(DeterministicLimit {
                model,
                initial_value: match &self.initial {
                    InitialProfile::Constant { value } => *value,
                    other => other.eval(0.5),
                },
                sigma_scales: e.sigma_scales.clone(),
                epsilon: self.domain.epsilon,
                solver,
                master_seed: seed,
            }),
            ExperimentName::PassageTime => ExperimentSpec::PassageTime(PassageTimeStudy {
                model,
                domain: self.domain(),
                solver,
                initial: self.initial.clone(),
                crossing: self.crossing.clone(),
                level_lo: e.level_lo,
                level_hi: e.level_hi,
                master_seed: seed,
            }),
            ExperimentName::BlowupProbability => ExperimentSpec::BlowupProbability(BlowupProbabilityStudy {
                model,
                domain: self.domain(),
                horizon: if e.horizon > 0.0 { e.horizon } else { solver.t_end },
                solver,
                amplitudes: e.amplitudes.clone(),
                support: (e.support[0], e.support[1]),
                master_seed: seed,
            }),
        }
    }
}
