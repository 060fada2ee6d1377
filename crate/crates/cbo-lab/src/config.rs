//! Run configuration: an INI-like key-value format with one section per
//! experiment, or the same shape as a JSON object.
//!
//! The text grammar: blank lines and `#` comments are skipped, `[section]`
//! switches sections, and every other line is `key = value`. Values are
//! numbers, bare words, or comma-separated lists. A file whose first
//! non-whitespace character is `{` is parsed as JSON instead, with the
//! sections as nested objects. Every key has a documented default, so the
//! empty file is a valid configuration; unknown sections or keys are
//! rejected by name.
//!
//! One file describes all experiments at once: the shared `[objective]`,
//! `[params]`, and `[init]` sections plus one optional section of knobs
//! per subcommand. The CLI picks which part to run.

use std::path::{Path, PathBuf};

use cbo_core::dynamics::CBOParams;
use cbo_core::randomness::InitialDistribution;
use cbo_core::{Error, ObjectiveSpec};
use serde_json::{Map, Value};

use crate::experiments::{ValidationLevel, DEFAULT_RECORD_STRIDE, DEFAULT_SEEDS};

/// Master seed used when neither the file nor the flag provides one.
pub const DEFAULT_SEED: u64 = 42;

const SECTIONS: &[&str] = &[
    "objective",
    "params",
    "init",
    "optimize",
    "meanfield",
    "moments",
    "ratio",
    "validate",
];
const TOP_KEYS: &[&str] = &["seed", "workers", "out"];
const OBJECTIVE_KEYS: &[&str] = &["name", "dimension", "shift", "center"];
const PARAMS_KEYS: &[&str] = &[
    "lambda",
    "sigma",
    "alpha",
    "kappa",
    "delta",
    "dt",
    "time",
    "steps",
    "particles",
];
const INIT_KEYS: &[&str] = &["kind", "mean", "cov", "lower", "upper"];
const OPTIMIZE_KEYS: &[&str] = &["seeds"];
const MEANFIELD_KEYS: &[&str] = &["particles_list", "seeds", "m_ref", "stride"];
const MOMENTS_KEYS: &[&str] = &["p_list", "seeds", "stride"];
const RATIO_KEYS: &[&str] = &["alpha", "batch_list", "trials", "oracle_size"];
const VALIDATE_KEYS: &[&str] = &["level"];

/// Objective selection; `shift` is resolved for `ackley`, `center` for
/// `quadratic` and `rastrigin`, so the stored values are the effective
/// ones, not the raw file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveConfig {
    pub name: String,
    pub dimension: usize,
    pub shift: Option<f64>,
    pub center: Option<Vec<f64>>,
}

/// Initial particle distribution, broadcast to the state dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum InitConfig {
    Gaussian { mean: Vec<f64>, cov: Vec<f64> },
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldConfig {
    pub particles_list: Vec<usize>,
    pub seeds: usize,
    pub m_ref: usize,
    pub stride: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentsConfig {
    pub p_list: Vec<u32>,
    pub seeds: usize,
    pub stride: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioConfig {
    pub alpha: f64,
    pub batch_list: Vec<usize>,
    pub trials: usize,
    pub oracle_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateConfig {
    pub level: ValidationLevel,
}

/// A fully resolved configuration: every default applied, ranges checked
/// at basic level, horizon converted to a step count.
#[derive(Debug, Clone, PartialEq)]
pub struct LabConfig {
    pub seed: u64,
    /// Worker-thread request; `None` defers to the CLI flag or the
    /// `CBO_WORKERS` environment variable. Never echoed into reports:
    /// results do not depend on it.
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub objective: ObjectiveConfig,
    pub params: CBOParams,
    pub init: InitConfig,
    pub optimize: OptimizeConfig,
    pub meanfield: MeanFieldConfig,
    pub moments: MomentsConfig,
    pub ratio: RatioConfig,
    pub validate: ValidateConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig::parse_str("").expect("the empty config is valid")
    }
}

impl LabConfig {
    /// Reads and parses a config file (text grammar or JSON).
    pub fn load(path: &Path) -> Result<LabConfig, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config file {}: {e}", path.display()))
        })?;
        LabConfig::parse_str(&text)
    }

    /// Parses config text; JSON when the first non-whitespace byte is `{`.
    pub fn parse_str(text: &str) -> Result<LabConfig, Error> {
        let root = if text.trim_start().starts_with('{') {
            match serde_json::from_str::<Value>(text) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err(Error::Config("JSON config must be an object".to_string())),
                Err(e) => return Err(Error::Config(format!("invalid JSON config: {e}"))),
            }
        } else {
            parse_sectioned_text(text)?
        };
        finalize(root)
    }

    /// Builds the objective this configuration names.
    pub fn build_objective(&self) -> Result<ObjectiveSpec, Error> {
        ObjectiveSpec::by_name(
            &self.objective.name,
            self.objective.dimension,
            self.objective.shift,
            self.objective.center.clone(),
        )
    }

    /// Builds the initial distribution, already broadcast to dimension.
    pub fn build_init(&self) -> Result<InitialDistribution, Error> {
        match &self.init {
            InitConfig::Gaussian { mean, cov } => {
                InitialDistribution::gaussian(mean.clone(), cov.clone())
            }
            InitConfig::Uniform { lower, upper } => {
                InitialDistribution::uniform_box(lower.clone(), upper.clone())
            }
        }
    }

    /// The full effective configuration as JSON, for the report envelope.
    ///
    /// Excludes `workers` and `out`: they change where and how fast the
    /// run executes, never what it computes, and reports must be
    /// byte-identical across worker counts.
    pub fn echo(&self) -> Value {
        let center = match &self.objective.center {
            Some(c) => Value::from(c.clone()),
            None => Value::Null,
        };
        let shift = match self.objective.shift {
            Some(s) => Value::from(s),
            None => Value::Null,
        };
        let init = match &self.init {
            InitConfig::Gaussian { mean, cov } => serde_json::json!({
                "kind": "gaussian", "mean": mean, "cov": cov,
            }),
            InitConfig::Uniform { lower, upper } => serde_json::json!({
                "kind": "uniform", "lower": lower, "upper": upper,
            }),
        };
        serde_json::json!({
            "seed": self.seed,
            "objective": {
                "name": self.objective.name,
                "dimension": self.objective.dimension,
                "shift": shift,
                "center": center,
            },
            "params": {
                "lambda": self.params.lambda,
                "sigma": self.params.sigma,
                "alpha": self.params.alpha,
                "kappa": self.params.kappa,
                "delta": self.params.delta,
                "dt": self.params.dt,
                "steps": self.params.steps,
                "particles": self.params.n_particles,
            },
            "init": init,
            "optimize": { "seeds": self.optimize.seeds },
            "meanfield": {
                "particles_list": self.meanfield.particles_list,
                "seeds": self.meanfield.seeds,
                "m_ref": self.meanfield.m_ref,
                "stride": self.meanfield.stride,
            },
            "moments": {
                "p_list": self.moments.p_list,
                "seeds": self.moments.seeds,
                "stride": self.moments.stride,
            },
            "ratio": {
                "alpha": self.ratio.alpha,
                "batch_list": self.ratio.batch_list,
                "trials": self.ratio.trials,
                "oracle_size": self.ratio.oracle_size,
            },
            "validate": {
                "level": match self.validate.level {
                    ValidationLevel::Basic => "basic",
                    ValidationLevel::Theorem => "theorem",
                },
            },
        })
    }
}

/// Parses the sectioned text grammar into the same map shape JSON yields.
fn parse_sectioned_text(text: &str) -> Result<Map<String, Value>, Error> {
    let mut root: Map<String, Value> = Map::new();
    let mut section: Option<String> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| {
                Error::Config(format!("line {lineno}: unterminated section header"))
            })?;
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(Error::Config(format!(
                    "line {lineno}: unknown section [{name}]; sections: {}",
                    SECTIONS.join(", ")
                )));
            }
            root.entry(name.clone())
                .or_insert_with(|| Value::Object(Map::new()));
            section = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {lineno}: expected `key = value` or a [section] header"
            )));
        };
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config(format!("line {lineno}: empty key")));
        }
        let value = parse_value(value.trim(), lineno)?;
        let target = match &section {
            None => &mut root,
            Some(name) => root
                .get_mut(name)
                .and_then(Value::as_object_mut)
                .expect("section objects are created on header lines"),
        };
        if target.insert(key.clone(), value).is_some() {
            return Err(Error::Config(format!(
                "line {lineno}: duplicate key '{key}'"
            )));
        }
    }
    Ok(root)
}

fn parse_value(text: &str, lineno: usize) -> Result<Value, Error> {
    if text.contains(',') {
        let items = text
            .split(',')
            .map(|item| {
                let item = item.trim();
                if item.is_empty() {
                    return Err(Error::Config(format!("line {lineno}: empty list element")));
                }
                Ok(parse_scalar(item))
            })
            .collect::<Result<Vec<Value>, Error>>()?;
        return Ok(Value::Array(items));
    }
    if text.is_empty() {
        return Err(Error::Config(format!("line {lineno}: empty value")));
    }
    Ok(parse_scalar(text))
}

/// Numbers when they parse as numbers, bare words otherwise.
fn parse_scalar(text: &str) -> Value {
    if let Ok(u) = text.parse::<u64>() {
        return Value::from(u);
    }
    if let Ok(i) = text.parse::<i64>() {
        return Value::from(i);
    }
    if let Ok(f) = text.parse::<f64>() {
        if f.is_finite() {
            return Value::from(f);
        }
    }
    Value::String(text.to_string())
}

// ---------------------------------------------------------------------------
// Typed extraction
// ---------------------------------------------------------------------------

/// One section of the parsed map, with key validation and typed getters
/// that name the offending `[section] key` in every error.
struct SectionView<'a> {
    name: &'a str,
    map: Option<&'a Map<String, Value>>,
}

impl<'a> SectionView<'a> {
    fn new(root: &'a Map<String, Value>, name: &'a str, allowed: &[&str]) -> Result<Self, Error> {
        let map = match root.get(name) {
            None => None,
            Some(Value::Object(map)) => Some(map),
            Some(_) => {
                return Err(Error::Config(format!(
                    "[{name}] must be a section, not a value"
                )))
            }
        };
        if let Some(map) = map {
            for key in map.keys() {
                if !allowed.contains(&key.as_str()) {
                    return Err(Error::Config(format!(
                        "unknown key '{key}' in [{name}]; valid keys: {}",
                        allowed.join(", ")
                    )));
                }
            }
        }
        Ok(SectionView { name, map })
    }

    fn has(&self, key: &str) -> bool {
        self.map.is_some_and(|m| m.contains_key(key))
    }

    fn value(&self, key: &str) -> Option<&'a Value> {
        self.map.and_then(|m| m.get(key))
    }

    fn err(&self, key: &str, what: &str) -> Error {
        Error::Config(format!("[{}] {key}: {what}", self.name))
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, Error> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => Ok(Some(
                as_f64(v).ok_or_else(|| self.err(key, "expected a number"))?,
            )),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, Error> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn count(&self, key: &str) -> Result<Option<u64>, Error> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => {
                Ok(Some(as_count(v).ok_or_else(|| {
                    self.err(key, "expected a nonnegative integer")
                })?))
            }
        }
    }

    fn count_or(&self, key: &str, default: u64) -> Result<u64, Error> {
        Ok(self.count(key)?.unwrap_or(default))
    }

    fn string(&self, key: &str) -> Result<Option<String>, Error> {
        match self.value(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(self.err(key, "expected a word")),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, Error> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => {
                let items = as_list(v);
                let parsed = items
                    .iter()
                    .map(as_f64)
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| self.err(key, "expected a number or list of numbers"))?;
                Ok(Some(parsed))
            }
        }
    }

    fn count_list(&self, key: &str) -> Result<Option<Vec<u64>>, Error> {
        match self.value(key) {
            None => Ok(None),
            Some(v) => {
                let items = as_list(v);
                let parsed = items
                    .iter()
                    .map(as_count)
                    .collect::<Option<Vec<u64>>>()
                    .ok_or_else(|| self.err(key, "expected nonnegative integers"))?;
                Ok(Some(parsed))
            }
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_f64().filter(|f| f.is_finite())
}

/// Integral nonnegative values; integral floats like `1e4` are accepted.
fn as_count(v: &Value) -> Option<u64> {
    if let Some(u) = v.as_u64() {
        return Some(u);
    }
    let f = v.as_f64()?;
    if f >= 0.0 && f.fract() == 0.0 && f <= 2f64.powi(53) {
        Some(f as u64)
    } else {
        None
    }
}

fn as_list(v: &Value) -> Vec<Value> {
    match v {
        Value::Array(items) => items.clone(),
        other => vec![other.clone()],
    }
}

fn broadcast(section: &str, key: &str, values: Vec<f64>, d: usize) -> Result<Vec<f64>, Error> {
    if values.len() == d {
        Ok(values)
    } else if values.len() == 1 {
        Ok(vec![values[0]; d])
    } else {
        Err(Error::Config(format!(
            "[{section}] {key}: expected 1 or {d} values, got {}",
            values.len()
        )))
    }
}

fn usize_list(section: &SectionView, key: &str, default: &[usize]) -> Result<Vec<usize>, Error> {
    match section.count_list(key)? {
        None => Ok(default.to_vec()),
        Some(values) => Ok(values.into_iter().map(|v| v as usize).collect()),
    }
}

fn finalize(root: Map<String, Value>) -> Result<LabConfig, Error> {
    for key in root.keys() {
        if !TOP_KEYS.contains(&key.as_str()) && !SECTIONS.contains(&key.as_str()) {
            return Err(Error::Config(format!(
                "unknown top-level key '{key}'; keys: {}; sections: {}",
                TOP_KEYS.join(", "),
                SECTIONS.join(", ")
            )));
        }
    }
    let top = SectionView {
        name: "top level",
        map: Some(&root),
    };
    let seed = top.count_or("seed", DEFAULT_SEED)?;
    let workers = match top.count("workers")? {
        None => None,
        Some(0) => return Err(Error::Config("workers must be at least 1".to_string())),
        Some(w) => Some(w as usize),
    };
    let out = top.string("out")?.map(PathBuf::from);

    let objective_sec = SectionView::new(&root, "objective", OBJECTIVE_KEYS)?;
    let name = objective_sec
        .string("name")?
        .unwrap_or_else(|| "ackley".to_string());
    let dimension = objective_sec.count_or("dimension", 1)? as usize;
    if dimension == 0 {
        return Err(Error::Config(
            "[objective] dimension: must be at least 1".to_string(),
        ));
    }
    let shift = match name.as_str() {
        "ackley" => Some(objective_sec.f64_or("shift", 3.0)?),
        _ if objective_sec.has("shift") => {
            return Err(Error::Config(format!(
                "[objective] shift: only applies to ackley, not {name}"
            )))
        }
        _ => None,
    };
    let center = match name.as_str() {
        "quadratic" | "rastrigin" => Some(broadcast(
            "objective",
            "center",
            objective_sec
                .f64_list("center")?
                .unwrap_or_else(|| vec![0.0]),
            dimension,
        )?),
        _ if objective_sec.has("center") => {
            return Err(Error::Config(format!(
                "[objective] center: only applies to quadratic and rastrigin, not {name}"
            )))
        }
        _ => None,
    };
    let objective = ObjectiveConfig {
        name,
        dimension,
        shift,
        center,
    };
    // Resolves registry membership and per-objective constraints now, so a
    // bad name fails at parse time, not at run time.
    ObjectiveSpec::by_name(
        &objective.name,
        objective.dimension,
        objective.shift,
        objective.center.clone(),
    )?;

    let params_sec = SectionView::new(&root, "params", PARAMS_KEYS)?;
    let dt = params_sec.f64_or("dt", 0.01)?;
    let steps = match (params_sec.has("time"), params_sec.has("steps")) {
        (true, true) => {
            return Err(Error::Config(
                "[params] give either time or steps, not both".to_string(),
            ))
        }
        (false, true) => params_sec.count("steps")?.expect("key is present"),
        _ => {
            let time = params_sec.f64_or("time", 100.0)?;
            if !time.is_finite() || time < 0.0 || !dt.is_finite() || dt <= 0.0 {
                return Err(Error::Config(
                    "[params] time must be nonnegative and dt positive".to_string(),
                ));
            }
            (time / dt).round() as u64
        }
    };
    let params = CBOParams {
        lambda: params_sec.f64_or("lambda", 1.0)?,
        sigma: params_sec.f64_or("sigma", 2.0)?,
        alpha: params_sec.f64_or("alpha", 1e15)?,
        kappa: params_sec.f64_or("kappa", 0.01)?,
        delta: params_sec.f64_or("delta", 0.0)?,
        dt,
        steps,
        n_particles: params_sec.count_or("particles", 10_000)? as usize,
        dim: dimension,
    };
    params.validate()?;

    let init_sec = SectionView::new(&root, "init", INIT_KEYS)?;
    let kind = init_sec
        .string("kind")?
        .unwrap_or_else(|| "gaussian".to_string());
    let init = match kind.as_str() {
        "gaussian" => {
            for key in ["lower", "upper"] {
                if init_sec.has(key) {
                    return Err(Error::Config(format!(
                        "[init] {key}: only applies to kind = uniform"
                    )));
                }
            }
            InitConfig::Gaussian {
                mean: broadcast(
                    "init",
                    "mean",
                    init_sec.f64_list("mean")?.unwrap_or_else(|| vec![2.0]),
                    dimension,
                )?,
                cov: broadcast(
                    "init",
                    "cov",
                    init_sec.f64_list("cov")?.unwrap_or_else(|| vec![1.0]),
                    dimension,
                )?,
            }
        }
        "uniform" => {
            for key in ["mean", "cov"] {
                if init_sec.has(key) {
                    return Err(Error::Config(format!(
                        "[init] {key}: only applies to kind = gaussian"
                    )));
                }
            }
            let missing: Vec<&str> = ["lower", "upper"]
                .into_iter()
                .filter(|k| !init_sec.has(k))
                .collect();
            if !missing.is_empty() {
                return Err(Error::Config(format!(
                    "[init] kind = uniform requires: {}",
                    missing.join(", ")
                )));
            }
            InitConfig::Uniform {
                lower: broadcast(
                    "init",
                    "lower",
                    init_sec.f64_list("lower")?.expect("checked present"),
                    dimension,
                )?,
                upper: broadcast(
                    "init",
                    "upper",
                    init_sec.f64_list("upper")?.expect("checked present"),
                    dimension,
                )?,
            }
        }
        other => {
            return Err(Error::Config(format!(
                "[init] kind: unknown kind '{other}'; kinds: gaussian, uniform"
            )))
        }
    };
    // Range checks (cov >= 0, lower <= upper) happen now, at parse time.
    match &init {
        InitConfig::Gaussian { mean, cov } => {
            InitialDistribution::gaussian(mean.clone(), cov.clone()).map(|_| ())
        }
        InitConfig::Uniform { lower, upper } => {
            InitialDistribution::uniform_box(lower.clone(), upper.clone()).map(|_| ())
        }
    }
    .map_err(|e| Error::Config(format!("[init] {e}")))?;

    let optimize_sec = SectionView::new(&root, "optimize", OPTIMIZE_KEYS)?;
    let optimize = OptimizeConfig {
        seeds: require_positive(optimize_sec.count_or("seeds", 5)?, "optimize", "seeds")?,
    };

    let meanfield_sec = SectionView::new(&root, "meanfield", MEANFIELD_KEYS)?;
    let meanfield = MeanFieldConfig {
        particles_list: usize_list(&meanfield_sec, "particles_list", &[100, 200, 400, 800])?,
        seeds: require_positive(
            meanfield_sec.count_or("seeds", DEFAULT_SEEDS as u64)?,
            "meanfield",
            "seeds",
        )?,
        m_ref: require_positive(
            meanfield_sec.count_or("m_ref", 80_000)?,
            "meanfield",
            "m_ref",
        )?,
        stride: meanfield_sec
            .count_or("stride", DEFAULT_RECORD_STRIDE)?
            .max(1),
    };

    let moments_sec = SectionView::new(&root, "moments", MOMENTS_KEYS)?;
    let moments = MomentsConfig {
        p_list: moments_sec
            .count_list("p_list")?
            .unwrap_or_else(|| vec![2, 4])
            .into_iter()
            .map(|p| p as u32)
            .collect(),
        seeds: require_positive(
            moments_sec.count_or("seeds", DEFAULT_SEEDS as u64)?,
            "moments",
            "seeds",
        )?,
        stride: moments_sec
            .count_or("stride", DEFAULT_RECORD_STRIDE)?
            .max(1),
    };

    let ratio_sec = SectionView::new(&root, "ratio", RATIO_KEYS)?;
    let ratio = RatioConfig {
        alpha: ratio_sec.f64_or("alpha", 5.0)?,
        batch_list: usize_list(&ratio_sec, "batch_list", &[100, 1_000, 10_000])?,
        trials: require_positive(ratio_sec.count_or("trials", 200)?, "ratio", "trials")?,
        oracle_size: require_positive(
            ratio_sec.count_or("oracle_size", 10_000_000)?,
            "ratio",
            "oracle_size",
        )?,
    };

    let validate_sec = SectionView::new(&root, "validate", VALIDATE_KEYS)?;
    let level = match validate_sec.string("level")?.as_deref() {
        None | Some("theorem") => ValidationLevel::Theorem,
        Some("basic") => ValidationLevel::Basic,
        Some(other) => {
            return Err(Error::Config(format!(
                "[validate] level: unknown level '{other}'; levels: basic, theorem"
            )))
        }
    };

    Ok(LabConfig {
        seed,
        workers,
        out,
        objective,
        params,
        init,
        optimize,
        meanfield,
        moments,
        ratio,
        validate: ValidateConfig { level },
    })
}

fn require_positive(value: u64, section: &str, key: &str) -> Result<usize, Error> {
    if value == 0 {
        return Err(Error::Config(format!(
            "[{section}] {key}: must be at least 1"
        )));
    }
    Ok(value as usize)
}
