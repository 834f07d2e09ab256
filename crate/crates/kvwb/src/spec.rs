//! Spec cards: the environment/workload/requirement triple that fully
//! describes one evaluation run.
//!
//! The external format is JSON with two conveniences so that hand-written
//! card files stay readable: `//` line comments and unquoted field names are
//! accepted, and a document may consist of up to three top-level objects
//! (one per card, in any order) or a single object with `requirement` /
//! `environment` / `workload` sections. `memory_budget_gb` is accepted and
//! converted to bytes (x 2^30).

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// The one read contract this workbench implements. Any other value in a
/// card's `read_semantics` field is rejected rather than silently ignored.
pub const READ_SEMANTICS: &str = "last Upsert; empty after Delete";

/// Accepted string form of the `monotonicity` field.
pub const MONOTONICITY_CONTRACT: &str = "per-thread: r2 never without r1";

/// Accepted string form of the `concurrency` field.
pub const CONCURRENCY_CONTRACT: &str = "multi-threaded safe; no torn reads";

/// Default operational headroom applied when a card omits the field.
pub const DEFAULT_HEADROOM: f64 = 0.15;

/// Floor applied to the memory budget by [`SpecCard::desk_scale`].
pub const MIN_BUDGET_BYTES: u64 = 64 << 20;

const GIB: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("invalid spec at `{field}`: {detail}")]
    Validation { field: String, detail: String },
    #[error("unsupported read_semantics `{got}` (this workbench implements exactly `{}`)", READ_SEMANTICS)]
    UnsupportedSemantics { got: String },
}

fn invalid(field: &str, detail: impl Into<String>) -> SpecError {
    SpecError::Validation { field: field.to_string(), detail: detail.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OpKind {
    Read,
    Upsert,
    Rmw,
    Delete,
}

impl OpKind {
    pub const ALL: [OpKind; 4] = [OpKind::Read, OpKind::Upsert, OpKind::Rmw, OpKind::Delete];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Read => "Read",
            OpKind::Upsert => "Upsert",
            OpKind::Rmw => "RMW",
            OpKind::Delete => "Delete",
        }
    }

    fn from_name(s: &str) -> Option<OpKind> {
        match s {
            "Read" => Some(OpKind::Read),
            "Upsert" => Some(OpKind::Upsert),
            "RMW" | "Rmw" => Some(OpKind::Rmw),
            "Delete" => Some(OpKind::Delete),
            _ => None,
        }
    }
}

/// Operation mix as fractions over the four point operations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpMix {
    pub read: f64,
    pub upsert: f64,
    pub rmw: f64,
    pub delete: f64,
}

impl OpMix {
    pub fn fraction(&self, op: OpKind) -> f64 {
        match op {
            OpKind::Read => self.read,
            OpKind::Upsert => self.upsert,
            OpKind::Rmw => self.rmw,
            OpKind::Delete => self.delete,
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        for op in OpKind::ALL {
            let f = self.fraction(op);
            if !(0.0..=1.0).contains(&f) || f.is_nan() {
                return Err(invalid(&format!("mix.{}", op.as_str()), format!("fraction {f} out of [0,1]")));
            }
        }
        let sum = self.read + self.upsert + self.rmw + self.delete;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("mix", format!("fractions sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSizeSpec {
    /// Every value is exactly this many bytes.
    Fixed(u32),
    /// `frac_a` of values are `size_a` bytes, the rest `size_b`.
    Bimodal { size_a: u32, size_b: u32, frac_a: f64 },
    /// Short-value tail: `frac_zero` empty values, `frac_small` values of
    /// 1..=7 bytes, the remainder spread over 8..=200 bytes.
    InlineTail { frac_zero: f64, frac_small: f64 },
}

impl ValueSizeSpec {
    /// Largest payload this spec can produce; drivers size buffers from it.
    pub fn max_len(&self) -> u32 {
        match *self {
            ValueSizeSpec::Fixed(n) => n,
            ValueSizeSpec::Bimodal { size_a, size_b, .. } => size_a.max(size_b),
            ValueSizeSpec::InlineTail { .. } => 200,
        }
    }

    fn validate(&self) -> Result<(), SpecError> {
        match *self {
            ValueSizeSpec::Fixed(n) => {
                if n as usize > crate::fabric::MAX_PAYLOAD_LEN {
                    return Err(invalid("value_size_bytes", format!("{n} exceeds 65535")));
                }
            }
            ValueSizeSpec::Bimodal { size_a, size_b, frac_a } => {
                if size_a.max(size_b) as usize > crate::fabric::MAX_PAYLOAD_LEN {
                    return Err(invalid("value_size_spec.bimodal", "size exceeds 65535"));
                }
                if !(0.0..=1.0).contains(&frac_a) {
                    return Err(invalid("value_size_spec.bimodal.frac_a", "fraction out of [0,1]"));
                }
            }
            ValueSizeSpec::InlineTail { frac_zero, frac_small } => {
                if !(0.0..=1.0).contains(&frac_zero)
                    || !(0.0..=1.0).contains(&frac_small)
                    || frac_zero + frac_small > 1.0
                {
                    return Err(invalid("value_size_spec.inline_tail", "fractions out of range"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KeyDistribution {
    Zipfian { theta: f64 },
    Uniform,
    Trace { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    MaximizeThroughput,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentCard {
    pub cpu_threads: u32,
    pub memory_budget_bytes: u64,
    pub operational_headroom: f64,
    pub storage_path: PathBuf,
    /// 0 means unspecified.
    pub storage_capacity_bytes: u64,
}

impl EnvironmentCard {
    /// The bound actually enforced by the bench module.
    pub fn effective_budget(&self) -> u64 {
        (self.memory_budget_bytes as f64 * (1.0 - self.operational_headroom)) as u64
    }

    fn validate(&self) -> Result<(), SpecError> {
        if self.memory_budget_bytes == 0 {
            return Err(invalid("memory_budget_bytes", "must be > 0"));
        }
        if !(0.0..=0.5).contains(&self.operational_headroom) {
            return Err(invalid("operational_headroom", "must lie in [0, 0.5]"));
        }
        if self.cpu_threads == 0 || self.cpu_threads > 64 {
            return Err(invalid("cpu_threads", "must lie in [1, 64]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadCard {
    pub value_size_spec: ValueSizeSpec,
    pub num_keys: u64,
    pub distribution: KeyDistribution,
    pub mix: OpMix,
    pub duration_sec: u64,
    /// Ops per write burst in time-series mode; 0 disables bursts.
    pub burst_len: u32,
}

impl WorkloadCard {
    fn validate(&self) -> Result<(), SpecError> {
        if self.num_keys == 0 {
            return Err(invalid("num_keys", "must be > 0"));
        }
        if self.duration_sec == 0 {
            return Err(invalid("duration_sec", "must be > 0"));
        }
        self.value_size_spec.validate()?;
        self.mix.validate()?;
        if let KeyDistribution::Zipfian { theta } = self.distribution {
            if !(theta >= 0.0) {
                return Err(invalid("distribution", format!("zipfian theta {theta} must be >= 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RequirementCard {
    pub api: Vec<OpKind>,
    pub read_semantics: String,
    pub monotonicity: bool,
    pub torn_reads_forbidden: bool,
    pub objective: Objective,
}

impl Default for RequirementCard {
    fn default() -> Self {
        RequirementCard {
            api: OpKind::ALL.to_vec(),
            read_semantics: READ_SEMANTICS.to_string(),
            monotonicity: true,
            torn_reads_forbidden: true,
            objective: Objective::MaximizeThroughput,
        }
    }
}

impl RequirementCard {
    fn validate(&self) -> Result<(), SpecError> {
        if self.read_semantics != READ_SEMANTICS {
            return Err(SpecError::UnsupportedSemantics { got: self.read_semantics.clone() });
        }
        if self.api.is_empty() {
            return Err(invalid("api", "must name at least one operation"));
        }
        Ok(())
    }
}

/// A fully parsed and validated evaluation spec. Immutable after
/// construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpecCard {
    pub environment: EnvironmentCard,
    pub workload: WorkloadCard,
    pub requirement: RequirementCard,
}

impl SpecCard {
    pub fn validate(&self) -> Result<(), SpecError> {
        self.environment.validate()?;
        self.workload.validate()?;
        self.requirement.validate()?;
        // The mix may only exercise operations the requirement card names.
        for op in OpKind::ALL {
            if self.workload.mix.fraction(op) > 0.0 && !self.requirement.api.contains(&op) {
                return Err(invalid("mix", format!("{} not in requirement api", op.as_str())));
            }
        }
        Ok(())
    }

    /// Scale a card down (or leave it unchanged at `factor == 1.0`) for
    /// desk-sized runs: `num_keys`, `duration_sec`, and the memory budget
    /// shrink together; distribution, mix, and value sizes are untouched.
    pub fn desk_scale(&self, factor: f64) -> Result<SpecCard, SpecError> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(invalid("desk_scale.factor", format!("{factor} not in (0, 1]")));
        }
        let mut card = self.clone();
        card.workload.num_keys = (((self.workload.num_keys as f64) * factor).round() as u64).max(1);
        card.workload.duration_sec =
            (((self.workload.duration_sec as f64) * factor).round() as u64).max(1);
        card.environment.memory_budget_bytes =
            (((self.environment.memory_budget_bytes as f64) * factor).round() as u64)
                .max(MIN_BUDGET_BYTES);
        card.validate()?;
        Ok(card)
    }

    /// Normalized external form; [`parse_spec`] accepts its output.
    pub fn to_json_string(&self) -> String {
        let doc = serde_json::json!({
            "requirement": {
                "api": self.requirement.api.iter().map(|o| o.as_str()).collect::<Vec<_>>(),
                "read_semantics": self.requirement.read_semantics,
                "monotonicity": self.requirement.monotonicity,
                "torn_reads_forbidden": self.requirement.torn_reads_forbidden,
                "objective": "maximize-throughput",
            },
            "environment": {
                "cpu_threads": self.environment.cpu_threads,
                "memory_budget_bytes": self.environment.memory_budget_bytes,
                "operational_headroom": self.environment.operational_headroom,
                "storage_path": self.environment.storage_path,
                "storage_capacity_bytes": self.environment.storage_capacity_bytes,
            },
            "workload": {
                "key_type": "uint64_t",
                "value_size_spec": self.workload.value_size_spec,
                "num_keys": self.workload.num_keys,
                "distribution": distribution_string(&self.workload.distribution),
                "mix": mix_map(&self.workload.mix),
                "duration_sec": self.workload.duration_sec,
                "burst_len": self.workload.burst_len,
            },
        });
        serde_json::to_string_pretty(&doc).expect("spec card serializes")
    }
}

fn distribution_string(d: &KeyDistribution) -> String {
    match d {
        KeyDistribution::Zipfian { theta } => format!("zipfian(theta={theta})"),
        KeyDistribution::Uniform => "uniform".to_string(),
        KeyDistribution::Trace { path } => format!("trace({})", path.display()),
    }
}

fn mix_map(mix: &OpMix) -> BTreeMap<&'static str, f64> {
    let mut m = BTreeMap::new();
    for op in OpKind::ALL {
        let f = mix.fraction(op);
        if f > 0.0 {
            m.insert(op.as_str(), f);
        }
    }
    m
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parse a spec document, apply defaults, and validate every invariant.
pub fn parse_spec(text: &str) -> Result<SpecCard, SpecError> {
    let normalized = normalize_document(text)?;
    let mut values = Vec::new();
    for v in serde_json::Deserializer::from_str(&normalized).into_iter::<Value>() {
        values.push(v.map_err(|e| SpecError::Syntax(e.to_string()))?);
    }
    if values.is_empty() {
        return Err(SpecError::Syntax("document contains no JSON object".into()));
    }

    let mut requirement: Option<&Value> = None;
    let mut environment: Option<&Value> = None;
    let mut workload: Option<&Value> = None;

    // Single wrapped object with named sections, or a sequence of bare card
    // objects classified by their field names.
    let wrapped = values.len() == 1
        && values[0].as_object().is_some_and(|o| {
            o.keys().all(|k| matches!(k.as_str(), "requirement" | "environment" | "workload"))
        });
    if wrapped {
        let obj = values[0].as_object().unwrap();
        requirement = obj.get("requirement");
        environment = obj.get("environment");
        workload = obj.get("workload");
    } else {
        for v in &values {
            let obj = v
                .as_object()
                .ok_or_else(|| SpecError::Syntax("top-level value is not an object".into()))?;
            match classify_card(obj)? {
                CardKind::Requirement => assign_once(&mut requirement, v, "requirement")?,
                CardKind::Environment => assign_once(&mut environment, v, "environment")?,
                CardKind::Workload => assign_once(&mut workload, v, "workload")?,
            }
        }
    }

    let workload =
        workload.ok_or_else(|| invalid("workload", "workload card missing from document"))?;
    let environment =
        environment.ok_or_else(|| invalid("environment", "environment card missing"))?;

    let card = SpecCard {
        environment: parse_environment(environment)?,
        workload: parse_workload(workload)?,
        requirement: match requirement {
            Some(v) => parse_requirement(v)?,
            None => RequirementCard::default(),
        },
    };
    card.validate()?;
    Ok(card)
}

enum CardKind {
    Requirement,
    Environment,
    Workload,
}

fn classify_card(obj: &serde_json::Map<String, Value>) -> Result<CardKind, SpecError> {
    const REQ: &[&str] =
        &["api", "read_semantics", "monotonicity", "concurrency", "torn_reads_forbidden", "objective"];
    const ENV: &[&str] = &[
        "cpu",
        "cpu_threads",
        "memory",
        "storage",
        "memory_budget_gb",
        "memory_budget_bytes",
        "operational_headroom",
        "storage_path",
        "storage_capacity_bytes",
        "storage_capacity_gb",
    ];
    const WKL: &[&str] = &[
        "key_type",
        "value_size_bytes",
        "value_size_spec",
        "num_keys",
        "distribution",
        "mix",
        "duration_sec",
        "burst_len",
    ];
    let (mut req, mut env, mut wkl) = (0usize, 0usize, 0usize);
    for key in obj.keys() {
        let k = key.as_str();
        if REQ.contains(&k) {
            req += 1;
        } else if ENV.contains(&k) {
            env += 1;
        } else if WKL.contains(&k) {
            wkl += 1;
        } else {
            return Err(invalid(k, "unknown field"));
        }
    }
    match (req > 0, env > 0, wkl > 0) {
        (true, false, false) => Ok(CardKind::Requirement),
        (false, true, false) => Ok(CardKind::Environment),
        (false, false, true) => Ok(CardKind::Workload),
        _ => Err(SpecError::Syntax("object mixes fields from different cards".into())),
    }
}

fn assign_once<'v>(slot: &mut Option<&'v Value>, v: &'v Value, what: &str) -> Result<(), SpecError> {
    if slot.is_some() {
        return Err(SpecError::Syntax(format!("duplicate {what} card")));
    }
    *slot = Some(v);
    Ok(())
}

fn parse_requirement(v: &Value) -> Result<RequirementCard, SpecError> {
    let obj = v.as_object().ok_or_else(|| invalid("requirement", "not an object"))?;
    let mut card = RequirementCard::default();
    if let Some(api) = obj.get("api") {
        let arr = api.as_array().ok_or_else(|| invalid("api", "expected an array"))?;
        let mut ops = Vec::new();
        for entry in arr {
            let name = entry.as_str().ok_or_else(|| invalid("api", "expected strings"))?;
            let op = OpKind::from_name(name)
                .ok_or_else(|| invalid("api", format!("unknown operation `{name}`")))?;
            if !ops.contains(&op) {
                ops.push(op);
            }
        }
        card.api = ops;
    }
    if let Some(sem) = obj.get("read_semantics") {
        card.read_semantics =
            sem.as_str().ok_or_else(|| invalid("read_semantics", "expected a string"))?.to_string();
    }
    if let Some(m) = obj.get("monotonicity") {
        card.monotonicity = match m {
            Value::Bool(b) => *b,
            Value::String(s) if s == MONOTONICITY_CONTRACT => true,
            Value::String(s) => {
                return Err(invalid("monotonicity", format!("unrecognized contract `{s}`")))
            }
            _ => return Err(invalid("monotonicity", "expected bool or contract string")),
        };
    }
    if let Some(c) = obj.get("concurrency") {
        match c {
            Value::String(s) if s == CONCURRENCY_CONTRACT => card.torn_reads_forbidden = true,
            Value::String(s) => {
                return Err(invalid("concurrency", format!("unrecognized contract `{s}`")))
            }
            _ => return Err(invalid("concurrency", "expected contract string")),
        }
    }
    if let Some(t) = obj.get("torn_reads_forbidden") {
        card.torn_reads_forbidden =
            t.as_bool().ok_or_else(|| invalid("torn_reads_forbidden", "expected bool"))?;
    }
    if let Some(o) = obj.get("objective") {
        let s = o.as_str().ok_or_else(|| invalid("objective", "expected a string"))?;
        card.objective = match s {
            "maximize-throughput" | "maximize throughput (Mops/s)" => Objective::MaximizeThroughput,
            other => return Err(invalid("objective", format!("unknown objective `{other}`"))),
        };
    }
    Ok(card)
}

fn parse_environment(v: &Value) -> Result<EnvironmentCard, SpecError> {
    let obj = v.as_object().ok_or_else(|| invalid("environment", "not an object"))?;
    let memory_budget_bytes = match (obj.get("memory_budget_bytes"), obj.get("memory_budget_gb")) {
        (Some(b), _) => get_u64(b, "memory_budget_bytes")?,
        (None, Some(g)) => {
            let gb = g
                .as_f64()
                .filter(|g| *g >= 0.0)
                .ok_or_else(|| invalid("memory_budget_gb", "expected a non-negative number"))?;
            (gb * GIB as f64).round() as u64
        }
        (None, None) => return Err(invalid("memory_budget_gb", "missing memory budget")),
    };
    let cpu_threads = match obj.get("cpu_threads") {
        Some(v) => get_u64(v, "cpu_threads")? as u32,
        None => default_cpu_threads(),
    };
    let operational_headroom = match obj.get("operational_headroom") {
        Some(v) => v.as_f64().ok_or_else(|| invalid("operational_headroom", "expected a number"))?,
        None => DEFAULT_HEADROOM,
    };
    let storage_path = match obj.get("storage_path") {
        Some(v) => PathBuf::from(
            v.as_str().ok_or_else(|| invalid("storage_path", "expected a string"))?,
        ),
        None => PathBuf::from("kvwb-data"),
    };
    let storage_capacity_bytes = match (obj.get("storage_capacity_bytes"), obj.get("storage_capacity_gb")) {
        (Some(b), _) => get_u64(b, "storage_capacity_bytes")?,
        (None, Some(g)) => {
            let gb = g.as_f64().ok_or_else(|| invalid("storage_capacity_gb", "expected a number"))?;
            (gb * GIB as f64).round() as u64
        }
        (None, None) => 0,
    };
    Ok(EnvironmentCard {
        cpu_threads,
        memory_budget_bytes,
        operational_headroom,
        storage_path,
        storage_capacity_bytes,
    })
}

/// min(16, host parallelism): sixteen driver threads on one socket is the
/// reference configuration; smaller hosts just use what they have.
pub fn default_cpu_threads() -> u32 {
    let avail = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1) as u32;
    avail.min(16)
}

fn parse_workload(v: &Value) -> Result<WorkloadCard, SpecError> {
    let obj = v.as_object().ok_or_else(|| invalid("workload", "not an object"))?;
    if let Some(kt) = obj.get("key_type") {
        let s = kt.as_str().ok_or_else(|| invalid("key_type", "expected a string"))?;
        if !matches!(s, "uint64_t" | "u64" | "uint64") {
            return Err(invalid("key_type", format!("unsupported key type `{s}`")));
        }
    }
    let value_size_spec = match (obj.get("value_size_bytes"), obj.get("value_size_spec")) {
        (Some(n), None) => ValueSizeSpec::Fixed(get_u64(n, "value_size_bytes")? as u32),
        (None, Some(spec)) => serde_json::from_value(spec.clone())
            .map_err(|e| invalid("value_size_spec", e.to_string()))?,
        (Some(_), Some(_)) => {
            return Err(invalid("value_size_bytes", "conflicts with value_size_spec"))
        }
        (None, None) => return Err(invalid("value_size_bytes", "missing value size")),
    };
    let num_keys = get_u64(
        obj.get("num_keys").ok_or_else(|| invalid("num_keys", "missing"))?,
        "num_keys",
    )?;
    let distribution = parse_distribution(
        obj.get("distribution").ok_or_else(|| invalid("distribution", "missing"))?,
    )?;
    let mix = parse_mix(obj.get("mix").ok_or_else(|| invalid("mix", "missing"))?)?;
    let duration_sec = get_u64(
        obj.get("duration_sec").ok_or_else(|| invalid("duration_sec", "missing"))?,
        "duration_sec",
    )?;
    let burst_len = match obj.get("burst_len") {
        Some(v) => get_u64(v, "burst_len")? as u32,
        None => 0,
    };
    Ok(WorkloadCard { value_size_spec, num_keys, distribution, mix, duration_sec, burst_len })
}

fn parse_distribution(v: &Value) -> Result<KeyDistribution, SpecError> {
    let s = v.as_str().ok_or_else(|| invalid("distribution", "expected a string"))?;
    if s == "uniform" {
        return Ok(KeyDistribution::Uniform);
    }
    if let Some(inner) = s.strip_prefix("zipfian(").and_then(|r| r.strip_suffix(')')) {
        let theta_str = inner.strip_prefix("theta=").unwrap_or(inner);
        let theta: f64 = theta_str
            .trim()
            .parse()
            .map_err(|_| invalid("distribution", format!("bad theta in `{s}`")))?;
        return Ok(KeyDistribution::Zipfian { theta });
    }
    if let Some(path) = s.strip_prefix("trace(").and_then(|r| r.strip_suffix(')')) {
        return Ok(KeyDistribution::Trace { path: PathBuf::from(path) });
    }
    Err(invalid("distribution", format!("unrecognized distribution `{s}`")))
}

fn parse_mix(v: &Value) -> Result<OpMix, SpecError> {
    let obj = v.as_object().ok_or_else(|| invalid("mix", "expected an object"))?;
    let mut mix = OpMix { read: 0.0, upsert: 0.0, rmw: 0.0, delete: 0.0 };
    for (key, frac) in obj {
        let op = OpKind::from_name(key)
            .ok_or_else(|| invalid(&format!("mix.{key}"), "unknown operation"))?;
        let f = frac
            .as_f64()
            .ok_or_else(|| invalid(&format!("mix.{key}"), "expected a number"))?;
        match op {
            OpKind::Read => mix.read = f,
            OpKind::Upsert => mix.upsert = f,
            OpKind::Rmw => mix.rmw = f,
            OpKind::Delete => mix.delete = f,
        }
    }
    Ok(mix)
}

fn get_u64(v: &Value, field: &str) -> Result<u64, SpecError> {
    v.as_u64().ok_or_else(|| invalid(field, "expected an unsigned integer"))
}

/// Strip `//` comments and quote bare identifier keys so that printed card
/// documents parse as standard JSON.
fn normalize_document(text: &str) -> Result<String, SpecError> {
    let bytes = text.as_bytes();
    let mut out = String::with_capacity(text.len());
    let mut i = 0;
    let mut in_string = false;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if in_string {
            out.push(c);
            if c == '\\' && i + 1 < bytes.len() {
                out.push(bytes[i + 1] as char);
                i += 2;
                continue;
            }
            if c == '"' {
                in_string = false;
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_string = true;
                out.push(c);
                i += 1;
            }
            '/' if i + 1 < bytes.len() && bytes[i + 1] == b'/' => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                // A bare identifier directly followed by ':' is a key.
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b':' {
                    out.push('"');
                    out.push_str(word);
                    out.push('"');
                } else {
                    out.push_str(word);
                }
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    if in_string {
        return Err(SpecError::Syntax("unterminated string literal".into()));
    }
    Ok(out)
}
