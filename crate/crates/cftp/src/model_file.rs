//! Model description files (TOML or JSON).
//!
//! ```toml
//! dim = 1
//! states = ["+", "-"]
//! theta = "voter"
//!
//! [[rules]]
//! offsets = [1]
//! default = "$0"          # copy input 0
//! rate = 0.5
//!
//! [[rules]]
//! offsets = [-1, 1]
//! table = ["+ - -> +", "- + -> +"]
//! default = "-"
//! rate = 0.05
//! kind = "perturbative"
//! ```
//!
//! Table entries read `inputs -> output`; inputs are state labels in offset
//! order or `*`. The first matching entry wins, unmatched inputs take
//! `default`. An output `$k` copies input `k`. In one dimension offsets may
//! be plain integers; otherwise each offset is a coordinate list.

use std::fmt;
use std::path::Path;

use cftp_core::model::{Model, Rule, RuleKind, State, StateSpace};
use cftp_core::site::MAX_DIM;
use cftp_core::{Site, ThetaMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ModelFileError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{format} syntax: {message}")]
    Syntax { format: Format, message: String },
    #[error("{field}: {message}")]
    Field { field: String, message: String },
}

impl ModelFileError {
    fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        ModelFileError::Field { field: field.into(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Toml,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Toml,
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Toml => "TOML",
            Format::Json => "JSON",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub dim: usize,
    pub states: Vec<String>,
    pub theta: String,
    /// Merge rules with identical `(offsets, table, kind)` after loading.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub merge_identical: bool,
    pub rules: Vec<RuleDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub offsets: Vec<OffsetDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub table: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    pub rate: f64,
    #[serde(default)]
    pub kind: KindDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffsetDoc {
    Scalar(i32),
    Vector(Vec<i32>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindDoc {
    #[default]
    Unperturbed,
    Perturbative,
}

/// A validated model with its frontier map and the hash of its source.
#[derive(Clone, Debug)]
pub struct LoadedModel {
    pub model: Model,
    pub theta: ThetaMap,
    /// Lowercase hex SHA-256 of the source bytes.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: &Path) -> Result<LoadedModel, ModelFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ModelFileError::Io { path: path.display().to_string(), source })?;
    parse(&text, Format::from_path(path))
}

pub fn parse(text: &str, format: Format) -> Result<LoadedModel, ModelFileError> {
    let doc: ModelDoc = match format {
        Format::Toml => toml::from_str(text).map_err(|e| ModelFileError::Syntax { format, message: e.to_string() })?,
        Format::Json => {
            serde_json::from_str(text).map_err(|e| ModelFileError::Syntax { format, message: e.to_string() })?
        }
    };
    let (model, theta) = build(&doc)?;
    Ok(LoadedModel { model, theta, sha256: sha256_hex(text.as_bytes()) })
}

/// Output of a table entry or default.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Output {
    State(State),
    Copy(usize),
}

fn parse_output(token: &str, states: &StateSpace, arity: usize, field: &str) -> Result<Output, ModelFileError> {
    if let Some(k) = token.strip_prefix('$') {
        let k: usize = k.parse().map_err(|_| ModelFileError::field(field, format!("bad copy output {token:?}")))?;
        if k >= arity {
            return Err(ModelFileError::field(field, format!("{token} refers past the {arity} inputs")));
        }
        return Ok(Output::Copy(k));
    }
    states
        .find(token)
        .map(Output::State)
        .ok_or_else(|| ModelFileError::field(field, format!("unknown state {token:?}")))
}

struct Entry {
    inputs: Vec<Option<State>>,
    output: Output,
}

fn parse_entry(text: &str, states: &StateSpace, arity: usize, field: &str) -> Result<Entry, ModelFileError> {
    let (lhs, rhs) =
        text.split_once("->").ok_or_else(|| ModelFileError::field(field, format!("missing `->` in {text:?}")))?;
    let inputs = lhs
        .split_whitespace()
        .map(|tok| match tok {
            "*" => Ok(None),
            _ => states
                .find(tok)
                .map(Some)
                .ok_or_else(|| ModelFileError::field(field, format!("unknown state {tok:?}"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if inputs.len() != arity {
        return Err(ModelFileError::field(
            field,
            format!("{text:?} has {} inputs, the rule has {arity} offsets", inputs.len()),
        ));
    }
    let out = rhs.trim();
    if out.split_whitespace().count() != 1 {
        return Err(ModelFileError::field(field, format!("{text:?} needs exactly one output")));
    }
    Ok(Entry { inputs, output: parse_output(out, states, arity, field)? })
}

fn digits(mut idx: usize, n: usize, arity: usize) -> Vec<State> {
    let mut w = vec![State(0); arity];
    for slot in w.iter_mut().rev() {
        *slot = State((idx % n) as u8);
        idx /= n;
    }
    w
}

fn build_rule(i: usize, doc: &RuleDoc, dim: usize, states: &StateSpace) -> Result<Rule, ModelFileError> {
    let at = |f: &str| format!("rules[{i}].{f}");
    let offsets = doc
        .offsets
        .iter()
        .enumerate()
        .map(|(k, o)| {
            let coords: Vec<i32> = match o {
                OffsetDoc::Scalar(x) if dim == 1 => vec![*x],
                OffsetDoc::Scalar(_) => {
                    return Err(ModelFileError::field(at(&format!("offsets[{k}]")), "use a coordinate list when dim > 1"))
                }
                OffsetDoc::Vector(v) => v.clone(),
            };
            if coords.len() != dim {
                return Err(ModelFileError::field(
                    at(&format!("offsets[{k}]")),
                    format!("has {} coordinates, dim is {dim}", coords.len()),
                ));
            }
            Ok(Site::new(&coords))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n = states.len();
    let arity = offsets.len();
    let entries = doc
        .table
        .iter()
        .enumerate()
        .map(|(k, e)| parse_entry(e, states, arity, &at(&format!("table[{k}]"))))
        .collect::<Result<Vec<_>, _>>()?;
    let default = doc.default.as_deref().map(|d| parse_output(d.trim(), states, arity, &at("default"))).transpose()?;

    let size = u32::try_from(arity)
        .ok()
        .and_then(|a| n.checked_pow(a))
        .filter(|&s| s <= 1 << 24)
        .ok_or_else(|| ModelFileError::field(at("offsets"), "neighborhood too large"))?;
    let mut table = Vec::with_capacity(size);
    for idx in 0..size {
        let w = digits(idx, n, arity);
        let hit = entries
            .iter()
            .find(|e| e.inputs.iter().zip(&w).all(|(p, s)| p.is_none_or(|p| p == *s)))
            .map(|e| e.output)
            .or(default)
            .ok_or_else(|| {
                let labels: Vec<&str> = w.iter().map(|&s| states.label(s)).collect();
                ModelFileError::field(at("table"), format!("no entry matches `{}` and no default", labels.join(" ")))
            })?;
        table.push(match hit {
            Output::State(s) => s,
            Output::Copy(k) => w[k],
        });
    }
    let kind = match doc.kind {
        KindDoc::Unperturbed => RuleKind::Unperturbed,
        KindDoc::Perturbative => RuleKind::Perturbative,
    };
    Rule::new(offsets, table, doc.rate, kind, n).map_err(|e| prefix(e, &format!("rules[{i}]")))
}

fn prefix(e: cftp_core::Error, at: &str) -> ModelFileError {
    match e {
        cftp_core::Error::Validation { field, message } => ModelFileError::field(format!("{at}.{field}"), message),
        other => ModelFileError::field(at, other.to_string()),
    }
}

pub fn build(doc: &ModelDoc) -> Result<(Model, ThetaMap), ModelFileError> {
    if doc.dim == 0 || doc.dim > MAX_DIM {
        return Err(ModelFileError::field("dim", format!("must be in 1..={MAX_DIM}, got {}", doc.dim)));
    }
    for (k, label) in doc.states.iter().enumerate() {
        if label.is_empty()
            || label.chars().any(char::is_whitespace)
            || label.contains("->")
            || label == "*"
            || label.starts_with('$')
        {
            return Err(ModelFileError::field(
                format!("states[{k}]"),
                format!("{label:?} must be non-empty, without whitespace or `->`, and not `*` or `$...`"),
            ));
        }
    }
    let states = StateSpace::new(&doc.states).map_err(|e| prefix(e, "states"))?;
    let theta: ThetaMap = doc.theta.parse().map_err(|e| prefix(e, "theta"))?;
    if doc.rules.is_empty() {
        return Err(ModelFileError::field("rules", "at least one rule is required"));
    }
    let rules = doc
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| build_rule(i, r, doc.dim, &states))
        .collect::<Result<Vec<_>, _>>()?;
    let mut model = Model::new(doc.dim, states, rules).map_err(|e| prefix(e, "model"))?;
    if doc.merge_identical {
        model = model.merge_identical().map_err(|e| prefix(e, "rules"))?;
    }
    theta.bind(&model).map_err(|e| prefix(e, "theta"))?;
    Ok((model, theta))
}

/// Compact description of `model`: constant and copy rules use `default`
/// alone, other tables list the inputs whose output differs from the most
/// common one.
pub fn export(model: &Model, theta: ThetaMap) -> ModelDoc {
    let states = model.states();
    let n = model.n_states();
    let rules = model
        .rules()
        .iter()
        .map(|r| {
            let arity = r.offsets().len();
            let offsets = r
                .offsets()
                .iter()
                .map(|o| {
                    let c = &o.coords()[..model.dim()];
                    if model.dim() == 1 {
                        OffsetDoc::Scalar(c[0])
                    } else {
                        OffsetDoc::Vector(c.to_vec())
                    }
                })
                .collect();
            let (table, default) = if let Some(k) = r.copied_input() {
                (Vec::new(), format!("${k}"))
            } else {
                let mut counts = vec![0usize; n];
                for s in r.table() {
                    counts[s.index()] += 1;
                }
                let common = (0..n).max_by_key(|&s| (counts[s], std::cmp::Reverse(s))).unwrap_or(0);
                let common = State(common as u8);
                let table = r
                    .table()
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s != common)
                    .map(|(idx, &s)| {
                        let lhs: Vec<&str> = digits(idx, n, arity).into_iter().map(|w| states.label(w)).collect();
                        format!("{} -> {}", lhs.join(" "), states.label(s))
                    })
                    .collect();
                (table, states.label(common).to_string())
            };
            RuleDoc {
                name: None,
                offsets,
                table,
                default: Some(default),
                rate: r.rate(),
                kind: if r.is_perturbative() { KindDoc::Perturbative } else { KindDoc::Unperturbed },
            }
        })
        .collect();
    ModelDoc { dim: model.dim(), states: states.labels().to_vec(), theta: theta.to_string(), merge_identical: false, rules }
}

pub fn to_toml(doc: &ModelDoc) -> String {
    toml::to_string(doc).expect("model documents always serialize")
}

pub fn to_json(doc: &ModelDoc) -> String {
    serde_json::to_string_pretty(doc).expect("model documents always serialize")
}
