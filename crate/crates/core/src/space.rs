//! Search spaces with real, integer and categorical variables.
//!
//! A variable may be *conditional*: it is only active when an unconditional
//! categorical parent takes a given value. Nesting deeper than one level is
//! rejected. [`SearchSpace::substitute`] fixes a subset of variables and
//! returns the [`SubProblem`] over the remaining ones.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Step size for numeric neighbor moves, as a fraction of the normalized range.
pub const NEIGHBOR_SIGMA: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("variable `{0}`: empty real domain")]
    EmptyRealDomain(String),
    #[error("variable `{name}`: invalid domain: {reason}")]
    InvalidDomain { name: String, reason: String },
    #[error("variable `{0}`: default lies outside the domain")]
    DefaultOutOfDomain(String),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable `{name}`: value {value} outside its domain")]
    OutOfDomain { name: String, value: Value },
    #[error("configuration is missing active variable `{0}`")]
    MissingVariable(String),
    #[error("configuration assigns inactive variable `{0}`")]
    InactiveAssigned(String),
}

/// A concrete value of one variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            Value::Cat(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Cat(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Cat(s) => write!(f, "{s}"),
        }
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Cat(s.to_string())
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Real(v)
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Real { lo: f64, hi: f64, log: bool },
    Int { lo: i64, hi: i64 },
    Cat { choices: Vec<String> },
}

impl Domain {
    /// Number of coordinates this domain occupies in an encoded vector.
    pub fn width(&self) -> usize {
        match self {
            Domain::Cat { choices } => choices.len(),
            _ => 1,
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Domain::Real { lo, hi, .. }, Value::Real(v)) => v.is_finite() && lo <= v && v <= hi,
            (Domain::Int { lo, hi }, Value::Int(v)) => lo <= v && v <= hi,
            (Domain::Cat { choices }, Value::Cat(s)) => choices.iter().any(|c| c == s),
            _ => false,
        }
    }

    /// Converts integer literals to reals for real domains; other values pass through.
    fn coerce(&self, value: &Value) -> Value {
        match (self, value) {
            (Domain::Real { .. }, Value::Int(v)) => Value::Real(*v as f64),
            (Domain::Int { .. }, Value::Real(v)) if v.fract() == 0.0 => Value::Int(*v as i64),
            _ => value.clone(),
        }
    }

    /// Maps a numeric value onto [0, 1] (log-transformed first when requested).
    fn normalize(&self, value: &Value) -> f64 {
        match self {
            Domain::Real { lo, hi, log } => {
                let v = value.as_f64().unwrap_or(*lo);
                if *log {
                    (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
                } else {
                    (v - lo) / (hi - lo)
                }
            }
            Domain::Int { lo, hi } => {
                if hi == lo {
                    0.0
                } else {
                    (value.as_f64().unwrap_or(*lo as f64) - *lo as f64) / (*hi - *lo) as f64
                }
            }
            Domain::Cat { .. } => 0.0,
        }
    }

    /// Inverse of `normalize`; integers are rounded to the nearest value.
    fn denormalize(&self, u: f64) -> Value {
        let u = u.clamp(0.0, 1.0);
        match self {
            Domain::Real { lo, hi, log } => {
                let v = if *log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                Value::Real(v.clamp(*lo, *hi))
            }
            Domain::Int { lo, hi } => {
                let v = *lo as f64 + u * (*hi - *lo) as f64;
                Value::Int((v.round() as i64).clamp(*lo, *hi))
            }
            Domain::Cat { choices } => Value::Cat(choices[0].clone()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Value {
        match self {
            Domain::Real { lo, hi, log } => {
                let u: f64 = rng.random();
                let v = if *log {
                    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + u * (hi - lo)
                };
                Value::Real(v.clamp(*lo, *hi))
            }
            Domain::Int { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
            Domain::Cat { choices } => Value::Cat(choices[rng.random_range(0..choices.len())].clone()),
        }
    }
}

/// Activation condition: the variable is active iff `parent == equals`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub parent: String,
    pub equals: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub domain: Domain,
    pub default: Value,
    pub condition: Option<Condition>,
}

impl VariableSpec {
    /// Real variable with the midpoint (geometric midpoint when log-scaled) as default.
    pub fn real(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Real { lo, hi, log: false },
            default: Value::Real(0.5 * (lo + hi)),
            condition: None,
        }
    }

    pub fn log_real(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Real { lo, hi, log: true },
            default: Value::Real((lo * hi).sqrt()),
            condition: None,
        }
    }

    pub fn int(name: &str, lo: i64, hi: i64) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Int { lo, hi },
            default: Value::Int(lo + (hi - lo) / 2),
            condition: None,
        }
    }

    pub fn cat(name: &str, choices: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            domain: Domain::Cat {
                choices: choices.iter().map(|c| c.to_string()).collect(),
            },
            default: Value::Cat(choices.first().copied().unwrap_or_default().to_string()),
            condition: None,
        }
    }

    pub fn with_default(mut self, default: impl Into<Value>) -> Self {
        self.default = default.into();
        self
    }

    pub fn when(mut self, parent: &str, equals: &str) -> Self {
        self.condition = Some(Condition {
            parent: parent.to_string(),
            equals: equals.to_string(),
        });
        self
    }

    fn validate(&self) -> Result<(), SpaceError> {
        match &self.domain {
            Domain::Real { lo, hi, log } => {
                if !lo.is_finite() || !hi.is_finite() {
                    return Err(SpaceError::InvalidDomain {
                        name: self.name.clone(),
                        reason: "bounds must be finite".into(),
                    });
                }
                if lo >= hi {
                    return Err(SpaceError::EmptyRealDomain(self.name.clone()));
                }
                if *log && *lo <= 0.0 {
                    return Err(SpaceError::InvalidDomain {
                        name: self.name.clone(),
                        reason: "log scale requires lo > 0".into(),
                    });
                }
            }
            Domain::Int { lo, hi } => {
                if lo > hi {
                    return Err(SpaceError::InvalidDomain {
                        name: self.name.clone(),
                        reason: "empty integer domain".into(),
                    });
                }
            }
            Domain::Cat { choices } => {
                let distinct: BTreeSet<&String> = choices.iter().collect();
                if choices.is_empty() || distinct.len() != choices.len() {
                    return Err(SpaceError::InvalidDomain {
                        name: self.name.clone(),
                        reason: "categorical needs at least one choice and distinct choices".into(),
                    });
                }
            }
        }
        if !self.domain.contains(&self.domain.coerce(&self.default)) {
            return Err(SpaceError::DefaultOutOfDomain(self.name.clone()));
        }
        Ok(())
    }
}

/// A concrete assignment of the active variables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(BTreeMap<String, Value>);

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        self.0.insert(name.into(), value.into())
    }

    pub fn remove(&mut self, name: &str) -> Option<Value> {
        self.0.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.0.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.0.keys()
    }

    /// Union of both assignments; `other` wins on shared keys.
    pub fn merged(&self, other: &Configuration) -> Configuration {
        let mut out = self.clone();
        for (k, v) in other.iter() {
            out.0.insert(k.clone(), v.clone());
        }
        out
    }

    /// Keeps only the named variables.
    pub fn restricted<'a>(&self, names: impl IntoIterator<Item = &'a String>) -> Configuration {
        let keep: BTreeSet<&String> = names.into_iter().collect();
        Configuration(
            self.0
                .iter()
                .filter(|(k, _)| keep.contains(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        )
    }
}

impl FromIterator<(String, Value)> for Configuration {
    fn from_iter<T: IntoIterator<Item = (String, Value)>>(iter: T) -> Self {
        Configuration(iter.into_iter().collect())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, "}}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    name: String,
    variables: Vec<VariableSpec>,
    /// Categorical variable selecting the learning algorithm, when the space has one.
    algorithm_variable: Option<String>,
    /// Variables belonging to the feature-engineering stages.
    feature_variables: Vec<String>,
}

impl SearchSpace {
    pub fn new(name: impl Into<String>, variables: Vec<VariableSpec>) -> Result<Self, SpaceError> {
        let space = Self {
            name: name.into(),
            variables: variables
                .into_iter()
                .map(|mut v| {
                    v.default = v.domain.coerce(&v.default);
                    v
                })
                .collect(),
            algorithm_variable: None,
            feature_variables: Vec::new(),
        };
        space.validate()?;
        Ok(space)
    }

    /// Declares the algorithm variable and the feature-stage variables used by plan construction.
    pub fn with_roles(
        mut self,
        algorithm_variable: Option<&str>,
        feature_variables: &[&str],
    ) -> Result<Self, SpaceError> {
        self.algorithm_variable = algorithm_variable.map(str::to_string);
        self.feature_variables = feature_variables.iter().map(|s| s.to_string()).collect();
        self.validate_roles()?;
        Ok(self)
    }

    /// The empty space (no free variables).
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            variables: Vec::new(),
            algorithm_variable: None,
            feature_variables: Vec::new(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn variables(&self) -> &[VariableSpec] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.variables.iter().map(|v| &v.name)
    }

    pub fn variable(&self, name: &str) -> Option<&VariableSpec> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn algorithm_variable(&self) -> Option<&str> {
        self.algorithm_variable.as_deref()
    }

    pub fn feature_variables(&self) -> &[String] {
        &self.feature_variables
    }

    fn validate(&self) -> Result<(), SpaceError> {
        let mut seen = BTreeSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                return Err(SpaceError::DuplicateName(v.name.clone()));
            }
            v.validate()?;
        }
        for v in &self.variables {
            let Some(cond) = &v.condition else { continue };
            if cond.parent == v.name {
                return Err(SpaceError::Structure(format!("`{}` is conditioned on itself", v.name)));
            }
            let parent = self.variable(&cond.parent).ok_or_else(|| {
                SpaceError::Structure(format!(
                    "`{}` is conditioned on unknown variable `{}`",
                    v.name, cond.parent
                ))
            })?;
            let Domain::Cat { choices } = &parent.domain else {
                return Err(SpaceError::Structure(format!(
                    "`{}` is conditioned on non-categorical `{}`",
                    v.name, cond.parent
                )));
            };
            if !choices.contains(&cond.equals) {
                return Err(SpaceError::Structure(format!(
                    "`{}` is conditioned on `{}={}`, which is not a choice",
                    v.name, cond.parent, cond.equals
                )));
            }
            if parent.condition.is_some() {
                return Err(SpaceError::Structure(format!(
                    "`{}` has conditional parent `{}`: conditions deeper than 2 levels or cyclic",
                    v.name, cond.parent
                )));
            }
        }
        self.validate_roles()
    }

    fn validate_roles(&self) -> Result<(), SpaceError> {
        if let Some(algo) = &self.algorithm_variable {
            match self.variable(algo) {
                Some(VariableSpec {
                    domain: Domain::Cat { .. },
                    condition: None,
                    ..
                }) => {}
                Some(_) => {
                    return Err(SpaceError::Structure(format!(
                        "algorithm variable `{algo}` must be an unconditional categorical"
                    )))
                }
                None => return Err(SpaceError::UnknownVariable(algo.clone())),
            }
        }
        for f in &self.feature_variables {
            if self.variable(f).is_none() {
                return Err(SpaceError::UnknownVariable(f.clone()));
            }
            if self.algorithm_variable.as_deref() == Some(f.as_str()) {
                return Err(SpaceError::Structure(format!(
                    "`{f}` cannot be both the algorithm variable and a feature variable"
                )));
            }
        }
        Ok(())
    }

    fn is_active(&self, var: &VariableSpec, assignment: &Configuration) -> bool {
        match &var.condition {
            None => true,
            Some(c) => assignment.get(&c.parent).and_then(Value::as_str) == Some(c.equals.as_str()),
        }
    }

    /// Width of [`SearchSpace::encode`] output.
    pub fn encoded_width(&self) -> usize {
        self.variables.iter().map(|v| v.domain.width()).sum()
    }

    /// Assignment of the defaults, with activation resolved.
    pub fn default_configuration(&self) -> Configuration {
        self.normalize(&Configuration::new())
    }

    /// Drops inactive or unknown variables and fills missing active variables with defaults.
    pub fn normalize(&self, assignment: &Configuration) -> Configuration {
        let mut out = Configuration::new();
        for v in self.variables.iter().filter(|v| v.condition.is_none()) {
            let value = assignment.get(&v.name).map(|x| v.domain.coerce(x)).unwrap_or_else(|| v.default.clone());
            out.insert(v.name.clone(), value);
        }
        for v in self.variables.iter().filter(|v| v.condition.is_some()) {
            if self.is_active(v, &out) {
                let value = assignment.get(&v.name).map(|x| v.domain.coerce(x)).unwrap_or_else(|| v.default.clone());
                out.insert(v.name.clone(), value);
            }
        }
        out
    }

    /// Converts literal values (integers written for reals and vice versa) to each variable's kind.
    pub fn coerce(&self, config: &Configuration) -> Configuration {
        config
            .iter()
            .map(|(k, v)| {
                let value = self.variable(k).map(|spec| spec.domain.coerce(v)).unwrap_or_else(|| v.clone());
                (k.clone(), value)
            })
            .collect()
    }

    /// Checks that exactly the active variables are assigned, with in-domain values.
    pub fn validate_configuration(&self, config: &Configuration) -> Result<(), SpaceError> {
        for name in config.names() {
            if self.variable(name).is_none() {
                return Err(SpaceError::UnknownVariable(name.clone()));
            }
        }
        for v in &self.variables {
            let active = self.is_active(v, config);
            match (active, config.get(&v.name)) {
                (true, None) => return Err(SpaceError::MissingVariable(v.name.clone())),
                (false, Some(_)) => return Err(SpaceError::InactiveAssigned(v.name.clone())),
                (true, Some(value)) if !v.domain.contains(value) => {
                    return Err(SpaceError::OutOfDomain {
                        name: v.name.clone(),
                        value: value.clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Draws `n` configurations; log-scaled reals are uniform in log space.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Configuration> {
        (0..n).map(|_| self.sample_one(rng)).collect()
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        let mut out = Configuration::new();
        for v in self.variables.iter().filter(|v| v.condition.is_none()) {
            out.insert(v.name.clone(), v.domain.sample(rng));
        }
        for v in self.variables.iter().filter(|v| v.condition.is_some()) {
            if self.is_active(v, &out) {
                out.insert(v.name.clone(), v.domain.sample(rng));
            }
        }
        out
    }

    /// Fixed-width numeric encoding. Numeric variables are min-max normalized,
    /// categoricals one-hot; inactive variables take their default's encoding.
    pub fn encode(&self, config: &Configuration) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoded_width());
        for v in &self.variables {
            let value = if self.is_active(v, config) {
                config.get(&v.name).unwrap_or(&v.default)
            } else {
                &v.default
            };
            match &v.domain {
                Domain::Cat { choices } => {
                    let idx = value.as_str().and_then(|s| choices.iter().position(|c| c == s));
                    out.extend((0..choices.len()).map(|i| if Some(i) == idx { 1.0 } else { 0.0 }));
                }
                d => out.push(d.normalize(value)),
            }
        }
        out
    }

    /// `k` configurations, each differing from `config` in one mutated active variable.
    pub fn neighbors<R: Rng + ?Sized>(&self, config: &Configuration, rng: &mut R, k: usize) -> Vec<Configuration> {
        let step = Normal::new(0.0, NEIGHBOR_SIGMA).expect("valid sigma");
        let base = self.normalize(config);
        let active: Vec<&VariableSpec> = self.variables.iter().filter(|v| base.contains(&v.name)).collect();
        (0..k)
            .map(|_| {
                if active.is_empty() {
                    return base.clone();
                }
                let var = active[rng.random_range(0..active.len())];
                let current = base.get(&var.name).expect("active variable assigned");
                let mutated = match &var.domain {
                    Domain::Cat { choices } => {
                        let others: Vec<&String> =
                            choices.iter().filter(|c| Some(c.as_str()) != current.as_str()).collect();
                        if others.is_empty() {
                            current.clone()
                        } else {
                            Value::Cat(others[rng.random_range(0..others.len())].clone())
                        }
                    }
                    d => {
                        let u = d.normalize(current) + step.sample(rng);
                        d.denormalize(u)
                    }
                };
                let mut next = base.clone();
                next.insert(var.name.clone(), mutated);
                self.normalize(&next)
            })
            .collect()
    }

    /// Fixes the variables in `fixed` and returns the problem over the rest.
    ///
    /// Conditional variables whose parent is fixed to a non-matching value are
    /// dropped; those whose parent is fixed to the matching value become
    /// unconditional in the free space.
    pub fn substitute(&self, fixed: &Configuration) -> Result<SubProblem, SpaceError> {
        let fixed = self.check_partial(fixed)?;
        let mut free = Vec::new();
        for v in &self.variables {
            if fixed.contains(&v.name) {
                continue;
            }
            match &v.condition {
                Some(c) => match fixed.get(&c.parent) {
                    Some(val) if val.as_str() == Some(c.equals.as_str()) => {
                        let mut v = v.clone();
                        v.condition = None;
                        free.push(v);
                    }
                    Some(_) => {}
                    None => free.push(v.clone()),
                },
                None => free.push(v.clone()),
            }
        }
        let free_names: BTreeSet<&str> = free.iter().map(|v| v.name.as_str()).collect();
        let space = SearchSpace {
            name: self.name.clone(),
            algorithm_variable: self
                .algorithm_variable
                .clone()
                .filter(|a| free_names.contains(a.as_str())),
            feature_variables: self
                .feature_variables
                .iter()
                .filter(|f| free_names.contains(f.as_str()))
                .cloned()
                .collect(),
            variables: free,
        };
        Ok(SubProblem { space, fixed })
    }

    /// Validates names and domains of a partial assignment, coercing literal kinds.
    pub fn check_partial(&self, partial: &Configuration) -> Result<Configuration, SpaceError> {
        let mut out = Configuration::new();
        for (name, value) in partial.iter() {
            let spec = self.variable(name).ok_or_else(|| SpaceError::UnknownVariable(name.clone()))?;
            let value = spec.domain.coerce(value);
            if !spec.domain.contains(&value) {
                return Err(SpaceError::OutOfDomain {
                    name: name.clone(),
                    value,
                });
            }
            out.insert(name.clone(), value);
        }
        Ok(out)
    }

    /// Parses a space-definition document (JSON syntax).
    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        let raw: RawSpace = serde_json::from_str(text).map_err(|e| SpaceError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        raw.into_space()
    }

    pub fn to_json(&self) -> String {
        let raw = RawSpace {
            name: self.name.clone(),
            variables: self.variables.iter().map(RawVariable::from_spec).collect(),
            algorithm_variable: self.algorithm_variable.clone(),
            feature_variables: self.feature_variables.clone(),
        };
        serde_json::to_string_pretty(&raw).expect("space serializes")
    }
}

/// The problem left after substituting constants for a subset of variables.
#[derive(Clone, Debug, PartialEq)]
pub struct SubProblem {
    pub space: SearchSpace,
    pub fixed: Configuration,
}

impl SubProblem {
    /// Further substitution; composes with the substitution that produced `self`.
    pub fn substitute(&self, more: &Configuration) -> Result<SubProblem, SpaceError> {
        let inner = self.space.substitute(more)?;
        Ok(SubProblem {
            space: inner.space,
            fixed: self.fixed.merged(&inner.fixed),
        })
    }

    /// The parent-space assignment corresponding to free assignment `free`.
    pub fn assemble(&self, free: &Configuration) -> Configuration {
        self.fixed.merged(free)
    }
}

/// Definition of the space-document schema.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpace {
    name: String,
    variables: Vec<RawVariable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    algorithm_variable: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    feature_variables: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawKind {
    Real,
    Int,
    Cat,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawVariable {
    name: String,
    #[serde(rename = "type")]
    kind: RawKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    condition: Option<Condition>,
}

impl RawVariable {
    fn from_spec(v: &VariableSpec) -> Self {
        let (kind, lo, hi, choices, log) = match &v.domain {
            Domain::Real { lo, hi, log } => (RawKind::Real, Some(*lo), Some(*hi), None, log.then_some(true)),
            Domain::Int { lo, hi } => (RawKind::Int, Some(*lo as f64), Some(*hi as f64), None, None),
            Domain::Cat { choices } => (RawKind::Cat, None, None, Some(choices.clone()), None),
        };
        Self {
            name: v.name.clone(),
            kind,
            lo,
            hi,
            choices,
            default: v.default.clone(),
            log,
            condition: v.condition.clone(),
        }
    }

    fn into_spec(self) -> Result<VariableSpec, SpaceError> {
        let missing = |field: &str| SpaceError::InvalidDomain {
            name: self.name.clone(),
            reason: format!("missing field `{field}`"),
        };
        let domain = match self.kind {
            RawKind::Real => Domain::Real {
                lo: self.lo.ok_or_else(|| missing("lo"))?,
                hi: self.hi.ok_or_else(|| missing("hi"))?,
                log: self.log.unwrap_or(false),
            },
            RawKind::Int => {
                let lo = self.lo.ok_or_else(|| missing("lo"))?;
                let hi = self.hi.ok_or_else(|| missing("hi"))?;
                if lo.fract() != 0.0 || hi.fract() != 0.0 {
                    return Err(SpaceError::InvalidDomain {
                        name: self.name.clone(),
                        reason: "integer bounds must be whole numbers".into(),
                    });
                }
                Domain::Int {
                    lo: lo as i64,
                    hi: hi as i64,
                }
            }
            RawKind::Cat => Domain::Cat {
                choices: self.choices.clone().ok_or_else(|| missing("choices"))?,
            },
        };
        Ok(VariableSpec {
            name: self.name,
            domain,
            default: self.default,
            condition: self.condition,
        })
    }
}

impl RawSpace {
    fn into_space(self) -> Result<SearchSpace, SpaceError> {
        let variables = self
            .variables
            .into_iter()
            .map(RawVariable::into_spec)
            .collect::<Result<Vec<_>, _>>()?;
        let features: Vec<&str> = self.feature_variables.iter().map(String::as_str).collect();
        SearchSpace::new(self.name, variables)?.with_roles(self.algorithm_variable.as_deref(), &features)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn algo_space() -> SearchSpace {
        SearchSpace::new(
            "toy",
            vec![
                VariableSpec::cat("algo", &["knn", "tree"]),
                VariableSpec::int("k", 1, 25).when("algo", "knn"),
                VariableSpec::int("depth", 1, 12).when("algo", "tree"),
            ],
        )
        .unwrap()
    }

    #[test]
    fn parses_conditional_document() {
        let doc = r#"{"name": "s", "variables": [
            {"name": "algo", "type": "cat", "choices": ["knn", "tree"], "default": "knn"},
            {"name": "k", "type": "int", "lo": 1, "hi": 25, "default": 5,
             "condition": {"parent": "algo", "equals": "knn"}}
        ]}"#;
        let space = SearchSpace::from_json(doc).unwrap();
        assert_eq!(space.len(), 2);
        let k = space.variable("k").unwrap();
        assert_eq!(
            k.condition,
            Some(Condition {
                parent: "algo".into(),
                equals: "knn".into()
            })
        );
    }

    #[test]
    fn rejects_empty_real_domain() {
        let doc = r#"{"name": "s", "variables": [
            {"name": "x", "type": "real", "lo": 1.0, "hi": 1.0, "default": 1.0}]}"#;
        let err = SearchSpace::from_json(doc).unwrap_err();
        assert_eq!(err, SpaceError::EmptyRealDomain("x".into()));
        assert!(err.to_string().contains("empty real domain"));
    }

    #[test]
    fn schema_violation_names_field_and_line() {
        let doc = "{\"name\": \"s\",\n \"variables\": [\n {\"name\": \"x\", \"type\": \"real\", \"lo\": 0, \"hi\": 1}]}";
        match SearchSpace::from_json(doc).unwrap_err() {
            SpaceError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("default"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_deep_and_cyclic_conditions() {
        let deep = SearchSpace::new(
            "d",
            vec![
                VariableSpec::cat("a", &["x", "y"]),
                VariableSpec::cat("b", &["p", "q"]).when("a", "x"),
                VariableSpec::real("c", 0.0, 1.0).when("b", "p"),
            ],
        );
        assert!(matches!(deep, Err(SpaceError::Structure(_))));
        let cyclic = SearchSpace::new(
            "c",
            vec![
                VariableSpec::cat("a", &["x"]).when("b", "x"),
                VariableSpec::cat("b", &["x"]).when("a", "x"),
            ],
        );
        assert!(matches!(cyclic, Err(SpaceError::Structure(_))));
    }

    #[test]
    fn rejects_bad_log_and_default() {
        assert!(SearchSpace::new("s", vec![VariableSpec::log_real("x", 0.0, 1.0)]).is_err());
        assert_eq!(
            SearchSpace::new("s", vec![VariableSpec::real("x", 0.0, 1.0).with_default(2.0)]),
            Err(SpaceError::DefaultOutOfDomain("x".into()))
        );
    }

    #[test]
    fn substitute_drops_non_matching_conditionals() {
        let space = algo_space();
        let mut fixed = Configuration::new();
        fixed.insert("algo", "knn");
        let sub = space.substitute(&fixed).unwrap();
        let names: Vec<&String> = sub.space.names().collect();
        assert_eq!(names, vec!["k"]);
        assert!(sub.space.variable("k").unwrap().condition.is_none());
    }

    #[test]
    fn substitute_full_assignment_is_degenerate() {
        let space = algo_space();
        let full = space.default_configuration();
        let sub = space.substitute(&full).unwrap();
        assert!(sub.space.is_empty());
        assert_eq!(sub.assemble(&Configuration::new()), full);
    }

    #[test]
    fn substitute_errors() {
        let space = algo_space();
        let mut bad = Configuration::new();
        bad.insert("nope", 1i64);
        assert_eq!(space.substitute(&bad), Err(SpaceError::UnknownVariable("nope".into())));
        let mut out = Configuration::new();
        out.insert("k", 99i64);
        assert!(matches!(space.substitute(&out), Err(SpaceError::OutOfDomain { .. })));
    }

    #[test]
    fn substituted_objective_matches_parent() {
        let space = SearchSpace::new(
            "q",
            vec![VariableSpec::real("x", -1.0, 1.0), VariableSpec::real("y", -1.0, 1.0)],
        )
        .unwrap();
        let f = |c: &Configuration| {
            let x = c.get("x").unwrap().as_f64().unwrap();
            let y = c.get("y").unwrap().as_f64().unwrap();
            x * x + y * y
        };
        let mut fixed = Configuration::new();
        fixed.insert("x", 0.5);
        let sub = space.substitute(&fixed).unwrap();
        for y in [-1.0, 0.0, 1.0] {
            let mut z = Configuration::new();
            z.insert("y", y);
            assert!((f(&sub.assemble(&z)) - (0.25 + y * y)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_is_deterministic_and_valid() {
        let space = algo_space();
        assert!(space.sample(&mut ChaCha8Rng::seed_from_u64(7), 0).is_empty());
        let a = space.sample(&mut ChaCha8Rng::seed_from_u64(7), 50);
        let b = space.sample(&mut ChaCha8Rng::seed_from_u64(7), 50);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for c in &a {
            space.validate_configuration(c).unwrap();
        }
    }

    #[test]
    fn log_sampling_is_uniform_in_log_space() {
        let space = SearchSpace::new("l", vec![VariableSpec::log_real("x", 1.0, 100.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = space.sample(&mut rng, 10_000);
        let mean: f64 = samples
            .iter()
            .map(|c| c.get("x").unwrap().as_f64().unwrap().ln())
            .sum::<f64>()
            / samples.len() as f64;
        let expected = (1.0f64.ln() + 100.0f64.ln()) / 2.0;
        assert!((mean - expected).abs() <= 0.05 * expected, "{mean} vs {expected}");
    }

    #[test]
    fn encode_examples() {
        let space = SearchSpace::new(
            "e",
            vec![
                VariableSpec::real("r", 0.0, 10.0),
                VariableSpec::cat("c", &["a", "b", "c"]),
            ],
        )
        .unwrap();
        let mut cfg = Configuration::new();
        cfg.insert("r", 5.0);
        cfg.insert("c", "b");
        assert_eq!(space.encode(&cfg), vec![0.5, 0.0, 1.0, 0.0]);
        assert_eq!(space.encoded_width(), 4);
    }

    #[test]
    fn encode_imputes_inactive_variables() {
        let space = algo_space();
        let mut a = Configuration::new();
        a.insert("algo", "tree");
        a.insert("depth", 3i64);
        let mut b = a.clone();
        b.insert("k", 20i64);
        assert_eq!(space.encode(&a), space.encode(&b));
    }

    #[test]
    fn neighbors_reresolve_conditions() {
        let space = SearchSpace::new(
            "n",
            vec![
                VariableSpec::cat("algo", &["knn", "tree"]),
                VariableSpec::int("k", 1, 25).when("algo", "knn"),
                VariableSpec::int("depth", 1, 12).when("algo", "tree").with_default(4i64),
            ],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut cfg = Configuration::new();
        cfg.insert("algo", "knn");
        cfg.insert("k", 7i64);
        assert!(space.neighbors(&cfg, &mut rng, 0).is_empty());
        let switched = space
            .neighbors(&cfg, &mut rng, 200)
            .into_iter()
            .find(|n| n.get("algo").and_then(Value::as_str) == Some("tree"))
            .expect("some neighbor switches algorithm");
        assert_eq!(switched.get("depth"), Some(&Value::Int(4)));
        assert!(!switched.contains("k"));
    }

    #[test]
    fn json_roundtrip() {
        let space = algo_space().with_roles(Some("algo"), &[]).unwrap();
        let back = SearchSpace::from_json(&space.to_json()).unwrap();
        assert_eq!(space, back);
    }
}
