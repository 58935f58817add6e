//! Code policies: a plan of steps, each with a target rule, a gripper command
//! and a completion check, executed by a small interpreter that keeps an
//! episode-local step counter.
//!
//! # JSON grammar
//!
//! ```json
//! {
//!   "task": "pick_lift",
//!   "steps": [
//!     {
//!       "description": "move above the cube",
//!       "target": {"kind": "object_offset", "name": "cube", "offset": [0, 0, 0.05]},
//!       "gripper": "open",
//!       "check": {"kind": "distance_below", "from": "gripper",
//!                 "to": {"kind": "object_offset", "name": "cube", "offset": [0, 0, 0.05]},
//!                 "threshold": 0.01}
//!     }
//!   ]
//! }
//! ```
//!
//! Targets: `object_pos{name}`, `object_offset{name, offset}`, `absolute{pos}`,
//! `gripper_hold`. Gripper commands: `open`, `close`, `hold`. Checks:
//! `distance_below{from, to, threshold}` with `from` either `"gripper"` or
//! `{"object": name}`, `gripper_is{closed}`, `attached{name}`,
//! `joint_above{name, value}`, `joint_below{name, value}`, `and{all: [...]}`
//! (atoms only) and `always_false`. A check that evaluates true means the
//! step is complete and the counter advances.

mod interp;
mod scripted;

pub use interp::{evaluate_policy, StepCounter};
pub use scripted::scripted_program;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Vec3;
use crate::sim::TaskSpec;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{path}: {message}")]
pub struct ParseError {
    /// Location of the offending value, e.g. `steps[2].check`.
    pub path: String,
    pub message: String,
}

impl ParseError {
    fn at(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy references unknown object {0:?}")]
    UnknownObject(String),
    #[error("policy target is not finite")]
    NonFiniteTarget,
    #[error("program has no steps")]
    Empty,
    #[error("no scripted program for task {0:?}")]
    UnknownTask(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetExpr {
    ObjectPos { name: String },
    ObjectOffset { name: String, offset: Vec3 },
    Absolute { pos: Vec3 },
    GripperHold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Close,
    Hold,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Probe {
    Gripper,
    Object(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckExpr {
    DistanceBelow { from: Probe, to: TargetExpr, threshold: f64 },
    GripperIs { closed: bool },
    Attached { name: String },
    JointAbove { name: String, value: f64 },
    JointBelow { name: String, value: f64 },
    And { all: Vec<CheckExpr> },
    AlwaysFalse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    pub description: String,
    pub target: TargetExpr,
    pub gripper: GripperCommand,
    pub check: CheckExpr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodePolicyProgram {
    pub task: String,
    pub steps: Vec<PlanStep>,
}

impl TargetExpr {
    fn validate(&self, path: &str) -> Result<(), ParseError> {
        let finite = |v: &Vec3, field: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ParseError::at(format!("{path}.{field}"), "must be finite"))
            }
        };
        match self {
            TargetExpr::ObjectOffset { offset, .. } => finite(offset, "offset"),
            TargetExpr::Absolute { pos } => finite(pos, "pos"),
            TargetExpr::ObjectPos { .. } | TargetExpr::GripperHold => Ok(()),
        }
    }

    fn object_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        if let TargetExpr::ObjectPos { name } | TargetExpr::ObjectOffset { name, .. } = self {
            out.push(name);
        }
    }
}

impl CheckExpr {
    fn validate(&self, path: &str, nested: bool) -> Result<(), ParseError> {
        match self {
            CheckExpr::DistanceBelow { to, threshold, .. } => {
                to.validate(&format!("{path}.to"))?;
                positive(*threshold, &format!("{path}.threshold"))
            }
            CheckExpr::JointAbove { value, .. } | CheckExpr::JointBelow { value, .. } => {
                if !(value.is_finite() && *value > 0.0 && *value <= 1.0) {
                    return Err(ParseError::at(format!("{path}.value"), "joint threshold must lie in (0, 1]"));
                }
                Ok(())
            }
            CheckExpr::And { all } => {
                if nested {
                    return Err(ParseError::at(path, "`and` may only contain atoms"));
                }
                if all.is_empty() {
                    return Err(ParseError::at(format!("{path}.all"), "`and` needs at least one atom"));
                }
                for (i, c) in all.iter().enumerate() {
                    c.validate(&format!("{path}.all[{i}]"), true)?;
                }
                Ok(())
            }
            CheckExpr::GripperIs { .. } | CheckExpr::Attached { .. } | CheckExpr::AlwaysFalse => Ok(()),
        }
    }

    fn object_names<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            CheckExpr::DistanceBelow { from, to, .. } => {
                if let Probe::Object(n) = from {
                    out.push(n);
                }
                to.object_names(out);
            }
            CheckExpr::Attached { name } | CheckExpr::JointAbove { name, .. } | CheckExpr::JointBelow { name, .. } => {
                out.push(name)
            }
            CheckExpr::And { all } => all.iter().for_each(|c| c.object_names(out)),
            CheckExpr::GripperIs { .. } | CheckExpr::AlwaysFalse => {}
        }
    }
}

fn positive(v: f64, path: &str) -> Result<(), ParseError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ParseError::at(path, "threshold must be positive"))
    }
}

impl PlanStep {
    pub fn validate(&self, path: &str) -> Result<(), ParseError> {
        if self.description.trim().is_empty() {
            return Err(ParseError::at(format!("{path}.description"), "description must be non-empty"));
        }
        self.target.validate(&format!("{path}.target"))?;
        self.check.validate(&format!("{path}.check"), false)
    }

    pub fn object_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.target.object_names(&mut out);
        self.check.object_names(&mut out);
        out
    }
}

impl CodePolicyProgram {
    /// Structural invariants that hold independently of any task.
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.steps.is_empty() {
            return Err(ParseError::at("steps", "program needs at least one step"));
        }
        for (i, s) in self.steps.iter().enumerate() {
            s.validate(&format!("steps[{i}]"))?;
        }
        Ok(())
    }

    /// Checks that every referenced object exists in `task`.
    pub fn validate_for(&self, task: &TaskSpec) -> Result<(), PolicyError> {
        self.validate()?;
        for s in &self.steps {
            for n in s.object_names() {
                if !task.object_names().any(|t| t == n) {
                    return Err(PolicyError::UnknownObject(n.to_string()));
                }
            }
        }
        Ok(())
    }
}

/// Deserializes `T` from JSON, reporting errors with a `a.b[3].c` style path.
pub(crate) fn from_json_with_path<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ParseError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().to_string();
        // serde reports a missing field at its parent; point at the field itself.
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        ParseError { path, message }
    })?;
    de.end().map_err(|e| ParseError::at(".", e.to_string()))?;
    Ok(value)
}

pub fn parse_program(text: &str) -> Result<CodePolicyProgram, ParseError> {
    let p: CodePolicyProgram = from_json_with_path(text)?;
    p.validate()?;
    Ok(p)
}

pub fn serialize_program(program: &CodePolicyProgram) -> String {
    serde_json::to_string_pretty(program).expect("programs always serialize")
}
