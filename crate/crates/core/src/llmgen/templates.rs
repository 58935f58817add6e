//! Prompt templates for the two-level chain and the parsers for each
//! template's answer format.

use serde::{Deserialize, Serialize};

use crate::codepolicy::{CheckExpr, GripperCommand, PlanStep, TargetExpr};
use crate::sim::TaskSpec;
use crate::types::ObjectKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptRole {
    Planner,
    Action,
    Check,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub input: String,
    pub output: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub role: PromptRole,
    /// Part of the cache key; bump when the text changes.
    pub version: String,
    pub system: String,
    pub exemplars: Vec<Exemplar>,
}

impl PromptTemplate {
    /// At least two exemplars, each of whose outputs parses for the role.
    pub fn validate(&self) -> Result<(), String> {
        if self.exemplars.len() < 2 {
            return Err(format!("{:?} template needs at least 2 exemplars", self.role));
        }
        for (i, ex) in self.exemplars.iter().enumerate() {
            let ok = match self.role {
                PromptRole::Planner => parse_plan(&ex.output).map(|_| ()),
                PromptRole::Action => parse_action(&ex.output, None).map(|_| ()),
                PromptRole::Check => parse_check(&ex.output, None).map(|_| ()),
            };
            ok.map_err(|e| format!("{:?} exemplar {i}: {e}", self.role))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub planner: PromptTemplate,
    pub action: PromptTemplate,
    pub check: PromptTemplate,
}

impl TemplateSet {
    pub fn validate(&self) -> Result<(), String> {
        for (want, t) in [
            (PromptRole::Planner, &self.planner),
            (PromptRole::Action, &self.action),
            (PromptRole::Check, &self.check),
        ] {
            if t.role != want {
                return Err(format!("template in the {want:?} slot has role {:?}", t.role));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn versions(&self) -> [&str; 3] {
        [&self.planner.version, &self.action.version, &self.check.version]
    }
}

fn ex(input: &str, output: &str) -> Exemplar {
    Exemplar { input: input.trim().to_string(), output: output.trim().to_string() }
}

const PLANNER_SYSTEM: &str = "You control a robot gripper above a table. Coordinates are in meters, \
x and y span -0.3 to 0.3 and z is height above the floor (the table is at z = 0.02). \
Given the objects in the scene and an instruction, break the task into short steps. \
Each step must be achievable by moving the gripper to one point and optionally opening or closing it. \
Answer with a numbered list only, one step per line.";

const ACTION_SYSTEM: &str = "You write the action rule for one step of a robot plan. \
Answer with a single JSON object {\"target\": TARGET, \"gripper\": \"open\"|\"close\"|\"hold\"} and nothing else. \
TARGET is one of {\"kind\":\"object_pos\",\"name\":N}, {\"kind\":\"object_offset\",\"name\":N,\"offset\":[dx,dy,dz]}, \
{\"kind\":\"absolute\",\"pos\":[x,y,z]} or {\"kind\":\"gripper_hold\"}. \
Only use object names from the scene. \"hold\" keeps the gripper as it is.";

const CHECK_SYSTEM: &str = "You write the completion check for one step of a robot plan. \
The check must become true exactly when the step is done. Answer with a single JSON object and nothing else, one of: \
{\"kind\":\"distance_below\",\"from\":\"gripper\" or {\"object\":N},\"to\":TARGET,\"threshold\":meters}, \
{\"kind\":\"gripper_is\",\"closed\":bool}, {\"kind\":\"attached\",\"name\":N}, \
{\"kind\":\"joint_above\",\"name\":N,\"value\":v}, {\"kind\":\"joint_below\",\"name\":N,\"value\":v}, \
{\"kind\":\"and\",\"all\":[checks]} or {\"kind\":\"always_false\"}. \
Joint values run from 0 (released or open) to 1 (pressed or closed). Thresholds must be positive.";

impl Default for TemplateSet {
    fn default() -> Self {
        let planner = PromptTemplate {
            role: PromptRole::Planner,
            version: "planner-1".into(),
            system: PLANNER_SYSTEM.into(),
            exemplars: vec![
                ex(
                    "Objects: cube (free body)\nInstruction: pick up the cube and lift it",
                    "1. move above the cube\n2. move down to the cube\n3. close the gripper on the cube\n4. lift the cube up",
                ),
                ex(
                    "Objects: button (button, pressed from above)\nInstruction: push the button down",
                    "1. move above the button\n2. press the button down",
                ),
                ex(
                    "Objects: ball (free body), box (free body)\nInstruction: put the ball into the box",
                    "1. move above the ball\n2. move down to the ball\n3. close the gripper on the ball\n\
                     4. carry it above the box\n5. lower it into the box\n6. open the gripper",
                ),
            ],
        };
        let action = PromptTemplate {
            role: PromptRole::Action,
            version: "action-1".into(),
            system: ACTION_SYSTEM.into(),
            exemplars: vec![
                ex(
                    "Objects: cube (free body)\nInstruction: pick up the cube and lift it\nStep: move above the cube",
                    r#"{"target": {"kind": "object_offset", "name": "cube", "offset": [0, 0, 0.05]}, "gripper": "open"}"#,
                ),
                ex(
                    "Objects: cube (free body)\nInstruction: pick up the cube and lift it\nStep: close the gripper on the cube",
                    r#"{"target": {"kind": "object_pos", "name": "cube"}, "gripper": "close"}"#,
                ),
                ex(
                    "Objects: button (button, pressed from above)\nInstruction: push the button down\nStep: press the button down",
                    r#"{"target": {"kind": "object_offset", "name": "button", "offset": [0, 0, -0.005]}, "gripper": "hold"}"#,
                ),
            ],
        };
        let check = PromptTemplate {
            role: PromptRole::Check,
            version: "check-1".into(),
            system: CHECK_SYSTEM.into(),
            exemplars: vec![
                ex(
                    "Objects: cube (free body)\nStep: move above the cube\n\
                     Action: {\"target\": {\"kind\": \"object_offset\", \"name\": \"cube\", \"offset\": [0, 0, 0.05]}, \"gripper\": \"open\"}",
                    r#"{"kind": "distance_below", "from": "gripper", "to": {"kind": "object_offset", "name": "cube", "offset": [0, 0, 0.05]}, "threshold": 0.01}"#,
                ),
                ex(
                    "Objects: cube (free body)\nStep: close the gripper on the cube\n\
                     Action: {\"target\": {\"kind\": \"object_pos\", \"name\": \"cube\"}, \"gripper\": \"close\"}",
                    r#"{"kind": "attached", "name": "cube"}"#,
                ),
                ex(
                    "Objects: button (button, pressed from above)\nStep: press the button down\n\
                     Action: {\"target\": {\"kind\": \"object_offset\", \"name\": \"button\", \"offset\": [0, 0, -0.005]}, \"gripper\": \"hold\"}",
                    r#"{"kind": "joint_above", "name": "button", "value": 0.99}"#,
                ),
            ],
        };
        Self { planner, action, check }
    }
}

fn describe_kind(kind: &ObjectKind) -> String {
    match kind {
        ObjectKind::FreeBody => "free body".into(),
        ObjectKind::Button { .. } => "button, pressed from above".into(),
        ObjectKind::PrismaticJoint { axis, travel } => format!(
            "sliding handle, moves along [{}, {}, {}] by {travel} m to close",
            axis.x, axis.y, axis.z
        ),
    }
}

/// `Objects: ...` line describing the scene.
pub fn objects_line(task: &TaskSpec) -> String {
    if task.objects.is_empty() {
        return "Objects: none".into();
    }
    let parts: Vec<String> =
        task.objects.iter().map(|o| format!("{} ({})", o.name, describe_kind(&o.kind))).collect();
    format!("Objects: {}", parts.join(", "))
}

/// Parses a numbered list, `1. foo` or `1) foo`, ignoring other lines.
pub fn parse_plan(text: &str) -> Result<Vec<String>, String> {
    let mut steps = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 {
            continue;
        }
        let rest = &line[digits..];
        if let Some(item) = rest.strip_prefix('.').or_else(|| rest.strip_prefix(')')) {
            let item = item.trim();
            if !item.is_empty() {
                steps.push(item.to_string());
            }
        }
    }
    if steps.is_empty() {
        return Err("expected a numbered list of steps".into());
    }
    Ok(steps)
}

/// Outermost `{...}` of a reply, tolerating prose or code fences around it.
fn json_object(text: &str) -> Result<&str, String> {
    match (text.find('{'), text.rfind('}')) {
        (Some(a), Some(b)) if a < b => Ok(&text[a..=b]),
        _ => Err("expected a JSON object".into()),
    }
}

fn check_objects(step: &PlanStep, task: Option<&TaskSpec>) -> Result<(), String> {
    let Some(task) = task else { return Ok(()) };
    for n in step.object_names() {
        if !task.object_names().any(|t| t == n) {
            let known: Vec<&str> = task.object_names().collect();
            return Err(format!("unknown object {n:?}; the scene contains {known:?}"));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionReply {
    target: TargetExpr,
    gripper: GripperCommand,
}

/// Parses an action answer; with a task, object names are checked too.
pub fn parse_action(text: &str, task: Option<&TaskSpec>) -> Result<(TargetExpr, GripperCommand), String> {
    let reply: ActionReply =
        crate::codepolicy::from_json_with_path(json_object(text)?).map_err(|e| e.to_string())?;
    let probe = PlanStep {
        description: "probe".into(),
        target: reply.target,
        gripper: reply.gripper,
        check: CheckExpr::AlwaysFalse,
    };
    probe.validate("action").map_err(|e| e.to_string())?;
    check_objects(&probe, task)?;
    Ok((probe.target, probe.gripper))
}

pub fn parse_check(text: &str, task: Option<&TaskSpec>) -> Result<CheckExpr, String> {
    let check: CheckExpr = crate::codepolicy::from_json_with_path(json_object(text)?).map_err(|e| e.to_string())?;
    let probe = PlanStep {
        description: "probe".into(),
        target: TargetExpr::GripperHold,
        gripper: GripperCommand::Hold,
        check,
    };
    probe.validate("check").map_err(|e| e.to_string())?;
    check_objects(&probe, task)?;
    Ok(probe.check)
}
