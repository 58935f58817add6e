//! Task descriptions and the built-in task catalog.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{SimError, Workspace};
use crate::geom::Vec3;
use crate::types::{EnvState, ObjectKind};

/// Axis-aligned spawn region, min/max corners in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl SpawnBox {
    pub fn fixed_z(x: (f64, f64), y: (f64, f64), z: f64) -> Self {
        Self { min: Vec3::new(x.0, y.0, z), max: Vec3::new(x.1, y.1, z) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub name: String,
    pub kind: ObjectKind,
    pub spawn: SpawnBox,
    #[serde(default)]
    pub initial_joint: f64,
}

/// Success predicate, tagged by its id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case", deny_unknown_fields)]
pub enum SuccessPredicate {
    ReachTarget { object: String, tolerance: f64 },
    PickLift { object: String, min_height: f64 },
    PushButton { object: String },
    CloseSlider { object: String, threshold: f64 },
    OpenSlider { object: String, threshold: f64 },
    StackTwo { top: String, bottom: String, tolerance: f64 },
    PickPlaceBin { object: String, bin: String, half_extent: f64 },
    PressTwoButtons { first: String, second: String },
}

impl SuccessPredicate {
    pub fn id(&self) -> &'static str {
        match self {
            SuccessPredicate::ReachTarget { .. } => "reach_target",
            SuccessPredicate::PickLift { .. } => "pick_lift",
            SuccessPredicate::PushButton { .. } => "push_button",
            SuccessPredicate::CloseSlider { .. } => "close_slider",
            SuccessPredicate::OpenSlider { .. } => "open_slider",
            SuccessPredicate::StackTwo { .. } => "stack_two",
            SuccessPredicate::PickPlaceBin { .. } => "pick_place_bin",
            SuccessPredicate::PressTwoButtons { .. } => "press_two_buttons",
        }
    }

    fn object_names(&self) -> Vec<&str> {
        match self {
            SuccessPredicate::ReachTarget { object, .. }
            | SuccessPredicate::PickLift { object, .. }
            | SuccessPredicate::PushButton { object }
            | SuccessPredicate::CloseSlider { object, .. }
            | SuccessPredicate::OpenSlider { object, .. } => vec![object],
            SuccessPredicate::StackTwo { top, bottom, .. } => vec![top, bottom],
            SuccessPredicate::PickPlaceBin { object, bin, .. } => vec![object, bin],
            SuccessPredicate::PressTwoButtons { first, second } => vec![first, second],
        }
    }

    pub fn evaluate(&self, state: &EnvState, ws: &Workspace) -> Result<bool, SimError> {
        let obj = |name: &str| state.object(name).ok_or_else(|| SimError::UnknownObject(name.to_string()));
        let attached = |name: &str| state.attached_name() == Some(name);
        Ok(match self {
            SuccessPredicate::ReachTarget { object, tolerance } => {
                state.gripper_pos.distance(obj(object)?.pos) < *tolerance
            }
            SuccessPredicate::PickLift { object, min_height } => {
                let z = obj(object)?.pos.z;
                attached(object) && z > *min_height
            }
            SuccessPredicate::PushButton { object } => obj(object)?.joint_value >= 1.0,
            SuccessPredicate::CloseSlider { object, threshold } => obj(object)?.joint_value > *threshold,
            SuccessPredicate::OpenSlider { object, threshold } => obj(object)?.joint_value < *threshold,
            SuccessPredicate::StackTwo { top, bottom, tolerance } => {
                let (t, b) = (obj(top)?.pos, obj(bottom)?.pos);
                let rest = b.z + 2.0 * ws.body_half_height;
                !attached(top) && t.horizontal_distance(b) < *tolerance && (t.z - rest).abs() < 0.005
            }
            SuccessPredicate::PickPlaceBin { object, bin, half_extent } => {
                let (c, b) = (obj(object)?.pos, obj(bin)?.pos);
                !attached(object)
                    && (c.x - b.x).abs() < *half_extent
                    && (c.y - b.y).abs() < *half_extent
                    && c.z < b.z + 3.0 * ws.body_half_height
            }
            SuccessPredicate::PressTwoButtons { first, second } => {
                obj(first)?.joint_value >= 1.0 && obj(second)?.joint_value >= 1.0
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub name: String,
    pub instruction: String,
    pub objects: Vec<ObjectSpec>,
    pub success: SuccessPredicate,
    /// Minimum horizontal distance between spawned objects.
    #[serde(default = "default_separation")]
    pub min_separation: f64,
}

fn default_separation() -> f64 {
    0.08
}

pub const MAX_OBJECTS: usize = 4;

impl TaskSpec {
    pub fn validate(&self, ws: &Workspace) -> Result<(), SimError> {
        let bad = |why: String| Err(SimError::InvalidTask { task: self.name.clone(), why });
        if self.name.trim().is_empty() {
            return bad("empty name".into());
        }
        if self.instruction.trim().is_empty() {
            return bad("empty instruction".into());
        }
        if self.objects.is_empty() || self.objects.len() > MAX_OBJECTS {
            return bad(format!("object count {} outside 1..={MAX_OBJECTS}", self.objects.len()));
        }
        let mut seen = HashSet::new();
        for o in &self.objects {
            if !seen.insert(o.name.as_str()) {
                return bad(format!("duplicate object name {:?}", o.name));
            }
            if !ws.contains(o.spawn.min) || !ws.contains(o.spawn.max) {
                return bad(format!("spawn region of {:?} leaves the workspace", o.name));
            }
            let s = o.spawn;
            if s.min.x > s.max.x || s.min.y > s.max.y || s.min.z > s.max.z {
                return bad(format!("spawn region of {:?} is inverted", o.name));
            }
            if !(0.0..=1.0).contains(&o.initial_joint) {
                return bad(format!("initial joint of {:?} outside [0,1]", o.name));
            }
        }
        for n in self.success.object_names() {
            if !seen.contains(n) {
                return bad(format!("success predicate names unknown object {n:?}"));
            }
        }
        Ok(())
    }

    pub fn object_names(&self) -> impl Iterator<Item = &str> {
        self.objects.iter().map(|o| o.name.as_str())
    }
}

/// Names of the four core tasks, in catalog order.
pub const CORE_TASKS: [&str; 4] = ["reach_target", "push_button", "pick_lift", "close_slider"];
/// Names of the four long-horizon tasks, in catalog order.
pub const ADDITIONAL_TASKS: [&str; 4] = ["stack_two", "pick_place_bin", "open_slider", "press_two_buttons"];

const TABLE: f64 = 0.02;

fn free(name: &str, spawn: SpawnBox) -> ObjectSpec {
    ObjectSpec { name: name.into(), kind: ObjectKind::FreeBody, spawn, initial_joint: 0.0 }
}

fn button(name: &str) -> ObjectSpec {
    ObjectSpec {
        name: name.into(),
        kind: ObjectKind::Button { depth: 0.01 },
        spawn: table_region(),
        initial_joint: 0.0,
    }
}

fn slider(spawn: SpawnBox, initial_joint: f64) -> ObjectSpec {
    ObjectSpec {
        name: "slider".into(),
        kind: ObjectKind::PrismaticJoint { axis: Vec3::new(0.0, 1.0, 0.0), travel: 0.1 },
        spawn,
        initial_joint,
    }
}

fn table_region() -> SpawnBox {
    SpawnBox::fixed_z((-0.2, 0.2), (-0.2, 0.2), TABLE)
}

fn task(name: &str, instruction: &str, objects: Vec<ObjectSpec>, success: SuccessPredicate) -> TaskSpec {
    TaskSpec {
        name: name.into(),
        instruction: instruction.into(),
        objects,
        success,
        min_separation: default_separation(),
    }
}

/// The eight catalog tasks: four core tasks followed by four long-horizon ones.
pub fn builtin_tasks() -> Vec<TaskSpec> {
    vec![
        task(
            "reach_target",
            "move the gripper to the target",
            vec![free(
                "target",
                SpawnBox { min: Vec3::new(-0.2, -0.2, 0.05), max: Vec3::new(0.2, 0.2, 0.25) },
            )],
            SuccessPredicate::ReachTarget { object: "target".into(), tolerance: 0.01 },
        ),
        task(
            "push_button",
            "push the button down",
            vec![button("button")],
            SuccessPredicate::PushButton { object: "button".into() },
        ),
        task(
            "pick_lift",
            "pick up the cube and lift it",
            vec![free("cube", table_region())],
            SuccessPredicate::PickLift { object: "cube".into(), min_height: 0.15 },
        ),
        task(
            "close_slider",
            "push the sliding door closed",
            vec![slider(SpawnBox::fixed_z((-0.15, 0.15), (-0.2, 0.0), 0.05), 0.0)],
            SuccessPredicate::CloseSlider { object: "slider".into(), threshold: 0.95 },
        ),
        task(
            "stack_two",
            "stack cube_a on top of cube_b",
            vec![free("cube_a", table_region()), free("cube_b", table_region())],
            SuccessPredicate::StackTwo { top: "cube_a".into(), bottom: "cube_b".into(), tolerance: 0.015 },
        ),
        task(
            "pick_place_bin",
            "put the cube into the bin",
            vec![free("cube", table_region()), free("bin", table_region())],
            SuccessPredicate::PickPlaceBin { object: "cube".into(), bin: "bin".into(), half_extent: 0.03 },
        ),
        task(
            "open_slider",
            "pull the sliding door open",
            vec![slider(SpawnBox::fixed_z((-0.15, 0.15), (0.0, 0.2), 0.05), 1.0)],
            SuccessPredicate::OpenSlider { object: "slider".into(), threshold: 0.05 },
        ),
        task(
            "press_two_buttons",
            "press button_a and then button_b",
            vec![button("button_a"), button("button_b")],
            SuccessPredicate::PressTwoButtons { first: "button_a".into(), second: "button_b".into() },
        ),
    ]
}

pub fn find_task(name: &str) -> Result<TaskSpec, SimError> {
    builtin_tasks()
        .into_iter()
        .find(|t| t.name == name)
        .ok_or_else(|| SimError::UnknownTask(name.to_string()))
}

pub fn catalog_to_json(tasks: &[TaskSpec]) -> String {
    serde_json::to_string_pretty(tasks).expect("task specs always serialize")
}

pub fn catalog_from_json(text: &str) -> Result<Vec<TaskSpec>, SimError> {
    serde_json::from_str(text).map_err(|e| SimError::Catalog(e.to_string()))
}
