//! Domain values shared by the simulator, the teacher and the agent.

use serde::{Deserialize, Serialize};

use crate::feedback::Feedback;
use crate::geom::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gripper {
    Open,
    Close,
}

impl Gripper {
    pub fn from_closed(closed: bool) -> Self {
        if closed {
            Gripper::Close
        } else {
            Gripper::Open
        }
    }

    pub fn is_close(self) -> bool {
        self == Gripper::Close
    }
}

/// Per-step command: translation delta in meters plus a binary gripper command.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub translation: Vec3,
    pub gripper: Gripper,
}

impl Action {
    pub fn new(translation: Vec3, gripper: Gripper) -> Self {
        Self { translation, gripper }
    }

    pub fn is_finite(&self) -> bool {
        self.translation.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectKind {
    FreeBody,
    /// Pressed from above; the button top sinks by `depth` meters at full press.
    Button { depth: f64 },
    /// Handle sliding along the unit `axis`; `travel` meters separate
    /// joint value 0 (open) from 1 (closed).
    PrismaticJoint { axis: Vec3, travel: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub name: String,
    pub pos: Vec3,
    pub kind: ObjectKind,
    /// 0 = open/unpressed, 1 = closed/pressed. Unused for free bodies.
    pub joint_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub gripper_pos: Vec3,
    pub gripper_closed: bool,
    pub objects: Vec<ObjectState>,
    pub attached_object: Option<usize>,
    pub step_index: u64,
}

impl EnvState {
    pub fn object(&self, name: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_index(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }

    pub fn attached_name(&self) -> Option<&str> {
        self.attached_object.map(|i| self.objects[i].name.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub state: EnvState,
    pub action: Action,
    pub feedback: Option<Feedback>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn push(&mut self, state: EnvState, action: Action, feedback: Option<Feedback>) {
        self.samples.push(TrajectorySample { state, action, feedback });
    }
}
