//! Deterministic kinematic manipulation simulator.
//!
//! The gripper is a point that moves by at most `max_step` meters per step
//! inside an axis-aligned workspace. Free bodies can be grasped within
//! `grasp_radius` and then move rigidly with the gripper; on release they
//! drop onto the table or onto the free body underneath. Buttons are pressed
//! by moving down onto them and latch once fully pressed. Prismatic joints
//! (sliders) move with the gripper when it pushes their handle along the axis.

mod tasks;

pub use tasks::{
    builtin_tasks, catalog_from_json, catalog_to_json, find_task, ObjectSpec, SpawnBox, SuccessPredicate,
    TaskSpec, ADDITIONAL_TASKS, CORE_TASKS, MAX_OBJECTS,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{clip_norm, Vec3};
use crate::rng::Rng;
use crate::types::{Action, EnvState, ObjectKind, ObjectState};

pub const HOME: Vec3 = Vec3::new(0.0, 0.0, 0.3);

/// Attempts at placing all objects before a reset gives up.
const SPAWN_ATTEMPTS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("unknown object {0:?}")]
    UnknownObject(String),
    #[error("invalid task {task:?}: {why}")]
    InvalidTask { task: String, why: String },
    #[error("could not place objects for {0:?} without overlap after 100 attempts")]
    SpawnCollision(String),
    #[error("task catalog: {0}")]
    Catalog(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Workspace {
    pub min: Vec3,
    pub max: Vec3,
    /// Largest per-step gripper displacement.
    pub max_step: f64,
    pub grasp_radius: f64,
    pub interact_radius: f64,
    /// Largest joint-value change per step.
    pub joint_rate: f64,
    /// Half the height of a free body; resting height on the table.
    pub body_half_height: f64,
    /// Half-width of the square footprint used when stacking on release.
    pub body_half_width: f64,
}

impl Default for Workspace {
    fn default() -> Self {
        Self {
            min: Vec3::new(-0.3, -0.3, 0.0),
            max: Vec3::new(0.3, 0.3, 0.5),
            max_step: 0.01,
            grasp_radius: 0.02,
            interact_radius: 0.02,
            joint_rate: 0.2,
            body_half_height: 0.02,
            body_half_width: 0.03,
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: Vec3) -> bool {
        p.clamp(self.min, self.max) == p
    }

    pub fn clamp(&self, p: Vec3) -> Vec3 {
        p.clamp(self.min, self.max)
    }
}

/// A task bound to a workspace: implements reset, the transition function
/// and the success test.
#[derive(Clone, Debug)]
pub struct Sim {
    pub workspace: Workspace,
    pub task: TaskSpec,
}

impl Sim {
    pub fn new(task: TaskSpec, workspace: Workspace) -> Result<Self, SimError> {
        task.validate(&workspace)?;
        Ok(Self { workspace, task })
    }

    pub fn builtin(name: &str) -> Result<Self, SimError> {
        Self::new(find_task(name)?, Workspace::default())
    }

    pub fn reset(&self, rng: &mut Rng) -> Result<EnvState, SimError> {
        let specs = &self.task.objects;
        for _ in 0..SPAWN_ATTEMPTS {
            let positions: Vec<Vec3> = specs
                .iter()
                .map(|o| {
                    let (lo, hi) = (o.spawn.min, o.spawn.max);
                    Vec3::new(rng.uniform(lo.x, hi.x), rng.uniform(lo.y, hi.y), rng.uniform(lo.z, hi.z))
                })
                .collect();
            let clear = positions.iter().enumerate().all(|(i, p)| {
                positions[..i].iter().all(|q| p.horizontal_distance(*q) >= self.task.min_separation)
            });
            if !clear {
                continue;
            }
            let objects = specs
                .iter()
                .zip(positions)
                .map(|(o, pos)| ObjectState {
                    name: o.name.clone(),
                    pos,
                    kind: o.kind,
                    joint_value: o.initial_joint,
                })
                .collect();
            return Ok(EnvState {
                gripper_pos: HOME,
                gripper_closed: false,
                objects,
                attached_object: None,
                step_index: 0,
            });
        }
        Err(SimError::SpawnCollision(self.task.name.clone()))
    }

    /// Transition function. Non-finite translations are absorbed as no motion.
    pub fn step(&self, state: &EnvState, action: &Action) -> EnvState {
        let ws = &self.workspace;
        let mut next = state.clone();
        next.step_index += 1;

        let delta = clip_norm(action.translation, ws.max_step).unwrap_or(Vec3::ZERO);
        let from = state.gripper_pos;
        let to = ws.clamp(from + delta);
        let moved = to - from;
        let close = action.gripper.is_close();

        if !close {
            if let Some(i) = next.attached_object.take() {
                settle(&mut next.objects, i, ws);
            }
        }
        next.gripper_pos = to;
        next.gripper_closed = close;

        if let Some(i) = next.attached_object {
            next.objects[i].pos = ws.clamp(next.objects[i].pos + moved);
        } else if close {
            next.attached_object = next
                .objects
                .iter()
                .enumerate()
                .filter(|(_, o)| o.kind == ObjectKind::FreeBody)
                .map(|(i, o)| (i, o.pos.distance(to)))
                .filter(|&(_, d)| d < ws.grasp_radius)
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(i, _)| i);
        }

        for obj in next.objects.iter_mut() {
            match obj.kind {
                ObjectKind::FreeBody => {}
                ObjectKind::Button { depth } => {
                    let over = to.horizontal_distance(obj.pos) < ws.interact_radius;
                    let near = (to.z - obj.pos.z).abs() < ws.interact_radius;
                    if obj.joint_value < 1.0 && moved.z < -1e-9 && over && near {
                        let nj = (obj.joint_value + ws.joint_rate).min(1.0);
                        obj.pos.z -= depth * (nj - obj.joint_value);
                        obj.joint_value = nj;
                    }
                }
                ObjectKind::PrismaticJoint { axis, travel } => {
                    let along = moved.dot(axis);
                    if along.abs() < 1e-12 || from.distance(obj.pos) >= ws.interact_radius {
                        continue;
                    }
                    // Only a gripper trailing the handle in the push direction moves it.
                    let lead = (obj.pos - from).dot(axis) * along.signum();
                    if lead < -0.005 {
                        continue;
                    }
                    let dj = (along / travel).clamp(-ws.joint_rate, ws.joint_rate);
                    let nj = (obj.joint_value + dj).clamp(0.0, 1.0);
                    obj.pos += axis * (travel * (nj - obj.joint_value));
                    obj.joint_value = nj;
                }
            }
        }
        next
    }

    pub fn is_success(&self, state: &EnvState) -> Result<bool, SimError> {
        self.task.success.evaluate(state, &self.workspace)
    }
}

/// Drops a released free body onto the highest free body under it, or the table.
fn settle(objects: &mut [ObjectState], idx: usize, ws: &Workspace) {
    let p = objects[idx].pos;
    let support = objects
        .iter()
        .enumerate()
        .filter(|&(i, o)| i != idx && o.kind == ObjectKind::FreeBody)
        .filter(|(_, o)| (o.pos.x - p.x).abs() < ws.body_half_width && (o.pos.y - p.y).abs() < ws.body_half_width)
        .filter(|(_, o)| o.pos.z < p.z)
        .map(|(_, o)| o.pos.z + 2.0 * ws.body_half_height)
        .fold(ws.body_half_height, f64::max);
    objects[idx].pos.z = support.min(p.z).max(ws.min.z);
}

/// Read-only accessor layer the code policy is grounded on.
#[derive(Clone, Copy, Debug)]
pub struct GroundingView<'a> {
    state: &'a EnvState,
    step_counter: usize,
}

impl<'a> GroundingView<'a> {
    pub fn new(state: &'a EnvState, step_counter: usize) -> Self {
        Self { state, step_counter }
    }

    pub fn object_pos(&self, name: &str) -> Option<Vec3> {
        self.state.object(name).map(|o| o.pos)
    }

    pub fn joint_value(&self, name: &str) -> Option<f64> {
        self.state.object(name).map(|o| o.joint_value)
    }

    pub fn gripper_pos(&self) -> Vec3 {
        self.state.gripper_pos
    }

    pub fn gripper_closed(&self) -> bool {
        self.state.gripper_closed
    }

    pub fn attached_name(&self) -> Option<&'a str> {
        self.state.attached_name()
    }

    pub fn step_counter(&self) -> usize {
        self.step_counter
    }

    pub fn state(&self) -> &'a EnvState {
        self.state
    }
}
