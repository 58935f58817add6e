use serde::{Deserialize, Serialize};

use super::{CheckExpr, CodePolicyProgram, GripperCommand, PolicyError, Probe, TargetExpr};
use crate::geom::{clip_norm, Vec3};
use crate::sim::GroundingView;
use crate::types::{Action, Gripper};

/// Index of the active plan step. Starts at 0 each episode and never decreases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StepCounter {
    pub current: usize,
}

fn object(view: &GroundingView, name: &str) -> Result<Vec3, PolicyError> {
    view.object_pos(name).ok_or_else(|| PolicyError::UnknownObject(name.to_string()))
}

fn resolve(target: &TargetExpr, view: &GroundingView) -> Result<Vec3, PolicyError> {
    Ok(match target {
        TargetExpr::ObjectPos { name } => object(view, name)?,
        TargetExpr::ObjectOffset { name, offset } => object(view, name)? + *offset,
        TargetExpr::Absolute { pos } => *pos,
        TargetExpr::GripperHold => view.gripper_pos(),
    })
}

fn check(expr: &CheckExpr, view: &GroundingView) -> Result<bool, PolicyError> {
    let joint = |name: &str| view.joint_value(name).ok_or_else(|| PolicyError::UnknownObject(name.to_string()));
    Ok(match expr {
        CheckExpr::DistanceBelow { from, to, threshold } => {
            let p = match from {
                Probe::Gripper => view.gripper_pos(),
                Probe::Object(name) => object(view, name)?,
            };
            p.distance(resolve(to, view)?) < *threshold
        }
        CheckExpr::GripperIs { closed } => view.gripper_closed() == *closed,
        CheckExpr::Attached { name } => {
            object(view, name)?;
            view.attached_name() == Some(name.as_str())
        }
        CheckExpr::JointAbove { name, value } => joint(name)? > *value,
        CheckExpr::JointBelow { name, value } => joint(name)? < *value,
        CheckExpr::And { all } => {
            let mut ok = true;
            for c in all {
                ok &= check(c, view)?;
            }
            ok
        }
        CheckExpr::AlwaysFalse => false,
    })
}

/// Runs one control tick of `program`.
///
/// Completed steps are skipped first (a step is complete when its check is
/// true; the last step stays active once reached). The action then moves the
/// gripper straight toward the active step's target, clipped to `max_step`.
pub fn evaluate_policy(
    program: &CodePolicyProgram,
    view: &GroundingView,
    counter: StepCounter,
    max_step: f64,
) -> Result<(Action, StepCounter), PolicyError> {
    let last = program.steps.len().checked_sub(1).ok_or(PolicyError::Empty)?;
    let mut idx = counter.current.min(last);
    while idx < last && check(&program.steps[idx].check, view)? {
        idx += 1;
    }
    let step = &program.steps[idx];
    let raw = resolve(&step.target, view)? - view.gripper_pos();
    let translation = clip_norm(raw, max_step).map_err(|_| PolicyError::NonFiniteTarget)?;
    let gripper = match step.gripper {
        GripperCommand::Open => Gripper::Open,
        GripperCommand::Close => Gripper::Close,
        GripperCommand::Hold => Gripper::from_closed(view.gripper_closed()),
    };
    Ok((Action::new(translation, gripper), StepCounter { current: idx.max(counter.current) }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codepolicy::PlanStep;
    use crate::types::{EnvState, ObjectKind, ObjectState};
    use approx::assert_abs_diff_eq;

    fn state(gripper: Vec3, cube: Vec3) -> EnvState {
        EnvState {
            gripper_pos: gripper,
            gripper_closed: false,
            objects: vec![ObjectState { name: "cube".into(), pos: cube, kind: ObjectKind::FreeBody, joint_value: 0.0 }],
            attached_object: None,
            step_index: 0,
        }
    }

    fn to_cube(desc: &str, gripper: GripperCommand) -> PlanStep {
        PlanStep {
            description: desc.into(),
            target: TargetExpr::ObjectPos { name: "cube".into() },
            gripper,
            check: CheckExpr::DistanceBelow {
                from: Probe::Gripper,
                to: TargetExpr::ObjectPos { name: "cube".into() },
                threshold: 0.01,
            },
        }
    }

    fn lift(desc: &str) -> PlanStep {
        PlanStep {
            description: desc.into(),
            target: TargetExpr::ObjectOffset { name: "cube".into(), offset: Vec3::new(0.0, 0.0, 0.1) },
            gripper: GripperCommand::Close,
            check: CheckExpr::AlwaysFalse,
        }
    }

    #[test]
    fn proportional_move_with_clipping() {
        let p = CodePolicyProgram { task: "t".into(), steps: vec![to_cube("go", GripperCommand::Hold)] };
        let s = state(Vec3::new(0.0, 0.0, 0.1), Vec3::new(0.1, 0.0, 0.1));
        let (a, c) = evaluate_policy(&p, &GroundingView::new(&s, 0), StepCounter::default(), 0.01).unwrap();
        assert_abs_diff_eq!(a.translation.x, 0.01, epsilon = 1e-15);
        assert_eq!(a.translation.y, 0.0);
        assert_eq!(a.gripper, Gripper::Open);
        assert_eq!(c.current, 0);
    }

    #[test]
    fn completed_step_advances_before_acting() {
        let p = CodePolicyProgram {
            task: "t".into(),
            steps: vec![to_cube("go", GripperCommand::Open), lift("lift")],
        };
        let cube = Vec3::new(0.1, 0.0, 0.02);
        let s = state(cube, cube);
        let (a, c) = evaluate_policy(&p, &GroundingView::new(&s, 0), StepCounter::default(), 0.01).unwrap();
        assert_eq!(c.current, 1);
        assert_eq!(a.gripper, Gripper::Close);
        assert_abs_diff_eq!(a.translation.z, 0.01, epsilon = 1e-15);
    }

    #[test]
    fn last_step_saturates() {
        let p = CodePolicyProgram {
            task: "t".into(),
            steps: vec![lift("lift"), to_cube("go", GripperCommand::Open)],
        };
        let cube = Vec3::new(0.1, 0.0, 0.02);
        let s = state(cube, cube);
        let (a, c) = evaluate_policy(&p, &GroundingView::new(&s, 1), StepCounter { current: 1 }, 0.01).unwrap();
        assert_eq!(c.current, 1);
        assert_eq!(a.translation, Vec3::ZERO);
        // a counter already past the end keeps the last step active
        let (_, c) = evaluate_policy(&p, &GroundingView::new(&s, 5), StepCounter { current: 5 }, 0.01).unwrap();
        assert_eq!(c.current, 5);
    }

    #[test]
    fn unknown_object_is_error() {
        let mut step = to_cube("go", GripperCommand::Open);
        step.target = TargetExpr::ObjectPos { name: "ball".into() };
        step.check = CheckExpr::AlwaysFalse;
        let p = CodePolicyProgram { task: "t".into(), steps: vec![step] };
        let s = state(Vec3::ZERO, Vec3::ZERO);
        let r = evaluate_policy(&p, &GroundingView::new(&s, 0), StepCounter::default(), 0.01);
        assert_eq!(r.unwrap_err(), PolicyError::UnknownObject("ball".into()));
    }

    #[test]
    fn and_requires_all_atoms() {
        let s = state(Vec3::ZERO, Vec3::new(0.0, 0.0, 0.005));
        let v = GroundingView::new(&s, 0);
        let near = CheckExpr::DistanceBelow {
            from: Probe::Object("cube".into()),
            to: TargetExpr::GripperHold,
            threshold: 0.01,
        };
        assert!(check(&CheckExpr::And { all: vec![near.clone(), CheckExpr::GripperIs { closed: false }] }, &v).unwrap());
        assert!(!check(&CheckExpr::And { all: vec![near, CheckExpr::GripperIs { closed: true }] }, &v).unwrap());
    }
}
