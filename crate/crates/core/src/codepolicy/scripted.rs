//! Hand-authored reference programs for the built-in tasks. They use exactly
//! the same grammar a generated program must follow.

use super::{CheckExpr, CodePolicyProgram, GripperCommand, PlanStep, PolicyError, Probe, TargetExpr};
use crate::geom::Vec3;
use crate::sim::TaskSpec;

fn offset(name: &str, x: f64, y: f64, z: f64) -> TargetExpr {
    TargetExpr::ObjectOffset { name: name.into(), offset: Vec3::new(x, y, z) }
}

fn at(name: &str) -> TargetExpr {
    TargetExpr::ObjectPos { name: name.into() }
}

fn near(to: &TargetExpr, threshold: f64) -> CheckExpr {
    CheckExpr::DistanceBelow { from: Probe::Gripper, to: to.clone(), threshold }
}

fn step(description: &str, target: TargetExpr, gripper: GripperCommand, check: CheckExpr) -> PlanStep {
    PlanStep { description: description.into(), target, gripper, check }
}

/// Move-to waypoint that completes once the gripper is within `tol`.
fn waypoint(description: &str, target: TargetExpr, gripper: GripperCommand, tol: f64) -> PlanStep {
    let check = near(&target, tol);
    step(description, target, gripper, check)
}

fn grasp(name: &str) -> Vec<PlanStep> {
    use GripperCommand::*;
    vec![
        waypoint(&format!("move above the {name}"), offset(name, 0.0, 0.0, 0.05), Open, 0.01),
        waypoint(&format!("move down to the {name}"), at(name), Open, 0.008),
        step(&format!("close the gripper on the {name}"), at(name), Close, CheckExpr::Attached { name: name.into() }),
    ]
}

fn press(name: &str) -> Vec<PlanStep> {
    use GripperCommand::*;
    vec![
        waypoint(&format!("move above the {name}"), offset(name, 0.0, 0.0, 0.05), Hold, 0.005),
        step(
            &format!("press the {name} down"),
            offset(name, 0.0, 0.0, -0.005),
            Hold,
            CheckExpr::JointAbove { name: name.into(), value: 0.99 },
        ),
    ]
}

/// Approach a slider handle from the side opposite to the push direction
/// `dir` (+1 closes, -1 opens along the handle axis), then push it through.
fn slide(name: &str, dir: f64) -> Vec<PlanStep> {
    use GripperCommand::*;
    let back = -0.03 * dir;
    let done = if dir > 0.0 {
        CheckExpr::JointAbove { name: name.into(), value: 0.99 }
    } else {
        CheckExpr::JointBelow { name: name.into(), value: 0.01 }
    };
    vec![
        waypoint(&format!("move above the far side of the {name} handle"), offset(name, 0.0, back, 0.05), Hold, 0.005),
        waypoint(&format!("lower next to the {name} handle"), offset(name, 0.0, back, 0.0), Hold, 0.005),
        step(&format!("push the {name} along its rail"), offset(name, 0.0, 0.05 * dir, 0.0), Hold, done),
    ]
}

fn carry_and_release(onto: &str, carry_height: f64, release_height: f64) -> Vec<PlanStep> {
    use GripperCommand::*;
    vec![
        waypoint(&format!("carry it above the {onto}"), offset(onto, 0.0, 0.0, carry_height), Close, 0.01),
        waypoint(&format!("lower it onto the {onto}"), offset(onto, 0.0, 0.0, release_height), Close, 0.005),
        step("open the gripper", TargetExpr::GripperHold, Open, CheckExpr::GripperIs { closed: false }),
    ]
}

pub fn scripted_program(task: &TaskSpec) -> Result<CodePolicyProgram, PolicyError> {
    use GripperCommand::*;
    let steps = match task.name.as_str() {
        "reach_target" => vec![step("move to the target", at("target"), Hold, CheckExpr::AlwaysFalse)],
        "push_button" => press("button"),
        "pick_lift" => {
            let mut s = grasp("cube");
            s.push(step("lift the cube up", offset("cube", 0.0, 0.0, 0.2), Close, CheckExpr::AlwaysFalse));
            s
        }
        "close_slider" => slide("slider", 1.0),
        "open_slider" => slide("slider", -1.0),
        "stack_two" => {
            let mut s = grasp("cube_a");
            s.extend(carry_and_release("cube_b", 0.1, 0.045));
            s
        }
        "pick_place_bin" => {
            let mut s = grasp("cube");
            s.extend(carry_and_release("bin", 0.1, 0.045));
            s
        }
        "press_two_buttons" => {
            let mut s = press("button_a");
            s.extend(press("button_b"));
            s
        }
        other => return Err(PolicyError::UnknownTask(other.to_string())),
    };
    let program = CodePolicyProgram { task: task.name.clone(), steps };
    program.validate_for(task)?;
    Ok(program)
}
