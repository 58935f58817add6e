use std::path::Path;
use std::process::{Command, Output};

use tutor::codepolicy::scripted_program;
use tutor::rng::Rng;
use tutor::sim::{find_task, Sim};
use tutor::trainer::{evaluate_teacher, TrainerConfig};

fn tutor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tutor")).current_dir(dir).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_trainer(dir: &Path) {
    let cfg = TrainerConfig {
        warm_start_demos: 2,
        warm_start_epochs: 2,
        eval_episodes: 5,
        hidden_layers: vec![8],
        ..Default::default()
    };
    std::fs::write(dir.join("trainer.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    v.sort();
    v
}

#[test]
fn scripted_policy_is_written_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let o = tutor(dir.path(), &["generate-policy", "--task", "pick_lift", "--scripted", "--out", "p"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read(dir.path().join("p/pick_lift.policy.json")).unwrap();
    let o = tutor(dir.path(), &["generate-policy", "--task", "pick_lift", "--scripted", "--out", "p"]);
    assert!(o.status.success());
    assert_eq!(std::fs::read(dir.path().join("p/pick_lift.policy.json")).unwrap(), first);
    let p = tutor::codepolicy::parse_program(std::str::from_utf8(&first).unwrap()).unwrap();
    assert_eq!(p, scripted_program(&find_task("pick_lift").unwrap()).unwrap());
}

#[test]
fn offline_generation_with_cold_cache_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = tutor(dir.path(), &["generate-policy", "--task", "reach_target", "--offline", "--out", "p"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("offline"), "{}", stderr(&o));
    assert!(!dir.path().join("p/reach_target.policy.json").exists());
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = tutor(dir.path(), &["run", "--tasks", "juggle", "--out", "r"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("juggle"));
    let o = tutor(dir.path(), &["train", "iteach", "--task", "reach_target", "--beta", "270"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tutor(dir.path(), &["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(entries(dir.path()).is_empty(), "nothing written on config errors");
}

#[test]
fn run_is_resumable_and_reports_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_trainer(d);
    let args = [
        "run", "--tasks", "reach_target", "--methods", "iteach", "--seeds", "0,1", "--budgets", "2,4",
        "--trainer-config", "trainer.json", "--out", "res", "--quiet",
    ];
    let o = tutor(d, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("2 runs executed, 0 resumed"));
    let runs = entries(&d.join("res/runs"));
    assert_eq!(runs.len(), 2);
    let csv = std::fs::read_to_string(d.join("res/aggregate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "task,method,episodes,seed,success_rate,correction_rate,beta,feedback_mode,warm_start,config_hash"
    );
    // one row per checkpoint per seed
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[1..].iter().all(|l| l.starts_with("reach_target,iteach,")));

    let o = tutor(d, &args);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 runs executed, 2 resumed"));
    assert_eq!(std::fs::read_to_string(d.join("res/aggregate.csv")).unwrap(), csv);

    std::fs::remove_file(d.join("res/runs").join(&runs[1])).unwrap();
    let o = tutor(d, &args);
    assert!(String::from_utf8_lossy(&o.stdout).contains("1 runs executed, 1 resumed"));
    assert_eq!(std::fs::read_to_string(d.join("res/aggregate.csv")).unwrap(), csv, "rerun is bit-identical");

    let o = tutor(d, &["report", "--input", "res", "--out", "rep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let files = entries(&d.join("rep"));
    assert_eq!(
        files,
        ["ablation_curves.csv", "beta_sweep.csv", "report.csv", "report.txt", "success_vs_episodes.csv"]
    );
    let snapshot: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(d.join("rep").join(f)).unwrap()).collect();
    let o = tutor(d, &["report", "--input", "res/aggregate.csv", "--out", "rep"]);
    assert!(o.status.success());
    let again: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(d.join("rep").join(f)).unwrap()).collect();
    assert_eq!(snapshot, again);
    let curves = String::from_utf8(snapshot[4].clone()).unwrap();
    assert_eq!(curves.lines().count(), 1 + 2);

    assert_eq!(entries(d), ["rep", "res", "trainer.json"], "no stray files outside the output dirs");
}

#[test]
fn teacher_direct_row_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_trainer(d);
    let o = tutor(
        d,
        &[
            "run", "--tasks", "push_button", "--methods", "teacher-direct", "--seeds", "3", "--trainer-config",
            "trainer.json", "--out", "res", "--quiet",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("res/aggregate.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    let cfg: TrainerConfig = serde_json::from_str(&std::fs::read_to_string(d.join("trainer.json")).unwrap()).unwrap();
    let sim = Sim::builtin("push_button").unwrap();
    let oracle = evaluate_teacher(&sim, &scripted_program(&sim.task).unwrap(), &cfg, &Rng::from_seed(3)).unwrap();
    assert_eq!(row[1], "teacher-direct");
    assert_eq!(row[4], format!("{oracle:.4}"));
}

#[test]
fn report_rejects_empty_and_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("empty.csv"),
        "task,method,episodes,seed,success_rate,correction_rate,beta,feedback_mode,warm_start,config_hash\n",
    )
    .unwrap();
    let o = tutor(d, &["report", "--input", "empty.csv", "--out", "rep"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(!d.join("rep").exists(), "no partial output");

    std::fs::write(d.join("bad.csv"), "task,method\nreach_target,bc\n").unwrap();
    let o = tutor(d, &["report", "--input", "bad.csv", "--out", "rep"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv") && stderr(&o).contains("success_rate"));
    assert!(!d.join("rep").exists());
}

#[test]
fn train_then_evaluate_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_trainer(d);
    let o = tutor(
        d,
        &[
            "train", "bc", "--task", "reach_target", "--seed", "1", "--episodes", "3", "--trainer-config",
            "trainer.json", "--out", "t",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let files = entries(&d.join("t"));
    assert_eq!(files.len(), 2);
    let model = files.iter().find(|f| f.ends_with(".model.json")).unwrap();
    let o = tutor(
        d,
        &["evaluate", "--task", "reach_target", "--model", &format!("t/{model}"), "--episodes", "3"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["subject"], "agent");
    assert!((0.0..=1.0).contains(&v["success_rate"].as_f64().unwrap()));

    let o = tutor(d, &["evaluate", "--task", "pick_lift", "--model", &format!("t/{model}"), "--episodes", "3"]);
    assert!(o.status.success(), "feature schema is shared by all tasks");

    let o = tutor(
        d,
        &["train", "iteach", "--task", "reach_target", "--episodes", "2", "--trainer-config", "trainer.json", "--log-episodes", "--out", "t2"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let log = entries(&d.join("t2")).into_iter().find(|f| f.ends_with(".episodes.jsonl")).unwrap();
    let text = std::fs::read_to_string(d.join("t2").join(log)).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["episode", "t", "agent_action", "feedback", "teacher_action", "executed", "q"] {
        assert!(first.get(key).is_some(), "log line lacks {key}");
    }
}

#[test]
fn collect_demos_writes_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let o = tutor(dir.path(), &["collect-demos", "--task", "pick_lift", "--episodes", "3", "--out", "d"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("3/3 successful"));
    let text = std::fs::read_to_string(dir.path().join("d/demos-pick_lift-seed0.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn ablate_and_sweep_grids() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    tiny_trainer(d);
    let common = ["--tasks", "reach_target", "--seeds", "0", "--episodes", "1", "--trainer-config", "trainer.json", "--quiet"];
    let mut args = vec!["ablate", "--out", "ab"];
    args.extend(common);
    let o = tutor(d, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(entries(&d.join("ab/runs")).len(), 6);
    let mut args = vec!["sweep-beta", "--betas", "0,90,180", "--out", "sw"];
    args.extend(common);
    let o = tutor(d, &args);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = tutor(d, &["report", "--input", "ab", "sw", "--out", "rep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let sweep = std::fs::read_to_string(d.join("rep/beta_sweep.csv")).unwrap();
    let betas: Vec<&str> = sweep.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(betas, ["0", "20", "90", "180"]);
    let arms = std::fs::read_to_string(d.join("rep/ablation_curves.csv")).unwrap();
    assert_eq!(arms.lines().count(), 1 + 6);
}
