use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use crossbody::dataset::{ingest, read_dataset, write_dataset, IngestOptions};
use crossbody::geometry::{Pose, RotationMatrix, Vec3};
use crossbody::harness::cli::{trajectory_from_jsonl, trajectory_to_jsonl, TrainSettings};
use crossbody::harness::{SyntheticTask, HUMAN_TAG};
use crossbody::kinematics::{EmbodimentConfig, PoseFile};
use crossbody::policy::PolicyConfig;
use crossbody::retiming::{retime, Frame, SlowdownFactor, Trajectory};
use crossbody::unified::UnifiedState;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn config_a() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/humanoid_a.json")
}

fn crossbody(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crossbody"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FK_ARGS: [&str; 4] = ["--q", "0.1,-0.2,0.3,1.2,-0.4", "--side", "right"];
const IK_ARGS: [&str; 4] = ["--target", "0.3,-0.2,0.25", "--q0", "0,0,0,1.5,0"];

/// Ten frames of a smooth human reach.
fn fixture_trajectory() -> Trajectory {
    let frames = (0..10)
        .map(|i| {
            let u = i as f64 / 9.0;
            let head = RotationMatrix::from_yaw_pitch_roll(0.05 * u, -0.3, 0.0);
            let left = Pose::new(RotationMatrix::rot_x(0.2), Vec3::new(0.25, 0.2, 0.1));
            let right = Pose::new(
                RotationMatrix::from_yaw_pitch_roll(0.4 * u, 0.1, -0.2 * u),
                Vec3::new(0.2 + 0.15 * u, -0.2 - 0.05 * u, 0.1 + 0.1 * u * u),
            );
            let mut tips = [Vec3::zeros(); 10];
            for (k, t) in tips.iter_mut().enumerate() {
                let base = if k < 5 { left.translation } else { right.translation };
                *t = base + Vec3::new(0.08, 0.01 * (k % 5) as f64 - 0.02, -0.01 * u);
            }
            Frame {
                t: i as f64 / 30.0,
                state: UnifiedState::from_poses(&head, &left, &right, tips),
                head_position: Vec3::new(0.0, 0.002 * u, 0.6),
            }
        })
        .collect();
    Trajectory::new(frames, HUMAN_TAG, 30.0).unwrap()
}

fn fixture_task() -> SyntheticTask {
    SyntheticTask {
        reach_s: 1.0,
        hold_s: 0.5,
        ..SyntheticTask::default()
    }
}

/// Rewrites every golden file; run with `UPDATE_GOLDEN=1 cargo test --test cli -- --ignored`.
#[test]
#[ignore]
fn regenerate_fixtures() {
    if std::env::var("UPDATE_GOLDEN").is_err() {
        return;
    }
    let dir = fixtures();
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(dir.join("golden")).unwrap();
    std::fs::write(dir.join("trajectory.jsonl"), trajectory_to_jsonl(&fixture_trajectory())).unwrap();

    let task = fixture_task();
    let config = EmbodimentConfig::humanoid_a();
    let raws = vec![
        task.human_capture(&config, &Vec3::new(0.35, -0.25, 0.2), "human_000", 1).unwrap(),
        task.human_capture(&config, &Vec3::new(0.2, -0.1, 0.2), "human_001", 2).unwrap(),
        task.robot_capture(&config, &Vec3::new(0.3, -0.2, 0.2), "robot_000", 3).unwrap(),
        task.robot_capture(&config, &Vec3::new(0.25, -0.15, 0.2), "robot_001", 4).unwrap(),
    ];
    for raw in &raws {
        raw.save(&dir.join("raw").join(&raw.meta.episode_id)).unwrap();
    }
    let options = IngestOptions::default();
    let episodes: Vec<_> = raws.iter().map(|r| ingest(r, Some(&config), &options).unwrap()).collect();
    write_dataset(&dir.join("dataset"), &episodes, None).unwrap();

    let train = TrainSettings {
        policy: PolicyConfig {
            hidden_layers: vec![16],
            chunk_length: 5,
            learning_rate: 0.1,
            ..PolicyConfig::default()
        },
        steps: 50,
        report_every: 10,
        ..TrainSettings::default()
    };
    std::fs::write(dir.join("train.json"), serde_json::to_string_pretty(&train).unwrap()).unwrap();

    let traj = dir.join("trajectory.jsonl");
    let out = crossbody(&["retime", "--input", s(&traj), "--alpha", "4", "--report", s(&dir.join("golden/retime_report.json"))]);
    std::fs::write(dir.join("golden/retime_alpha4.jsonl"), out.stdout).unwrap();
    let out = crossbody(&[&["fk", "--config", s(&config_a())][..], &FK_ARGS].concat());
    std::fs::write(dir.join("golden/fk.json"), out.stdout).unwrap();
    let out = crossbody(&[&["ik", "--config", s(&config_a())][..], &IK_ARGS].concat());
    std::fs::write(dir.join("golden/ik.json"), out.stdout).unwrap();
}

#[test]
fn retime_matches_library_and_golden() {
    let dir = fixtures();
    let input = dir.join("trajectory.jsonl");
    let out = crossbody(&["retime", "--input", s(&input), "--alpha", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&input).unwrap();
    let traj = trajectory_from_jsonl(&text, HUMAN_TAG, 30.0).unwrap();
    let lib = retime(&traj, SlowdownFactor::new(4.0).unwrap(), 30.0).unwrap();
    assert_eq!(lib.len(), 37);
    assert_eq!(String::from_utf8(out.stdout.clone()).unwrap(), trajectory_to_jsonl(&lib));
    assert_eq!(out.stdout, std::fs::read(dir.join("golden/retime_alpha4.jsonl")).unwrap());
    let report: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(report["episode_id"], "trajectory");
    assert_eq!(report["pass"], true);
}

#[test]
fn fk_prints_the_library_pose() {
    let out = crossbody(&["fk", "--config", s(&config_a()), "--q", "0,0,0,0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let printed: PoseFile = serde_json::from_value(v["pose"].clone()).unwrap();
    let config = EmbodimentConfig::load(&config_a()).unwrap();
    let lib = config.right_arm.forward_kinematics(&[0.0; 5]).unwrap();
    assert_eq!(printed, PoseFile::from_pose(&lib));
}

#[test]
fn fk_and_ik_outputs_match_golden_files() {
    let dir = fixtures();
    let fk = crossbody(&[&["fk", "--config", s(&config_a())][..], &FK_ARGS].concat());
    assert_eq!(fk.stdout, std::fs::read(dir.join("golden/fk.json")).unwrap());
    let ik = crossbody(&[&["ik", "--config", s(&config_a())][..], &IK_ARGS].concat());
    assert_eq!(ik.status.code(), Some(0));
    assert_eq!(ik.stdout, std::fs::read(dir.join("golden/ik.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&ik.stdout).unwrap();
    assert!(v["solution"]["position_error"].as_f64().unwrap() < 1e-3);
}

#[test]
fn validate_accepts_golden_dataset_and_rejects_damage() {
    let dir = fixtures();
    let out = crossbody(&["validate", "--dataset", s(&dir.join("dataset"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let tmp = tempfile::tempdir().unwrap();
    let ds = read_dataset(&dir.join("dataset")).unwrap();
    write_dataset(tmp.path(), &ds.episodes, None).unwrap();
    let first = tmp.path().join(&ds.manifest.episodes[0].file);
    let mut bytes = std::fs::read(&first).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x40;
    std::fs::write(&first, bytes).unwrap();
    let out = crossbody(&["validate", "--dataset", s(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_name_the_flag() {
    let out = crossbody(&["fk", "--config", s(&config_a()), "--q", "0,0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--q"));
    let out = crossbody(&["ik", "--config", s(&config_a()), "--target", "0.3,0.1,0.2", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--frobnicate"));
    let out = crossbody(&["retime", "--input", "nowhere.jsonl", "--alpha", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--alpha"));
}

#[test]
fn pipeline_from_raw_captures_to_rollout() {
    let dir = fixtures();
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    let ckpt = tmp.path().join("policy.ckpt");

    let out = crossbody(&["ingest", "--input", s(&dir.join("raw")), "--out", s(&ds)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(crossbody(&["validate", "--dataset", s(&ds)]).status.code(), Some(0));
    let out = crossbody(&["stats", "--dataset", s(&ds), "--mode", "per-embodiment", "--write"]);
    assert_eq!(out.status.code(), Some(0));

    let train = dir.join("train.json");
    let out = crossbody(&["train", "--config", s(&train), "--dataset", s(&ds), "--out", s(&ckpt)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["steps"], 50);

    let state = vec!["0"; 54].join(",");
    let feature = vec!["0.1"; 8].join(",");
    let out = crossbody(&["predict", "--checkpoint", s(&ckpt), "--state", &state, "--feature", &feature]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let chunk: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(chunk["actions"].as_array().unwrap().len(), 5);
    let out = crossbody(&["predict", "--checkpoint", s(&ckpt), "--state", &state, "--feature", "1,2"]);
    assert_eq!(out.status.code(), Some(2));

    let out = crossbody(&["rollout", "--oracle", "--goal", "0.3,-0.2,0.2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["success"], true);
}
