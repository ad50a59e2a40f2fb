use std::path::Path;
use std::process::{Command, Output};

use scorpion_core::{Checkpoint, PpoTrainer, RunConfig};

fn scorpion(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scorpion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn small_config(dir: &Path, epochs: usize) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!("[ppo]\nepochs = {epochs}\nhorizon = 40\nbatch_episodes = 2\nhidden = [16, 8]\n"),
    )
    .unwrap();
    path
}

fn untrained_checkpoint(path: &Path, cfg: &RunConfig) {
    let trainer = PpoTrainer::new(cfg.ppo.clone(), cfg.env.clone()).unwrap();
    Checkpoint::from_trainer(&trainer, cfg.digest()).save(path).unwrap();
}

#[test]
fn version_prints_semver() {
    let out = scorpion(&["version"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    let version = text.trim().rsplit(' ').next().unwrap();
    let parts: Vec<&str> = version.split('.').collect();
    assert_eq!(parts.len(), 3, "{text}");
    assert!(parts.iter().all(|p| p.parse::<u32>().is_ok()), "{text}");
}

#[test]
fn usage_errors_exit_one() {
    let out = scorpion(&["train", "--bogus-flag"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--bogus-flag"));

    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.toml");
    let out = scorpion(&[
        "train",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("nope.toml"));
}

#[test]
fn invalid_config_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[ppo]\nclip_eps = -1.0\n").unwrap();
    let out = scorpion(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("ppo.clip_eps"), "{}", stderr(&out));
}

#[test]
fn train_writes_one_record_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let run = dir.path().join("run");
    let out = scorpion(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
        "--seed",
        "5",
        "--quiet",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let metrics = std::fs::read_to_string(run.join("metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    for line in metrics.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v.as_object().unwrap().len(), 6);
    }
    assert!(run.join("final.ckpt").exists());
    let saved = RunConfig::load(&run.join("config.toml")).unwrap();
    assert_eq!(saved.ppo.seed, 5);
    assert_eq!(saved.ppo.epochs, 2);
}

#[test]
fn eval_writes_trajectory_and_rejects_bad_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("c.ckpt");
    untrained_checkpoint(&ckpt, &RunConfig::default());

    let scenario = dir.path().join("s.toml");
    std::fs::write(
        &scenario,
        "horizon = 50\n[[waypoints]]\nstep = 0\nx = 10.0\ny = 0.0\n\n[[waypoints]]\nstep = 20\nx = 0.0\ny = 0.0\n",
    )
    .unwrap();
    let out_dir = dir.path().join("eval");
    let out = scorpion(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let csv = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "step,t_sec,x,y,roll,pitch,yaw,m_left,m_right,tail,reward,wp_x,wp_y"
    );
    assert_eq!(csv.lines().count(), 51);
    assert_eq!(stdout(&out).matches("phase steps").count(), 2);

    std::fs::write(&scenario, "horizon = 50\nwaypoints = []\n").unwrap();
    let out = scorpion(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("empty"), "{}", stderr(&out));
}

#[test]
fn failure_rate_reports_and_strict_digest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = small_config(dir.path(), 1);
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let ckpt = dir.path().join("c.ckpt");
    untrained_checkpoint(&ckpt, &cfg);
    let out_dir = dir.path().join("fr");
    let args = |strict: bool, config: &Path| {
        let mut a = vec![
            "failure-rate".to_string(),
            "--checkpoint".into(),
            ckpt.to_str().unwrap().into(),
            "--runs".into(),
            "3".into(),
            "--horizon".into(),
            "150".into(),
            "--margin".into(),
            "10".into(),
            "--out".into(),
            out_dir.to_str().unwrap().into(),
            "--config".into(),
            config.to_str().unwrap().into(),
        ];
        if strict {
            a.push("--strict".into());
        }
        a
    };
    let run = |a: Vec<String>| {
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        scorpion(&refs)
    };

    let out = run(args(true, &cfg_path));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["n_runs"], 3);
    for i in 0..3 {
        assert!(out_dir.join(format!("run_{i}.csv")).exists());
    }

    let other = dir.path().join("other.toml");
    std::fs::write(&other, "[ppo]\nseed = 99\n").unwrap();
    let out = run(args(true, &other));
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("digest"), "{}", stderr(&out));
    let out = run(args(false, &other));
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn truncated_checkpoint_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("c.ckpt");
    untrained_checkpoint(&ckpt, &RunConfig::default());
    let bytes = std::fs::read(&ckpt).unwrap();
    std::fs::write(&ckpt, &bytes[..bytes.len() / 2]).unwrap();
    let out = scorpion(&[
        "failure-rate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        dir.path().join("fr").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn gradcheck_passes_on_sampled_parameters() {
    let out = scorpion(&["gradcheck", "--nets", "2", "--probes", "300"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("max relative error"));
}
