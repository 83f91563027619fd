use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = r#"
seed = 1
workers = 1

[collect]
matches = 12

[bc]
epochs = 2
eval_every = 1
eval_matches = 4
final_eval_matches = 4

[rl]
max_iterations = 2
eval_every = 1
eval_matches = 4
n_envs = 2
scratch_hidden = [8]

[rl.ppo]
rollout_steps = 32
minibatch = 16
value_hidden = [8]

[ablate]
pools = [2]
seeds = 1

[eval]
matches = 6
"#;

fn locm(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locm"))
        .args(args)
        .env("LOCM_OUTPUT_ROOT", root.join("runs"))
        .env("LOCM_DATA_ROOT", root.join("data"))
        .output()
        .expect("spawn locm")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

#[test]
fn gen_pools_writes_count_files_and_manifest() {
    let (dir, _) = setup();
    let out_dir = dir.path().join("pools");
    ok(&locm(&["gen-pools", "--count", "3", "--out", out_dir.to_str().unwrap()], dir.path()));
    let pools = fs::read_dir(&out_dir).unwrap().filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("pool")).count();
    assert_eq!(pools, 3);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn collect_is_reproducible_and_replays() {
    let (dir, cfg) = setup();
    let c = cfg.to_str().unwrap();
    ok(&locm(&["collect", "--config", c, "--name", "a"], dir.path()));
    ok(&locm(&["collect", "--config", c, "--name", "b"], dir.path()));
    let runs = dir.path().join("runs");
    let a = fs::read(runs.join("a/dataset.lctj")).unwrap();
    assert_eq!(a, fs::read(runs.join("b/dataset.lctj")).unwrap());
    for f in ["config.toml", "run.log", "manifest.json", "dataset.json", "matches.lcml"] {
        assert!(runs.join("a").join(f).exists(), "{f}");
    }
    let log = runs.join("a/matches.lcml");
    let out = locm(&["replay", "--log", log.to_str().unwrap()], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("12 of 12 matches verified"));

    // Corrupt one recorded action; replay must report a verification failure.
    let mut bytes = fs::read(&log).unwrap();
    let n = bytes.len();
    bytes[n - 40] ^= 0x01;
    let bad = dir.path().join("bad.lcml");
    fs::write(&bad, bytes).unwrap();
    assert_eq!(locm(&["replay", "--log", bad.to_str().unwrap()], dir.path()).status.code(), Some(4));
}

#[test]
fn bc_then_rl_then_evaluate() {
    let (dir, cfg) = setup();
    let c = cfg.to_str().unwrap();
    ok(&locm(&["collect", "--config", c], dir.path()));
    let ds = dir.path().join("runs/collect/dataset.lctj");
    ok(&locm(&["bc-train", "--config", c, "--name", "SM-F-NP", "--dataset", ds.to_str().unwrap()], dir.path()));
    let bc = dir.path().join("runs/SM-F-NP");
    for f in ["SM-F-NP.ckpt", "accuracy.tsv", "eval.tsv", "final_report.tsv", "summary.json", "manifest.json"] {
        assert!(bc.join(f).exists(), "{f}");
    }
    let ck = bc.join("SM-F-NP.ckpt");
    ok(&locm(&["rl-train", "--config", c, "--init", ck.to_str().unwrap(), "--pools", "2"], dir.path()));
    let curve = fs::read_to_string(dir.path().join("runs/rl/curve.tsv")).unwrap();
    assert_eq!(curve.lines().count(), 4, "{curve}");
    let agent = format!("checkpoint:{}", ck.display());
    let out = locm(&["evaluate", "--config", c, "--agent", &agent, "--opponent", "greedy", "--record"], dir.path());
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("matches\t6"));
    let log = dir.path().join("runs/evaluate/matches.lcml");
    ok(&locm(&["replay", "--log", log.to_str().unwrap(), "--match", "3"], dir.path()));
    ok(&locm(&["ablate", "--config", c, "--checkpoint", ck.to_str().unwrap()], dir.path()));
    let summary = fs::read_to_string(dir.path().join("runs/ablate/summary.tsv")).unwrap();
    assert_eq!(summary.lines().next(), Some("arm\t2"));
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn exit_codes() {
    let (dir, _) = setup();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[rl]\nmax_iteratons = 3\n").unwrap();
    let out = locm(&["rl-train", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_iteratons"));
    let out = locm(&["bc-train", "--name", "XL-F-NP"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = locm(&["evaluate", "--agent", "external:/nonexistent/agent", "--matches", "2"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let out = locm(&["rl-train", "--init", "/nonexistent.ckpt"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
