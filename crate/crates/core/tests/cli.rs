use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use cgnn::config::ExperimentConfig;
use cgnn::io::{load_dataset_dir, SplitSpec};
use cgnn::noise::{gen_synthetic, SynthSpec};

const SMALL: &str = "\
synth.n = 60
synth.C = 2
synth.p_in = 0.2
synth.p_out = 0.02
enc.hidden = 8
enc.embed = 8
split.rate = 0.2
train.epochs = 8
train.warmup = 4
train.period = 2
train.runs = 2
";

fn cgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cgnn")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.cfg");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn synth_is_byte_identical_and_reloads() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let o = cgnn(&["synth", "--config", &cfg, "--seed", "7", "--out", dir.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 3);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
    }
    let reloaded = load_dataset_dir(&a, &SplitSpec::Rate { rate: 0.5, seed: 0 }).unwrap();
    reloaded.validate().unwrap();
    let spec = SynthSpec { n: 60, num_classes: 2, p_in: 0.2, p_out: 0.02, seed: 7, ..Default::default() };
    let direct = gen_synthetic(&spec).unwrap();
    assert_eq!(reloaded.labels.clean(), direct.labels.clean());
    assert_eq!(reloaded.graph.num_edges(), direct.graph.num_edges());
}

#[test]
fn train_labels_follow_the_ablation_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let cases: [(&[&str], &str); 4] = [
        (&[], "full"),
        (&["--no-contr"], "no-contr"),
        (&["--no-corr"], "no-corr"),
        (&["--no-contr", "--no-corr"], "baseline"),
    ];
    for (k, (flags, label)) in cases.iter().enumerate() {
        let out = tmp.path().join(format!("run{k}"));
        let mut args = vec!["train", "--config", &cfg, "--out", out.to_str().unwrap()];
        args.extend_from_slice(flags);
        let o = cgnn(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let printed: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        assert_eq!(printed["label"], *label);
        let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary, printed);
        let epochs = fs::read_to_string(out.join("metrics.jsonl")).unwrap().lines().count();
        assert_eq!(epochs, 2 * 8);
        assert!(out.join("checkpoints/seed-0.ckpt").exists());
    }
}

#[test]
fn sweep_cell_matches_train() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "corr.gamma = 0.7\ncorr.omega = 0.6\nsweep.gamma = 0.7\nsweep.omega = 0.6\n");
    let t = cgnn(&["train", "--config", &cfg, "--out", tmp.path().join("t").to_str().unwrap()]);
    let s = cgnn(&["sweep", "--config", &cfg, "--out", tmp.path().join("s").to_str().unwrap()]);
    assert!(t.status.success() && s.status.success());
    let summary: serde_json::Value = serde_json::from_str(stdout(&t).trim()).unwrap();
    let csv = fs::read_to_string(tmp.path().join("s/sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "gamma,omega,mean_acc,std_acc");
    assert_eq!(lines.len(), 2);
    let fields: Vec<f64> = lines[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(fields[..2], [0.7, 0.6]);
    assert_eq!(fields[2], summary["accuracy"]["mean"].as_f64().unwrap());
    assert_eq!(fields[3], summary["accuracy"]["std"].as_f64().unwrap());
}

#[test]
fn default_sweep_grid_has_25_cells() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.sweep_gamma.len() * cfg.sweep_omega.len(), 25);
}

#[test]
fn inject_then_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "noise.rate = 0.3\n");
    let data = tmp.path().join("data");
    let noisy = tmp.path().join("noisy");
    assert!(cgnn(&["synth", "--config", &cfg, "--out", data.to_str().unwrap()]).status.success());
    let set_data = format!("data.dir={}", data.display());
    let o = cgnn(&["inject", "--config", &cfg, "--set", &set_data, "--out", noisy.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(noisy.join("split.txt").exists());

    let set_noisy = format!("data.dir={}", noisy.display());
    let run = tmp.path().join("run");
    let o = cgnn(&["train", "--config", &cfg, "--set", &set_noisy, "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = run.join("checkpoints/seed-0.ckpt");
    let o = cgnn(&[
        "eval",
        "--config",
        &cfg,
        "--set",
        &set_noisy,
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
        "--checkpoint",
        ckpt.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report["nodes"], 60 - 12);
}

#[test]
fn config_errors_exit_with_2_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    let bad = write_config(tmp.path(), "train.bogus = 3\n");
    let o = cgnn(&["train", "--config", &bad, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.bogus"), "{}", stderr(&o));

    let o = cgnn(&["synth", "--set", "corr.gamma=1.5", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("corr.gamma"));

    let o = cgnn(&["synth", "--set", "synth.n=many", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("synth.n"));

    let o = cgnn(&["synth", "--config", tmp.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let missing = format!("data.dir={}", tmp.path().join("nowhere").display());
    let o = cgnn(&["train", "--config", &cfg, "--set", &missing, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let o = cgnn(&[
        "eval",
        "--config",
        &cfg,
        "--out",
        tmp.path().join("e").to_str().unwrap(),
        "--checkpoint",
        tmp.path().join("none.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn train_is_deterministic_across_invocations() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        assert!(cgnn(&["train", "--config", &cfg, "--seed", "3", "--out", dir.to_str().unwrap()]).status.success());
    }
    for f in ["summary.json", "metrics.jsonl", "rounds.jsonl", "corrections.jsonl", "checkpoints/seed-3.ckpt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
