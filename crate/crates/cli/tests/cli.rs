use std::path::Path;
use std::process::{Command, Output};

fn cadp(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadp"))
        .args(args)
        .env("CADP_RUN_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "env = climbing\ntotal_steps = 120\nbatch_size = 4\nbuffer_capacity = 20\n\
eval_interval = 40\neval_episodes = 3\ncheckpoint_interval = 60\nhidden = 8\nattn_dim = 4\n\
head_hidden = 8\nmixer_embed = 4\n";

#[test]
fn train_eval_export_compare() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let cfg = cfg.to_str().unwrap();

    for seed in ["1", "2"] {
        let o = cadp(root.path(), &["train", "--config", cfg, "--set", &format!("seed={seed}")]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let run = root.path().join("climbing-qmix-cadp-s1");
    assert!(run.join("metrics.csv").exists());
    assert!(run.join("config.txt").exists());
    let ckpt = run.join("final.ckpt");
    let ckpt = ckpt.to_str().unwrap();

    let o = cadp(root.path(), &["eval", "--checkpoint", ckpt, "--mode", "D", "--episodes", "4", "--seed", "3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("mode D episodes 4"), "{text}");
    assert!(text.contains("cross_agent_calls 0"), "{text}");
    let o = cadp(root.path(), &["eval", "--checkpoint", ckpt, "--mode", "C", "--episodes", "4", "--seed", "3"]);
    assert!(stdout(&o).contains("cross_agent_calls 4"));

    let o = cadp(root.path(), &["export-attention", "--checkpoint", ckpt, "--episodes", "2"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("episode,step,i,j,value"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 2);

    let s2 = root.path().join("climbing-qmix-cadp-s2");
    let csv = root.path().join("summary.csv");
    let o = cadp(
        root.path(),
        &["compare", run.to_str().unwrap(), s2.to_str().unwrap(), "--last-k", "2", "--csv", csv.to_str().unwrap()],
    );
    assert!(o.status.success());
    let table = stdout(&o);
    assert!(table.starts_with("group"));
    assert_eq!(table.lines().count(), 2);
    assert!(std::fs::read_to_string(csv).unwrap().lines().nth(1).unwrap().starts_with("climbing qmix cadp,2,"));
}

#[test]
fn resume_continues_in_place() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.cfg");
    std::fs::write(&cfg, SMALL).unwrap();
    let full = root.path().join("full");
    let o = cadp(root.path(), &["train", "--config", cfg.to_str().unwrap(), "--out", full.to_str().unwrap()]);
    assert!(o.status.success());

    let part = root.path().join("part");
    std::fs::create_dir_all(part.join("checkpoints")).unwrap();
    for f in ["config.txt", "checkpoints/step-0000000060.ckpt"] {
        std::fs::copy(full.join(f), part.join(f)).unwrap();
    }
    let ckpt = part.join("checkpoints/step-0000000060.ckpt");
    let o = cadp(root.path(), &["train", "--resume", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = |d: &Path| std::fs::read_to_string(d.join("metrics.csv")).unwrap();
    let tail = |s: String| s.lines().filter(|l| l.starts_with("80,") || l.starts_with("120,")).map(String::from).collect::<Vec<_>>();
    assert_eq!(tail(rows(&full)), tail(rows(&part)));
    assert_eq!(tail(rows(&full)).len(), 2);
}

#[test]
fn bad_input_fails_with_diagnostic() {
    let root = tempfile::tempdir().unwrap();
    let o = cadp(root.path(), &["train", "--set", "env=chess"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("configuration error"));

    let o = cadp(root.path(), &["train", "--set", "gamma"]);
    assert!(!o.status.success());

    let bogus = root.path().join("bogus.ckpt");
    let mut bytes = b"CADPCKPT".to_vec();
    bytes.extend_from_slice(&99u32.to_le_bytes());
    std::fs::write(&bogus, bytes).unwrap();
    let o = cadp(root.path(), &["eval", "--checkpoint", bogus.to_str().unwrap(), "--mode", "D"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 99"));

    let o = cadp(root.path(), &["eval", "--checkpoint", bogus.to_str().unwrap(), "--mode", "X"]);
    assert!(!o.status.success());
}
