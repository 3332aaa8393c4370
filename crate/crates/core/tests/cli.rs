use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_anomalens"));
    c.env_remove("ANOMALENS_SEED").env_remove("ANOMALENS_NSLKDD_DIR");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

const SMALL: &str = r#"
[sim]
n_components = 3
dims_per_component = 10
n_records = 400

[sim61]
n_faulty = 3

[train]
epochs = 40
batch_size = 40
learning_rate = 2.0

[model]
hidden = 3
hidden_activation = "sigmoid"
"#;

fn small_workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    ok(dir.path(), &["--config", "small.toml", "simulate", "--mode", "sim61", "--out", "d", "--faults", "4"]);
    dir
}

#[test]
fn train_score_explain_round() {
    let dir = small_workspace();
    let d = dir.path();
    ok(d, &["--config", "small.toml", "--seed", "3", "train", "--data", "d/train.csv", "--out", "m.json"]);
    let scores = ok(d, &["score", "--model", "m.json", "--data", "d/test.csv"]);
    let lines: Vec<&str> = scores.lines().collect();
    assert_eq!(lines[0], "index,score,anomalous");
    assert_eq!(lines.len(), 5);

    let explained = ok(d, &["--config", "small.toml", "explain", "--model", "m.json", "--data", "d/test.csv", "--row", "0"]);
    let mut it = explained.lines();
    let meta = it.next().unwrap();
    for key in ["lambda_used=", "iterations=", "final_mse=", "converged="] {
        assert!(meta.contains(key), "{meta}");
    }
    assert_eq!(it.next().unwrap(), "dimension_index,feature_name,eta,abs_rank");
    let rows: Vec<Vec<&str>> = it.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 30);
    let mut ranks: Vec<usize> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    ranks.sort_unstable();
    assert_eq!(ranks, (1..=30).collect::<Vec<_>>());
    assert!(rows.iter().any(|r| r[2].parse::<f64>().unwrap() != 0.0 || meta.contains("iterations=0")));
}

#[test]
fn seeded_commands_are_reproducible() {
    let dir = small_workspace();
    let d = dir.path();
    for name in ["a.json", "b.json"] {
        ok(d, &["--config", "small.toml", "--seed", "11", "train", "--data", "d/train.csv", "--out", name]);
    }
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("b.json")).unwrap());
    let a = ok(d, &["explain", "--model", "a.json", "--data", "d/test.csv", "--row", "1"]);
    let b = ok(d, &["explain", "--model", "b.json", "--data", "d/test.csv", "--row", "1"]);
    assert_eq!(a, b);

    // the environment seed applies when neither flag nor config sets one
    let env = |seed: &str, out: &str| {
        let o = bin()
            .current_dir(d)
            .env("ANOMALENS_SEED", seed)
            .args(["--config", "small.toml", "train", "--data", "d/train.csv", "--out", out])
            .output()
            .unwrap();
        assert!(o.status.success());
    };
    env("11", "c.json");
    assert_eq!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("c.json")).unwrap());
    env("12", "e.json");
    assert_ne!(std::fs::read(d.join("a.json")).unwrap(), std::fs::read(d.join("e.json")).unwrap());
}

#[test]
fn eval_commands() {
    let dir = small_workspace();
    let d = dir.path();
    std::fs::write(d.join("s.csv"), "index,score\n0,0.9\n1,0.1\n2,0.4\n3,0.4\n").unwrap();
    std::fs::write(d.join("l.csv"), "anomalous\n1\n0\n1\n0\n").unwrap();
    let out = ok(d, &["eval-roc", "--scores", "s.csv", "--labels", "l.csv", "--out", "roc.csv"]);
    assert_eq!(out.trim(), "auroc,0.875");
    assert!(std::fs::read_to_string(d.join("roc.csv")).unwrap().starts_with("threshold,fpr,tpr"));

    let mut scores = String::from("score\n");
    for t in 0..40 {
        scores += if t == 20 { "5.0\n" } else { "0.1\n" };
    }
    std::fs::write(d.join("series.csv"), scores).unwrap();
    std::fs::write(d.join("ev.csv"), "timestamp,duration,type,tag,affected\n20,1,x,spike,\n").unwrap();
    let out = ok(d, &["eval-events", "--scores", "series.csv", "--events", "ev.csv", "--threshold", "1.0", "--window", "2"]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(&row[1..], &["1.0", "0.0", "1", "1", "false"]);
}

#[test]
fn multimodal_cli_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("mm.toml"),
        "[multimodal]\nn_train = 200\nn_test = 100\npretrain_epochs = 3\nfinetune_epochs = 3\nn_faults = 3\n",
    )
    .unwrap();
    ok(d, &["--config", "mm.toml", "simulate", "--mode", "multimodal", "--out", "mm"]);
    let data = |split: &str| -> Vec<String> {
        ["flow", "mib", "syslog"].iter().map(|t| format!("{t}=mm/{split}_{t}.csv")).collect()
    };
    let mut args = vec!["--config", "mm.toml", "train", "--kind", "multimodal", "--out", "mm.json"];
    let train = data("train");
    for t in &train {
        args.extend(["--data", t.as_str()]);
    }
    ok(d, &args);
    let test = data("test");
    let mut args = vec!["score", "--multimodal", "--model", "mm.json"];
    for t in &test {
        args.extend(["--data", t.as_str()]);
    }
    let out = ok(d, &args);
    assert_eq!(out.lines().next().unwrap(), "index,score,mse_flow,mse_mib,mse_syslog,anomalous");
    assert_eq!(out.lines().count(), 101);

    // plain scoring of a multimodal model is a usage error
    let out = run(d, &["score", "--model", "mm.json", "--data", "mm/test_flow.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let dir = small_workspace();
    let d = dir.path();
    assert_eq!(run(d, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(d, &["--help"]).status.code(), Some(0));
    assert_eq!(run(d, &["--version"]).status.code(), Some(0));

    let missing = run(d, &["score", "--model", "absent.json", "--data", "d/test.csv"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.json"));

    std::fs::write(d.join("typo.toml"), "train.epoch = 3\n").unwrap();
    let typo = run(d, &["--config", "typo.toml", "simulate", "--mode", "sim61", "--out", "x"]);
    assert_eq!(typo.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&typo.stderr).contains("train.epoch"));

    std::fs::write(d.join("bad.csv"), "a,b\n1,2\n3,oops\n").unwrap();
    let bad = run(d, &["train", "--data", "bad.csv", "--out", "m.json"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("bad.csv:3"));

    std::fs::write(d.join("diverge.toml"), "train.learning_rate = 1e12\ntrain.epochs = 50\n").unwrap();
    let div = run(d, &["--config", "diverge.toml", "train", "--data", "d/train.csv", "--out", "m.json"]);
    assert_eq!(div.status.code(), Some(3), "{}", String::from_utf8_lossy(&div.stderr));

    let nsl = run(d, &["experiment", "nslkdd", "--data-dir", "nowhere", "--out", "o"]);
    assert_eq!(nsl.status.code(), Some(2));
}

#[test]
fn sim61_experiment_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("fast.toml"), "sim61.runs = 2\ntrain.epochs = 50\n").unwrap();
    let out = ok(d, &["--config", "fast.toml", "experiment", "sim61", "--scale", "0.1", "--out", "o", "--emit-plotdata"]);
    assert!(out.starts_with("metric,n_faulty,beta,gamma,recall,precision"));
    let files: Vec<String> = std::fs::read_dir(d.join("o"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(files.iter().any(|f| f.contains("manifest")), "{files:?}");
    assert!(files.iter().any(|f| f.contains("plotdata")), "{files:?}");
}
