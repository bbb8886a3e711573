use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn eqn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqn"))
        .args(args)
        .env("EQN_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, name: &str, seed: u64, samples: usize) {
    let spec = dir.join(format!("{name}_spec.json"));
    fs::write(
        &spec,
        format!(r#"{{"labels": 3, "samples": {samples}, "seed": {seed}}}"#),
    )
    .unwrap();
    let out = eqn(&[
        "synth",
        "--spec",
        p(&spec),
        "--out",
        p(&dir.join(format!("{name}.csv"))),
        "--latent",
        p(&dir.join(format!("{name}_latent.csv"))),
        "--vocab-out",
        p(&dir.join("vocab.txt")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn end_to_end_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    synth(d, "train", 1, 300);
    synth(d, "test", 2, 80);
    fs::write(
        d.join("config.json"),
        format!(
            r#"{{"train": "{}", "test": "{}", "vocab": "{}", "pipeline": {{"train": {{"epochs": 5}}}}}}"#,
            p(&d.join("train.csv")),
            p(&d.join("test.csv")),
            p(&d.join("vocab.txt"))
        ),
    )
    .unwrap();

    let run = d.join("run");
    let out = eqn(&[
        "--threads",
        "2",
        "run",
        "--config",
        p(&d.join("config.json")),
        "--mode",
        "eqn",
        "--seed",
        "7",
        "--out",
        p(&run),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(run.join("train_regressed.csv").exists());
    let report = fs::read_to_string(run.join("report.json")).unwrap();
    assert!(report.contains("\"seed\": 7"));

    let annotated = d.join("annotated.csv");
    let out = eqn(&[
        "annotate",
        "--checkpoint",
        p(&run.join("model2.ckpt")),
        "--input",
        p(&d.join("test.csv")),
        "--vocab",
        p(&d.join("vocab.txt")),
        "--out",
        p(&annotated),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let ev = d.join("eval");
    let out = eqn(&[
        "eval",
        "--input",
        p(&annotated),
        "--policy",
        "threshold",
        "--threshold",
        "2.5",
        "--out",
        p(&ev),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = fs::read_to_string(ev.join("report.json")).unwrap();
    assert!(report.contains("\"threshold\": 2.5"));
    assert!(fs::read_to_string(ev.join("hit_table.csv"))
        .unwrap()
        .starts_with("# eqn config="));

    let out = eqn(&["pearson", "--input", p(&annotated), "--out", p(&ev)]);
    assert!(out.status.success());
    let first = fs::read_to_string(ev.join("pearson.csv")).unwrap();
    assert!(first.starts_with("# eqn config="));
    assert!(fs::read_to_string(ev.join("pearson.svg"))
        .unwrap()
        .starts_with("<!-- eqn config="));
}

#[test]
fn exit_codes_follow_error_class() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    // usage: unknown flag, unknown config key
    assert_eq!(eqn(&["run", "--bogus"]).status.code(), Some(1));
    fs::write(d.join("bad.json"), r#"{"train": "a", "test": "b", "colour": 1}"#).unwrap();
    assert_eq!(
        eqn(&["run", "--config", p(&d.join("bad.json")), "--out", p(d)])
            .status
            .code(),
        Some(1)
    );

    // data: compact file where intensities are required
    synth(d, "train", 1, 30);
    let out = eqn(&[
        "eval",
        "--input",
        p(&d.join("train.csv")),
        "--vocab",
        p(&d.join("vocab.txt")),
        "--out",
        p(d),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("intensity"));

    // numerical: a learning rate that blows up
    synth(d, "test", 2, 20);
    fs::write(
        d.join("hot.json"),
        format!(
            r#"{{"train": "{}", "test": "{}", "vocab": "{}", "pipeline": {{"train": {{"learning_rate": 1e6}}}}}}"#,
            p(&d.join("train.csv")),
            p(&d.join("test.csv")),
            p(&d.join("vocab.txt"))
        ),
    )
    .unwrap();
    let out = eqn(&[
        "run",
        "--config",
        p(&d.join("hot.json")),
        "--mode",
        "coeqn",
        "--out",
        p(&d.join("r")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lower the learning rate"));
}

#[test]
fn init_writes_full_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("v.txt"), "joy\nsadness\nsurprise\n").unwrap();
    fs::write(d.join("c.csv"), "text,labels\nhappy and surprised,\"0,2\"\nnothing,\n").unwrap();
    let out = eqn(&[
        "init",
        "--input",
        p(&d.join("c.csv")),
        "--vocab",
        p(&d.join("v.txt")),
        "--out",
        p(&d.join("f.csv")),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(d.join("f.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# eqn config="));
    assert_eq!(lines[1], "\"text\",\"labels\",\"joy\",\"sadness\",\"surprise\"");
    assert_eq!(lines[2], "\"happy and surprised\",\"0,2\",10.00,0.00,10.00");
    assert_eq!(lines[3], "\"nothing\",\"\",0.00,0.00,0.00");
}
