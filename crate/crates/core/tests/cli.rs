use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 3
processes = ["feedforward", "boosted", "jepa", "nurse"]
[data]
synthetic_cases = 150
[feedforward]
epochs = 30
[boosted]
rounds = 20
[jepa]
epochs = 30
"#;

fn triage(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_triage")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn stages_compose_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    let base = ["--config", "run.toml"];
    let run = |extra: &[&str]| {
        let args: Vec<&str> = base.iter().chain(extra).copied().collect();
        let o = triage(d, &args);
        assert_eq!(code(&o), 0, "{extra:?}: {}", stderr(&o));
    };

    run(&["generate", "--format", "jsonl"]);
    let cohort = d.join("out/cohort.jsonl");
    assert_eq!(fs::read_to_string(&cohort).unwrap().lines().count(), 150);
    run(&["--cohort", "out/cohort.jsonl", "split"]);
    let train = fs::read_to_string(d.join("out/train.csv")).unwrap();
    let test = fs::read_to_string(d.join("out/test.csv")).unwrap();
    assert_eq!((train.lines().count() - 1, test.lines().count() - 1), (120, 30));

    run(&["--cohort", "out/cohort.jsonl", "train"]);
    for m in ["feedforward", "boosted", "jepa"] {
        assert!(d.join(format!("out/models/{m}.json")).exists());
    }
    run(&["--cohort", "out/cohort.jsonl", "predict"]);
    let preds = fs::read_to_string(d.join("out/predictions.jsonl")).unwrap();
    assert_eq!(preds.lines().count(), 4 * 30);
    assert!(preds.contains("\"label\"") && preds.contains("\"probs\""));

    run(&["--cohort", "out/cohort.jsonl", "evaluate"]);
    run(&["--cohort", "out/cohort.jsonl", "calibrate"]);
    run(&["--cohort", "out/cohort.jsonl", "rank"]);
    for f in ["report.json", "tables/ranking.csv", "tables/calibration.csv", "tables/composite.csv", "calibration.json"] {
        assert!(d.join("out").join(f).exists(), "{f}");
    }
    for cmd in ["generate", "split", "train", "predict", "evaluate", "calibrate", "rank"] {
        let m: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join(format!("out/manifest-{cmd}.json"))).unwrap()).unwrap();
        assert_eq!(m["command"], cmd);
        assert!(!m["artifacts"].as_object().unwrap().is_empty());
    }
    let ranking = fs::read_to_string(d.join("out/tables/composite.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 1 + 5);

    // the same process subset evaluated from the file on its own
    run(&["--cohort", "out/cohort.jsonl", "--processes", "boosted,nurse", "--out", "sub", "evaluate", "--predictions", "out/predictions.jsonl"]);
    let sub = fs::read_to_string(d.join("sub/tables/ranking.csv")).unwrap();
    assert_eq!(sub.lines().count(), 1 + 3);
}

#[test]
fn report_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("run.toml"), SMALL).unwrap();
    let o = triage(d, &["--config", "run.toml", "--seed", "8", "--input-variant", "structured", "--out", "r", "report"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["seed"], 8);
    assert_eq!(m["config"]["input_variant"], "structured");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r/report.json")).unwrap()).unwrap();
    assert!(report.is_object());

    let g = triage(d, &["--config", "run.toml", "--label-system", "gemsa", "--processes", "boosted", "--out", "g", "report"]);
    assert_eq!(code(&g), 0, "{}", stderr(&g));
}

#[test]
fn rank_recomputes_a_metrics_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("t.csv"),
        "process,mae,rmse,kappa,spearman\nA,0.228,0.790,0.800,0.802\nB,0.401,0.979,0.560,0.602\nC,0.637,1.180,0.370,0.005\nD,1.393,1.834,0.080,0.024\n",
    )
    .unwrap();
    let o = triage(d, &["--out", "o", "rank", "--table", "t.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_path(d.join("o/tables/composite.csv")).unwrap();
    let rows: Vec<(String, f64)> =
        r.records().map(|x| x.unwrap()).map(|x| (x[0].to_string(), x[5].parse().unwrap())).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[4].0, "gold");
    assert!(rows.iter().map(|r| r.1).sum::<f64>().abs() < 1e-9);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("bad.toml"), "seed = \"a\"\n").unwrap();
    fs::write(d.join("unknown.toml"), "sed = 1\n").unwrap();

    assert_eq!(code(&triage(d, &["--config", "bad.toml", "report"])), 2);
    assert_eq!(code(&triage(d, &["--config", "unknown.toml", "report"])), 2);
    assert_eq!(code(&triage(d, &["--config", "missing.toml", "report"])), 2);
    assert_eq!(code(&triage(d, &["--label-system", "klingon", "report"])), 2);
    assert_eq!(code(&triage(d, &["frobnicate"])), 2);
    assert_eq!(code(&triage(d, &["--label-system", "gemsa", "--processes", "nurse", "report"])), 2);

    let missing = triage(d, &["evaluate", "--predictions", "nope.jsonl"]);
    assert_eq!(code(&missing), 3);
    assert!(stderr(&missing).contains("[predictions]"), "{}", stderr(&missing));
    fs::write(d.join("broken.jsonl"), "{\"case_id\":\"a\",\"process\":\"x\",\"probs\":[1,0]}\n").unwrap();
    assert_eq!(code(&triage(d, &["evaluate", "--predictions", "broken.jsonl"])), 3);
    assert_eq!(code(&triage(d, &["--cohort", "absent.csv", "split"])), 3);

    // rows identical to the appended gold row leave zero spread
    fs::write(d.join("flat.csv"), "process,mae,rmse,kappa,spearman\nA,0,0,1,1\nB,0,0,1,1\n").unwrap();
    let flat = triage(d, &["--out", "o", "rank", "--table", "flat.csv"]);
    assert_eq!(code(&flat), 4, "{}", stderr(&flat));

    assert_eq!(code(&triage(d, &["--help"])), 0);
}
