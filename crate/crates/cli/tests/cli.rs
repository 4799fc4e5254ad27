use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
seed = 5

[corpus]
top_percent = 100.0

[text]
min_token_df = 5
bigram_min_count = 5

[features.lda]
topics = 4
iterations = 30

[features.embed]
epochs = 3
infer_epochs = 5

[ranker.forest]
n_trees = 15

[report]
topk_percents = [50.0, 100.0]

[synth]
n_neighborhoods = 24
user_pool = 600
"#;

fn cerank(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cerank"))
        .current_dir(dir)
        .env("CERANK_CACHE_DIR", dir.join("models"))
        .env_remove("RUST_LOG")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cerank(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = cerank(dir.path(), &["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["synth", "ingest", "ground-truth", "features", "train", "rank", "baseline", "evaluate", "report"] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    assert_eq!(cerank(dir.path(), &["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cerank(dir.path(), &["ingest", "--bogus"]).status.code(), Some(2));
    assert_eq!(cerank(dir.path(), &["baseline", "--kind", "nope"]).status.code(), Some(2));
    let out = cerank(dir.path(), &["--coefficients", "0,0.5,0.2", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cerank(dir.path(), &["ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = cerank(dir.path(), &["--config", "absent.toml", "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[corpus]\nsplit_fracton = 0.5\n").unwrap();
    let out = cerank(dir.path(), &["--config", "bad.toml", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split_fracton"));
}

#[test]
fn synth_is_reproducible_per_seed() {
    let dir = setup();
    let d = dir.path();
    ok(d, &["--config", "small.toml", "synth", "--out", "a"]);
    ok(d, &["--config", "small.toml", "synth", "--out", "b"]);
    ok(d, &["--config", "small.toml", "--seed", "6", "synth", "--out", "c"]);
    for name in ["tweets.jsonl", "neighborhoods.csv", "surveys.csv"] {
        let a = std::fs::read(d.join("a").join(name)).unwrap();
        assert_eq!(a, std::fs::read(d.join("b").join(name)).unwrap(), "{name}");
        if name == "tweets.jsonl" {
            assert_ne!(a, std::fs::read(d.join("c").join(name)).unwrap());
        }
    }
}

#[test]
fn full_stage_sequence() {
    let dir = setup();
    let d = dir.path();
    let cfg = ["--config", "small.toml"];
    let with = |rest: &[&str]| -> Vec<String> { cfg.iter().chain(rest).map(|s| s.to_string()).collect() };
    let run = |rest: &[&str]| {
        let args = with(rest);
        ok(d, &args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    run(&["synth", "--write-config"]);
    assert!(d.join("data/config.toml").is_file());
    assert!(run(&["ingest"]).contains("train"));
    run(&["ground-truth"]);
    run(&["features"]);
    let trained = run(&["train"]);
    assert_eq!(trained.lines().count(), 6);
    assert!(trained.lines().all(|l| l.contains("fitted")));
    assert!(run(&["train"]).lines().all(|l| l.contains("cached")));
    assert!(d.join("models").read_dir().unwrap().count() > 0);

    run(&["rank", "--coefficient", "0.4", "--out", "r.csv"]);
    let ranking = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(ranking.starts_with("neighborhood_id,score,rank\n"));
    assert_eq!(ranking.lines().count(), 25);

    let out = run(&["evaluate", "--classifier", "logreg", "--features", "sentiment,topics", "--coefficients", "0,0.5,1"]);
    assert!(out.contains("logreg:"));
    assert!(out.contains("AUC-ERC (projected)"));
    let eval = std::fs::read_to_string(d.join("work/eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 4);

    let out = run(&["baseline", "--kind", "coordinates", "--axis", "lat", "--direction", "desc"]);
    assert!(out.contains("baseline:coordinates"));
    assert!(d.join("work/baseline_coordinates.csv").is_file());

    run(&["report"]);
    let first = std::fs::read(d.join("work/eval.csv")).unwrap();
    for f in ["tau_vs_coefficient.csv", "tau_vs_topk.csv"] {
        assert!(d.join("work").join(f).is_file(), "{f}");
    }
    std::fs::remove_dir_all(d.join("models")).unwrap();
    run(&["report"]);
    assert_eq!(std::fs::read(d.join("work/eval.csv")).unwrap(), first);
}
