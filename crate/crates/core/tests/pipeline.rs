use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cerank::baselines::BaselineKind;
use cerank::config::{Config, ModelSpec};
use cerank::pipeline::{self, Paths};
use cerank::synth;
use cerank::Error;

fn small_config() -> Config {
    let mut cfg = Config::default().with_seed(11);
    cfg.synth.n_neighborhoods = 24;
    cfg.synth.tweets_per_neighborhood = (80f64.ln(), 0.2);
    cfg.synth.user_pool = 600;
    cfg.corpus.top_percent = 100.0;
    cfg.text.min_token_df = 5;
    cfg.text.bigram_min_count = 5;
    cfg.features.lda.topics = 4;
    cfg.features.lda.iterations = 30;
    cfg.features.embed.epochs = 3;
    cfg.features.embed.infer_epochs = 5;
    cfg.ranker.forest.n_trees = 15;
    cfg.report.topk_percents = vec![50.0, 100.0];
    cfg
}

struct Fixture {
    _dir: tempfile::TempDir,
    paths: Paths,
}

fn fixture(cfg: &Config) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth::generate(&cfg.synth).unwrap().write(&data).unwrap();
    let work = dir.path().join("work");
    let paths = Paths::new(data, &work).with_cache(work.join("cache"));
    Fixture { _dir: dir, paths }
}

/// Every regular file under `dir` except the model cache, by relative path.
fn snapshot(dir: &Path, skip: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.starts_with(skip) {
                continue;
            }
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn rerun_and_cache_give_identical_bytes() {
    let cfg = small_config();
    let fx = fixture(&cfg);
    let first = pipeline::run_all(&cfg, &fx.paths).unwrap();
    let before = snapshot(&fx.paths.work, &fx.paths.cache);
    for name in [pipeline::EVAL_FILE, pipeline::FEATURES_FILE, pipeline::PAIRS_FILE, pipeline::TAU_TOPK_FILE] {
        assert!(before.contains_key(Path::new(name)), "{name} missing");
    }

    // every model now comes from the cache
    let second = pipeline::run_all(&cfg, &fx.paths).unwrap();
    assert_eq!(first, second);
    assert_eq!(snapshot(&fx.paths.work, &fx.paths.cache), before);

    // and refitting from scratch changes nothing either
    std::fs::remove_dir_all(&fx.paths.cache).unwrap();
    pipeline::report(&cfg, &fx.paths).unwrap();
    assert_eq!(snapshot(&fx.paths.work, &fx.paths.cache), before);
}

#[test]
fn stages_fail_closed_without_their_inputs() {
    let cfg = small_config();
    let fx = fixture(&cfg);
    let err = pipeline::features(&cfg, &fx.paths).unwrap_err();
    assert!(matches!(err, Error::InvalidInput(_)), "{err}");
    assert!(err.to_string().contains("ingest"), "{err}");
    pipeline::ingest(&cfg, &fx.paths).unwrap();
    let err = pipeline::features(&cfg, &fx.paths).unwrap_err();
    assert!(err.to_string().contains("ground-truth"), "{err}");
    pipeline::ground_truth(&cfg, &fx.paths).unwrap();
    let spec = cfg.ranker.spec();
    let err = pipeline::rank(&cfg, &fx.paths, &spec, 1.0, None).unwrap_err();
    assert!(err.to_string().contains("features"), "{err}");
}

#[test]
fn corrupt_inputs_are_rejected() {
    let cfg = small_config();
    let fx = fixture(&cfg);
    pipeline::ingest(&cfg, &fx.paths).unwrap();
    pipeline::ground_truth(&cfg, &fx.paths).unwrap();
    let efficacy = fx.paths.work_file(pipeline::EFFICACY_FILE);
    let good = std::fs::read_to_string(&efficacy).unwrap();
    std::fs::write(&efficacy, good.replacen("efficacy", "efficacity", 1)).unwrap();
    assert!(matches!(pipeline::features(&cfg, &fx.paths), Err(Error::Header { .. })));
}

#[test]
fn unreadable_cache_entries_are_refitted() {
    let cfg = small_config();
    let fx = fixture(&cfg);
    let spec = cfg.ranker.spec();
    pipeline::ingest(&cfg, &fx.paths).unwrap();
    pipeline::ground_truth(&cfg, &fx.paths).unwrap();
    pipeline::features(&cfg, &fx.paths).unwrap();
    let trained = pipeline::train(&cfg, &fx.paths, &spec).unwrap();
    assert_eq!(trained.len(), cfg.evaluate.coefficients.len());
    assert!(trained.iter().all(|m| !m.from_cache && m.path.is_file()));
    assert!(trained[0].path.with_extension("toml").is_file());
    let ranking = pipeline::rank(&cfg, &fx.paths, &spec, 1.0, None).unwrap();
    let expected = std::fs::read(fx.paths.work_file(pipeline::RANKING_FILE)).unwrap();

    let last = trained.last().unwrap();
    std::fs::write(&last.path, b"not a model").unwrap();
    let again = pipeline::rank(&cfg, &fx.paths, &spec, 1.0, None).unwrap();
    assert_eq!(again, ranking);
    assert_eq!(std::fs::read(fx.paths.work_file(pipeline::RANKING_FILE)).unwrap(), expected);
    let retrained = pipeline::train(&cfg, &fx.paths, &spec).unwrap();
    assert!(retrained.iter().all(|m| m.from_cache));
}

#[test]
fn outputs_have_documented_columns() {
    let cfg = small_config();
    let fx = fixture(&cfg);
    let report = pipeline::run_all(&cfg, &fx.paths).unwrap();
    assert_eq!(report.curves.len(), 1 + BaselineKind::ALL.len());
    assert_eq!(report.topk.len(), 4);

    let eval = std::fs::read_to_string(fx.paths.work_file(pipeline::EVAL_FILE)).unwrap();
    let mut lines = eval.lines();
    assert_eq!(
        lines.next(),
        Some("model_id,coefficient,tau_x_strict,tau_x_projected,auc_erc_strict,auc_erc_projected")
    );
    assert_eq!(lines.count(), report.curves.len() * 6);

    let spec: ModelSpec = "forest:sentiment+doc2vec".parse().unwrap();
    let ranking = pipeline::rank(&cfg, &fx.paths, &spec, 0.4, None).unwrap();
    let text = std::fs::read_to_string(fx.paths.work_file(pipeline::RANKING_FILE)).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "neighborhood_id,score,rank");
    assert_eq!(rows.len(), ranking.scores.len() + 1);
    // hard scores add up {-1, 0, 1} votes from both pair orders
    let bound = 2.0 * (ranking.scores.len() - 1) as f64;
    assert!(ranking.scores.values().all(|s| s.fract() == 0.0 && s.abs() <= bound));
    let first: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(first[2], "1");

    let coef = std::fs::read_to_string(fx.paths.work_file(pipeline::TAU_COEFFICIENT_FILE)).unwrap();
    assert!(coef.starts_with("model_id,mode,coefficient,tau_x\n"));
    let topk = std::fs::read_to_string(fx.paths.work_file(pipeline::TAU_TOPK_FILE)).unwrap();
    assert!(topk.starts_with("percent,n_neighborhoods,model_id,coefficient,"));
}

#[test]
fn baseline_stage_writes_its_rows() {
    let cfg = small_config();
    let fx = fixture(&cfg);
    pipeline::ingest(&cfg, &fx.paths).unwrap();
    pipeline::ground_truth(&cfg, &fx.paths).unwrap();
    pipeline::features(&cfg, &fx.paths).unwrap();
    let curve = pipeline::baseline(&cfg, &fx.paths, BaselineKind::Tweets).unwrap();
    assert_eq!(curve.model_id, "baseline:tweets");
    assert_eq!(curve.strict.len(), 6);
    let text = std::fs::read_to_string(fx.paths.work_file("baseline_tweets.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
}
