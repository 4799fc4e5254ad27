//! Stage drivers: ingest, ground truth, features, train, rank, evaluate,
//! baselines and report. Each stage reads the files written by the stages
//! before it, so the command line can run them one at a time.
//!
//! Trained rankers are cached under `CERANK_CACHE_DIR` (default
//! `<work>/cache`) keyed by a digest of everything that determines them;
//! a cache hit and a fresh fit give the same bytes downstream.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::artifact::{self, ArtifactKind};
use crate::baselines::{rank_by_coordinates, rank_by_metric, BaselineKind};
use crate::config::{Config, ModelSpec};
use crate::corpus::io::{self, csv_err, finish_csv, NeighborhoodStats};
use crate::corpus::{
    associate_tweets, compute_ground_truth, select_top_percent, temporal_split, Association, EfficacyTable, Gazetteer,
    Neighborhood, TweetRecord,
};
use crate::error::{Error, Result};
use crate::features::embed::{train_doc_embedder, DocEmbedder};
use crate::features::lda::{rpc_select, train_lda, LdaConfig, RpcCurve, TopicModel};
use crate::features::sentiment::{sentiment_distribution, LexiconScorer, SentimentScorer};
use crate::features::spatial::PairContext;
use crate::features::tfidf::{build_crime_vocabulary, normalize_lexicon, tfidf_vector, CrimeVocabulary};
use crate::features::vocab::PruneConfig;
use crate::features::NeighborhoodFeatures;
use crate::metrics::{
    auc_erc, population_std, random_baseline, tau_x, tau_x_projected, weak_ordering_from_values, ScoreMatrix, TauMode,
};
use crate::ranker::{
    build_pairs, grid_search, rank_globally, to_dataset, train_matrix, PairVectorizer, RankerConfig, RankingResult,
    TieSpec, TrainedRanker,
};
use crate::synth;
use crate::text::Tokenizer;

pub const CACHE_ENV: &str = "CERANK_CACHE_DIR";

pub const ASSOC_FILE: &str = "assoc.jsonl";
pub const ASSOC_TRAIN_FILE: &str = "assoc_train.jsonl";
pub const ASSOC_TEST_FILE: &str = "assoc_test.jsonl";
pub const STATS_FILE: &str = "neighborhood_stats.csv";
pub const EFFICACY_FILE: &str = "efficacy.csv";
pub const FEATURES_FILE: &str = "features.jsonl";
pub const FEATURES_TEST_FILE: &str = "features_test.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const RPC_FILE: &str = "rpc.csv";
pub const EVAL_FILE: &str = "eval.csv";
pub const RANKING_FILE: &str = "ranking.csv";
pub const TAU_COEFFICIENT_FILE: &str = "tau_vs_coefficient.csv";
pub const TAU_TOPK_FILE: &str = "tau_vs_topk.csv";
pub const MODELS_DIR: &str = "models";

pub const EVAL_HEADER: &[&str] = &[
    "model_id",
    "coefficient",
    "tau_x_strict",
    "tau_x_projected",
    "auc_erc_strict",
    "auc_erc_projected",
];
pub const RANKING_HEADER: &[&str] = &["neighborhood_id", "score", "rank"];

/// Where inputs, stage outputs and cached models live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Paths {
    pub data: PathBuf,
    pub work: PathBuf,
    pub cache: PathBuf,
}

impl Paths {
    /// The cache directory comes from `CERANK_CACHE_DIR` when set.
    pub fn new(data: impl Into<PathBuf>, work: impl Into<PathBuf>) -> Self {
        let work = work.into();
        let cache = std::env::var_os(CACHE_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| work.join("cache"));
        Paths {
            data: data.into(),
            work,
            cache,
        }
    }

    pub fn with_cache(mut self, cache: impl Into<PathBuf>) -> Self {
        self.cache = cache.into();
        self
    }

    pub fn data_file(&self, name: &str) -> PathBuf {
        self.data.join(name)
    }

    pub fn work_file(&self, name: &str) -> PathBuf {
        self.work.join(name)
    }
}

fn require(path: &Path, stage: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "{} not found; run `{stage}` first",
            path.display()
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestSummary {
    pub tweets: usize,
    pub train_tweets: usize,
    pub test_tweets: usize,
    /// Tweets assigned to at least one neighborhood.
    pub placed_tweets: usize,
    pub neighborhoods: usize,
}

/// Splits tweets chronologically and assigns every part to neighborhoods.
pub fn ingest(cfg: &Config, paths: &Paths) -> Result<IngestSummary> {
    let tweets = io::read_tweets(&paths.data_file(synth::TWEETS_FILE))?;
    let entries = io::read_gazetteer(&paths.data_file(synth::GAZETTEER_FILE))?;
    let gazetteer = Gazetteer::new(&entries)?.with_policy(cfg.corpus.ambiguity);
    let split = temporal_split(&tweets, cfg.corpus.split_fraction)?;
    let all = associate_tweets(&tweets, &gazetteer);
    let train = associate_tweets(&split.train, &gazetteer);
    let test = associate_tweets(&split.test, &gazetteer);
    io::write_association(&paths.work_file(ASSOC_FILE), &all)?;
    io::write_association(&paths.work_file(ASSOC_TRAIN_FILE), &train)?;
    io::write_association(&paths.work_file(ASSOC_TEST_FILE), &test)?;
    io::write_stats(&paths.work_file(STATS_FILE), &all)?;
    let placed: BTreeSet<&str> = all.rows().into_iter().map(|(t, _)| t).collect();
    Ok(IngestSummary {
        tweets: tweets.len(),
        train_tweets: split.train.len(),
        test_tweets: split.test.len(),
        placed_tweets: placed.len(),
        neighborhoods: all.tweets.len(),
    })
}

pub fn ground_truth(cfg: &Config, paths: &Paths) -> Result<EfficacyTable> {
    let reports = io::read_surveys(&paths.data_file(synth::SURVEYS_FILE))?;
    let table = compute_ground_truth(&reports, cfg.corpus.min_reports)?;
    io::write_efficacy(&paths.work_file(EFFICACY_FILE), &table)?;
    Ok(table)
}

fn load_association(path: &Path, by_id: &HashMap<&str, &TweetRecord>) -> Result<Association> {
    require(path, "ingest")?;
    let mut assoc = Association::default();
    for (tweet_id, hood) in io::read_association(path)? {
        let t = by_id.get(tweet_id.as_str()).ok_or_else(|| {
            Error::invalid(format!("{}: tweet {tweet_id} is not in the corpus", path.display()))
        })?;
        assoc.tweets.entry(hood).or_default().push((*t).clone());
    }
    Ok(assoc)
}

fn prune_config(cfg: &Config) -> PruneConfig {
    PruneConfig {
        min_df: cfg.text.min_token_df,
        max_doc_fraction: cfg.text.max_doc_fraction,
        bigram_min_count: cfg.text.bigram_min_count,
    }
}

/// Models fitted on the training tweets that turn a neighborhood's tweets
/// into its feature blocks.
pub struct FeatureModels {
    pub crime: CrimeVocabulary,
    pub topics: TopicModel,
    pub embedder: DocEmbedder,
    pub sentiment: LexiconScorer,
    pub rpc: Option<RpcCurve>,
}

impl FeatureModels {
    pub fn extract(&self, id: &str, tweets: &[Vec<String>]) -> Result<NeighborhoodFeatures> {
        let (topics, topics_fallback) = self.topics.topic_distribution(tweets);
        let (embedding, embedding_fallback) = self.embedder.embed_neighborhood(tweets);
        let scorers: [&dyn SentimentScorer; 1] = [&self.sentiment];
        Ok(NeighborhoodFeatures {
            neighborhood_id: id.to_string(),
            tfidf: tfidf_vector(tweets, &self.crime),
            topics,
            embedding,
            sentiment: sentiment_distribution(tweets, &scorers)?,
            topics_fallback,
            embedding_fallback,
        })
    }
}

fn fit_topics(cfg: &Config, docs: &[Vec<String>]) -> Result<(TopicModel, Option<RpcCurve>)> {
    let prune = prune_config(cfg);
    let mut lda = cfg.features.lda.clone();
    let mut curve = None;
    if !cfg.features.topic_counts.is_empty() {
        let stride = (1.0 / cfg.features.heldout_fraction).round().max(2.0) as usize;
        let (held, fit): (Vec<_>, Vec<_>) = docs.iter().enumerate().partition(|(i, _)| i % stride == 0);
        let held: Vec<Vec<String>> = held.into_iter().map(|(_, d)| d.clone()).collect();
        let fit: Vec<Vec<String>> = fit.into_iter().map(|(_, d)| d.clone()).collect();
        let (best, c) = rpc_select(&cfg.features.topic_counts, |k| {
            let m = train_lda(&fit, prune, &LdaConfig { topics: k, ..lda.clone() })?;
            let p = m.perplexity(&held)?;
            log::info!("topics={k} held-out perplexity={p}");
            Ok(p)
        })?;
        log::info!("selected {best} topics by rate of perplexity change");
        lda.topics = best;
        curve = Some(c);
    }
    Ok((train_lda(docs, prune, &lda)?, curve))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSummary {
    pub neighborhoods: usize,
    pub training_documents: usize,
    pub topics: usize,
    pub crime_terms: usize,
    pub active: usize,
}

/// Fits the text models on training tweets and writes per-neighborhood
/// feature blocks for both halves of the split, plus pairwise quantities
/// for the configured active set.
pub fn features(cfg: &Config, paths: &Paths) -> Result<FeatureSummary> {
    let tokenizer = Tokenizer::from_config(&cfg.text)?;
    let tweets = io::read_tweets(&paths.data_file(synth::TWEETS_FILE))?;
    let by_id: HashMap<&str, &TweetRecord> = tweets.iter().map(|t| (t.tweet_id.as_str(), t)).collect();
    let train = load_association(&paths.work_file(ASSOC_TRAIN_FILE), &by_id)?;
    let test = load_association(&paths.work_file(ASSOC_TEST_FILE), &by_id)?;
    let efficacy_path = paths.work_file(EFFICACY_FILE);
    require(&efficacy_path, "ground-truth")?;
    let efficacy = io::read_efficacy(&efficacy_path)?;

    let eligible: Vec<String> = train
        .tweets
        .keys()
        .filter(|id| efficacy.get(id).is_some())
        .cloned()
        .collect();
    if eligible.len() < 2 {
        return Err(Error::invalid(format!(
            "{} neighborhood(s) have both training tweets and ground truth; at least two are needed",
            eligible.len()
        )));
    }

    let tokens: HashMap<&str, Vec<String>> = tweets
        .par_iter()
        .map(|t| (t.tweet_id.as_str(), tokenizer.tokenize(&t.text)))
        .collect();
    let docs_of = |assoc: &Association| -> BTreeMap<String, Vec<Vec<String>>> {
        eligible
            .iter()
            .map(|id| {
                let docs = assoc
                    .tweets
                    .get(id)
                    .map(|ts| ts.iter().map(|t| tokens[t.tweet_id.as_str()].clone()).collect())
                    .unwrap_or_default();
                (id.clone(), docs)
            })
            .collect()
    };
    let train_docs = docs_of(&train);
    let test_docs = docs_of(&test);

    // Each placed training tweet is one document for the topic and
    // embedding models, whatever number of neighborhoods it went to.
    let corpus_ids: BTreeSet<&str> = eligible
        .iter()
        .flat_map(|id| train.tweets[id].iter().map(|t| t.tweet_id.as_str()))
        .collect();
    let corpus: Vec<Vec<String>> = corpus_ids.iter().map(|id| tokens[id].clone()).collect();

    let lexicon = io::read_lexicon(&paths.data_file(synth::CRIME_LEXICON_FILE))?;
    let crime = build_crime_vocabulary(
        &train_docs,
        &normalize_lexicon(&lexicon, &tokenizer),
        cfg.features.vocabulary_size,
    )?;
    let sentiment_terms = io::read_sentiment_lexicon(&paths.data_file(synth::SENTIMENT_LEXICON_FILE))?;
    let sentiment = LexiconScorer::new(&sentiment_terms, &tokenizer)?;
    let (topics, rpc) = fit_topics(cfg, &corpus)?;
    let (embedder, _) = train_doc_embedder(&corpus, prune_config(cfg), &cfg.features.embed)?;
    let models = FeatureModels {
        crime,
        topics,
        embedder,
        sentiment,
        rpc,
    };

    let extract_all = |docs: &BTreeMap<String, Vec<Vec<String>>>| -> Result<Vec<NeighborhoodFeatures>> {
        docs.par_iter().map(|(id, d)| models.extract(id, d)).collect()
    };
    write_features(&paths.work_file(FEATURES_FILE), &extract_all(&train_docs)?)?;
    write_features(&paths.work_file(FEATURES_TEST_FILE), &extract_all(&test_docs)?)?;

    let dir = paths.work_file(MODELS_DIR);
    artifact::write(&dir.join("crime_vocabulary.bin"), ArtifactKind::CrimeVocabulary, &models.crime)?;
    artifact::write(&dir.join("topics.bin"), ArtifactKind::TopicModel, &models.topics)?;
    artifact::write(&dir.join("embedder.bin"), ArtifactKind::Embedder, &models.embedder)?;
    if let Some(curve) = &models.rpc {
        write_rpc(&paths.work_file(RPC_FILE), curve)?;
    }

    let exp = Experiment::load(cfg, paths)?;
    let active = exp.active_set(cfg.corpus.top_percent)?;
    write_pairs(&paths.work_file(PAIRS_FILE), &active)?;
    Ok(FeatureSummary {
        neighborhoods: eligible.len(),
        training_documents: corpus.len(),
        topics: models.topics.k,
        crime_terms: models.crime.len(),
        active: active.ids.len(),
    })
}

fn json_line<T: Serialize>(value: &T, out: &mut String) -> Result<()> {
    out.push_str(&serde_json::to_string(value).map_err(|e| Error::Serialization(e.to_string()))?);
    out.push('\n');
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_features(path: &Path, features: &[NeighborhoodFeatures]) -> Result<()> {
    let mut out = String::new();
    for f in features {
        json_line(f, &mut out)?;
    }
    write_file(path, &out)
}

pub fn read_features(path: &Path) -> Result<BTreeMap<String, NeighborhoodFeatures>> {
    require(path, "features")?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    let mut dims = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let f: NeighborhoodFeatures = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        let d = (f.tfidf.len(), f.topics.len(), f.embedding.len());
        if *dims.get_or_insert(d) != d {
            return Err(bad(format!("{} has block sizes {d:?}, earlier rows {:?}", f.neighborhood_id, dims.unwrap())));
        }
        if out.insert(f.neighborhood_id.clone(), f).is_some() {
            return Err(bad("duplicate neighborhood id".into()));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct PairLine<'a> {
    split: &'a str,
    i: &'a str,
    j: &'a str,
    distance_norm: f64,
    common_users: f64,
}

fn write_pairs(path: &Path, active: &ActiveSet) -> Result<()> {
    let mut out = String::new();
    for (split, ctx) in [("train", &active.train_context), ("test", &active.test_context)] {
        for (a, i) in active.ids.iter().enumerate() {
            for j in &active.ids[a + 1..] {
                let pf = ctx.pair_features(i, j)?;
                let line = PairLine {
                    split,
                    i,
                    j,
                    distance_norm: pf.distance_norm,
                    common_users: pf.common_users,
                };
                json_line(&line, &mut out)?;
            }
        }
    }
    write_file(path, &out)
}

fn write_rpc(path: &Path, curve: &RpcCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["topics", "perplexity", "rpc"]).map_err(csv_err)?;
    for (i, (k, p)) in curve.topic_counts.iter().zip(&curve.perplexities).enumerate() {
        let rpc = if i == 0 { String::new() } else { curve.rpc[i - 1].to_string() };
        w.write_record([k.to_string(), p.to_string(), rpc]).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

/// The neighborhoods being ranked, their ground truth and the pairwise
/// context of each half of the split.
pub struct ActiveSet {
    pub percent: f64,
    /// Sorted ids.
    pub ids: Vec<String>,
    pub truth: BTreeMap<String, f64>,
    /// Population standard deviation of `truth`.
    pub sigma: f64,
    pub train_context: PairContext,
    pub test_context: PairContext,
}

impl ActiveSet {
    pub fn reference(&self, coefficient: f64) -> Result<ScoreMatrix> {
        weak_ordering_from_values(&self.truth, coefficient * self.sigma)
    }
}

/// One τ_x curve over the tie coefficients in both evaluation modes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    pub model_id: String,
    pub coefficients: Vec<f64>,
    pub strict: Vec<f64>,
    pub projected: Vec<f64>,
    pub auc_strict: f64,
    pub auc_projected: f64,
}

impl EvalCurve {
    pub fn new(model_id: String, coefficients: Vec<f64>, strict: Vec<f64>, projected: Vec<f64>) -> Result<Self> {
        let auc_strict = auc_erc(&coefficients, &strict)?;
        let auc_projected = auc_erc(&coefficients, &projected)?;
        Ok(EvalCurve {
            model_id,
            coefficients,
            strict,
            projected,
            auc_strict,
            auc_projected,
        })
    }

    pub fn tau(&self, mode: TauMode) -> &[f64] {
        match mode {
            TauMode::Strict => &self.strict,
            TauMode::Projected => &self.projected,
        }
    }

    pub fn auc(&self, mode: TauMode) -> f64 {
        match mode {
            TauMode::Strict => self.auc_strict,
            TauMode::Projected => self.auc_projected,
        }
    }

    pub fn tau_at(&self, coefficient: f64, mode: TauMode) -> Option<f64> {
        let i = self.coefficients.iter().position(|c| *c == coefficient)?;
        Some(self.tau(mode)[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub coefficient: f64,
    pub path: PathBuf,
    pub from_cache: bool,
}

#[derive(Serialize)]
struct ModelEcho<'a> {
    model_id: String,
    coefficient: f64,
    sigma: f64,
    active_neighborhoods: usize,
    seed: u64,
    grid_scores: Vec<f64>,
    ranker: &'a RankerConfig,
}

fn digest(parts: &[&[u8]]) -> Vec<u8> {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().to_vec()
}

/// Everything the train, rank, evaluate, baseline and report stages need,
/// loaded from the data and work directories.
pub struct Experiment {
    pub config: Config,
    pub paths: Paths,
    pub efficacy: EfficacyTable,
    pub neighborhoods: BTreeMap<String, Neighborhood>,
    pub centroids: BTreeMap<String, (f64, f64)>,
    /// Distinct gazetteer venues located in each neighborhood.
    pub venues: BTreeMap<String, usize>,
    pub stats: BTreeMap<String, NeighborhoodStats>,
    pub train_features: BTreeMap<String, NeighborhoodFeatures>,
    pub test_features: BTreeMap<String, NeighborhoodFeatures>,
    train_assoc: Association,
    test_assoc: Association,
    inputs_digest: Vec<u8>,
}

impl Experiment {
    pub fn load(cfg: &Config, paths: &Paths) -> Result<Self> {
        let hoods_path = paths.data_file(synth::NEIGHBORHOODS_FILE);
        let neighborhoods: BTreeMap<String, Neighborhood> = io::read_neighborhoods(&hoods_path)?
            .into_iter()
            .map(|n| (n.id.clone(), n))
            .collect();
        let centroids = neighborhoods.iter().map(|(k, n)| (k.clone(), n.centroid)).collect();
        let mut venue_sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for e in io::read_gazetteer(&paths.data_file(synth::GAZETTEER_FILE))? {
            venue_sets.entry(e.neighborhood_id).or_default().insert(e.venue_id);
        }
        let venues = venue_sets.into_iter().map(|(k, v)| (k, v.len())).collect();

        let tweets = io::read_tweets(&paths.data_file(synth::TWEETS_FILE))?;
        let by_id: HashMap<&str, &TweetRecord> = tweets.iter().map(|t| (t.tweet_id.as_str(), t)).collect();
        let train_assoc = load_association(&paths.work_file(ASSOC_TRAIN_FILE), &by_id)?;
        let test_assoc = load_association(&paths.work_file(ASSOC_TEST_FILE), &by_id)?;
        let stats_path = paths.work_file(STATS_FILE);
        require(&stats_path, "ingest")?;
        let stats = io::read_stats(&stats_path)?;
        let efficacy_path = paths.work_file(EFFICACY_FILE);
        require(&efficacy_path, "ground-truth")?;
        let efficacy = io::read_efficacy(&efficacy_path)?;
        let train_features = read_features(&paths.work_file(FEATURES_FILE))?;
        let test_features = read_features(&paths.work_file(FEATURES_TEST_FILE))?;
        for id in train_features.keys() {
            if efficacy.get(id).is_none() || !neighborhoods.contains_key(id) || !test_features.contains_key(id) {
                return Err(Error::invalid(format!(
                    "features for {id} do not match the ground truth, neighborhoods or test features; rerun `features`"
                )));
            }
        }

        let mut files = Vec::new();
        for p in [
            paths.work_file(FEATURES_FILE),
            paths.work_file(ASSOC_TRAIN_FILE),
            paths.work_file(EFFICACY_FILE),
            hoods_path,
        ] {
            files.push(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
        }
        let inputs_digest = digest(&files.iter().map(Vec::as_slice).collect::<Vec<_>>());
        Ok(Experiment {
            config: cfg.clone(),
            paths: paths.clone(),
            efficacy,
            neighborhoods,
            centroids,
            venues,
            stats,
            train_features,
            test_features,
            train_assoc,
            test_assoc,
            inputs_digest,
        })
    }

    /// Neighborhoods with features, i.e. with training tweets and ground
    /// truth, and their total tweet counts.
    pub fn eligible_counts(&self) -> BTreeMap<String, usize> {
        self.train_features
            .keys()
            .map(|id| (id.clone(), self.stats.get(id).map_or(0, |s| s.tweets)))
            .collect()
    }

    /// The top `percent` of eligible neighborhoods by tweet count.
    pub fn active_set(&self, percent: f64) -> Result<ActiveSet> {
        let mut ids = select_top_percent(&self.eligible_counts(), percent, self.config.corpus.rounding)?;
        if ids.len() < 2 {
            return Err(Error::invalid(format!(
                "the top {percent}% holds {} neighborhood(s); at least two are needed",
                ids.len()
            )));
        }
        ids.sort();
        let truth = self.efficacy.restrict(&ids)?;
        let sigma = population_std(truth.values().copied());
        Ok(ActiveSet {
            percent,
            train_context: PairContext::new(&ids, &self.centroids, &self.train_assoc)?,
            test_context: PairContext::new(&ids, &self.centroids, &self.test_assoc)?,
            ids,
            truth,
            sigma,
        })
    }

    fn model_key(&self, active: &ActiveSet, spec: &ModelSpec, coefficient: f64) -> Result<String> {
        let ranker = toml::to_string(&self.config.ranker).map_err(|e| Error::Serialization(e.to_string()))?;
        let ids = active.ids.join("\n");
        let d = digest(&[
            &artifact::FORMAT_VERSION.to_le_bytes(),
            &self.inputs_digest,
            spec.id().as_bytes(),
            &coefficient.to_bits().to_le_bytes(),
            ids.as_bytes(),
            ranker.as_bytes(),
            &self.config.ranker_seed().to_le_bytes(),
        ]);
        Ok(hex::encode(d))
    }

    /// Fits the ranker for one tie coefficient on training-split features,
    /// choosing hyperparameters by cross-validation when the grid has more
    /// than one point.
    pub fn fit(&self, active: &ActiveSet, spec: &ModelSpec, coefficient: f64) -> Result<(TrainedRanker, RankerConfig, Vec<f64>)> {
        let tie = TieSpec::new(coefficient, active.sigma)?;
        let vectorizer = PairVectorizer {
            features: &self.train_features,
            context: &active.train_context,
            mask: &spec.mask,
        };
        let pairs = build_pairs(&active.ids, &vectorizer, &self.efficacy, &tie)?;
        let (x, y) = to_dataset(&pairs)?;
        let base = self.config.ranker.models();
        let grid = self.config.ranker.grid.expand(spec.kind, &base);
        let seed = self.config.ranker_seed();
        let (chosen, scores) = if grid.len() > 1 {
            let r = grid_search(&x, &y, spec.kind, &grid, self.config.ranker.folds, seed)?;
            log::info!("{spec} c={coefficient}: grid point {} of {} chosen", r.best_index + 1, grid.len());
            (r.best, r.mean_scores)
        } else {
            (base, Vec::new())
        };
        let model = train_matrix(&x, &y, spec.kind, &chosen, seed)?;
        Ok((model, chosen, scores))
    }

    /// Loads the ranker from the cache or fits and stores it.
    pub fn model(&self, active: &ActiveSet, spec: &ModelSpec, coefficient: f64) -> Result<(TrainedRanker, TrainedModel)> {
        let key = self.model_key(active, spec, coefficient)?;
        let path = self.paths.cache.join(format!("ranker-{key}.bin"));
        if path.is_file() {
            match artifact::read::<TrainedRanker>(&path, ArtifactKind::Ranker) {
                Ok(m) if m.kind() == spec.kind => {
                    log::debug!("cache hit {}", path.display());
                    return Ok((
                        m,
                        TrainedModel {
                            coefficient,
                            path,
                            from_cache: true,
                        },
                    ));
                }
                Ok(_) => log::warn!("{} holds another classifier; refitting", path.display()),
                Err(e) => log::warn!("ignoring unreadable cache entry: {e}"),
            }
        }
        log::info!("fitting {spec} at coefficient {coefficient}");
        let (model, chosen, grid_scores) = self.fit(active, spec, coefficient)?;
        artifact::write(&path, ArtifactKind::Ranker, &model)?;
        let echo = ModelEcho {
            model_id: spec.id(),
            coefficient,
            sigma: active.sigma,
            active_neighborhoods: active.ids.len(),
            seed: self.config.ranker_seed(),
            grid_scores,
            ranker: &chosen,
        };
        let text = toml::to_string(&echo).map_err(|e| Error::Serialization(e.to_string()))?;
        write_file(&path.with_extension("toml"), &text)?;
        Ok((
            model,
            TrainedModel {
                coefficient,
                path,
                from_cache: false,
            },
        ))
    }

    /// Global ranking of the active set from test-split features.
    pub fn rank(&self, active: &ActiveSet, spec: &ModelSpec, model: &TrainedRanker) -> Result<RankingResult> {
        let vectorizer = PairVectorizer {
            features: &self.test_features,
            context: &active.test_context,
            mask: &spec.mask,
        };
        rank_globally(model, &active.ids, &vectorizer, self.config.ranker.score_mode)
    }

    pub fn evaluate_model(&self, active: &ActiveSet, spec: &ModelSpec) -> Result<EvalCurve> {
        let coefficients = self.config.evaluate.coefficients.clone();
        let mut strict = Vec::with_capacity(coefficients.len());
        let mut projected = Vec::with_capacity(coefficients.len());
        for &c in &coefficients {
            let (model, _) = self.model(active, spec, c)?;
            let ranking = self.rank(active, spec, &model)?;
            let reference = active.reference(c)?;
            strict.push(tau_x(&reference, &ranking.ordering)?);
            projected.push(tau_x_projected(&reference, &ranking.ordering)?);
        }
        EvalCurve::new(spec.id(), coefficients, strict, projected)
    }

    fn metric(&self, ids: &[String], value: impl Fn(&str) -> Option<f64>, what: &str) -> Result<BTreeMap<String, f64>> {
        ids.iter()
            .map(|id| {
                value(id)
                    .map(|v| (id.clone(), v))
                    .ok_or_else(|| Error::invalid(format!("no {what} for neighborhood {id}")))
            })
            .collect()
    }

    /// The fixed ordering of a non-learned baseline; `None` for random.
    pub fn baseline_ordering(&self, active: &ActiveSet, kind: BaselineKind) -> Result<Option<ScoreMatrix>> {
        let dir = self.config.baseline.direction;
        let ids = &active.ids;
        let stat = |f: fn(&NeighborhoodStats) -> usize| {
            move |id: &str| Some(self.stats.get(id).map_or(0, f) as f64)
        };
        let ordering = match kind {
            BaselineKind::Random => return Ok(None),
            BaselineKind::Coordinates => {
                rank_by_coordinates(&self.centroids, ids, self.config.baseline.coordinate_axis, dir)?
            }
            BaselineKind::Tweets => rank_by_metric(&self.metric(ids, stat(|s| s.tweets), "tweet count")?, ids, dir)?,
            BaselineKind::Users => rank_by_metric(&self.metric(ids, stat(|s| s.users), "user count")?, ids, dir)?,
            BaselineKind::Venues => rank_by_metric(
                &self.metric(ids, |id| Some(self.venues.get(id).copied().unwrap_or(0) as f64), "venue count")?,
                ids,
                dir,
            )?,
            BaselineKind::Population => rank_by_metric(
                &self.metric(
                    ids,
                    |id| self.neighborhoods.get(id).and_then(|n| n.population).map(|p| p as f64),
                    "population",
                )?,
                ids,
                dir,
            )?,
        };
        Ok(Some(ordering))
    }

    pub fn evaluate_baseline(&self, active: &ActiveSet, kind: BaselineKind) -> Result<EvalCurve> {
        let coefficients = self.config.evaluate.coefficients.clone();
        let ordering = self.baseline_ordering(active, kind)?;
        let mut strict = Vec::with_capacity(coefficients.len());
        let mut projected = Vec::with_capacity(coefficients.len());
        for &c in &coefficients {
            let reference = active.reference(c)?;
            match &ordering {
                Some(o) => {
                    strict.push(tau_x(&reference, o)?);
                    projected.push(tau_x_projected(&reference, o)?);
                }
                None => {
                    let n = self.config.evaluate.random_permutations;
                    let seed = self.config.baseline_seed();
                    strict.push(random_baseline(&reference, n, seed, TauMode::Strict)?);
                    projected.push(random_baseline(&reference, n, seed, TauMode::Projected)?);
                }
            }
        }
        EvalCurve::new(format!("baseline:{}", kind.name()), coefficients, strict, projected)
    }
}

pub fn write_eval(path: &Path, curves: &[EvalCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EVAL_HEADER).map_err(csv_err)?;
    for c in curves {
        for (i, coef) in c.coefficients.iter().enumerate() {
            w.write_record([
                c.model_id.clone(),
                coef.to_string(),
                c.strict[i].to_string(),
                c.projected[i].to_string(),
                c.auc_strict.to_string(),
                c.auc_projected.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(path, w)
}

pub fn write_ranking(path: &Path, ranking: &RankingResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RANKING_HEADER).map_err(csv_err)?;
    for (id, score, rank) in ranking.ranked() {
        w.write_record([id, score.to_string(), rank.to_string()]).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

fn write_tau_vs_coefficient(path: &Path, curves: &[EvalCurve]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model_id", "mode", "coefficient", "tau_x"]).map_err(csv_err)?;
    for c in curves {
        for (mode, name) in [(TauMode::Strict, "strict"), (TauMode::Projected, "projected")] {
            for (coef, tau) in c.coefficients.iter().zip(c.tau(mode)) {
                w.write_record([c.model_id.clone(), name.to_string(), coef.to_string(), tau.to_string()])
                    .map_err(csv_err)?;
            }
        }
    }
    finish_csv(path, w)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopkRow {
    pub percent: f64,
    pub neighborhoods: usize,
    pub curve: EvalCurve,
}

fn write_tau_vs_topk(path: &Path, rows: &[TopkRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "percent",
        "n_neighborhoods",
        "model_id",
        "coefficient",
        "tau_x_strict",
        "tau_x_projected",
        "auc_erc_strict",
        "auc_erc_projected",
    ])
    .map_err(csv_err)?;
    for r in rows {
        let c = &r.curve;
        for (i, coef) in c.coefficients.iter().enumerate() {
            w.write_record([
                r.percent.to_string(),
                r.neighborhoods.to_string(),
                c.model_id.clone(),
                coef.to_string(),
                c.strict[i].to_string(),
                c.projected[i].to_string(),
                c.auc_strict.to_string(),
                c.auc_projected.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    finish_csv(path, w)
}

/// Fits (or reuses) one ranker per tie coefficient.
pub fn train(cfg: &Config, paths: &Paths, spec: &ModelSpec) -> Result<Vec<TrainedModel>> {
    let exp = Experiment::load(cfg, paths)?;
    let active = exp.active_set(cfg.corpus.top_percent)?;
    cfg.evaluate
        .coefficients
        .iter()
        .map(|&c| exp.model(&active, spec, c).map(|(_, info)| info))
        .collect()
}

/// Ranks the active set with the model for `coefficient` and writes
/// `ranking.csv` (or `out`).
pub fn rank(cfg: &Config, paths: &Paths, spec: &ModelSpec, coefficient: f64, out: Option<&Path>) -> Result<RankingResult> {
    let exp = Experiment::load(cfg, paths)?;
    let active = exp.active_set(cfg.corpus.top_percent)?;
    let (model, _) = exp.model(&active, spec, coefficient)?;
    let ranking = exp.rank(&active, spec, &model)?;
    let default = paths.work_file(RANKING_FILE);
    write_ranking(out.unwrap_or(&default), &ranking)?;
    Ok(ranking)
}

/// Evaluates the models (and optionally every baseline) over the tie
/// coefficients and writes `eval.csv`.
pub fn evaluate(cfg: &Config, paths: &Paths, specs: &[ModelSpec], with_baselines: bool) -> Result<Vec<EvalCurve>> {
    let exp = Experiment::load(cfg, paths)?;
    let active = exp.active_set(cfg.corpus.top_percent)?;
    let mut curves = specs
        .iter()
        .map(|s| exp.evaluate_model(&active, s))
        .collect::<Result<Vec<_>>>()?;
    if with_baselines {
        for kind in BaselineKind::ALL {
            curves.push(exp.evaluate_baseline(&active, kind)?);
        }
    }
    write_eval(&paths.work_file(EVAL_FILE), &curves)?;
    Ok(curves)
}

/// Scores one baseline and writes its rows to `baseline_<kind>.csv`.
pub fn baseline(cfg: &Config, paths: &Paths, kind: BaselineKind) -> Result<EvalCurve> {
    let exp = Experiment::load(cfg, paths)?;
    let active = exp.active_set(cfg.corpus.top_percent)?;
    let curve = exp.evaluate_baseline(&active, kind)?;
    write_eval(&paths.work_file(&format!("baseline_{}.csv", kind.name())), std::slice::from_ref(&curve))?;
    Ok(curve)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub curves: Vec<EvalCurve>,
    pub topk: Vec<TopkRow>,
}

/// Evaluates the report models and all baselines, then sweeps the top-k
/// share for one model against the random baseline.
pub fn report(cfg: &Config, paths: &Paths) -> Result<Report> {
    let exp = Experiment::load(cfg, paths)?;
    let active = exp.active_set(cfg.corpus.top_percent)?;
    let models = cfg.report_models();
    let mut curves = Vec::new();
    for spec in &models {
        curves.push(exp.evaluate_model(&active, spec)?);
    }
    for kind in BaselineKind::ALL {
        curves.push(exp.evaluate_baseline(&active, kind)?);
    }
    write_eval(&paths.work_file(EVAL_FILE), &curves)?;
    write_tau_vs_coefficient(&paths.work_file(TAU_COEFFICIENT_FILE), &curves)?;

    let sweep_model = cfg.report.topk_model.clone().unwrap_or_else(|| models[0].clone());
    let mut topk = Vec::new();
    for &percent in &cfg.report.topk_percents {
        let subset = match exp.active_set(percent) {
            Ok(s) => s,
            Err(e) => {
                log::warn!("skipping top {percent}%: {e}");
                continue;
            }
        };
        for curve in [
            exp.evaluate_model(&subset, &sweep_model),
            exp.evaluate_baseline(&subset, BaselineKind::Random),
        ] {
            match curve {
                Ok(curve) => topk.push(TopkRow {
                    percent,
                    neighborhoods: subset.ids.len(),
                    curve,
                }),
                Err(e @ Error::DegenerateLabels(_)) => log::warn!("skipping top {percent}%: {e}"),
                Err(e) => return Err(e),
            }
        }
    }
    write_tau_vs_topk(&paths.work_file(TAU_TOPK_FILE), &topk)?;
    Ok(Report { curves, topk })
}

/// Ingest, ground truth, features and report in one go.
pub fn run_all(cfg: &Config, paths: &Paths) -> Result<Report> {
    ingest(cfg, paths)?;
    ground_truth(cfg, paths)?;
    features(cfg, paths)?;
    report(cfg, paths)
}
