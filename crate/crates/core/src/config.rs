//! Run configuration: one TOML table per stage, every field optional.
//! Nested generator seeds are overwritten from the master `seed`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{CoordinateAxis, Direction};
use crate::corpus::{AmbiguityPolicy, TopRounding};
use crate::error::{Error, Result};
use crate::features::embed::EmbedConfig;
use crate::features::lda::LdaConfig;
use crate::features::tfidf::DEFAULT_VOCABULARY_SIZE;
use crate::features::FeatureMask;
use crate::metrics::{TauMode, DEFAULT_COEFFICIENTS};
use crate::ranker::{ClassifierKind, ForestConfig, GridSpec, LogRegConfig, MlpConfig, RankerConfig, ScoreMode};
use crate::synth::ScenarioConfig;
use crate::text::TokenPipelineConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub split_fraction: f64,
    pub min_reports: usize,
    pub top_percent: f64,
    pub rounding: TopRounding,
    pub ambiguity: AmbiguityPolicy,
}

impl Default for CorpusSection {
    fn default() -> Self {
        CorpusSection {
            split_fraction: 0.9,
            min_reports: 5,
            top_percent: 40.0,
            rounding: TopRounding::Ceil,
            ambiguity: AmbiguityPolicy::IgnoreAmbiguous,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub vocabulary_size: usize,
    /// Candidate topic counts; when non-empty the count maximising the rate
    /// of perplexity change replaces `lda.topics`.
    pub topic_counts: Vec<usize>,
    /// Share of training tweets held out for perplexity during selection.
    pub heldout_fraction: f64,
    pub lda: LdaConfig,
    pub embed: EmbedConfig,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            vocabulary_size: DEFAULT_VOCABULARY_SIZE,
            topic_counts: Vec::new(),
            heldout_fraction: 0.1,
            lda: LdaConfig::default(),
            embed: EmbedConfig::default(),
        }
    }
}

/// A classifier plus the feature families it sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct ModelSpec {
    pub kind: ClassifierKind,
    pub mask: FeatureMask,
}

impl ModelSpec {
    /// `kind:family+family+…`, safe to use in CSV cells and file names.
    pub fn id(&self) -> String {
        format!("{}:{}", self.kind, self.mask.to_string().replace(',', "+"))
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, mask) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("model spec {s:?} is not `classifier:families`")))?;
        Ok(ModelSpec {
            kind: kind.parse()?,
            mask: mask.replace('+', ",").parse()?,
        })
    }
}

impl From<ModelSpec> for String {
    fn from(m: ModelSpec) -> Self {
        m.id()
    }
}

impl TryFrom<String> for ModelSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

pub fn model10_mask() -> FeatureMask {
    "doc2vec,sentiment,common-users,topics,distance".parse().expect("valid mask")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankerSection {
    pub classifier: ClassifierKind,
    pub features: FeatureMask,
    pub score_mode: ScoreMode,
    pub folds: usize,
    pub logreg: LogRegConfig,
    pub forest: ForestConfig,
    pub mlp: MlpConfig,
    pub grid: GridSpec,
}

impl Default for RankerSection {
    fn default() -> Self {
        RankerSection {
            classifier: ClassifierKind::Forest,
            features: model10_mask(),
            score_mode: ScoreMode::Hard,
            folds: 5,
            logreg: LogRegConfig::default(),
            forest: ForestConfig::default(),
            mlp: MlpConfig::default(),
            grid: GridSpec::default(),
        }
    }
}

impl RankerSection {
    pub fn models(&self) -> RankerConfig {
        RankerConfig {
            logreg: self.logreg.clone(),
            forest: self.forest.clone(),
            mlp: self.mlp.clone(),
        }
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.classifier,
            mask: self.features.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub coefficients: Vec<f64>,
    /// Mode used for printed summaries; both modes are always written.
    pub tau_mode: TauMode,
    pub random_permutations: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            coefficients: DEFAULT_COEFFICIENTS.to_vec(),
            tau_mode: TauMode::Projected,
            random_permutations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub direction: Direction,
    pub coordinate_axis: CoordinateAxis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Models evaluated by `report`; the `[ranker]` model when empty.
    pub models: Vec<ModelSpec>,
    pub topk_percents: Vec<f64>,
    /// Model used for the data-availability sweep; the first report model
    /// when unset.
    pub topk_model: Option<ModelSpec>,
}

impl Default for ReportSection {
    fn default() -> Self {
        ReportSection {
            models: Vec::new(),
            topk_percents: vec![10.0, 20.0, 30.0, 40.0],
            topk_model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub text: TokenPipelineConfig,
    pub features: FeaturesSection,
    pub ranker: RankerSection,
    pub evaluate: EvaluateSection,
    pub baseline: BaselineSection,
    pub report: ReportSection,
    pub synth: ScenarioConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            corpus: CorpusSection::default(),
            text: TokenPipelineConfig::default(),
            features: FeaturesSection::default(),
            ranker: RankerSection::default(),
            evaluate: EvaluateSection::default(),
            baseline: BaselineSection::default(),
            report: ReportSection::default(),
            synth: ScenarioConfig::default(),
        }
    }
}

/// SplitMix64 finaliser over the master seed and a stage tag, kept to 63
/// bits so that derived seeds survive a TOML round trip.
pub fn derive_seed(master: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in tag.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z ^ (z >> 31)) >> 1
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.apply_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Re-derives every nested seed from `seed`.
    pub fn apply_seed(&mut self) {
        let m = self.seed;
        self.features.lda.seed = derive_seed(m, "lda");
        self.features.lda.inference.seed = derive_seed(m, "lda-inference");
        self.features.embed.seed = derive_seed(m, "embed");
        self.synth.seed = derive_seed(m, "synth");
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.apply_seed();
        self
    }

    pub fn ranker_seed(&self) -> u64 {
        derive_seed(self.seed, "ranker")
    }

    pub fn baseline_seed(&self) -> u64 {
        derive_seed(self.seed, "random-baseline")
    }

    pub fn validate(&self) -> Result<()> {
        self.text.validate()?;
        self.features.lda.validate()?;
        self.features.embed.validate()?;
        if !(self.corpus.split_fraction > 0.0 && self.corpus.split_fraction < 1.0) {
            return Err(Error::Config("corpus.split_fraction must be in (0, 1)".into()));
        }
        if !(self.corpus.top_percent > 0.0 && self.corpus.top_percent <= 100.0) {
            return Err(Error::Config("corpus.top_percent must be in (0, 100]".into()));
        }
        if self.features.vocabulary_size == 0 {
            return Err(Error::Config("features.vocabulary_size must be positive".into()));
        }
        if !(self.features.heldout_fraction > 0.0 && self.features.heldout_fraction < 1.0) {
            return Err(Error::Config("features.heldout_fraction must be in (0, 1)".into()));
        }
        check_coefficients(&self.evaluate.coefficients)?;
        if self.evaluate.random_permutations == 0 {
            return Err(Error::Config("evaluate.random_permutations must be positive".into()));
        }
        if self.ranker.folds < 2 {
            return Err(Error::Config("ranker.folds must be at least 2".into()));
        }
        if self.report.topk_percents.iter().any(|p| !(*p > 0.0 && *p <= 100.0)) {
            return Err(Error::Config("report.topk_percents must lie in (0, 100]".into()));
        }
        self.synth.validate()
    }

    pub fn report_models(&self) -> Vec<ModelSpec> {
        if self.report.models.is_empty() {
            vec![self.ranker.spec()]
        } else {
            self.report.models.clone()
        }
    }
}

pub fn check_coefficients(c: &[f64]) -> Result<()> {
    if c.len() < 2 {
        return Err(Error::Config("at least two tie coefficients are required".into()));
    }
    if c.iter().any(|v| !(*v >= 0.0)) || c.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("tie coefficients must be non-negative and strictly increasing".into()));
    }
    Ok(())
}
