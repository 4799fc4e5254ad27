//! Seeded scenario generator: neighborhoods with spatially correlated
//! latent efficacy, venue gazetteer, users, tweets whose crime vocabulary,
//! sentiment and user overlap depend on efficacy, and survey reports.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, LogNormal, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::io;
use crate::corpus::{GazetteerEntry, Neighborhood, SurveyReport, TweetRecord};
use crate::error::{Error, Result};
use crate::features::spatial::haversine_km;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_neighborhoods: usize,
    /// Log-mean and log-sd of the per-neighborhood tweet count.
    pub tweets_per_neighborhood: (f64, f64),
    /// Weight of the spatially smoothed component in latent efficacy.
    pub efficacy_spatial_corr: f64,
    /// Kernel bandwidth of the spatial smoothing, km.
    pub spatial_bandwidth_km: f64,
    pub crime_rate_slope: f64,
    pub sentiment_slope: f64,
    pub user_pool: usize,
    pub overlap_decay: f64,
    pub reports_per_neighborhood: usize,
    /// Share of neighborhoods that get only `undersurveyed_reports` reports.
    pub undersurveyed_fraction: f64,
    pub undersurveyed_reports: usize,
    /// Share of extra tweets that mention no venue at all.
    pub unplaced_fraction: f64,
    /// Probability that a tweet also names a venue chain present in several
    /// neighborhoods.
    pub chain_mention_rate: f64,
    pub days: u32,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_neighborhoods: 157,
            tweets_per_neighborhood: (500f64.ln(), 0.3),
            efficacy_spatial_corr: 0.6,
            spatial_bandwidth_km: 4.0,
            crime_rate_slope: 8.0,
            sentiment_slope: 0.8,
            user_pool: 4000,
            overlap_decay: 6.0,
            reports_per_neighborhood: 20,
            undersurveyed_fraction: 0.0,
            undersurveyed_reports: 3,
            unplaced_fraction: 0.05,
            chain_mention_rate: 0.03,
            days: 120,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if self.n_neighborhoods < 2 {
            return bad("n_neighborhoods must be at least 2");
        }
        if self.user_pool == 0 {
            return bad("user_pool must be at least 1");
        }
        if !(self.overlap_decay > 0.0) {
            return bad("overlap_decay must be positive");
        }
        if !(0.0..=1.0).contains(&self.efficacy_spatial_corr) {
            return bad("efficacy_spatial_corr must be in [0, 1]");
        }
        let (mu, sd) = self.tweets_per_neighborhood;
        if !mu.is_finite() || mu.exp() < 1.0 || !(sd >= 0.0) {
            return bad("tweets_per_neighborhood must give at least one tweet on average");
        }
        if self.reports_per_neighborhood == 0 {
            return bad("reports_per_neighborhood must be positive");
        }
        if !(0.0..=1.0).contains(&self.undersurveyed_fraction)
            || !(0.0..1.0).contains(&self.unplaced_fraction)
            || !(0.0..=1.0).contains(&self.chain_mention_rate)
        {
            return bad("fractions must lie in [0, 1]");
        }
        if !(self.spatial_bandwidth_km > 0.0) || self.days == 0 {
            return bad("bandwidth and days must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub neighborhoods: Vec<Neighborhood>,
    pub gazetteer: Vec<GazetteerEntry>,
    pub tweets: Vec<TweetRecord>,
    pub surveys: Vec<SurveyReport>,
    pub truth: BTreeMap<String, f64>,
    pub crime_lexicon: Vec<String>,
    pub sentiment_lexicon: BTreeMap<String, f64>,
}

pub const CRIME_WORDS: &[&str] = &[
    "gun", "shooting", "robbery", "theft", "assault", "stabbing", "burglary", "vandalism", "graffiti", "drugs",
    "police", "arrest", "siren", "fight", "gang", "violence", "murder", "homicide", "stolen", "trespass",
    "overdose", "carjacking", "shots", "crime", "suspect", "dealer", "mugging", "looting", "arson", "weapon",
];

const SENTIMENT_WORDS: &[(&str, f64)] = &[
    ("terrible", -0.95),
    ("awful", -0.85),
    ("horrible", -0.75),
    ("scary", -0.65),
    ("sad", -0.55),
    ("angry", -0.45),
    ("annoyed", -0.35),
    ("meh", -0.25),
    ("dull", -0.15),
    ("okay", 0.1),
    ("decent", 0.2),
    ("nice", 0.3),
    ("pleasant", 0.4),
    ("good", 0.5),
    ("happy", 0.6),
    ("great", 0.7),
    ("lovely", 0.8),
    ("amazing", 0.9),
    ("wonderful", 1.0),
];

const TOPIC_WORDS: [&[&str]; 5] = [
    &["coffee", "brunch", "pizza", "tacos", "burger", "dinner", "lunch", "bakery", "noodles", "salad", "beer", "wine"],
    &["soccer", "baseball", "game", "team", "score", "stadium", "fans", "match", "league", "coach", "jersey", "ticket"],
    &["concert", "band", "music", "festival", "gallery", "theater", "show", "dance", "artist", "stage", "crowd", "tour"],
    &["shopping", "sale", "store", "mall", "shoes", "outfit", "market", "deal", "books", "gift", "vintage", "boutique"],
    &["school", "class", "library", "campus", "study", "exam", "teacher", "homework", "lecture", "students", "reading", "project"],
];

const VENUE_KINDS: &[&str] = &["park", "cafe", "market", "library", "plaza", "diner", "tavern", "grill", "garden", "center"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "tor", "va", "bel", "dun", "sa", "quin", "mor", "zet", "pra", "lin", "hol", "cra", "vex",
    "nor", "tal", "ber",
];
const CHAIN_NAMES: &[&str] = &["quickmart", "burgerbarn", "fuelstop", "pharmaplus", "cornerbank"];

/// 2016-01-01T00:00:00Z.
const EPOCH_START: i64 = 1_451_606_400;

fn place_name(rng: &mut ChaCha8Rng, taken: &mut BTreeSet<String>) -> String {
    loop {
        let n = rng.random_range(2..=3);
        let name: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        let kind = VENUE_KINDS.choose(rng).expect("non-empty");
        let full = format!("{name} {kind}");
        if taken.insert(full.clone()) {
            return full;
        }
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    for x in v.iter_mut() {
        *x = if sd > 0.0 { (*x - mean) / sd } else { 0.0 };
    }
}

/// Latent efficacy in [0, 1]: a mix of kernel-smoothed noise and fresh
/// noise, min-max scaled.
fn latent_efficacy(rng: &mut ChaCha8Rng, centroids: &[(f64, f64)], cfg: &ScenarioConfig) -> Vec<f64> {
    let n = centroids.len();
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut fresh: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let bw2 = 2.0 * cfg.spatial_bandwidth_km.powi(2);
    let mut smooth: Vec<f64> = (0..n)
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for j in 0..n {
                let k = (-haversine_km(centroids[i], centroids[j]).powi(2) / bw2).exp();
                num += k * noise[j];
                den += k;
            }
            num / den
        })
        .collect();
    standardize(&mut smooth);
    standardize(&mut fresh);
    let rho = cfg.efficacy_spatial_corr;
    let mixed: Vec<f64> = smooth
        .iter()
        .zip(&fresh)
        .map(|(s, f)| rho * s + (1.0 - rho * rho).sqrt() * f)
        .collect();
    let lo = mixed.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = mixed.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    mixed.iter().map(|m| if hi > lo { (m - lo) / (hi - lo) } else { 0.5 }).collect()
}

pub fn generate(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_neighborhoods;
    let width = n.to_string().len().max(4);
    let ids: Vec<String> = (0..n).map(|i| format!("bg{:0width$}", i + 1)).collect();

    let centroids: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(39.85..40.15), rng.random_range(-83.15..-82.85)))
        .collect();
    let efficacy = latent_efficacy(&mut rng, &centroids, cfg);
    let pop_dist = LogNormal::new(1200f64.ln(), 0.4).expect("valid");

    // Venues and gazetteer.
    let mut taken = BTreeSet::new();
    let mut gazetteer = Vec::new();
    let mut venues: Vec<Vec<String>> = Vec::with_capacity(n);
    let mut venue_no = 0;
    for id in &ids {
        let k = rng.random_range(2..=6);
        let mut names = Vec::with_capacity(k);
        for _ in 0..k {
            venue_no += 1;
            let surface = place_name(&mut rng, &mut taken);
            gazetteer.push(GazetteerEntry {
                surface: surface.clone(),
                venue_id: format!("v{venue_no:05}"),
                neighborhood_id: id.clone(),
                ambiguous: false,
            });
            names.push(surface);
        }
        venues.push(names);
    }
    for chain in CHAIN_NAMES {
        for _ in 0..3 {
            venue_no += 1;
            gazetteer.push(GazetteerEntry {
                surface: chain.to_string(),
                venue_id: format!("v{venue_no:05}"),
                neighborhood_id: ids[rng.random_range(0..n)].clone(),
                ambiguous: true,
            });
        }
    }

    let neighborhoods: Vec<Neighborhood> = ids
        .iter()
        .zip(&centroids)
        .zip(&venues)
        .map(|((id, c), v)| Neighborhood {
            id: id.clone(),
            centroid: *c,
            population: Some(pop_dist.sample(&mut rng).round() as u64),
            venue_count: v.len(),
        })
        .collect();

    // Users carry their own efficacy affinity; a neighborhood draws users
    // whose affinity is close to its efficacy.
    let user_affinity: Vec<f64> = (0..cfg.user_pool).map(|_| rng.random::<f64>()).collect();
    let count_dist = LogNormal::new(cfg.tweets_per_neighborhood.0, cfg.tweets_per_neighborhood.1)
        .map_err(|e| Error::Config(format!("scenario: {e}")))?;
    let topic_prior = Dirichlet::new([0.5; 5]).expect("valid");
    let sentiment_noise = Normal::new(0.0, 0.35).expect("valid");
    let crime_weights = WeightedIndex::new((1..=CRIME_WORDS.len()).map(|r| 1.0 / r as f64)).expect("valid");
    let span = i64::from(cfg.days) * 86_400;

    let mut drafts: Vec<(i64, String, String)> = Vec::new();
    for (i, _) in ids.iter().enumerate() {
        let e = efficacy[i];
        let count = (count_dist.sample(&mut rng).round() as usize).max(1);
        let weights: Vec<f64> = user_affinity
            .iter()
            .map(|u| (-cfg.overlap_decay * (e - u).abs()).exp())
            .collect();
        let users = WeightedIndex::new(&weights).expect("positive weights");
        let topics: [f64; 5] = topic_prior.sample(&mut rng);
        let topic_pick = WeightedIndex::new(&topics).map_err(|e| Error::Degenerate(e.to_string()))?;
        let p_crime = logistic(cfg.crime_rate_slope * (0.5 - e));
        for _ in 0..count {
            let mut words: Vec<String> = Vec::new();
            let t = topic_pick.sample(&mut rng);
            for _ in 0..rng.random_range(3..=6) {
                words.push(TOPIC_WORDS[t].choose(&mut rng).expect("non-empty").to_string());
            }
            if rng.random::<f64>() < p_crime {
                words.push(CRIME_WORDS[crime_weights.sample(&mut rng)].to_string());
            }
            if rng.random::<f64>() < 0.8 {
                let target = (cfg.sentiment_slope * (e - 0.5) + sentiment_noise.sample(&mut rng)).clamp(-1.0, 1.0);
                let word = SENTIMENT_WORDS
                    .iter()
                    .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
                    .expect("non-empty")
                    .0;
                words.push(word.to_string());
            }
            if rng.random::<f64>() < cfg.chain_mention_rate {
                words.push(CHAIN_NAMES.choose(&mut rng).expect("non-empty").to_string());
            }
            let venue = venues[i].choose(&mut rng).expect("every neighborhood has venues");
            let at = rng.random_range(0..=words.len());
            words.insert(at, format!("at {}", title_case(venue)));
            let user = format!("u{:05}", users.sample(&mut rng));
            drafts.push((EPOCH_START + rng.random_range(0..span), user, words.join(" ")));
        }
    }
    let unplaced = (drafts.len() as f64 * cfg.unplaced_fraction).round() as usize;
    for _ in 0..unplaced {
        let t = rng.random_range(0..TOPIC_WORDS.len());
        let words: Vec<&str> = (0..rng.random_range(3..=6))
            .map(|_| *TOPIC_WORDS[t].choose(&mut rng).expect("non-empty"))
            .collect();
        let user = format!("u{:05}", rng.random_range(0..cfg.user_pool));
        drafts.push((EPOCH_START + rng.random_range(0..span), user, words.join(" ")));
    }
    let id_width = drafts.len().to_string().len();
    let tweets: Vec<TweetRecord> = drafts
        .into_iter()
        .enumerate()
        .map(|(k, (timestamp, user_id, text))| TweetRecord {
            tweet_id: format!("t{:0id_width$}", k + 1),
            user_id,
            timestamp,
            text,
            geo: None,
        })
        .collect();

    let item_noise = Normal::new(0.0, 0.5).expect("valid");
    let n_under = (n as f64 * cfg.undersurveyed_fraction).round() as usize;
    let mut under: Vec<usize> = (0..n).collect();
    under.shuffle(&mut rng);
    let under: BTreeSet<usize> = under.into_iter().take(n_under).collect();
    let mut surveys = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        let k = if under.contains(&i) {
            cfg.undersurveyed_reports
        } else {
            cfg.reports_per_neighborhood
        };
        for _ in 0..k {
            let mut responses = [0u8; 3];
            for r in responses.iter_mut() {
                *r = (1.0 + 4.0 * efficacy[i] + item_noise.sample(&mut rng)).round().clamp(1.0, 5.0) as u8;
            }
            surveys.push(SurveyReport {
                report_id: format!("r{:06}", surveys.len() + 1),
                neighborhood_id: id.clone(),
                responses,
            });
        }
    }

    Ok(Scenario {
        neighborhoods,
        gazetteer,
        tweets,
        surveys,
        truth: ids.iter().cloned().zip(efficacy).collect(),
        crime_lexicon: CRIME_WORDS.iter().map(|s| s.to_string()).collect(),
        sentiment_lexicon: SENTIMENT_WORDS.iter().map(|(w, s)| (w.to_string(), *s)).collect(),
    })
}

fn title_case(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let mut c = w.chars();
            match c.next() {
                Some(f) => f.to_uppercase().chain(c).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub const NEIGHBORHOODS_FILE: &str = "neighborhoods.csv";
pub const GAZETTEER_FILE: &str = "gazetteer.csv";
pub const TWEETS_FILE: &str = "tweets.jsonl";
pub const SURVEYS_FILE: &str = "surveys.csv";
pub const TRUTH_FILE: &str = "truth.csv";
pub const CRIME_LEXICON_FILE: &str = "crime_lexicon.txt";
pub const SENTIMENT_LEXICON_FILE: &str = "sentiment_lexicon.tsv";

impl Scenario {
    pub fn write(&self, dir: &Path) -> Result<()> {
        io::write_neighborhoods(&dir.join(NEIGHBORHOODS_FILE), &self.neighborhoods)?;
        io::write_gazetteer(&dir.join(GAZETTEER_FILE), &self.gazetteer)?;
        io::write_tweets(&dir.join(TWEETS_FILE), &self.tweets)?;
        io::write_surveys(&dir.join(SURVEYS_FILE), &self.surveys)?;
        io::write_truth(&dir.join(TRUTH_FILE), &self.truth)?;
        io::write_lexicon(&dir.join(CRIME_LEXICON_FILE), &self.crime_lexicon)?;
        io::write_sentiment_lexicon(&dir.join(SENTIMENT_LEXICON_FILE), &self.sentiment_lexicon)?;
        Ok(())
    }
}
