//! Raw inputs: tweets, gazetteer, neighborhoods and survey reports, and
//! the operations that turn them into per-neighborhood corpora and ground
//! truth.

pub mod io;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub text: String,
    pub geo: Option<(f64, f64)>,
}

impl TweetRecord {
    pub fn validate(&self) -> Result<()> {
        if self.tweet_id.is_empty() {
            return Err(Error::invalid("empty tweet_id"));
        }
        if self.text.is_empty() {
            return Err(Error::invalid(format!("tweet {} has empty text", self.tweet_id)));
        }
        if let Some((lat, lon)) = self.geo {
            check_coordinates(lat, lon)?;
        }
        Ok(())
    }
}

pub fn check_coordinates(lat: f64, lon: f64) -> Result<()> {
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(Error::invalid(format!("coordinates ({lat}, {lon}) out of range")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub surface: String,
    pub venue_id: String,
    pub neighborhood_id: String,
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub id: String,
    /// (lat, lon) in degrees.
    pub centroid: (f64, f64),
    pub population: Option<u64>,
    pub venue_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub report_id: String,
    pub neighborhood_id: String,
    pub responses: [u8; 3],
}

impl SurveyReport {
    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.responses.iter().find(|r| !(1..=5).contains(*r)) {
            return Err(Error::invalid(format!(
                "report {}: response {r} outside 1..5",
                self.report_id
            )));
        }
        Ok(())
    }

    pub fn score(&self) -> f64 {
        self.responses.iter().map(|&r| f64::from(r)).sum::<f64>() / 3.0
    }
}

/// Normalised ground-truth collective efficacy per neighborhood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficacyTable {
    pub efficacy: BTreeMap<String, f64>,
    pub report_counts: BTreeMap<String, usize>,
}

impl EfficacyTable {
    pub fn get(&self, id: &str) -> Option<f64> {
        self.efficacy.get(id).copied()
    }

    /// Efficacy values restricted to `ids`; errors on a missing id.
    pub fn restrict(&self, ids: &[String]) -> Result<BTreeMap<String, f64>> {
        ids.iter()
            .map(|id| {
                self.get(id)
                    .map(|v| (id.clone(), v))
                    .ok_or_else(|| Error::UnknownNeighborhood(id.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<TweetRecord>,
    pub test: Vec<TweetRecord>,
    pub split_fraction: f64,
}

/// Tweets grouped by neighborhood plus the venues each neighborhood had
/// mentioned.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    pub tweets: BTreeMap<String, Vec<TweetRecord>>,
    pub venues: BTreeMap<String, BTreeSet<String>>,
}

impl Association {
    pub fn tweet_count(&self, id: &str) -> usize {
        self.tweets.get(id).map_or(0, Vec::len)
    }

    pub fn users(&self, id: &str) -> BTreeSet<&str> {
        self.tweets
            .get(id)
            .map(|ts| ts.iter().map(|t| t.user_id.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn venue_count(&self, id: &str) -> usize {
        self.venues.get(id).map_or(0, BTreeSet::len)
    }

    /// `(tweet_id, neighborhood_id)` rows sorted by neighborhood then tweet.
    pub fn rows(&self) -> Vec<(&str, &str)> {
        let mut rows = Vec::new();
        for (nid, ts) in &self.tweets {
            for t in ts {
                rows.push((t.tweet_id.as_str(), nid.as_str()));
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmbiguityPolicy {
    /// Assign on unambiguous mentions; ambiguous ones are ignored.
    #[default]
    IgnoreAmbiguous,
    /// Drop any tweet that mentions an ambiguous surface at all.
    DropTweet,
}

impl std::str::FromStr for AmbiguityPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ignore-ambiguous" => Ok(AmbiguityPolicy::IgnoreAmbiguous),
            "drop-tweet" => Ok(AmbiguityPolicy::DropTweet),
            other => Err(Error::invalid(format!("unknown ambiguity policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
struct SurfaceInfo {
    ambiguous: bool,
    /// Set when unambiguous.
    target: Option<(String, String)>,
}

/// Exact-match gazetteer over lowercased token n-grams.
#[derive(Debug, Clone)]
pub struct Gazetteer {
    surfaces: HashMap<Vec<String>, SurfaceInfo>,
    max_len: usize,
    policy: AmbiguityPolicy,
}

fn match_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '\'' || c == '&'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

impl Gazetteer {
    /// Builds the matcher. A surface listed for more than one venue, or for
    /// the same venue in more than one neighborhood, is ambiguous whatever
    /// its flag says.
    pub fn new(entries: &[GazetteerEntry]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyGazetteer);
        }
        let mut grouped: HashMap<Vec<String>, (bool, BTreeSet<(String, String)>)> = HashMap::new();
        for e in entries {
            let key = match_tokens(&e.surface);
            if key.is_empty() {
                return Err(Error::invalid(format!("gazetteer surface `{}` is empty", e.surface)));
            }
            let slot = grouped.entry(key).or_default();
            slot.0 |= e.ambiguous;
            slot.1.insert((e.venue_id.clone(), e.neighborhood_id.clone()));
        }
        let mut max_len = 0;
        let surfaces = grouped
            .into_iter()
            .map(|(key, (flagged, targets))| {
                max_len = max_len.max(key.len());
                let ambiguous = flagged || targets.len() > 1;
                let target = if ambiguous { None } else { targets.into_iter().next() };
                (key, SurfaceInfo { ambiguous, target })
            })
            .collect();
        Ok(Gazetteer {
            surfaces,
            max_len,
            policy: AmbiguityPolicy::default(),
        })
    }

    pub fn with_policy(mut self, policy: AmbiguityPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Resolves a text to the `(venue, neighborhood)` pairs it mentions, or
    /// `None` when the tweet must be dropped.
    pub fn resolve(&self, text: &str) -> Option<BTreeSet<(String, String)>> {
        let tokens = match_tokens(text);
        let mut found = BTreeSet::new();
        let mut saw_ambiguous = false;
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.surfaces.get(&tokens[i..i + len]).map(|info| (len, info)));
            match hit {
                Some((len, info)) => {
                    if info.ambiguous {
                        saw_ambiguous = true;
                    } else if let Some(t) = &info.target {
                        found.insert(t.clone());
                    }
                    i += len;
                }
                None => i += 1,
            }
        }
        if found.is_empty() || (saw_ambiguous && self.policy == AmbiguityPolicy::DropTweet) {
            None
        } else {
            Some(found)
        }
    }
}

/// Assigns every tweet to the neighborhoods of the unambiguous gazetteer
/// surfaces it mentions (longest match first). A tweet mentioning venues
/// in several neighborhoods is assigned to each of them once.
pub fn associate_tweets(tweets: &[TweetRecord], gazetteer: &Gazetteer) -> Association {
    let mut assoc = Association::default();
    for t in tweets {
        let Some(found) = gazetteer.resolve(&t.text) else {
            continue;
        };
        let mut hoods = BTreeSet::new();
        for (venue, hood) in found {
            assoc.venues.entry(hood.clone()).or_default().insert(venue);
            hoods.insert(hood);
        }
        for hood in hoods {
            assoc.tweets.entry(hood).or_default().push(t.clone());
        }
    }
    assoc
}

/// Aggregates survey reports into normalised collective efficacy.
///
/// Report score is the mean of its three items, a neighborhood's raw value
/// the mean of its report scores; neighborhoods with fewer than
/// `min_reports` reports are left out and the survivors min-max scaled.
pub fn compute_ground_truth(reports: &[SurveyReport], min_reports: usize) -> Result<EfficacyTable> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in reports {
        r.validate()?;
        let slot = sums.entry(r.neighborhood_id.as_str()).or_insert((0.0, 0));
        slot.0 += r.score();
        slot.1 += 1;
    }
    let raw: BTreeMap<String, (f64, usize)> = sums
        .into_iter()
        .filter(|(_, (_, n))| *n >= min_reports)
        .map(|(id, (s, n))| (id.to_string(), (s / n as f64, n)))
        .collect();
    if raw.len() < 2 {
        return Err(Error::DegenerateNormalization(format!(
            "{} neighborhood(s) with at least {min_reports} reports",
            raw.len()
        )));
    }
    let lo = raw.values().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = raw.values().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateNormalization("all neighborhoods have equal scores".into()));
    }
    let efficacy = raw
        .iter()
        .map(|(id, (v, _))| (id.clone(), (v - lo) / (hi - lo)))
        .collect();
    let report_counts = raw.iter().map(|(id, (_, n))| (id.clone(), *n)).collect();
    Ok(EfficacyTable {
        efficacy,
        report_counts,
    })
}

// Guards ceil/floor against products like 0.7 * 10 = 7.000000000000001.
const COUNT_EPS: f64 = 1e-9;

fn ceil_count(x: f64) -> usize {
    (x - COUNT_EPS).ceil().max(0.0) as usize
}

fn floor_count(x: f64) -> usize {
    (x + COUNT_EPS).floor().max(0.0) as usize
}

/// Chronological split: the earliest `⌈fraction·n⌉` tweets (ties broken by
/// tweet id) form the training part.
pub fn temporal_split(tweets: &[TweetRecord], fraction: f64) -> Result<CorpusSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must be in (0, 1), got {fraction}")));
    }
    if tweets.is_empty() {
        return Err(Error::invalid("cannot split an empty corpus"));
    }
    let mut sorted = tweets.to_vec();
    sorted.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.tweet_id.cmp(&b.tweet_id)));
    let n_train = ceil_count(fraction * sorted.len() as f64).min(sorted.len());
    let test = sorted.split_off(n_train);
    if test.is_empty() {
        log::warn!(
            "temporal split of {} tweet(s) at {fraction} leaves the test part empty",
            sorted.len()
        );
    }
    Ok(CorpusSplit {
        train: sorted,
        test,
        split_fraction: fraction,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopRounding {
    #[default]
    Ceil,
    /// Rounds down, so 40% of 393 keeps 157.
    Floor,
}

/// Neighborhood ids sorted by descending tweet count (ties by ascending id),
/// truncated to the top `percent`.
pub fn select_top_percent(
    counts: &BTreeMap<String, usize>,
    percent: f64,
    rounding: TopRounding,
) -> Result<Vec<String>> {
    if counts.is_empty() {
        return Err(Error::invalid("no neighborhoods to select from"));
    }
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::invalid(format!("percent must be in (0, 100], got {percent}")));
    }
    let mut ids: Vec<(&String, usize)> = counts.iter().map(|(k, v)| (k, *v)).collect();
    ids.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let exact = percent / 100.0 * ids.len() as f64;
    let k = match rounding {
        TopRounding::Ceil => ceil_count(exact),
        TopRounding::Floor => floor_count(exact),
    }
    .clamp(1, ids.len());
    Ok(ids.into_iter().take(k).map(|(id, _)| id.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tweet(id: &str, ts: i64, text: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: id.into(),
            user_id: "u".into(),
            timestamp: ts,
            text: text.into(),
            geo: None,
        }
    }

    fn entry(surface: &str, venue: &str, hood: &str, ambiguous: bool) -> GazetteerEntry {
        GazetteerEntry {
            surface: surface.into(),
            venue_id: venue.into(),
            neighborhood_id: hood.into(),
            ambiguous,
        }
    }

    fn report(id: usize, hood: &str, r: [u8; 3]) -> SurveyReport {
        SurveyReport {
            report_id: format!("r{id}"),
            neighborhood_id: hood.into(),
            responses: r,
        }
    }

    #[test]
    fn single_exact_match() {
        let g = Gazetteer::new(&[entry("buckeye donuts", "v1", "N1", false)]).unwrap();
        let a = associate_tweets(&[tweet("t1", 0, "coffee at Buckeye Donuts")], &g);
        assert_eq!(a.tweet_count("N1"), 1);
        assert_eq!(a.venue_count("N1"), 1);
    }

    #[test]
    fn ambiguous_surface_dropped() {
        let g = Gazetteer::new(&[
            entry("holiday inn", "v1", "N1", true),
            entry("buckeye donuts", "v2", "N1", false),
        ])
        .unwrap();
        let a = associate_tweets(&[tweet("t1", 0, "stayed at holiday inn")], &g);
        assert!(a.tweets.is_empty());
    }

    #[test]
    fn surface_with_two_venues_is_ambiguous_even_unflagged() {
        let g = Gazetteer::new(&[
            entry("gamestop", "v1", "N1", false),
            entry("gamestop", "v2", "N2", false),
        ])
        .unwrap();
        assert!(g.resolve("at gamestop").is_none());
    }

    #[test]
    fn no_match_dropped_and_empty_gazetteer_errors() {
        let g = Gazetteer::new(&[entry("buckeye donuts", "v1", "N1", false)]).unwrap();
        assert!(associate_tweets(&[tweet("t1", 0, "nothing here")], &g).tweets.is_empty());
        assert!(matches!(Gazetteer::new(&[]), Err(Error::EmptyGazetteer)));
    }

    #[test]
    fn longest_match_first() {
        let g = Gazetteer::new(&[
            entry("short north", "v1", "N1", false),
            entry("short north arts center", "v2", "N2", false),
        ])
        .unwrap();
        let found = g.resolve("show at the Short North Arts Center").unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found.iter().next().unwrap().1, "N2");
    }

    #[test]
    fn multi_neighborhood_tweet_counts_once_per_neighborhood() {
        let g = Gazetteer::new(&[
            entry("buckeye donuts", "v1", "N1", false),
            entry("north market", "v2", "N2", false),
            entry("holiday inn", "v3", "N3", true),
        ])
        .unwrap();
        let t = [tweet("t1", 0, "buckeye donuts then north market, holiday inn later")];
        let a = associate_tweets(&t, &g);
        assert_eq!(a.tweet_count("N1"), 1);
        assert_eq!(a.tweet_count("N2"), 1);
        let strict = g.clone().with_policy(AmbiguityPolicy::DropTweet);
        assert!(associate_tweets(&t, &strict).tweets.is_empty());
    }

    #[test]
    fn ground_truth_endpoints() {
        let mut reports = Vec::new();
        for i in 0..5 {
            reports.push(report(i, "A", [5, 5, 5]));
            reports.push(report(10 + i, "B", [1, 1, 1]));
        }
        let t = compute_ground_truth(&reports, 5).unwrap();
        assert_eq!(t.get("A"), Some(1.0));
        assert_eq!(t.get("B"), Some(0.0));
        assert_eq!(t.report_counts["A"], 5);
    }

    #[test]
    fn ground_truth_linear_and_exclusion() {
        let mut reports = Vec::new();
        let mut k = 0;
        for (hood, r) in [("A", [2, 2, 2]), ("B", [3, 3, 3]), ("C", [4, 4, 4])] {
            for _ in 0..5 {
                reports.push(report(k, hood, r));
                k += 1;
            }
        }
        for _ in 0..4 {
            reports.push(report(k, "D", [5, 5, 5]));
            k += 1;
        }
        let t = compute_ground_truth(&reports, 5).unwrap();
        assert_eq!(t.efficacy.len(), 3);
        assert_eq!(t.get("A"), Some(0.0));
        assert_eq!(t.get("B"), Some(0.5));
        assert_eq!(t.get("C"), Some(1.0));
        assert!(t.get("D").is_none());
    }

    #[test]
    fn ground_truth_degenerate() {
        let reports: Vec<_> = (0..5).map(|i| report(i, "A", [3, 3, 3])).collect();
        assert!(matches!(
            compute_ground_truth(&reports, 5),
            Err(Error::DegenerateNormalization(_))
        ));
        assert!(compute_ground_truth(&[report(0, "A", [0, 3, 3])], 1).is_err());
    }

    #[test]
    fn split_ninety_ten() {
        let tweets: Vec<_> = (0..10).map(|i| tweet(&format!("t{i}"), 100 - i as i64, "x")).collect();
        let s = temporal_split(&tweets, 0.9).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (9, 1));
        let max_train = s.train.iter().map(|t| t.timestamp).max().unwrap();
        assert!(s.test.iter().all(|t| t.timestamp >= max_train));
    }

    #[test]
    fn split_degenerate_and_ties() {
        let s = temporal_split(&[tweet("a", 0, "x")], 0.9).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 0));
        let tweets = vec![tweet("b", 5, "x"), tweet("c", 5, "x"), tweet("a", 5, "x")];
        let s = temporal_split(&tweets, 0.5).unwrap();
        let ids: Vec<_> = s.train.iter().chain(&s.test).map(|t| t.tweet_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(s.train.len(), 2);
        assert!(temporal_split(&tweets, 1.0).is_err());
        assert!(temporal_split(&tweets, 0.0).is_err());
    }

    #[test]
    fn split_ceiling_is_not_fooled_by_rounding() {
        let tweets: Vec<_> = (0..10).map(|i| tweet(&format!("t{i}"), i, "x")).collect();
        assert_eq!(temporal_split(&tweets, 0.7).unwrap().train.len(), 7);
    }

    #[test]
    fn top_percent_table_sizes() {
        let counts: BTreeMap<String, usize> = (0..393).map(|i| (format!("n{i:03}"), 1000 - i)).collect();
        assert_eq!(select_top_percent(&counts, 40.0, TopRounding::Ceil).unwrap().len(), 158);
        for (p, n) in [(20.0, 78), (40.0, 157), (60.0, 235), (80.0, 314), (100.0, 393)] {
            assert_eq!(
                select_top_percent(&counts, p, TopRounding::Floor).unwrap().len(),
                n
            );
        }
    }

    #[test]
    fn top_percent_ties_and_errors() {
        let counts: BTreeMap<String, usize> = [("b".to_string(), 3), ("a".to_string(), 3), ("c".to_string(), 9)].into();
        assert_eq!(select_top_percent(&counts, 100.0, TopRounding::Ceil).unwrap(), ["c", "a", "b"]);
        assert!(select_top_percent(&BTreeMap::new(), 50.0, TopRounding::Ceil).is_err());
        assert!(select_top_percent(&counts, 0.0, TopRounding::Ceil).is_err());
    }
}
