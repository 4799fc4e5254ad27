//! Readers and writers for the corpus file formats. Every reader checks
//! the header (or key set) before touching the rows.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_coordinates, Association, EfficacyTable, GazetteerEntry, Neighborhood, SurveyReport, TweetRecord};
use crate::error::{Error, Result};

pub const GAZETTEER_HEADER: &[&str] = &["surface", "venue_id", "neighborhood_id", "ambiguous"];
pub const SURVEYS_HEADER: &[&str] = &["report_id", "neighborhood_id", "q1", "q2", "q3"];
pub const NEIGHBORHOODS_HEADER: &[&str] = &["id", "lat", "lon", "population"];
pub const EFFICACY_HEADER: &[&str] = &["id", "efficacy", "report_count"];
pub const TRUTH_HEADER: &[&str] = &["id", "efficacy"];
pub const STATS_HEADER: &[&str] = &["id", "tweet_count", "user_count", "venue_count"];

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Opens a CSV file and checks its header row exactly.
pub(crate) fn csv_rows(path: &Path, header: &[&str]) -> Result<Vec<(usize, csv::StringRecord)>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(Error::Header {
            path: path.to_path_buf(),
            expected: header.join(","),
        });
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| parse_err(path, i + 2, e.to_string()))?;
        rows.push((i + 2, rec));
    }
    Ok(rows)
}

pub(crate) fn field<T: std::str::FromStr>(path: &Path, line: usize, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} `{raw}`")))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TweetLine {
    tweet_id: String,
    user_id: String,
    timestamp: i64,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lon: Option<f64>,
}

pub fn read_tweets(path: &Path) -> Result<Vec<TweetRecord>> {
    let text = read_text(path)?;
    let mut seen = HashSet::new();
    let mut tweets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: TweetLine = serde_json::from_str(line).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        let geo = match (raw.lat, raw.lon) {
            (Some(lat), Some(lon)) => Some((lat, lon)),
            (None, None) => None,
            _ => return Err(parse_err(path, i + 1, "lat and lon must be given together")),
        };
        let t = TweetRecord {
            tweet_id: raw.tweet_id,
            user_id: raw.user_id,
            timestamp: raw.timestamp,
            text: raw.text,
            geo,
        };
        t.validate().map_err(|e| parse_err(path, i + 1, e.to_string()))?;
        if !seen.insert(t.tweet_id.clone()) {
            return Err(parse_err(path, i + 1, format!("duplicate tweet_id {}", t.tweet_id)));
        }
        tweets.push(t);
    }
    Ok(tweets)
}

pub fn write_tweets(path: &Path, tweets: &[TweetRecord]) -> Result<()> {
    let mut out = String::new();
    for t in tweets {
        let line = TweetLine {
            tweet_id: t.tweet_id.clone(),
            user_id: t.user_id.clone(),
            timestamp: t.timestamp,
            text: t.text.clone(),
            lat: t.geo.map(|g| g.0),
            lon: t.geo.map(|g| g.1),
        };
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Serialization(e.to_string()))?);
        out.push('\n');
    }
    write_text(path, &out)
}

fn parse_flag(path: &Path, line: usize, raw: &str) -> Result<bool> {
    match raw {
        "0" | "false" => Ok(false),
        "1" | "true" => Ok(true),
        _ => Err(parse_err(path, line, format!("bad ambiguous flag `{raw}`"))),
    }
}

pub fn read_gazetteer(path: &Path) -> Result<Vec<GazetteerEntry>> {
    csv_rows(path, GAZETTEER_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let surface = rec[0].to_lowercase();
            if surface.is_empty() {
                return Err(parse_err(path, line, "empty surface"));
            }
            Ok(GazetteerEntry {
                surface,
                venue_id: rec[1].to_string(),
                neighborhood_id: rec[2].to_string(),
                ambiguous: parse_flag(path, line, &rec[3])?,
            })
        })
        .collect()
}

pub fn write_gazetteer(path: &Path, entries: &[GazetteerEntry]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(GAZETTEER_HEADER).map_err(csv_err)?;
    for e in entries {
        w.write_record([
            e.surface.as_str(),
            &e.venue_id,
            &e.neighborhood_id,
            if e.ambiguous { "1" } else { "0" },
        ])
        .map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_surveys(path: &Path) -> Result<Vec<SurveyReport>> {
    csv_rows(path, SURVEYS_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let r = SurveyReport {
                report_id: rec[0].to_string(),
                neighborhood_id: rec[1].to_string(),
                responses: [
                    field(path, line, &rec, 2, "q1")?,
                    field(path, line, &rec, 3, "q2")?,
                    field(path, line, &rec, 4, "q3")?,
                ],
            };
            r.validate().map_err(|e| parse_err(path, line, e.to_string()))?;
            Ok(r)
        })
        .collect()
}

pub fn write_surveys(path: &Path, reports: &[SurveyReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SURVEYS_HEADER).map_err(csv_err)?;
    for r in reports {
        let [a, b, c] = r.responses.map(|x| x.to_string());
        w.write_record([r.report_id.as_str(), &r.neighborhood_id, &a, &b, &c])
            .map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_neighborhoods(path: &Path) -> Result<Vec<Neighborhood>> {
    let mut seen = HashSet::new();
    csv_rows(path, NEIGHBORHOODS_HEADER)?
        .into_iter()
        .map(|(line, rec)| {
            let id = rec[0].to_string();
            if !seen.insert(id.clone()) {
                return Err(parse_err(path, line, format!("duplicate neighborhood id {id}")));
            }
            let lat: f64 = field(path, line, &rec, 1, "lat")?;
            let lon: f64 = field(path, line, &rec, 2, "lon")?;
            check_coordinates(lat, lon).map_err(|e| parse_err(path, line, e.to_string()))?;
            let population = if rec[3].is_empty() {
                None
            } else {
                Some(field(path, line, &rec, 3, "population")?)
            };
            Ok(Neighborhood {
                id,
                centroid: (lat, lon),
                population,
                venue_count: 0,
            })
        })
        .collect()
}

pub fn write_neighborhoods(path: &Path, hoods: &[Neighborhood]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(NEIGHBORHOODS_HEADER).map_err(csv_err)?;
    for n in hoods {
        w.write_record([
            n.id.clone(),
            n.centroid.0.to_string(),
            n.centroid.1.to_string(),
            n.population.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn write_efficacy(path: &Path, table: &EfficacyTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(EFFICACY_HEADER).map_err(csv_err)?;
    for (id, v) in &table.efficacy {
        let count = table.report_counts.get(id).copied().unwrap_or(0);
        w.write_record([id.clone(), v.to_string(), count.to_string()])
            .map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_efficacy(path: &Path) -> Result<EfficacyTable> {
    let mut table = EfficacyTable {
        efficacy: BTreeMap::new(),
        report_counts: BTreeMap::new(),
    };
    for (line, rec) in csv_rows(path, EFFICACY_HEADER)? {
        let v: f64 = field(path, line, &rec, 1, "efficacy")?;
        if !(0.0..=1.0).contains(&v) {
            return Err(parse_err(path, line, format!("efficacy {v} outside [0, 1]")));
        }
        table.efficacy.insert(rec[0].to_string(), v);
        table
            .report_counts
            .insert(rec[0].to_string(), field(path, line, &rec, 2, "report_count")?);
    }
    Ok(table)
}

pub fn write_truth(path: &Path, truth: &BTreeMap<String, f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRUTH_HEADER).map_err(csv_err)?;
    for (id, v) in truth {
        w.write_record([id.clone(), v.to_string()]).map_err(csv_err)?;
    }
    finish_csv(path, w)
}

pub fn read_truth(path: &Path) -> Result<BTreeMap<String, f64>> {
    csv_rows(path, TRUTH_HEADER)?
        .into_iter()
        .map(|(line, rec)| Ok((rec[0].to_string(), field(path, line, &rec, 1, "efficacy")?)))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssocLine {
    tweet_id: String,
    neighborhood_id: String,
}

pub fn write_association(path: &Path, assoc: &Association) -> Result<()> {
    let mut out = String::new();
    for (tweet_id, neighborhood_id) in assoc.rows() {
        let line = AssocLine {
            tweet_id: tweet_id.to_string(),
            neighborhood_id: neighborhood_id.to_string(),
        };
        out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Serialization(e.to_string()))?);
        out.push('\n');
    }
    write_text(path, &out)
}

/// `(tweet_id, neighborhood_id)` rows of an association file.
pub fn read_association(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let a: AssocLine = serde_json::from_str(l).map_err(|e| parse_err(path, i + 1, e.to_string()))?;
            Ok((a.tweet_id, a.neighborhood_id))
        })
        .collect()
}

/// Per-neighborhood tweet, user and mentioned-venue counts.
pub fn write_stats(path: &Path, assoc: &Association) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STATS_HEADER).map_err(csv_err)?;
    for id in assoc.tweets.keys() {
        w.write_record([
            id.clone(),
            assoc.tweet_count(id).to_string(),
            assoc.users(id).len().to_string(),
            assoc.venue_count(id).to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish_csv(path, w)
}

/// Counts from a `neighborhood_stats.csv` file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NeighborhoodStats {
    pub tweets: usize,
    pub users: usize,
    pub venues: usize,
}

pub fn read_stats(path: &Path) -> Result<BTreeMap<String, NeighborhoodStats>> {
    let mut out = BTreeMap::new();
    for (line, rec) in csv_rows(path, STATS_HEADER)? {
        let stats = NeighborhoodStats {
            tweets: field(path, line, &rec, 1, "tweet_count")?,
            users: field(path, line, &rec, 2, "user_count")?,
            venues: field(path, line, &rec, 3, "venue_count")?,
        };
        if out.insert(rec[0].to_string(), stats).is_some() {
            return Err(parse_err(path, line, format!("duplicate neighborhood id {}", &rec[0])));
        }
    }
    Ok(out)
}

pub fn read_lexicon(path: &Path) -> Result<Vec<String>> {
    let text = read_text(path)?;
    let terms: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect();
    if terms.is_empty() {
        return Err(Error::invalid(format!("{}: lexicon is empty", path.display())));
    }
    Ok(terms)
}

pub fn write_lexicon(path: &Path, terms: &[String]) -> Result<()> {
    let mut out = String::new();
    for t in terms {
        out.push_str(t);
        out.push('\n');
    }
    write_text(path, &out)
}

/// `term<TAB>score` lines with scores in [-1, 1].
pub fn read_sentiment_lexicon(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = read_text(path)?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (term, score) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, i + 1, "expected `term<TAB>score`"))?;
        let score: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_err(path, i + 1, format!("bad score `{score}`")))?;
        if !(-1.0..=1.0).contains(&score) {
            return Err(parse_err(path, i + 1, format!("score {score} outside [-1, 1]")));
        }
        map.insert(term.trim().to_lowercase(), score);
    }
    if map.is_empty() {
        return Err(Error::invalid(format!("{}: sentiment lexicon is empty", path.display())));
    }
    Ok(map)
}

pub fn write_sentiment_lexicon(path: &Path, lexicon: &BTreeMap<String, f64>) -> Result<()> {
    let mut out = String::new();
    for (term, score) in lexicon {
        let _ = writeln!(out, "{term}\t{score}");
    }
    write_text(path, &out)
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Serialization(e.to_string())
}

pub(crate) fn finish_csv(path: &Path, w: csv::Writer<Vec<u8>>) -> Result<()> {
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))?;
    write_text(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_mismatch_fails_closed() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("surveys.csv");
        std::fs::write(&p, "id,neighborhood,q1,q2,q3\nr1,N1,1,2,3\n").unwrap();
        assert!(matches!(read_surveys(&p), Err(Error::Header { .. })));
    }

    #[test]
    fn tweets_reject_duplicates_and_half_geo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tweets.jsonl");
        std::fs::write(
            &p,
            "{\"tweet_id\":\"a\",\"user_id\":\"u\",\"timestamp\":1,\"text\":\"x\"}\n{\"tweet_id\":\"a\",\"user_id\":\"u\",\"timestamp\":2,\"text\":\"y\"}\n",
        )
        .unwrap();
        assert!(read_tweets(&p).is_err());
        std::fs::write(&p, "{\"tweet_id\":\"a\",\"user_id\":\"u\",\"timestamp\":1,\"text\":\"x\",\"lat\":1.0}\n").unwrap();
        assert!(read_tweets(&p).is_err());
    }

    #[test]
    fn tweets_round_trip_with_geo() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tweets.jsonl");
        let tweets = vec![
            TweetRecord {
                tweet_id: "a".into(),
                user_id: "u1".into(),
                timestamp: 7,
                text: "hi \"there\"".into(),
                geo: Some((39.96, -83.0)),
            },
            TweetRecord {
                tweet_id: "b".into(),
                user_id: "u2".into(),
                timestamp: 9,
                text: "🙂".into(),
                geo: None,
            },
        ];
        write_tweets(&p, &tweets).unwrap();
        assert_eq!(read_tweets(&p).unwrap(), tweets);
    }

    #[test]
    fn survey_out_of_range_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("surveys.csv");
        std::fs::write(&p, "report_id,neighborhood_id,q1,q2,q3\nr1,N1,1,2,6\n").unwrap();
        assert!(read_surveys(&p).is_err());
    }

    #[test]
    fn neighborhoods_population_optional() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("n.csv");
        std::fs::write(&p, "id,lat,lon,population\nA,39.9,-83.0,\nB,40.0,-83.1,1200\n").unwrap();
        let n = read_neighborhoods(&p).unwrap();
        assert_eq!(n[0].population, None);
        assert_eq!(n[1].population, Some(1200));
    }
}
