//! Orderings that need no learning: sorting by a per-neighborhood count or
//! by centroid coordinates.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ScoreMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Desc,
    Asc,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desc" => Ok(Direction::Desc),
            "asc" => Ok(Direction::Asc),
            other => Err(Error::invalid(format!("unknown direction {other:?}"))),
        }
    }
}

impl Direction {
    fn apply(self, ord: Ordering) -> Ordering {
        match self {
            Direction::Desc => ord,
            Direction::Asc => ord.reverse(),
        }
    }
}

fn lookup<'a, T>(map: &'a BTreeMap<String, T>, ids: &[String]) -> Result<Vec<&'a T>> {
    ids.iter()
        .map(|id| map.get(id).ok_or_else(|| Error::UnknownNeighborhood(id.clone())))
        .collect()
}

/// Larger metric first under `Desc`; equal values are tied.
pub fn rank_by_metric(metric: &BTreeMap<String, f64>, ids: &[String], direction: Direction) -> Result<ScoreMatrix> {
    let vals = lookup(metric, ids)?;
    Ok(ScoreMatrix::from_relation(ids.to_vec(), |i, j| {
        direction.apply(vals[i].total_cmp(vals[j])) != Ordering::Less
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateAxis {
    /// Latitude, then longitude to break ties.
    #[default]
    LatLon,
    Lat,
    Lon,
}

impl FromStr for CoordinateAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lat-lon" | "latlon" => Ok(CoordinateAxis::LatLon),
            "lat" => Ok(CoordinateAxis::Lat),
            "lon" => Ok(CoordinateAxis::Lon),
            other => Err(Error::invalid(format!("unknown coordinate axis {other:?}"))),
        }
    }
}

/// Orders centroids by the chosen axis; the default puts the northernmost
/// (then easternmost) neighborhood first. Identical keys are tied.
pub fn rank_by_coordinates(
    centroids: &BTreeMap<String, (f64, f64)>,
    ids: &[String],
    axis: CoordinateAxis,
    direction: Direction,
) -> Result<ScoreMatrix> {
    let pts = lookup(centroids, ids)?;
    let cmp = |a: &(f64, f64), b: &(f64, f64)| match axis {
        CoordinateAxis::LatLon => a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)),
        CoordinateAxis::Lat => a.0.total_cmp(&b.0),
        CoordinateAxis::Lon => a.1.total_cmp(&b.1),
    };
    Ok(ScoreMatrix::from_relation(ids.to_vec(), |i, j| {
        direction.apply(cmp(pts[i], pts[j])) != Ordering::Less
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Tweets,
    Users,
    Venues,
    Population,
    Coordinates,
    Random,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::Random,
        BaselineKind::Coordinates,
        BaselineKind::Population,
        BaselineKind::Tweets,
        BaselineKind::Users,
        BaselineKind::Venues,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Tweets => "tweets",
            BaselineKind::Users => "users",
            BaselineKind::Venues => "venues",
            BaselineKind::Population => "population",
            BaselineKind::Coordinates => "coordinates",
            BaselineKind::Random => "random",
        }
    }
}

impl FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown baseline {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{count_tied_pairs, tau_x};
    use proptest::prelude::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("n{i}")).collect()
    }

    fn metric(vals: &[f64]) -> BTreeMap<String, f64> {
        ids(vals.len()).into_iter().zip(vals.iter().copied()).collect()
    }

    #[test]
    fn chain_and_all_tied() {
        let m = rank_by_metric(&metric(&[10.0, 5.0, 1.0]), &ids(3), Direction::Desc).unwrap();
        assert!(m.is_strict());
        assert_eq!((m.get(0, 1), m.get(1, 2), m.get(2, 0)), (1, 1, -1));
        let t = rank_by_metric(&metric(&[4.0; 5]), &ids(5), Direction::Desc).unwrap();
        assert_eq!(count_tied_pairs(&t), 20);
    }

    #[test]
    fn missing_id_errors() {
        assert!(rank_by_metric(&metric(&[1.0]), &ids(2), Direction::Desc).is_err());
    }

    #[test]
    fn coordinates_rules() {
        let c: BTreeMap<String, (f64, f64)> =
            [("n0".into(), (39.9, -83.0)), ("n1".into(), (40.1, -83.0)), ("n2".into(), (40.1, -83.0))].into();
        let m = rank_by_coordinates(&c, &ids(3), CoordinateAxis::LatLon, Direction::Desc).unwrap();
        assert_eq!(m.get(1, 0), 1);
        assert_eq!(m.get(0, 1), -1);
        assert!(m.is_tied(1, 2));
        m.validate().unwrap();

        let lon: BTreeMap<String, (f64, f64)> =
            [("n0".into(), (0.0, 1.0)), ("n1".into(), (0.0, 2.0)), ("n2".into(), (0.0, 3.0))].into();
        let asc = rank_by_coordinates(&lon, &ids(3), CoordinateAxis::Lon, Direction::Asc).unwrap();
        let desc = rank_by_coordinates(&lon, &ids(3), CoordinateAxis::Lon, Direction::Desc).unwrap();
        assert_eq!(asc, desc.reversed());
    }

    proptest! {
        #[test]
        fn asc_reverses_desc_without_ties(vals in proptest::collection::btree_set(0i32..10_000, 2..30)) {
            let v: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let m = metric(&v);
            let d = rank_by_metric(&m, &ids(v.len()), Direction::Desc).unwrap();
            let a = rank_by_metric(&m, &ids(v.len()), Direction::Asc).unwrap();
            d.validate().unwrap();
            prop_assert_eq!(&a, &d.reversed());
            prop_assert_eq!(tau_x(&a, &d).unwrap(), -1.0);
        }
    }
}
