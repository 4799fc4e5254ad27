use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::Association;
use crate::error::{Error, Result};

pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two `(lat, lon)` points in degrees.
pub fn haversine_km(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (lat1, lon1) = (a.0.to_radians(), a.1.to_radians());
    let (lat2, lon2) = (b.0.to_radians(), b.1.to_radians());
    let h = ((lat2 - lat1) / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * ((lon2 - lon1) / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub distance_norm: f64,
    pub common_users: f64,
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Pairwise quantities over a fixed active set: centroid distances min-max
/// scaled over all pairs of the set, and user-set overlap.
#[derive(Debug, Clone)]
pub struct PairContext {
    index: BTreeMap<String, usize>,
    centroids: Vec<(f64, f64)>,
    users: Vec<BTreeSet<String>>,
    d_min: f64,
    d_max: f64,
}

impl PairContext {
    pub fn new(active: &[String], centroids: &BTreeMap<String, (f64, f64)>, assoc: &Association) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut points = Vec::with_capacity(active.len());
        let mut users = Vec::with_capacity(active.len());
        for (i, id) in active.iter().enumerate() {
            let c = centroids.get(id).ok_or_else(|| Error::UnknownNeighborhood(id.clone()))?;
            index.insert(id.clone(), i);
            points.push(*c);
            users.push(assoc.users(id).into_iter().map(str::to_string).collect());
        }
        let (mut d_min, mut d_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                let d = haversine_km(points[i], points[j]);
                d_min = d_min.min(d);
                d_max = d_max.max(d);
            }
        }
        Ok(PairContext {
            index,
            centroids: points,
            users,
            d_min,
            d_max,
        })
    }

    fn position(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownNeighborhood(id.to_string()))
    }

    pub fn pair_features(&self, i: &str, j: &str) -> Result<PairFeatures> {
        let (a, b) = (self.position(i)?, self.position(j)?);
        let d = haversine_km(self.centroids[a], self.centroids[b]);
        let span = self.d_max - self.d_min;
        let distance_norm = if span > 0.0 {
            ((d - self.d_min) / span).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Ok(PairFeatures {
            distance_norm,
            common_users: jaccard(&self.users[a], &self.users[b]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TweetRecord;
    use proptest::prelude::*;

    #[test]
    fn one_degree_on_the_equator() {
        assert_eq!(haversine_km((0.0, 0.0), (0.0, 0.0)), 0.0);
        let expected = 2.0 * std::f64::consts::PI * EARTH_RADIUS_KM / 360.0;
        assert!((haversine_km((0.0, 0.0), (0.0, 1.0)) - expected).abs() < 1e-9);
        assert!((expected - 111.1949).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn symmetric_and_triangular(
            a in (-80.0..80.0f64, -170.0..170.0f64),
            b in (-80.0..80.0f64, -170.0..170.0f64),
            c in (-80.0..80.0f64, -170.0..170.0f64),
        ) {
            prop_assert_eq!(haversine_km(a, b), haversine_km(b, a));
            prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6);
        }
    }

    fn tweet(id: usize, user: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: format!("t{id}"),
            user_id: user.into(),
            timestamp: 0,
            text: "x".into(),
            geo: None,
        }
    }

    fn context() -> PairContext {
        let mut assoc = Association::default();
        assoc.tweets.insert("a".into(), vec![tweet(0, "u1"), tweet(1, "u2")]);
        assoc.tweets.insert("b".into(), vec![tweet(2, "u2"), tweet(3, "u1")]);
        assoc.tweets.insert("c".into(), vec![tweet(4, "u3")]);
        let centroids: BTreeMap<String, (f64, f64)> = [
            ("a".to_string(), (40.0, -83.0)),
            ("b".to_string(), (40.01, -83.0)),
            ("c".to_string(), (40.1, -83.0)),
            ("z".to_string(), (0.0, 0.0)),
        ]
        .into();
        PairContext::new(&["a".into(), "b".into(), "c".into()], &centroids, &assoc).unwrap()
    }

    #[test]
    fn jaccard_extremes_and_endpoints() {
        let ctx = context();
        let ab = ctx.pair_features("a", "b").unwrap();
        assert_eq!(ab.common_users, 1.0);
        assert_eq!(ab.distance_norm, 0.0);
        let ac = ctx.pair_features("a", "c").unwrap();
        assert_eq!(ac.common_users, 0.0);
        assert_eq!(ac.distance_norm, 1.0);
    }

    #[test]
    fn outside_active_set_is_an_error() {
        assert!(matches!(context().pair_features("a", "z"), Err(Error::UnknownNeighborhood(_))));
    }
}
