//! Planted-preference datasets with a skewed provider catalog, for tests,
//! benchmarks and desk-scale experiments.

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GroupAssignment, Interaction};
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Every `minority_every`-th item belongs to the minority group.
    pub minority_every: usize,
    /// Users and items are split into this many taste clusters.
    pub n_clusters: usize,
    pub interactions_per_user: usize,
    /// Probability that an interaction stays inside the user's cluster.
    pub in_cluster: f64,
    /// Relative draw propensity of minority items (1 = no popularity gap).
    pub minority_propensity: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 300,
            n_items: 200,
            minority_every: 10,
            n_clusters: 5,
            interactions_per_user: 20,
            in_cluster: 0.8,
            minority_propensity: 0.4,
            seed: 7,
        }
    }
}

pub const MINORITY: &str = "F";
pub const MAJORITY: &str = "M";

/// Generates interactions and group labels. Item `i` is labeled minority
/// when `i % minority_every == 0`; within a cluster, item popularity decays
/// as `1/sqrt(1+rank)` and minority items are further scaled by
/// `minority_propensity`. Timestamps are uniform, so a temporal split acts
/// like a random one.
pub fn planted_dataset(spec: &SyntheticSpec) -> (Vec<Interaction>, Vec<GroupAssignment>) {
    let mut rng = seeded(spec.seed);
    let is_minority = |i: usize| i.is_multiple_of(spec.minority_every.max(1));
    let propensity: Vec<f64> = (0..spec.n_items)
        .map(|i| {
            let rank_in_cluster = i / spec.n_clusters;
            let base = 1.0 / ((1 + rank_in_cluster) as f64).sqrt();
            if is_minority(i) {
                base * spec.minority_propensity
            } else {
                base
            }
        })
        .collect();
    let global = WeightedIndex::new(&propensity).expect("positive propensities");
    let per_cluster: Vec<(Vec<usize>, WeightedIndex<f64>)> = (0..spec.n_clusters)
        .map(|c| {
            let items: Vec<usize> = (0..spec.n_items).filter(|i| i % spec.n_clusters == c).collect();
            let dist = WeightedIndex::new(items.iter().map(|&i| propensity[i])).expect("non-empty cluster");
            (items, dist)
        })
        .collect();

    let per_user = spec.interactions_per_user.min(spec.n_items);
    let mut interactions = Vec::with_capacity(spec.n_users * per_user);
    for u in 0..spec.n_users {
        let (items, dist) = &per_cluster[u % spec.n_clusters];
        let mut chosen: Vec<usize> = Vec::with_capacity(per_user);
        let mut guard = 0;
        while chosen.len() < per_user && guard < 100 * per_user {
            guard += 1;
            let item = if rng.gen::<f64>() < spec.in_cluster {
                items[dist.sample(&mut rng)]
            } else {
                global.sample(&mut rng)
            };
            if !chosen.contains(&item) {
                chosen.push(item);
            }
        }
        for item in chosen {
            interactions.push(Interaction {
                user: format!("u{u}"),
                item: format!("i{item}"),
                rating: 1.0 + rng.gen_range(0..5) as f64,
                timestamp: rng.gen_range(0..1_000_000),
            });
        }
    }
    interactions.shuffle(&mut rng);

    let groups = (0..spec.n_items)
        .map(|i| GroupAssignment {
            item: format!("i{i}"),
            provider: format!("p{}", i / 2),
            group: if is_minority(i) { MINORITY } else { MAJORITY }.to_string(),
        })
        .collect();
    (interactions, groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Catalog;

    #[test]
    fn shape_and_labels() {
        let spec = SyntheticSpec::default();
        let (rows, groups) = planted_dataset(&spec);
        assert_eq!(rows.len(), spec.n_users * spec.interactions_per_user);
        let cat = Catalog::from_assignments(&groups).unwrap();
        assert!((cat.group_share[MINORITY] - 0.1).abs() < 1e-12);
        assert_eq!(planted_dataset(&spec).0, rows);
    }

    #[test]
    fn minority_underrepresented_in_interactions() {
        let (rows, groups) = planted_dataset(&SyntheticSpec::default());
        let cat = Catalog::from_assignments(&groups).unwrap();
        let f = rows.iter().filter(|r| cat.group_of(&r.item) == MINORITY).count();
        assert!((f as f64 / rows.len() as f64) < 0.1);
    }
}
