//! Utility (NDCG@k) and provider-group exposure of top-k lists.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::dataset::{Catalog, DatasetSplit};
use crate::error::{Error, Result};
use crate::model::{recommend_top_k, FactorModel};
use crate::parallel;
use crate::sampling::CompositionAudit;

/// A user's recommendation list, best item first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: String,
    pub items: Vec<String>,
    pub k: usize,
}

impl RankedList {
    /// Truncates `items` to `k`. Duplicates are a caller bug.
    pub fn new(user: impl Into<String>, mut items: Vec<String>, k: usize) -> Self {
        items.truncate(k);
        debug_assert_eq!(items.iter().collect::<HashSet<_>>().len(), items.len());
        RankedList {
            user: user.into(),
            items,
            k,
        }
    }
}

/// Discount applied to rank `r` (1-based).
#[inline]
pub fn rank_discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Binary-relevance NDCG@k with `1/log2(r+1)` discount; the ideal DCG uses
/// `min(k, |relevant|)` terms. An empty relevant set has no defined value.
pub fn ndcg_at_k<T: Eq + Hash>(ranked: &[T], relevant: &HashSet<T>, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if relevant.is_empty() {
        return Err(Error::Evaluation("no relevant items; NDCG undefined".into()));
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.contains(item))
        .map(|(r, _)| rank_discount(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(rank_discount).sum();
    Ok(dcg / idcg)
}

fn group_shares(lists: &[RankedList], catalog: &Catalog, k: usize, weight: impl Fn(usize) -> f64) -> BTreeMap<String, f64> {
    let mut mass: BTreeMap<String, f64> = catalog.labels().into_iter().map(|g| (g, 0.0)).collect();
    let mut total = 0.0;
    for list in lists {
        for (r, item) in list.items.iter().take(k).enumerate() {
            let w = weight(r + 1);
            let g = catalog.group_of(item);
            match mass.get_mut(g) {
                Some(v) => *v += w,
                None => {
                    mass.insert(g.to_string(), w);
                }
            }
            total += w;
        }
    }
    if total > 0.0 {
        for v in mass.values_mut() {
            *v /= total;
        }
    }
    mass
}

/// Fraction of all top-k slots held by each group. Every catalog group is
/// present (possibly 0); [`crate::UNKNOWN_GROUP`] appears when unlabeled items do.
pub fn group_slot_share(lists: &[RankedList], catalog: &Catalog, k: usize) -> BTreeMap<String, f64> {
    group_shares(lists, catalog, k, |_| 1.0)
}

/// Like [`group_slot_share`] but each slot at rank `r` carries weight
/// `1/log2(r+1)`.
pub fn group_weighted_exposure(lists: &[RankedList], catalog: &Catalog, k: usize) -> BTreeMap<String, f64> {
    group_shares(lists, catalog, k, rank_discount)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean NDCG@k over users with at least one eligible test item.
    pub ndcg: BTreeMap<usize, f64>,
    pub slot_share: BTreeMap<usize, BTreeMap<String, f64>>,
    pub weighted_exposure: BTreeMap<usize, BTreeMap<String, f64>>,
    pub triplet_audit: Option<CompositionAudit>,
    pub n_eval_users: usize,
    pub n_list_users: usize,
    pub config: serde_json::Value,
}

impl MetricsReport {
    /// Long-form rows `(metric, k, group, value)`; group is empty for NDCG.
    pub fn rows(&self) -> Vec<(String, usize, String, f64)> {
        let mut rows = Vec::new();
        for (k, v) in &self.ndcg {
            rows.push(("ndcg".to_string(), *k, String::new(), *v));
        }
        for (name, table) in [("slot_share", &self.slot_share), ("weighted_exposure", &self.weighted_exposure)] {
            for (k, groups) in table {
                for (g, v) in groups {
                    rows.push((name.to_string(), *k, g.clone(), *v));
                }
            }
        }
        rows
    }
}

/// Builds every model user's top-`max(ks)` list and scores it.
///
/// Candidates are the model's items minus the user's train items. A user's
/// relevant set is their test items known to the model and not already in
/// their train items; users with an empty relevant set are skipped for NDCG
/// but their lists still count toward exposure.
pub fn fairness_report(
    model: &FactorModel,
    split: &DatasetSplit,
    catalog: &Catalog,
    ks: &[usize],
    audit: Option<CompositionAudit>,
    config: serde_json::Value,
) -> Result<MetricsReport> {
    let k_max = *ks.iter().max().ok_or_else(|| Error::domain("no cutoffs given"))?;
    if ks.contains(&0) {
        return Err(Error::domain("cutoffs must be at least 1"));
    }

    let n_users = model.n_users();
    let mut exclude: Vec<Vec<u32>> = vec![Vec::new(); n_users];
    for it in &split.train {
        if let (Some(u), Some(i)) = (model.user(&it.user), model.item(&it.item)) {
            exclude[u as usize].push(i);
        }
    }
    for list in &mut exclude {
        list.sort_unstable();
        list.dedup();
    }
    let mut relevant: Vec<HashSet<u32>> = vec![HashSet::new(); n_users];
    for it in &split.test {
        if let (Some(u), Some(i)) = (model.user(&it.user), model.item(&it.item)) {
            if exclude[u as usize].binary_search(&i).is_err() {
                relevant[u as usize].insert(i);
            }
        }
    }
    let n_eval_users = relevant.iter().filter(|r| !r.is_empty()).count();
    if n_eval_users == 0 {
        return Err(Error::Evaluation("no user has an eligible test interaction".into()));
    }

    let per_user = parallel::try_map_range(n_users, |u| -> Result<(Vec<u32>, Vec<Option<f64>>)> {
        let top = recommend_top_k(model, u as u32, k_max, &exclude[u])?;
        let items: Vec<u32> = top.items.iter().map(|p| p.0).collect();
        let ndcgs = ks
            .iter()
            .map(|&k| {
                if relevant[u].is_empty() {
                    Ok(None)
                } else {
                    ndcg_at_k(&items, &relevant[u], k).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((items, ndcgs))
    })?;

    let lists: Vec<RankedList> = per_user
        .iter()
        .enumerate()
        .map(|(u, (items, _))| {
            RankedList::new(
                model.user_ids()[u].clone(),
                items.iter().map(|&i| model.item_ids()[i as usize].clone()).collect(),
                k_max,
            )
        })
        .collect();

    let mut ndcg = BTreeMap::new();
    let mut slot_share = BTreeMap::new();
    let mut weighted_exposure = BTreeMap::new();
    for (pos, &k) in ks.iter().enumerate() {
        let sum: f64 = per_user.iter().filter_map(|(_, v)| v[pos]).sum();
        ndcg.insert(k, sum / n_eval_users as f64);
        slot_share.insert(k, group_slot_share(&lists, catalog, k));
        weighted_exposure.insert(k, group_weighted_exposure(&lists, catalog, k));
    }

    Ok(MetricsReport {
        ndcg,
        slot_share,
        weighted_exposure,
        triplet_audit: audit,
        n_eval_users,
        n_list_users: n_users,
        config,
    })
}

/// Share of `group` in a per-group table, 0 when absent.
pub fn share_of(table: &BTreeMap<String, f64>, group: &str) -> f64 {
    table.get(group).copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::UNKNOWN_GROUP;

    fn cat() -> Catalog {
        Catalog::from_groups(
            [("f1", "F"), ("f2", "F"), ("m1", "M"), ("m2", "M"), ("m3", "M")]
                .iter()
                .map(|(i, g)| (i.to_string(), g.to_string()))
                .collect(),
        )
    }

    fn list(user: &str, items: &[&str]) -> RankedList {
        RankedList::new(user, items.iter().map(|s| s.to_string()).collect(), items.len())
    }

    #[test]
    fn ndcg_examples() {
        let rel: HashSet<&str> = ["a", "b"].into();
        assert_eq!(ndcg_at_k(&["a", "b", "c"], &rel, 2).unwrap(), 1.0);

        let rel: HashSet<&str> = ["x"].into();
        let ranked = ["a", "x", "c", "d", "e", "f", "g", "h", "i", "j"];
        let v = ndcg_at_k(&ranked, &rel, 10).unwrap();
        assert!((v - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((v - 0.6309).abs() < 1e-4);

        let rel: HashSet<&str> = ["zz"].into();
        assert_eq!(ndcg_at_k(&ranked, &rel, 10).unwrap(), 0.0);
        assert!(ndcg_at_k(&ranked, &HashSet::new(), 10).is_err());
        assert!(ndcg_at_k(&ranked, &rel, 0).is_err());
    }

    #[test]
    fn slot_share_counts() {
        let c = cat();
        let all_f = [list("u", &["f1", "f2"])];
        assert_eq!(group_slot_share(&all_f, &c, 2)["F"], 1.0);

        let lists = [list("u", &["f1", "m1"]), list("v", &["m2", "m3"])];
        let s = group_slot_share(&lists, &c, 2);
        assert_eq!(s["F"], 0.25);
        assert_eq!(s["M"], 0.75);
        assert!(!s.contains_key(UNKNOWN_GROUP));
    }

    #[test]
    fn weighted_exposure_two_slots() {
        let c = cat();
        let e = group_weighted_exposure(&[list("u", &["f1", "m1"])], &c, 2);
        let expected = 1.0 / (1.0 + 1.0 / 3f64.log2());
        assert!((e["F"] - expected).abs() < 1e-12);
        assert!((e["F"] - 0.6131).abs() < 1e-4);
        assert!((e["F"] + e["M"] - 1.0).abs() < 1e-12);

        let single = group_weighted_exposure(&[list("u", &["m1", "m2", "m3"])], &c, 3);
        assert_eq!(single["M"], 1.0);
    }

    #[test]
    fn unknown_items_reported() {
        let c = cat();
        let s = group_slot_share(&[list("u", &["f1", "??"])], &c, 2);
        assert_eq!(s[UNKNOWN_GROUP], 0.5);
        assert_eq!(s["M"], 0.0);
    }

    #[test]
    fn empty_lists_give_zero_shares() {
        let s = group_slot_share(&[], &cat(), 10);
        assert!(s.values().all(|v| *v == 0.0));
    }

    #[test]
    fn single_group_lists_measures_agree() {
        let c = cat();
        let lists: Vec<RankedList> = (0..5).map(|u| list(&format!("u{u}"), &["f1", "m1", "m2"])).collect();
        // a mixed pattern is position-sensitive; a single-group pattern is not
        let s = group_slot_share(&lists, &c, 3);
        let w = group_weighted_exposure(&lists, &c, 3);
        assert!(w["F"] > s["F"]);
        let lists: Vec<RankedList> = (0..5).map(|u| list(&format!("u{u}"), &["f1", "f2"])).collect();
        assert_eq!(group_slot_share(&lists, &c, 2), group_weighted_exposure(&lists, &c, 2));
    }
}
