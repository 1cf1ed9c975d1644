use std::collections::HashMap;

use crate::dataset::{compare_ids, Interaction};

/// Dense integer view of the train interactions. Users and items are
/// numbered in [`compare_ids`] order so the numbering does not depend on
/// row order.
#[derive(Debug, Clone)]
pub struct TrainIndex {
    users: Vec<String>,
    items: Vec<String>,
    user_lookup: HashMap<String, u32>,
    item_lookup: HashMap<String, u32>,
    /// Distinct items per user, sorted ascending.
    user_items: Vec<Vec<u32>>,
    n_interactions: usize,
}

fn sorted_ids<'a>(ids: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut v: Vec<&str> = ids.collect();
    v.sort_unstable_by(|a, b| compare_ids(a, b));
    v.dedup();
    v.into_iter().map(str::to_string).collect()
}

impl TrainIndex {
    pub fn new(train: &[Interaction]) -> Self {
        let users = sorted_ids(train.iter().map(|it| it.user.as_str()));
        let items = sorted_ids(train.iter().map(|it| it.item.as_str()));
        let user_lookup: HashMap<String, u32> =
            users.iter().enumerate().map(|(i, u)| (u.clone(), i as u32)).collect();
        let item_lookup: HashMap<String, u32> =
            items.iter().enumerate().map(|(i, u)| (u.clone(), i as u32)).collect();
        let mut user_items = vec![Vec::new(); users.len()];
        for it in train {
            user_items[user_lookup[&it.user] as usize].push(item_lookup[&it.item]);
        }
        for list in &mut user_items {
            list.sort_unstable();
            list.dedup();
        }
        TrainIndex {
            users,
            items,
            user_lookup,
            item_lookup,
            user_items,
            n_interactions: train.len(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_interactions(&self) -> usize {
        self.n_interactions
    }

    pub fn user_ids(&self) -> &[String] {
        &self.users
    }

    pub fn item_ids(&self) -> &[String] {
        &self.items
    }

    pub fn user_id(&self, user: u32) -> &str {
        &self.users[user as usize]
    }

    pub fn item_id(&self, item: u32) -> &str {
        &self.items[item as usize]
    }

    pub fn user(&self, id: &str) -> Option<u32> {
        self.user_lookup.get(id).copied()
    }

    pub fn item(&self, id: &str) -> Option<u32> {
        self.item_lookup.get(id).copied()
    }

    pub fn items_of(&self, user: u32) -> &[u32] {
        &self.user_items[user as usize]
    }

    pub fn has_item(&self, user: u32, item: u32) -> bool {
        self.user_items[user as usize].binary_search(&item).is_ok()
    }
}
