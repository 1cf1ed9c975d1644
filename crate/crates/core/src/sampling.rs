//! Training-triplet samplers.
//!
//! The baseline sampler draws a user, one of the user's train items as the
//! positive, and a uniformly drawn train item the user has not interacted
//! with as the negative. The cost-sensitive sampler replaces one of the two
//! uniform item draws with a draw proportional to a per-item weight, where
//! items of the emphasized provider group weigh `C` times more than the
//! rest. Negatives are still rejection-resampled against the user's items,
//! so the weights are global and never renormalized per user.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Catalog, DatasetSplit, Delimiter, UNKNOWN_GROUP};
use crate::error::{Error, Result};
use crate::index::TrainIndex;
use crate::parallel;
use crate::rng::{derive_seed, seeded};

/// Attempts allowed for a single rejection loop before giving up.
pub const DEFAULT_MAX_RETRIES: usize = 10_000;

/// Triplets drawn from one RNG stream before switching to the next; keeps
/// the stream identical whether chunks run in parallel or not.
const CHUNK_SIZE: usize = 8192;

/// Which item slot of the triplet the cost-sensitive weights act on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSlot {
    #[serde(alias = "negative")]
    Neg,
    #[serde(alias = "positive")]
    Pos,
    None,
}

impl FromStr for TargetSlot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "neg" | "negative" => Ok(TargetSlot::Neg),
            "pos" | "positive" => Ok(TargetSlot::Pos),
            "none" | "-" => Ok(TargetSlot::None),
            other => Err(Error::domain(format!("unknown slot {other:?} (expected neg, pos or none)"))),
        }
    }
}

impl fmt::Display for TargetSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetSlot::Neg => "neg",
            TargetSlot::Pos => "pos",
            TargetSlot::None => "none",
        })
    }
}

/// How the user of each triplet is drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UserDraw {
    /// Uniform over users with at least one train interaction.
    #[default]
    Uniform,
    /// Proportional to the user's number of distinct train items, i.e. a
    /// uniform draw over distinct (user, item) train pairs.
    InteractionProportional,
}

impl FromStr for UserDraw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(UserDraw::Uniform),
            "interaction-proportional" | "interactions" => Ok(UserDraw::InteractionProportional),
            other => Err(Error::domain(format!("unknown user draw {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Cost `C >= 1` of the emphasized group.
    pub cost: f64,
    pub target_slot: TargetSlot,
    /// Group whose items get the larger weight. `None` picks the catalog's
    /// majority group for the negative slot and its minority group for the
    /// positive slot.
    pub emphasized_group: Option<String>,
    pub seed: u64,
    /// Triplets per epoch; `None` means one per train interaction.
    pub triplets_per_epoch: Option<usize>,
    pub user_draw: UserDraw,
    pub max_retries: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            cost: 1.0,
            target_slot: TargetSlot::None,
            emphasized_group: None,
            seed: 0,
            triplets_per_epoch: None,
            user_draw: UserDraw::Uniform,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cost.is_finite() && self.cost >= 1.0) {
            return Err(Error::domain(format!("cost must be a finite value >= 1 (got {})", self.cost)));
        }
        if self.max_retries == 0 {
            return Err(Error::domain("max_retries must be positive"));
        }
        Ok(())
    }

    /// The emphasized group after applying the slot-dependent default.
    pub fn resolved_emphasized_group(&self, catalog: &Catalog) -> Option<String> {
        if let Some(g) = &self.emphasized_group {
            return Some(g.clone());
        }
        match self.target_slot {
            TargetSlot::Neg => catalog.majority_group().map(str::to_string),
            TargetSlot::Pos => catalog.minority_group().map(str::to_string),
            TargetSlot::None => None,
        }
    }
}

/// Percentages assigned to the emphasized group and to the other group:
/// `(100·C/(C+1), 100/(C+1))`.
pub fn group_probability_vector(cost: f64) -> Result<(f64, f64)> {
    if !(cost.is_finite() && cost >= 1.0) {
        return Err(Error::domain(format!("cost must be a finite value >= 1 (got {cost})")));
    }
    Ok(((cost * 100.0) / (cost + 1.0), 100.0 / (cost + 1.0)))
}

/// Per-item sampling weights over the train items of a [`TrainIndex`].
#[derive(Debug, Clone, PartialEq)]
pub struct ItemWeights {
    weights: Vec<f64>,
}

impl ItemWeights {
    pub fn get(&self, item: u32) -> f64 {
        self.weights[item as usize]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn to_map(&self, index: &TrainIndex) -> BTreeMap<String, f64> {
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| (index.item_id(i as u32).to_string(), *w))
            .collect()
    }
}

/// Weight of every train item. With at most two labeled groups the
/// emphasized group's items weigh `100·C/(C+1)` and every other item
/// (including unlabeled ones) `100/(C+1)`. With more groups the emphasized
/// group weighs `C` and all others `1`, which is the same ratio.
pub fn build_item_weights(
    index: &TrainIndex,
    catalog: &Catalog,
    config: &SamplerConfig,
) -> Result<ItemWeights> {
    config.validate()?;
    if index.n_items() == 0 {
        return Err(Error::domain("cannot build weights over an empty item set"));
    }
    let emphasized = config.resolved_emphasized_group(catalog);
    let (hi, lo) = if catalog.group_share.len() <= 2 {
        group_probability_vector(config.cost)?
    } else {
        (config.cost, 1.0)
    };
    let weights = index
        .item_ids()
        .iter()
        .map(|item| {
            let group = catalog.group_of(item);
            if emphasized.as_deref() == Some(group) && group != UNKNOWN_GROUP {
                hi
            } else {
                lo
            }
        })
        .collect();
    Ok(ItemWeights { weights })
}

/// One training sample, in [`TrainIndex`] numbering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub user: u32,
    pub positive: u32,
    pub negative: u32,
}

enum Weighted {
    None,
    Negative(WeightedIndex<f64>),
    /// One distribution per user over that user's item list.
    Positive(Vec<Option<WeightedIndex<f64>>>),
}

/// Draws triplets from an immutable train index. Cheap to share across
/// threads; all randomness comes from the caller's generator.
pub struct TripletSampler<'a> {
    index: &'a TrainIndex,
    config: SamplerConfig,
    weights: ItemWeights,
    weighted: Weighted,
    users: Vec<u32>,
    user_weights: Option<WeightedIndex<f64>>,
    triplets_per_epoch: usize,
}

impl<'a> TripletSampler<'a> {
    pub fn new(index: &'a TrainIndex, catalog: &Catalog, config: &SamplerConfig) -> Result<Self> {
        config.validate()?;
        let users: Vec<u32> = (0..index.n_users() as u32)
            .filter(|&u| !index.items_of(u).is_empty())
            .collect();
        if users.is_empty() || index.n_items() == 0 {
            return Err(Error::Sampling("train set is empty".into()));
        }
        if users.iter().all(|&u| index.items_of(u).len() == index.n_items()) {
            return Err(Error::Sampling(
                "every user has interacted with every train item; no negatives exist".into(),
            ));
        }
        let weights = build_item_weights(index, catalog, config)?;
        let weighted = match config.target_slot {
            TargetSlot::None => Weighted::None,
            TargetSlot::Neg => Weighted::Negative(
                WeightedIndex::new(weights.as_slice())
                    .map_err(|e| Error::Sampling(format!("invalid weights: {e}")))?,
            ),
            TargetSlot::Pos => {
                let per_user = (0..index.n_users() as u32)
                    .map(|u| {
                        let items = index.items_of(u);
                        if items.is_empty() {
                            Ok(None)
                        } else {
                            WeightedIndex::new(items.iter().map(|&i| weights.get(i)))
                                .map(Some)
                                .map_err(|e| Error::Sampling(format!("invalid weights: {e}")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Weighted::Positive(per_user)
            }
        };
        let user_weights = match config.user_draw {
            UserDraw::Uniform => None,
            UserDraw::InteractionProportional => Some(
                WeightedIndex::new(users.iter().map(|&u| index.items_of(u).len() as f64))
                    .map_err(|e| Error::Sampling(format!("invalid user weights: {e}")))?,
            ),
        };
        Ok(TripletSampler {
            index,
            config: config.clone(),
            weights,
            weighted,
            users,
            user_weights,
            triplets_per_epoch: config.triplets_per_epoch.unwrap_or(index.n_interactions()),
        })
    }

    pub fn index(&self) -> &TrainIndex {
        self.index
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn weights(&self) -> &ItemWeights {
        &self.weights
    }

    pub fn triplets_per_epoch(&self) -> usize {
        self.triplets_per_epoch
    }

    /// Draws a user that still has at least one negative available.
    /// Saturated users are skipped and redrawn.
    fn draw_user<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<u32> {
        let n_items = self.index.n_items();
        for _ in 0..self.config.max_retries {
            let u = match &self.user_weights {
                None => self.users[rng.gen_range(0..self.users.len() as u32) as usize],
                Some(w) => self.users[w.sample(rng)],
            };
            if self.index.items_of(u).len() < n_items {
                return Ok(u);
            }
        }
        Err(Error::Sampling(format!(
            "no user with a free negative after {} draws",
            self.config.max_retries
        )))
    }

    fn draw_uniform_positive<R: Rng + ?Sized>(&self, u: u32, rng: &mut R) -> u32 {
        let items = self.index.items_of(u);
        items[rng.gen_range(0..items.len() as u32) as usize]
    }

    fn reject_until_negative<R: Rng + ?Sized>(
        &self,
        u: u32,
        rng: &mut R,
        mut draw: impl FnMut(&mut R) -> u32,
    ) -> Result<u32> {
        for _ in 0..self.config.max_retries {
            let j = draw(rng);
            if !self.index.has_item(u, j) {
                return Ok(j);
            }
        }
        Err(Error::Sampling(format!(
            "no negative found for user {} after {} draws",
            self.index.user_id(u),
            self.config.max_retries
        )))
    }

    /// Baseline bootstrap draw: uniform user, uniform positive, uniform
    /// negative with rejection.
    pub fn sample_triplet_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Triplet> {
        let u = self.draw_user(rng)?;
        let i = self.draw_uniform_positive(u, rng);
        let n = self.index.n_items() as u32;
        let j = self.reject_until_negative(u, rng, |r| r.gen_range(0..n))?;
        Ok(Triplet {
            user: u,
            positive: i,
            negative: j,
        })
    }

    /// Cost-sensitive draw on the configured slot. With no target slot this
    /// is exactly [`Self::sample_triplet_uniform`].
    pub fn sample_triplet_cost_sensitive<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Triplet> {
        match &self.weighted {
            Weighted::None => self.sample_triplet_uniform(rng),
            Weighted::Negative(dist) => {
                let u = self.draw_user(rng)?;
                let i = self.draw_uniform_positive(u, rng);
                let j = self.reject_until_negative(u, rng, |r| dist.sample(r) as u32)?;
                Ok(Triplet {
                    user: u,
                    positive: i,
                    negative: j,
                })
            }
            Weighted::Positive(per_user) => {
                let u = self.draw_user(rng)?;
                let dist = per_user[u as usize]
                    .as_ref()
                    .expect("drawn users always have train items");
                let i = self.index.items_of(u)[dist.sample(rng)];
                let n = self.index.n_items() as u32;
                let j = self.reject_until_negative(u, rng, |r| r.gen_range(0..n))?;
                Ok(Triplet {
                    user: u,
                    positive: i,
                    negative: j,
                })
            }
        }
    }

    /// The configured sampler.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Triplet> {
        self.sample_triplet_cost_sensitive(rng)
    }

    /// Draws `n` triplets for `epoch`. The stream is split into fixed-size
    /// chunks, each with its own generator derived from (seed, epoch, chunk),
    /// so the output does not depend on how many threads run.
    pub fn generate(&self, n: usize, epoch: u64) -> Result<Vec<Triplet>> {
        let n_chunks = n.div_ceil(CHUNK_SIZE);
        let chunks = parallel::try_map_range(n_chunks, |c| {
            let len = CHUNK_SIZE.min(n - c * CHUNK_SIZE);
            let mut rng = seeded(derive_seed(self.config.seed, &[epoch, c as u64]));
            (0..len).map(|_| self.sample(&mut rng)).collect::<Result<Vec<_>>>()
        })?;
        Ok(chunks.into_iter().flatten().collect())
    }

    /// One epoch's worth of triplets.
    pub fn generate_epoch(&self, epoch: u64) -> Result<Vec<Triplet>> {
        self.generate(self.triplets_per_epoch, epoch)
    }
}

/// Builds a sampler over the split's train part and draws the first
/// epoch's triplets.
pub fn generate_epoch_triplets(
    split: &DatasetSplit,
    config: &SamplerConfig,
    catalog: &Catalog,
) -> Result<(TrainIndex, Vec<Triplet>)> {
    let index = TrainIndex::new(&split.train);
    let triplets = {
        let sampler = TripletSampler::new(&index, catalog, config)?;
        sampler.generate_epoch(0)?
    };
    Ok((index, triplets))
}

/// Group composition of the positive and negative slots of a triplet set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CompositionAudit {
    pub n_triplets: usize,
    pub positive_counts: BTreeMap<String, usize>,
    pub negative_counts: BTreeMap<String, usize>,
    /// Fractions of triplets per group; empty when there are no triplets.
    pub positive_share: BTreeMap<String, f64>,
    pub negative_share: BTreeMap<String, f64>,
}

impl CompositionAudit {
    fn empty(catalog: &Catalog) -> Self {
        let zeros: BTreeMap<String, usize> = catalog.labels().into_iter().map(|g| (g, 0)).collect();
        CompositionAudit {
            n_triplets: 0,
            positive_counts: zeros.clone(),
            negative_counts: zeros,
            positive_share: BTreeMap::new(),
            negative_share: BTreeMap::new(),
        }
    }

    fn refresh_shares(&mut self) {
        let n = self.n_triplets;
        let share = |counts: &BTreeMap<String, usize>| -> BTreeMap<String, f64> {
            if n == 0 {
                return BTreeMap::new();
            }
            counts
                .iter()
                .map(|(g, c)| (g.clone(), *c as f64 / n as f64))
                .collect()
        };
        self.positive_share = share(&self.positive_counts);
        self.negative_share = share(&self.negative_counts);
    }

    /// Accumulates another audit's counts into this one.
    pub fn merge(&mut self, other: &CompositionAudit) {
        self.n_triplets += other.n_triplets;
        for (g, c) in &other.positive_counts {
            *self.positive_counts.entry(g.clone()).or_default() += c;
        }
        for (g, c) in &other.negative_counts {
            *self.negative_counts.entry(g.clone()).or_default() += c;
        }
        self.refresh_shares();
    }

    pub fn positive(&self, group: &str) -> Option<f64> {
        self.positive_share.get(group).copied()
    }

    pub fn negative(&self, group: &str) -> Option<f64> {
        self.negative_share.get(group).copied()
    }
}

/// Counts, per group, how many triplets carry a positive (resp. negative)
/// item from that group. Unlabeled items are reported under
/// [`UNKNOWN_GROUP`].
pub fn triplet_composition_audit(
    triplets: &[Triplet],
    index: &TrainIndex,
    catalog: &Catalog,
) -> CompositionAudit {
    let mut audit = CompositionAudit::empty(catalog);
    let item_groups: Vec<&str> = index
        .item_ids()
        .iter()
        .map(|id| catalog.group_of(id))
        .collect();
    for t in triplets {
        *audit
            .positive_counts
            .entry(item_groups[t.positive as usize].to_string())
            .or_default() += 1;
        *audit
            .negative_counts
            .entry(item_groups[t.negative as usize].to_string())
            .or_default() += 1;
    }
    audit.n_triplets = triplets.len();
    // keep the key sets aligned between slots
    for g in audit.positive_counts.keys().cloned().collect::<Vec<_>>() {
        audit.negative_counts.entry(g).or_default();
    }
    for g in audit.negative_counts.keys().cloned().collect::<Vec<_>>() {
        audit.positive_counts.entry(g).or_default();
    }
    audit.refresh_shares();
    audit
}

/// Writes `user<sep>pos_item<sep>neg_item` rows.
pub fn write_triplets(
    path: impl AsRef<Path>,
    triplets: &[Triplet],
    index: &TrainIndex,
    sep: &Delimiter,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let s = sep.as_str();
    for t in triplets {
        writeln!(
            w,
            "{}{s}{}{s}{}",
            index.user_id(t.user),
            index.item_id(t.positive),
            index.item_id(t.negative)
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
