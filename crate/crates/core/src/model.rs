//! BPR matrix factorization: plain dot-product scores, no bias terms.

use std::cmp::Ordering;
use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Catalog, DatasetSplit};
use crate::error::{Error, Result};
use crate::index::TrainIndex;
use crate::rng::{derive_seed, seeded};
use crate::sampling::{triplet_composition_audit, CompositionAudit, SamplerConfig, Triplet, TripletSampler};

pub const DEFAULT_DIM: usize = 10;
pub const DEFAULT_EPOCHS: usize = 10;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;

/// User and item latent factors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    dim: usize,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, u32>,
    item_index: HashMap<String, u32>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl FactorModel {
    pub fn from_parts(
        dim: usize,
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("latent dimension must be at least 1"));
        }
        if user_factors.len() != user_ids.len() * dim || item_factors.len() != item_ids.len() * dim {
            return Err(Error::domain("factor matrix shape does not match id lists"));
        }
        let user_index: HashMap<String, u32> =
            user_ids.iter().enumerate().map(|(i, u)| (u.clone(), i as u32)).collect();
        let item_index: HashMap<String, u32> =
            item_ids.iter().enumerate().map(|(i, u)| (u.clone(), i as u32)).collect();
        if user_index.len() != user_ids.len() || item_index.len() != item_ids.len() {
            return Err(Error::domain("duplicate identifiers in model"));
        }
        Ok(FactorModel {
            dim,
            user_ids,
            item_ids,
            user_index,
            item_index,
            user_factors,
            item_factors,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user(&self, id: &str) -> Option<u32> {
        self.user_index.get(id).copied()
    }

    pub fn item(&self, id: &str) -> Option<u32> {
        self.item_index.get(id).copied()
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    pub fn user_vec(&self, user: u32) -> &[f64] {
        let d = self.dim;
        &self.user_factors[user as usize * d..(user as usize + 1) * d]
    }

    pub fn item_vec(&self, item: u32) -> &[f64] {
        let d = self.dim;
        &self.item_factors[item as usize * d..(item as usize + 1) * d]
    }

    pub fn user_vec_mut(&mut self, user: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.user_factors[user as usize * d..(user as usize + 1) * d]
    }

    pub fn item_vec_mut(&mut self, item: u32) -> &mut [f64] {
        let d = self.dim;
        &mut self.item_factors[item as usize * d..(item as usize + 1) * d]
    }

    pub fn score_idx(&self, user: u32, item: u32) -> f64 {
        dot(self.user_vec(user), self.item_vec(item))
    }

    /// Dot product of the user's and item's factor vectors.
    pub fn score(&self, user: &str, item: &str) -> Result<f64> {
        let u = self.user(user).ok_or_else(|| Error::Lookup {
            kind: "user",
            id: user.to_string(),
        })?;
        let i = self.item(item).ok_or_else(|| Error::Lookup {
            kind: "item",
            id: item.to_string(),
        })?;
        Ok(self.score_idx(u, i))
    }

    pub fn is_finite(&self) -> bool {
        self.user_factors.iter().chain(&self.item_factors).all(|x| x.is_finite())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-ln σ(x)` without overflow for large `|x|`.
pub fn bpr_loss(x: f64) -> f64 {
    // softplus(-x)
    let z = -x;
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `σ(-x) = 1/(1+e^x)`, the magnitude of `d(-ln σ(x))/dx`.
pub fn bpr_weight(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub dim: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: DEFAULT_EPOCHS,
            learning_rate: DEFAULT_LEARNING_RATE,
            l2_reg: 0.0,
            dim: DEFAULT_DIM,
            seed: 0,
            sampler: SamplerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::domain("epochs must be at least 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if !(self.l2_reg.is_finite() && self.l2_reg >= 0.0) {
            return Err(Error::domain("l2 regularization must be non-negative"));
        }
        if self.dim == 0 {
            return Err(Error::domain("latent dimension must be at least 1"));
        }
        self.sampler.validate()
    }
}

/// Factors drawn i.i.d. uniform on [0, 1); user matrix first, then items.
pub fn init_model<R: Rng + ?Sized>(
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    dim: usize,
    rng: &mut R,
) -> Result<FactorModel> {
    if user_ids.is_empty() || item_ids.is_empty() {
        return Err(Error::domain("model needs at least one user and one item"));
    }
    if dim == 0 {
        return Err(Error::domain("latent dimension must be at least 1"));
    }
    let user_factors = (0..user_ids.len() * dim).map(|_| rng.gen::<f64>()).collect();
    let item_factors = (0..item_ids.len() * dim).map(|_| rng.gen::<f64>()).collect();
    FactorModel::from_parts(dim, user_ids, item_ids, user_factors, item_factors)
}

/// Gradient of `-ln σ(x_ui - x_uj) + l2/2·(|u|² + |i|² + |j|²)` with
/// respect to the three factor vectors involved in a triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct BprGradient {
    pub loss: f64,
    pub user: Vec<f64>,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

pub fn bpr_gradient(model: &FactorModel, t: &Triplet, l2: f64) -> BprGradient {
    let u = model.user_vec(t.user);
    let i = model.item_vec(t.positive);
    let j = model.item_vec(t.negative);
    let x = dot(u, i) - dot(u, j);
    let g = bpr_weight(x);
    let reg = 0.5 * l2 * (dot(u, u) + dot(i, i) + dot(j, j));
    BprGradient {
        loss: bpr_loss(x) + reg,
        user: (0..model.dim).map(|f| -g * (i[f] - j[f]) + l2 * u[f]).collect(),
        positive: (0..model.dim).map(|f| -g * u[f] + l2 * i[f]).collect(),
        negative: (0..model.dim).map(|f| g * u[f] + l2 * j[f]).collect(),
    }
}

/// One SGD step on a triplet. Item updates use the pre-step user vector.
/// Returns the triplet's BPR loss `-ln σ(x)` before the step. On a
/// non-finite result the model is left untouched.
pub fn bpr_step(model: &mut FactorModel, t: &Triplet, lr: f64, l2: f64) -> Result<f64> {
    if t.positive == t.negative {
        return Err(Error::domain("triplet positive and negative items coincide"));
    }
    let d = model.dim;
    let (x, ok) = {
        let u = model.user_vec(t.user);
        let i = model.item_vec(t.positive);
        let j = model.item_vec(t.negative);
        let x = dot(u, i) - dot(u, j);
        let g = bpr_weight(x);
        let ok = x.is_finite()
            && (0..d).all(|f| {
                (u[f] + lr * (g * (i[f] - j[f]) - l2 * u[f])).is_finite()
                    && (i[f] + lr * (g * u[f] - l2 * i[f])).is_finite()
                    && (j[f] + lr * (-g * u[f] - l2 * j[f])).is_finite()
            });
        (x, ok)
    };
    if !ok {
        return Err(Error::NonFinite {
            user: model.user_ids[t.user as usize].clone(),
            positive: model.item_ids[t.positive as usize].clone(),
            negative: model.item_ids[t.negative as usize].clone(),
        });
    }
    let g = bpr_weight(x);
    let (ub, ib, jb) = (t.user as usize * d, t.positive as usize * d, t.negative as usize * d);
    for f in 0..d {
        let uf = model.user_factors[ub + f];
        let if_ = model.item_factors[ib + f];
        let jf = model.item_factors[jb + f];
        model.user_factors[ub + f] = uf + lr * (g * (if_ - jf) - l2 * uf);
        model.item_factors[ib + f] = if_ + lr * (g * uf - l2 * if_);
        model.item_factors[jb + f] = jf + lr * (-g * uf - l2 * jf);
    }
    Ok(bpr_loss(x))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    /// Mean `-ln σ(x)` over each epoch's triplets, measured before each step.
    pub epoch_losses: Vec<f64>,
    /// Composition of every triplet the model was trained on.
    pub audit: CompositionAudit,
}

/// Trains on an already-built index. The model's users and items are the
/// index's users and train items, in index order.
pub fn train_on_index(index: &TrainIndex, catalog: &Catalog, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let sampler = TripletSampler::new(index, catalog, &config.sampler)?;
    let mut init_rng = seeded(derive_seed(config.seed, &[0x1A17]));
    let mut model = init_model(
        index.user_ids().to_vec(),
        index.item_ids().to_vec(),
        config.dim,
        &mut init_rng,
    )?;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut audit = triplet_composition_audit(&[], index, catalog);
    for epoch in 0..config.epochs {
        let triplets = sampler.generate_epoch(epoch as u64)?;
        audit.merge(&triplet_composition_audit(&triplets, index, catalog));
        let mut total = 0.0;
        for t in &triplets {
            total += bpr_step(&mut model, t, config.learning_rate, config.l2_reg)?;
        }
        let mean = if triplets.is_empty() { 0.0 } else { total / triplets.len() as f64 };
        log::debug!("epoch {} mean loss {mean:.6}", epoch + 1);
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
        audit,
    })
}

pub fn train(split: &DatasetSplit, catalog: &Catalog, config: &TrainConfig) -> Result<TrainOutcome> {
    if split.train.is_empty() {
        return Err(Error::domain("train split is empty"));
    }
    let index = TrainIndex::new(&split.train);
    train_on_index(&index, catalog, config)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopK {
    /// (item index, score), best first.
    pub items: Vec<(u32, f64)>,
    /// Set when fewer than `k` candidates were available.
    pub short: bool,
}

/// Descending score, then ascending item index. Item indices follow
/// identifier order for models built from a [`TrainIndex`].
fn rank_order(a: &(u32, f64), b: &(u32, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `k` best-scoring items outside `exclude` (a sorted list of item
/// indices).
pub fn recommend_top_k(model: &FactorModel, user: u32, k: usize, exclude: &[u32]) -> Result<TopK> {
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    if user as usize >= model.n_users() {
        return Err(Error::Lookup {
            kind: "user",
            id: user.to_string(),
        });
    }
    let u = model.user_vec(user);
    let mut candidates: Vec<(u32, f64)> = (0..model.n_items() as u32)
        .filter(|i| exclude.binary_search(i).is_err())
        .map(|i| (i, dot(u, model.item_vec(i))))
        .collect();
    let short = candidates.len() < k;
    if !short && candidates.len() > k {
        candidates.select_nth_unstable_by(k - 1, rank_order);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(rank_order);
    Ok(TopK {
        items: candidates,
        short,
    })
}
