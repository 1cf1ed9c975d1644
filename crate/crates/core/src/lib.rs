//! Cost-sensitive triplet sampling for pairwise (BPR-MF) recommenders,
//! together with the data preparation, training and provider-exposure
//! evaluation around it.
//!
//! The pipeline is:
//!
//! 1. [`dataset`]: load interactions and provider-group labels, filter,
//!    split by time.
//! 2. [`sampling`]: draw `(user, positive, negative)` triplets, either
//!    uniformly or with group-dependent item weights set by a cost `C`.
//! 3. [`model`]: train BPR matrix factorization with SGD on those triplets.
//! 4. [`eval`]: NDCG@k and per-group slot share / position-weighted exposure
//!    of the top-k lists.
//!
//! With the default `parallel` feature, triplet generation and per-user
//! evaluation run on rayon; results are bit-identical to the sequential
//! build.

pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod index;
pub mod model;
pub mod parallel;
pub mod rng;
pub mod sampling;
pub mod synthetic;

pub use dataset::{Catalog, DatasetSplit, Delimiter, GroupAssignment, Interaction, UNKNOWN_GROUP};
pub use error::{Error, Result};
pub use eval::{MetricsReport, RankedList};
pub use index::TrainIndex;
pub use model::{FactorModel, TrainConfig, TrainOutcome};
pub use sampling::{CompositionAudit, ItemWeights, SamplerConfig, TargetSlot, Triplet, TripletSampler, UserDraw};
