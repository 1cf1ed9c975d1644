//! Run configuration: defaults, overridden by a flat TOML config file,
//! overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use fairbpr::model::{TrainConfig, DEFAULT_DIM, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE};
use fairbpr::sampling::{SamplerConfig, UserDraw, DEFAULT_MAX_RETRIES};
use fairbpr::{Delimiter, TargetSlot};
use serde::{Deserialize, Serialize};

/// Fully resolved settings for one command. Serialized verbatim into every
/// output artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub providers: Option<PathBuf>,
    pub dataset: Option<String>,
    pub sep: Delimiter,
    pub min_item: usize,
    pub min_user: usize,
    pub test_frac: f64,
    pub val_frac: f64,
    pub dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub cost: f64,
    pub slot: TargetSlot,
    pub emphasized_group: Option<String>,
    pub triplets_per_epoch: Option<usize>,
    pub user_draw: UserDraw,
    pub max_retries: usize,
    pub k: Vec<usize>,
    pub seed: u64,
    pub out: PathBuf,
    /// Group whose shares go into the tabular outputs; defaults to the
    /// catalog's minority group.
    pub report_group: Option<String>,
    pub costs: Vec<f64>,
    pub slots: Vec<TargetSlot>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            interactions: None,
            providers: None,
            dataset: None,
            sep: Delimiter::tab(),
            min_item: 0,
            min_user: 0,
            test_frac: 0.2,
            val_frac: 0.2,
            dim: DEFAULT_DIM,
            epochs: DEFAULT_EPOCHS,
            lr: DEFAULT_LEARNING_RATE,
            l2: 0.0,
            cost: 1.0,
            slot: TargetSlot::None,
            emphasized_group: None,
            triplets_per_epoch: None,
            user_draw: UserDraw::Uniform,
            max_retries: DEFAULT_MAX_RETRIES,
            k: vec![10, 20],
            seed: 0,
            out: PathBuf::from("runs"),
            report_group: None,
            costs: vec![1.0, 1.2, 2.0, 3.0],
            slots: vec![TargetSlot::Neg],
        }
    }
}

/// Optional overrides, shared by the config file and the command line.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Overrides {
    /// Interactions file: user, item, rating, timestamp per row
    #[arg(long)]
    pub interactions: Option<PathBuf>,
    /// Provider file: item, provider, group per row
    #[arg(long)]
    pub providers: Option<PathBuf>,
    /// Dataset name used in output names (default: interactions file stem)
    #[arg(long)]
    pub dataset: Option<String>,
    /// Field separator: "tab", "::", "," ...
    #[arg(long)]
    pub sep: Option<Delimiter>,
    #[arg(long)]
    pub min_item: Option<usize>,
    #[arg(long)]
    pub min_user: Option<usize>,
    #[arg(long)]
    pub test_frac: Option<f64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Cost C >= 1 of the emphasized group
    #[arg(long)]
    pub cost: Option<f64>,
    /// Triplet slot the cost acts on: neg, pos or none
    #[arg(long)]
    pub slot: Option<TargetSlot>,
    #[arg(long)]
    pub emphasized_group: Option<String>,
    #[arg(long)]
    pub triplets_per_epoch: Option<usize>,
    /// uniform or interaction-proportional
    #[arg(long)]
    pub user_draw: Option<UserDraw>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    /// Cutoffs, comma separated
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub report_group: Option<String>,
    /// Sweep costs, comma separated
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    /// Sweep slots, comma separated
    #[arg(long, value_delimiter = ',')]
    pub slots: Option<Vec<TargetSlot>>,
}

macro_rules! apply_fields {
    ($cfg:ident, $ov:ident; opt: $($o:ident),*; val: $($v:ident),*) => {
        $( if $ov.$o.is_some() { $cfg.$o = $ov.$o.clone(); } )*
        $( if let Some(x) = &$ov.$v { $cfg.$v = x.clone(); } )*
    };
}

impl RunConfig {
    pub fn apply(&mut self, ov: &Overrides) {
        apply_fields!(self, ov;
            opt: interactions, providers, dataset, emphasized_group, triplets_per_epoch, report_group;
            val: sep, min_item, min_user, test_frac, val_frac, dim, epochs, lr, l2, cost, slot,
                 user_draw, max_retries, k, seed, out, costs, slots);
    }

    /// Defaults, then the config file (if any), then flags.
    pub fn resolve(config_file: Option<&Path>, flags: &Overrides) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = config_file {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            let file: Overrides = toml::from_str(&text)
                .with_context(|| format!("parsing config file {}", path.display()))?;
            cfg.apply(&file);
        }
        cfg.apply(flags);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cost.is_finite() && self.cost >= 1.0) {
            bail!("--cost must be >= 1 (got {})", self.cost);
        }
        if self.k.is_empty() || self.k.contains(&0) {
            bail!("--k needs at least one cutoff, all >= 1");
        }
        if !(self.test_frac >= 0.0 && self.val_frac >= 0.0 && self.test_frac + self.val_frac < 1.0) {
            bail!("split fractions must satisfy 0 <= test + val < 1");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn require_inputs(&self) -> Result<(&Path, &Path)> {
        let interactions = self
            .interactions
            .as_deref()
            .context("--interactions is required")?;
        let providers = self.providers.as_deref().context("--providers is required")?;
        for (flag, p) in [("--interactions", interactions), ("--providers", providers)] {
            if !p.is_file() {
                bail!("{flag} file {} does not exist", p.display());
            }
        }
        Ok((interactions, providers))
    }

    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.interactions
                .as_deref()
                .and_then(Path::file_stem)
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".to_string())
        })
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            cost: self.cost,
            target_slot: self.slot,
            emphasized_group: self.emphasized_group.clone(),
            seed: self.seed,
            triplets_per_epoch: self.triplets_per_epoch,
            user_draw: self.user_draw,
            max_retries: self.max_retries,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            l2_reg: self.l2,
            dim: self.dim,
            seed: self.seed,
            sampler: self.sampler_config(),
        }
    }

    pub fn split_dir(&self) -> PathBuf {
        self.out.join("split")
    }

    /// `<out>/<dataset>_<slot>_C<cost>`
    pub fn run_dir(&self) -> PathBuf {
        self.out
            .join(format!("{}_{}_C{}", self.dataset_name(), self.slot, self.cost))
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config is always serializable")
    }
}
