//! The subcommands. Every command rebuilds the split from the raw inputs,
//! which is deterministic, so runs never depend on leftover state.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fairbpr::checkpoint;
use fairbpr::dataset::{
    catalog_stats, filter_min_interactions, load_interactions, load_provider_groups,
    temporal_split, write_interactions, DatasetStats,
};
use fairbpr::eval::{fairness_report, share_of};
use fairbpr::model::train_on_index;
use fairbpr::sampling::{triplet_composition_audit, write_triplets, TripletSampler};
use fairbpr::synthetic::{planted_dataset, SyntheticSpec};
use fairbpr::{Catalog, CompositionAudit, DatasetSplit, Delimiter, MetricsReport, TargetSlot, TrainIndex};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Loaded, filtered and split inputs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: DatasetSplit,
    pub catalog: Catalog,
    pub stats: DatasetStats,
}

impl Prepared {
    pub fn report_group(&self, cfg: &RunConfig) -> Result<String> {
        match &cfg.report_group {
            Some(g) => Ok(g.clone()),
            None => self
                .catalog
                .minority_group()
                .map(str::to_string)
                .context("provider file defines no groups"),
        }
    }
}

pub fn load_prepared(cfg: &RunConfig) -> Result<Prepared> {
    let (interactions_path, providers_path) = cfg.require_inputs()?;
    let raw = load_interactions(interactions_path, &cfg.sep)?;
    let (_, catalog) = load_provider_groups(providers_path, &cfg.sep)?;
    let rows = if cfg.min_item > 0 || cfg.min_user > 0 {
        filter_min_interactions(&raw, cfg.min_item, cfg.min_user)
    } else {
        raw
    };
    if rows.is_empty() {
        bail!("no interactions left after filtering");
    }
    let split = temporal_split(&rows, cfg.test_frac, cfg.val_frac)?;
    let stats = catalog_stats(&split, &catalog);
    log::info!(
        "split: {} train / {} validation / {} test",
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(Prepared { split, catalog, stats })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

#[derive(Debug, Serialize)]
struct StatsFile<'a> {
    config: serde_json::Value,
    stats: &'a DatasetStats,
    baseline_audit: &'a CompositionAudit,
}

/// Writes the split and the dataset summary under `<out>/split`.
pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let prepared = load_prepared(cfg)?;
    let dir = cfg.split_dir();
    create_dir(&dir)?;
    let tab = Delimiter::tab();
    for (name, part) in [
        ("train", &prepared.split.train),
        ("validation", &prepared.split.validation),
        ("test", &prepared.split.test),
    ] {
        write_interactions(dir.join(format!("{name}.tsv")), part, &tab)?;
    }

    let baseline = RunConfig {
        slot: TargetSlot::None,
        cost: 1.0,
        ..cfg.clone()
    };
    let index = TrainIndex::new(&prepared.split.train);
    let sampler = TripletSampler::new(&index, &prepared.catalog, &baseline.sampler_config())?;
    let audit = triplet_composition_audit(&sampler.generate_epoch(0)?, &index, &prepared.catalog);

    write_json(
        &dir.join("stats.json"),
        &StatsFile {
            config: cfg.echo(),
            stats: &prepared.stats,
            baseline_audit: &audit,
        },
    )?;

    let group = prepared.report_group(cfg)?;
    let s = &prepared.stats;
    let mut w = csv::Writer::from_path(dir.join("stats.csv"))?;
    w.write_record([
        "dataset",
        "users",
        "items_catalog",
        "items_interacted",
        "interactions",
        "train",
        "validation",
        "test",
        "group",
        "catalog_share",
        "train_share",
        "baseline_positive_share",
        "baseline_negative_share",
    ])?;
    w.write_record([
        cfg.dataset_name(),
        s.n_users.to_string(),
        s.n_items_catalog.to_string(),
        s.n_items_interacted.to_string(),
        s.n_interactions_total.to_string(),
        s.n_interactions_train.to_string(),
        s.n_interactions_validation.to_string(),
        s.n_interactions_test.to_string(),
        group.clone(),
        share_of(&s.catalog_group_share, &group).to_string(),
        share_of(&s.train_group_share, &group).to_string(),
        audit.positive(&group).unwrap_or(0.0).to_string(),
        audit.negative(&group).unwrap_or(0.0).to_string(),
    ])?;
    w.flush()?;
    Ok(prepared)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainLog {
    pub config: serde_json::Value,
    pub epoch_losses: Vec<f64>,
    pub audit: CompositionAudit,
}

/// Trains one model on prepared data, writes `model.ckpt` and
/// `train_log.json` into the run directory and returns that directory.
pub fn train_prepared(cfg: &RunConfig, prepared: &Prepared) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    create_dir(&dir)?;
    let index = TrainIndex::new(&prepared.split.train);
    let outcome = train_on_index(&index, &prepared.catalog, &cfg.train_config())?;
    checkpoint::save(&outcome.model, dir.join("model.ckpt"))?;
    write_json(
        &dir.join("train_log.json"),
        &TrainLog {
            config: cfg.echo(),
            epoch_losses: outcome.epoch_losses,
            audit: outcome.audit,
        },
    )?;
    Ok(dir)
}

pub fn train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    train_prepared(cfg, &load_prepared(cfg)?)
}

/// Scores a checkpoint; writes `metrics.json` and `metrics.csv` beside it.
/// The training audit is attached when a `train_log.json` sits next to the
/// checkpoint.
pub fn evaluate_prepared(cfg: &RunConfig, prepared: &Prepared, ckpt: &Path) -> Result<MetricsReport> {
    let model = checkpoint::load(ckpt)
        .with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let dir = ckpt.parent().unwrap_or(Path::new("."));
    let log_path = dir.join("train_log.json");
    let audit = if log_path.is_file() {
        let text = fs::read_to_string(&log_path)?;
        let log: TrainLog = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", log_path.display()))?;
        Some(log.audit)
    } else {
        None
    };
    let report = fairness_report(&model, &prepared.split, &prepared.catalog, &cfg.k, audit, cfg.echo())?;
    write_json(&dir.join("metrics.json"), &report)?;
    let mut w = csv::Writer::from_path(dir.join("metrics.csv"))?;
    w.write_record(["metric", "k", "group", "value"])?;
    for (metric, k, group, value) in report.rows() {
        w.write_record([metric, k.to_string(), group, value.to_string()])?;
    }
    w.flush()?;
    Ok(report)
}

pub fn evaluate(cfg: &RunConfig, ckpt: Option<&Path>) -> Result<MetricsReport> {
    cfg.validate()?;
    let default_ckpt = cfg.run_dir().join("model.ckpt");
    let ckpt = ckpt.unwrap_or(&default_ckpt);
    if !ckpt.is_file() {
        bail!(
            "checkpoint {} does not exist; run `fairbpr train` with the same settings first or pass --checkpoint",
            ckpt.display()
        );
    }
    evaluate_prepared(cfg, &load_prepared(cfg)?, ckpt)
}

#[derive(Debug, Serialize)]
struct AuditFile<'a> {
    config: serde_json::Value,
    emphasized_group: Option<String>,
    n_samples: usize,
    audit: &'a CompositionAudit,
}

/// Draws `n_samples` triplets (default: one epoch) from the configured
/// sampler and writes their group composition to `audit.json`.
pub fn audit(cfg: &RunConfig, n_samples: Option<usize>, dump_triplets: bool) -> Result<CompositionAudit> {
    cfg.validate()?;
    let prepared = load_prepared(cfg)?;
    let index = TrainIndex::new(&prepared.split.train);
    let sampler_cfg = cfg.sampler_config();
    let sampler = TripletSampler::new(&index, &prepared.catalog, &sampler_cfg)?;
    let n = n_samples.unwrap_or_else(|| sampler.triplets_per_epoch());
    let triplets = sampler.generate(n, 0)?;
    let audit = triplet_composition_audit(&triplets, &index, &prepared.catalog);

    let dir = cfg.run_dir();
    create_dir(&dir)?;
    if dump_triplets {
        write_triplets(dir.join("triplets.tsv"), &triplets, &index, &Delimiter::tab())?;
    }
    let emphasized = match cfg.slot {
        TargetSlot::None => None,
        _ => sampler_cfg.resolved_emphasized_group(&prepared.catalog),
    };
    write_json(
        &dir.join("audit.json"),
        &AuditFile {
            config: cfg.echo(),
            emphasized_group: emphasized,
            n_samples: n,
            audit: &audit,
        },
    )?;
    Ok(audit)
}

/// One line of the cost sweep table; shares refer to the report group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub slot: TargetSlot,
    pub cost: f64,
    pub ndcg: BTreeMap<usize, f64>,
    pub group: String,
    pub positive_share: f64,
    pub negative_share: f64,
    pub slot_share: BTreeMap<usize, f64>,
    pub weighted_exposure: BTreeMap<usize, f64>,
}

/// The runs of a sweep: the uniform baseline, then every slot at every
/// cost other than 1.
pub fn sweep_plan(cfg: &RunConfig) -> Result<Vec<RunConfig>> {
    if cfg.costs.is_empty() {
        bail!("--costs is empty; give at least one cost");
    }
    if cfg.slots.is_empty() {
        bail!("--slots is empty; give neg, pos or both");
    }
    if let Some(c) = cfg.costs.iter().find(|c| !(c.is_finite() && **c >= 1.0)) {
        bail!("sweep cost {c} is invalid; every cost must be >= 1");
    }
    let mut plan = vec![RunConfig {
        slot: TargetSlot::None,
        cost: 1.0,
        ..cfg.clone()
    }];
    for &slot in &cfg.slots {
        if slot == TargetSlot::None {
            log::warn!("slot none in --slots is the baseline; skipped");
            continue;
        }
        for &cost in &cfg.costs {
            if cost != 1.0 {
                plan.push(RunConfig { slot, cost, ..cfg.clone() });
            }
        }
    }
    Ok(plan)
}

fn sweep_row(run: &RunConfig, prepared: &Prepared, group: &str) -> Result<SweepRow> {
    let dir = train_prepared(run, prepared)?;
    let report = evaluate_prepared(run, prepared, &dir.join("model.ckpt"))?;
    let audit = report
        .triplet_audit
        .as_ref()
        .context("training audit missing")?;
    let per_k = |t: &BTreeMap<usize, BTreeMap<String, f64>>| -> BTreeMap<usize, f64> {
        t.iter().map(|(k, g)| (*k, share_of(g, group))).collect()
    };
    Ok(SweepRow {
        dataset: run.dataset_name(),
        slot: run.slot,
        cost: run.cost,
        ndcg: report.ndcg.clone(),
        group: group.to_string(),
        positive_share: audit.positive(group).unwrap_or(0.0),
        negative_share: audit.negative(group).unwrap_or(0.0),
        slot_share: per_k(&report.slot_share),
        weighted_exposure: per_k(&report.weighted_exposure),
    })
}

#[cfg(feature = "parallel")]
fn run_all(plan: &[RunConfig], f: impl Fn(&RunConfig) -> Result<SweepRow> + Sync + Send) -> Vec<Result<SweepRow>> {
    use rayon::prelude::*;
    plan.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn run_all(plan: &[RunConfig], f: impl Fn(&RunConfig) -> Result<SweepRow>) -> Vec<Result<SweepRow>> {
    plan.iter().map(f).collect()
}

#[derive(Debug, Serialize)]
struct SweepFile<'a> {
    config: serde_json::Value,
    rows: &'a [SweepRow],
}

/// Prepares once, trains and evaluates every planned run, and writes
/// `sweep.csv` / `sweep.json`. All runs share the base seed. Fails if any
/// run fails, after writing the rows that succeeded.
pub fn sweep(cfg: &RunConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let plan = sweep_plan(cfg)?;
    for run in &plan {
        run.validate()?;
    }
    let prepared = prepare(cfg)?;
    let group = prepared.report_group(cfg)?;
    let results = run_all(&plan, |run| sweep_row(run, &prepared, &group));

    let mut rows = Vec::new();
    let mut failures = 0;
    for (run, result) in plan.iter().zip(results) {
        match result {
            Ok(row) => {
                eprintln!("[sweep] {} C={} ok", run.slot, run.cost);
                rows.push(row);
            }
            Err(e) => {
                eprintln!("[sweep] {} C={} FAILED: {e:#}", run.slot, run.cost);
                failures += 1;
            }
        }
    }

    write_json(
        &cfg.out.join("sweep.json"),
        &SweepFile {
            config: cfg.echo(),
            rows: &rows,
        },
    )?;
    let mut w = csv::Writer::from_path(cfg.out.join("sweep.csv"))?;
    let mut header = vec!["dataset".to_string(), "slot".into(), "cost".into()];
    header.extend(cfg.k.iter().map(|k| format!("ndcg@{k}")));
    header.extend(["group".into(), "positive_share".into(), "negative_share".into()]);
    header.extend(cfg.k.iter().map(|k| format!("slot_share@{k}")));
    header.extend(cfg.k.iter().map(|k| format!("weighted_exposure@{k}")));
    w.write_record(&header)?;
    for row in &rows {
        let mut rec = vec![row.dataset.clone(), row.slot.to_string(), row.cost.to_string()];
        rec.extend(cfg.k.iter().map(|k| row.ndcg[k].to_string()));
        rec.extend([
            row.group.clone(),
            row.positive_share.to_string(),
            row.negative_share.to_string(),
        ]);
        rec.extend(cfg.k.iter().map(|k| row.slot_share[k].to_string()));
        rec.extend(cfg.k.iter().map(|k| row.weighted_exposure[k].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    if failures > 0 {
        bail!("{failures} of {} sweep runs failed", plan.len());
    }
    Ok(rows)
}

/// Writes a planted synthetic dataset as `interactions.tsv` and
/// `providers.tsv` in `dir`.
pub fn synth(spec: &SyntheticSpec, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    create_dir(dir)?;
    let (rows, groups) = planted_dataset(spec);
    let interactions = dir.join("interactions.tsv");
    let providers = dir.join("providers.tsv");
    write_interactions(&interactions, &rows, &Delimiter::tab())?;
    let mut text = String::new();
    for g in &groups {
        text.push_str(&format!("{}\t{}\t{}\n", g.item, g.provider, g.group));
    }
    fs::write(&providers, text).with_context(|| format!("writing {}", providers.display()))?;
    Ok((interactions, providers))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plan_has_baseline_and_skips_unit_cost() {
        let cfg = RunConfig {
            costs: vec![1.0, 2.0, 3.0],
            slots: vec![TargetSlot::Neg, TargetSlot::Pos, TargetSlot::None],
            ..Default::default()
        };
        let plan = sweep_plan(&cfg).unwrap();
        let keys: Vec<(TargetSlot, f64)> = plan.iter().map(|r| (r.slot, r.cost)).collect();
        assert_eq!(
            keys,
            vec![
                (TargetSlot::None, 1.0),
                (TargetSlot::Neg, 2.0),
                (TargetSlot::Neg, 3.0),
                (TargetSlot::Pos, 2.0),
                (TargetSlot::Pos, 3.0),
            ]
        );
    }

    #[test]
    fn plan_rejects_empty_or_bad_costs() {
        let empty = RunConfig {
            costs: vec![],
            ..Default::default()
        };
        assert!(sweep_plan(&empty).is_err());
        let bad = RunConfig {
            costs: vec![2.0, 0.5],
            ..Default::default()
        };
        assert!(sweep_plan(&bad).is_err());
    }
}
