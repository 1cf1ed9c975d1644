//! Argument parsing and dispatch.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fairbpr::synthetic::SyntheticSpec;

use crate::commands;
use crate::config::{Overrides, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "fairbpr", version, about = "Cost-sensitive BPR with provider-group exposure reporting")]
pub struct Cli {
    /// Flat TOML file with the same keys as the long flags; flags win
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter, split and summarize a dataset
    Prepare(Overrides),
    /// Train one model
    Train(Overrides),
    /// Score a trained model: NDCG@k and group exposure
    Evaluate(EvaluateArgs),
    /// Report the group composition of sampled triplets
    Audit(AuditArgs),
    /// Baseline plus every slot/cost combination, in one table
    Sweep(Overrides),
    /// Write a planted synthetic dataset
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Checkpoint to score (default: the run directory's model.ckpt)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    #[command(flatten)]
    pub overrides: Overrides,
    /// Triplets to draw (default: one epoch)
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Also write the triplets to triplets.tsv
    #[arg(long)]
    pub dump_triplets: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().n_users)]
    pub users: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().n_items)]
    pub items: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().interactions_per_user)]
    pub per_user: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().seed)]
    pub seed: u64,
}

impl Cli {
    fn resolve(&self, overrides: &Overrides) -> Result<RunConfig> {
        RunConfig::resolve(self.config.as_deref(), overrides)
    }

    pub fn run(&self) -> Result<()> {
        match &self.command {
            Command::Prepare(o) => {
                let cfg = self.resolve(o)?;
                commands::prepare(&cfg)?;
                println!("wrote {}", cfg.split_dir().display());
            }
            Command::Train(o) => {
                let dir = commands::train(&self.resolve(o)?)?;
                println!("wrote {}", dir.join("model.ckpt").display());
            }
            Command::Evaluate(a) => {
                let cfg = self.resolve(&a.overrides)?;
                let report = commands::evaluate(&cfg, a.checkpoint.as_deref())?;
                for (k, v) in &report.ndcg {
                    println!("ndcg@{k}\t{v:.6}");
                }
            }
            Command::Audit(a) => {
                let cfg = self.resolve(&a.overrides)?;
                let audit = commands::audit(&cfg, a.n_samples, a.dump_triplets)?;
                println!("{} triplets", audit.n_triplets);
                for g in audit.positive_share.keys() {
                    println!(
                        "{g}\tpositive {:.4}\tnegative {:.4}",
                        audit.positive(g).unwrap_or(0.0),
                        audit.negative(g).unwrap_or(0.0)
                    );
                }
            }
            Command::Sweep(o) => {
                let cfg = self.resolve(o)?;
                let rows = commands::sweep(&cfg)?;
                for row in rows {
                    let k = cfg.k[0];
                    println!(
                        "{}\tC={}\tndcg@{k} {:.4}\t{} slot share@{k} {:.4}",
                        row.slot, row.cost, row.ndcg[&k], row.group, row.slot_share[&k]
                    );
                }
            }
            Command::Synth(a) => {
                let spec = SyntheticSpec {
                    n_users: a.users,
                    n_items: a.items,
                    interactions_per_user: a.per_user,
                    seed: a.seed,
                    ..Default::default()
                };
                let (i, p) = commands::synth(&spec, &a.out)?;
                println!("wrote {} and {}", i.display(), p.display());
            }
        }
        Ok(())
    }
}
