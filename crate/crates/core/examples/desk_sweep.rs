//! Cost sweep on a synthetic skewed catalog.
//!
//! cargo run --release -p fairbpr --example desk_sweep

use fairbpr::dataset::{filter_min_interactions, temporal_split};
use fairbpr::eval::{fairness_report, share_of};
use fairbpr::model::{train, TrainConfig};
use fairbpr::synthetic::{planted_dataset, SyntheticSpec, MINORITY};
use fairbpr::{Catalog, SamplerConfig, TargetSlot};

fn main() -> fairbpr::Result<()> {
    let spec = SyntheticSpec::default();
    let (rows, groups) = planted_dataset(&spec);
    let catalog = Catalog::from_assignments(&groups)?;
    let rows = filter_min_interactions(&rows, 1, 1);
    let split = temporal_split(&rows, 0.2, 0.2)?;

    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let l2: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.0);

    println!("slot  cost   ndcg@10   pos%F   neg%F   slot@10%F  slot@20%F  wexp@10%F");
    for (slot, cost) in [
        (TargetSlot::None, 1.0),
        (TargetSlot::Neg, 1.2),
        (TargetSlot::Neg, 2.0),
        (TargetSlot::Neg, 3.0),
        (TargetSlot::Pos, 2.0),
        (TargetSlot::Pos, 3.0),
    ] {
        let config = TrainConfig {
            epochs,
            learning_rate: lr,
            l2_reg: l2,
            seed: 1,
            sampler: SamplerConfig {
                cost,
                target_slot: slot,
                seed: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = train(&split, &catalog, &config)?;
        let report = fairness_report(&out.model, &split, &catalog, &[10, 20], Some(out.audit.clone()), serde_json::Value::Null)?;
        println!(
            "{:<5} {:<5} {:>8.4} {:>7.2} {:>7.2} {:>10.2} {:>10.2} {:>10.2}",
            slot.to_string(),
            cost,
            report.ndcg[&10],
            100.0 * out.audit.positive(MINORITY).unwrap_or(0.0),
            100.0 * out.audit.negative(MINORITY).unwrap_or(0.0),
            100.0 * share_of(&report.slot_share[&10], MINORITY),
            100.0 * share_of(&report.slot_share[&20], MINORITY),
            100.0 * share_of(&report.weighted_exposure[&10], MINORITY),
        );
    }
    Ok(())
}
