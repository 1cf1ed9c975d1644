//! Acceptance suite. Each test prints one `[acceptance] criterion N ...`
//! line; run with `--nocapture` to see them.
//!
//! Criteria 6 and 7 need the pre-processed MovieLens-1M files with gender
//! labels. Point `FAIRBPR_ML1M_DIR` at a directory holding
//! `interactions.tsv` (user, item, rating, timestamp) and `providers.tsv`
//! (item, provider, group); `FAIRBPR_ML1M_SEP` overrides the tab separator
//! and `FAIRBPR_ML1M_GROUP` names the group to report (default: the
//! catalog's minority group). Without the data they print BLOCKED.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fairbpr::dataset::{Catalog, Interaction};
use fairbpr::eval::ndcg_at_k;
use fairbpr::model::{bpr_gradient, recommend_top_k, FactorModel};
use fairbpr::rng::seeded;
use fairbpr::sampling::{build_item_weights, SamplerConfig, TargetSlot, Triplet, TripletSampler};
use fairbpr::synthetic::{SyntheticSpec, MAJORITY, MINORITY};
use fairbpr::TrainIndex;
use fairbpr_cli::commands;
use fairbpr_cli::config::RunConfig;
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    println!("[acceptance] criterion {n} {name}: {status} ({detail})");
    assert!(pass, "criterion {n} {name} failed: {detail}");
}

fn blocked(n: u32, name: &str, why: &str) {
    println!("[acceptance] criterion {n} {name}: BLOCKED ({why})");
}

fn ix(user: &str, item: &str) -> Interaction {
    Interaction {
        user: user.into(),
        item: item.into(),
        rating: 1.0,
        timestamp: 0,
    }
}

#[test]
fn criterion_1_sampler_law() {
    // "owner" holds every item so all 1000 are train items; it is saturated
    // for negatives and gets redrawn, so every triplet belongs to "probe",
    // who holds only m0
    let mut rows = Vec::new();
    let mut groups = BTreeMap::new();
    for i in 0..900 {
        rows.push(ix("owner", &format!("m{i}")));
        groups.insert(format!("m{i}"), MAJORITY.to_string());
    }
    for i in 0..100 {
        rows.push(ix("owner", &format!("f{i}")));
        groups.insert(format!("f{i}"), MINORITY.to_string());
    }
    rows.push(ix("probe", "m0"));
    let catalog = Catalog::from_groups(groups);
    let index = TrainIndex::new(&rows);
    let cfg = SamplerConfig {
        cost: 2.0,
        target_slot: TargetSlot::Neg,
        seed: 11,
        ..Default::default()
    };

    // enumerate the weight law over the probe's candidate negatives
    let weights = build_item_weights(&index, &catalog, &cfg).unwrap();
    let probe = index.user("probe").unwrap();
    let (mut maj, mut total) = (0.0, 0.0);
    for item in 0..index.n_items() as u32 {
        if index.has_item(probe, item) {
            continue;
        }
        let w = weights.get(item);
        total += w;
        if catalog.group_of(index.item_id(item)) == MAJORITY {
            maj += w;
        }
    }
    let analytic = maj / total;

    let start = Instant::now();
    let sampler = TripletSampler::new(&index, &catalog, &cfg).unwrap();
    let n = 100_000;
    let triplets = sampler.generate(n, 0).unwrap();
    let elapsed = start.elapsed();
    let hits = triplets
        .iter()
        .filter(|t| catalog.group_of(index.item_id(t.negative)) == MAJORITY)
        .count();
    let share = hits as f64 / n as f64;
    let pass = (share - analytic).abs() <= 0.01
        && (analytic - 0.9474).abs() < 0.001
        && elapsed < Duration::from_secs(5);
    report(
        1,
        "sampler law",
        pass,
        &format!(
            "majority share {:.2}% vs analytic {:.2}%, {:.2}s",
            100.0 * share,
            100.0 * analytic,
            elapsed.as_secs_f64()
        ),
    );
}

/// Two-sample chi-square statistic over paired bins of unequal totals.
fn chi_square_two_sample(a: &[usize], b: &[usize]) -> (f64, usize) {
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    let (ka, kb) = ((nb / na).sqrt(), (na / nb).sqrt());
    let mut stat = 0.0;
    let mut bins = 0;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        bins += 1;
        let d = ka * x as f64 - kb * y as f64;
        stat += d * d / (x + y) as f64;
    }
    (stat, bins - 1)
}

#[test]
fn criterion_2_degeneracy() {
    let mut rows = Vec::new();
    for u in 0..30 {
        for k in 0..5 {
            rows.push(ix(&format!("u{u}"), &format!("i{}", (u * 7 + k * 13) % 100)));
        }
    }
    for i in 0..100 {
        rows.push(ix("collector", &format!("i{i}")));
    }
    let groups = (0..100)
        .map(|i| (format!("i{i}"), if i % 10 == 0 { MINORITY } else { MAJORITY }.to_string()))
        .collect();
    let catalog = Catalog::from_groups(groups);
    let index = TrainIndex::new(&rows);
    let cost_one = SamplerConfig {
        cost: 1.0,
        target_slot: TargetSlot::Neg,
        seed: 21,
        ..Default::default()
    };
    let uniform = SamplerConfig {
        seed: 22,
        ..Default::default()
    };
    let counts = |cfg: &SamplerConfig| {
        let sampler = TripletSampler::new(&index, &catalog, cfg).unwrap();
        let mut c = vec![0usize; index.n_items()];
        for t in sampler.generate(100_000, 0).unwrap() {
            c[t.negative as usize] += 1;
        }
        c
    };
    let (stat, df) = chi_square_two_sample(&counts(&cost_one), &counts(&uniform));
    let critical = ChiSquared::new(df as f64).unwrap().inverse_cdf(0.99);
    report(
        2,
        "degeneracy",
        stat < critical,
        &format!("chi2 {stat:.1} on {df} df, critical {critical:.1} at alpha 0.01"),
    );
}

fn random_model(seed: u64, users: usize, items: usize, dim: usize) -> FactorModel {
    let mut rng = seeded(seed);
    let uf = (0..users * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let itf = (0..items * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FactorModel::from_parts(
        dim,
        (0..users).map(|i| format!("u{i}")).collect(),
        (0..items).map(|i| format!("i{i}")).collect(),
        uf,
        itf,
    )
    .unwrap()
}

fn direct_loss(u: &[f64], i: &[f64], j: &[f64], l2: f64) -> f64 {
    let mut x = 0.0;
    let mut sq = 0.0;
    for f in 0..u.len() {
        x += u[f] * (i[f] - j[f]);
        sq += u[f] * u[f] + i[f] * i[f] + j[f] * j[f];
    }
    (1.0 + (-x).exp()).ln() + 0.5 * l2 * sq
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

#[test]
fn criterion_3_gradient_check() {
    let h = 1e-5;
    let dim = 10;
    let instances = 150u64;
    let mut worst: f64 = 0.0;
    for inst in 0..instances {
        let m = random_model(7_000 + inst, 4, 6, dim);
        let mut rng = seeded(9_000 + inst);
        let t = Triplet {
            user: rng.gen_range(0..4),
            positive: rng.gen_range(0..3),
            negative: rng.gen_range(3..6),
        };
        let l2 = if inst % 3 == 0 { 0.0 } else { rng.gen_range(0.0..0.1) };
        let g = bpr_gradient(&m, &t, l2);
        let base = [
            m.user_vec(t.user).to_vec(),
            m.item_vec(t.positive).to_vec(),
            m.item_vec(t.negative).to_vec(),
        ];
        for (block, analytic) in [&g.user, &g.positive, &g.negative].into_iter().enumerate() {
            let numeric: Vec<f64> = (0..dim)
                .map(|f| {
                    let (mut plus, mut minus) = (base.clone(), base.clone());
                    plus[block][f] += h;
                    minus[block][f] -= h;
                    (direct_loss(&plus[0], &plus[1], &plus[2], l2)
                        - direct_loss(&minus[0], &minus[1], &minus[2], l2))
                        / (2.0 * h)
                })
                .collect();
            worst = worst.max(rel_err(analytic, &numeric));
        }
    }
    report(
        3,
        "gradient check",
        worst <= 1e-4,
        &format!("{instances} instances, worst relative error {worst:.2e}"),
    );
}

fn permutations(items: &[u8]) -> Vec<Vec<u8>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for (pos, &x) in items.iter().enumerate() {
        let mut rest = items.to_vec();
        rest.remove(pos);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn dcg(ranking: &[u8], relevant: &HashSet<u8>, k: usize) -> f64 {
    (1..=k.min(ranking.len()))
        .filter(|r| relevant.contains(&ranking[r - 1]))
        .map(|r| 1.0 / ((r + 1) as f64).log2())
        .sum()
}

#[test]
fn criterion_4_ndcg_oracle() {
    let mut checked = 0usize;
    let mut worst: f64 = 0.0;
    for n in 1..=6u8 {
        let items: Vec<u8> = (0..n).collect();
        let perms = permutations(&items);
        for mask in 1u32..(1 << n) {
            let relevant: HashSet<u8> = items.iter().copied().filter(|i| mask & (1 << i) != 0).collect();
            for k in 1..=n as usize {
                let ideal = perms.iter().map(|p| dcg(p, &relevant, k)).fold(0.0, f64::max);
                for p in &perms {
                    let got = ndcg_at_k(p, &relevant, k).unwrap();
                    worst = worst.max((got - dcg(p, &relevant, k) / ideal).abs());
                    checked += 1;
                }
            }
        }
    }
    report(
        4,
        "NDCG oracle",
        worst <= 1e-12,
        &format!("{checked} (ranking, relevant set, k) cases, max abs diff {worst:.1e}"),
    );
}

#[test]
fn criterion_5_top_k_oracle() {
    let mut mismatches = 0;
    for inst in 0..1000u64 {
        let mut rng = seeded(70_000 + inst);
        let n_items = rng.gen_range(1..80);
        let dim = rng.gen_range(1..12);
        let m = random_model(inst, 3, n_items, dim);
        let user = rng.gen_range(0..3);
        let k = rng.gen_range(1..20);
        let mut exclude: Vec<u32> = (0..n_items as u32).filter(|_| rng.gen_bool(0.25)).collect();
        exclude.sort_unstable();

        let mut all: Vec<(u32, f64)> = (0..n_items as u32)
            .filter(|i| !exclude.contains(i))
            .map(|i| (i, m.score_idx(user, i)))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let want: Vec<u32> = all.iter().take(k).map(|p| p.0).collect();
        let got: Vec<u32> = recommend_top_k(&m, user, k, &exclude)
            .unwrap()
            .items
            .iter()
            .map(|p| p.0)
            .collect();
        if got != want {
            mismatches += 1;
        }
    }
    report(5, "top-k oracle", mismatches == 0, &format!("1000 instances, {mismatches} mismatches"));
}

struct Ml1m {
    interactions: PathBuf,
    providers: PathBuf,
    sep: String,
    group: Option<String>,
}

fn ml1m() -> Option<Ml1m> {
    let dir = PathBuf::from(std::env::var_os("FAIRBPR_ML1M_DIR")?);
    Some(Ml1m {
        interactions: dir.join("interactions.tsv"),
        providers: dir.join("providers.tsv"),
        sep: std::env::var("FAIRBPR_ML1M_SEP").unwrap_or_else(|_| "tab".into()),
        group: std::env::var("FAIRBPR_ML1M_GROUP").ok(),
    })
}

fn ml1m_config(data: &Ml1m, out: &Path) -> RunConfig {
    RunConfig {
        interactions: Some(data.interactions.clone()),
        providers: Some(data.providers.clone()),
        dataset: Some("ml1m".into()),
        sep: data.sep.parse().unwrap(),
        report_group: data.group.clone(),
        out: out.to_path_buf(),
        ..Default::default()
    }
}

const NO_DATA: &str = "MovieLens-1M with gender labels not available; set FAIRBPR_ML1M_DIR";

#[test]
fn criterion_6_triplet_audit_reproduction() {
    let name = "baseline triplet audit on ML-1M";
    let Some(data) = ml1m() else {
        blocked(6, name, NO_DATA);
        return;
    };
    let out = tempfile::tempdir().unwrap();
    let cfg = ml1m_config(&data, out.path());
    let start = Instant::now();
    let audit = commands::audit(&cfg, Some(1_000_000), false).unwrap();
    let elapsed = start.elapsed();
    let group = commands::load_prepared(&cfg).unwrap().report_group(&cfg).unwrap();
    let pos = 100.0 * audit.positive(&group).unwrap_or(0.0);
    let neg = 100.0 * audit.negative(&group).unwrap_or(0.0);
    let pass = (pos - 3.4).abs() <= 0.3 && (neg - 6.4).abs() <= 0.3 && elapsed < Duration::from_secs(60);
    report(
        6,
        name,
        pass,
        &format!(
            "group {group}: positive {pos:.2}% (target 3.4 +/- 0.3), negative {neg:.2}% (target 6.4 +/- 0.3), {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

#[test]
fn criterion_7_exposure_trend_reproduction() {
    let name = "ML-1M exposure trend";
    let Some(data) = ml1m() else {
        blocked(7, name, NO_DATA);
        return;
    };
    let out = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        costs: vec![1.2, 2.0, 3.0],
        slots: vec![TargetSlot::Neg],
        k: vec![10],
        ..ml1m_config(&data, out.path())
    };
    let rows = commands::sweep(&cfg).unwrap();
    let exposure: Vec<f64> = rows.iter().map(|r| 100.0 * r.slot_share[&10]).collect();
    let ndcg: Vec<f64> = rows.iter().map(|r| r.ndcg[&10]).collect();
    let increasing = exposure.windows(2).all(|w| w[1] > w[0]);
    let ndcg_flat = ndcg.iter().all(|v| (v - ndcg[0]).abs() <= 0.01);
    let pass = rows.len() == 4 && increasing && exposure[0] < 3.0 && (4.0..=8.0).contains(&exposure[2]) && ndcg_flat;
    report(
        7,
        name,
        pass,
        &format!("top-10 exposure % over C=1,1.2,2,3: {exposure:.2?}; NDCG@10: {ndcg:.4?}"),
    );
}

fn write_synthetic(dir: &Path) -> (PathBuf, PathBuf) {
    commands::synth(&SyntheticSpec::default(), dir).unwrap()
}

#[test]
fn criterion_8_utility_non_degradation() {
    let dir = tempfile::tempdir().unwrap();
    let (interactions, providers) = write_synthetic(&dir.path().join("data"));
    let cfg = RunConfig {
        interactions: Some(interactions),
        providers: Some(providers),
        dataset: Some("synthetic".into()),
        lr: 0.05,
        epochs: 20,
        seed: 1,
        costs: vec![2.0],
        slots: vec![TargetSlot::Neg],
        k: vec![10],
        out: dir.path().join("runs"),
        ..Default::default()
    };
    let rows = commands::sweep(&cfg).unwrap();
    let (base, fair) = (&rows[0], &rows[1]);
    assert_eq!((base.cost, fair.cost), (1.0, 2.0));
    let rel = (fair.ndcg[&10] - base.ndcg[&10]).abs() / base.ndcg[&10];
    let pass = rel < 0.10
        && fair.slot_share[&10] > base.slot_share[&10]
        && fair.weighted_exposure[&10] > base.weighted_exposure[&10];
    report(
        8,
        "utility non-degradation",
        pass,
        &format!(
            "NDCG@10 {:.4} -> {:.4} ({:.1}% relative), minority top-10 share {:.2}% -> {:.2}%",
            base.ndcg[&10],
            fair.ndcg[&10],
            100.0 * rel,
            100.0 * base.slot_share[&10],
            100.0 * fair.slot_share[&10]
        ),
    );
}

fn fairbpr(cwd: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_fairbpr"))
        .current_dir(cwd)
        .args(args)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success(), "fairbpr {args:?} failed");
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn criterion_9_determinism() {
    let data = tempfile::tempdir().unwrap();
    let (interactions, providers) = write_synthetic(data.path());
    let (i, p) = (interactions.to_str().unwrap(), providers.to_str().unwrap());
    let common = [
        "--interactions", i, "--providers", p, "--out", "runs", "--slot", "neg", "--cost", "2", "--epochs", "3",
        "--lr", "0.05", "--seed", "42",
    ];
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for run in &runs {
        for cmd in ["prepare", "train", "evaluate", "audit"] {
            let mut args = vec![cmd];
            args.extend(common);
            fairbpr(run.path(), &args);
        }
    }
    let a = files_under(runs[0].path());
    let b = files_under(runs[1].path());
    let names: Vec<String> = a.keys().map(|p| p.display().to_string()).collect();
    let expected = ["model.ckpt", "train_log.json", "metrics.json", "metrics.csv", "audit.json", "stats.json"];
    let complete = expected.iter().all(|e| names.iter().any(|n| n.ends_with(e)));
    report(
        9,
        "determinism",
        complete && a == b,
        &format!("{} artifacts compared byte for byte: {}", a.len(), names.join(", ")),
    );
}
