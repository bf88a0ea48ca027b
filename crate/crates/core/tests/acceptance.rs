//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when all criteria pass. Exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use evocf::evaldata::metrics::{ndcg_graded, RankedList};
use evocf::evaldata::{
    evaluate_model, leave_one_out_split, load_interactions, ndcg_at_k, Interaction, InteractionDataset,
    InteractionFormat, PopularityScorer, RandomScorer, Split, DEFAULT_EVAL_NEGATIVES,
};
use evocf::evolution::{final_train, write_history_csv, Evolution, EvolutionConfig};
use evocf::genome::{random_genome, validate, GenomeRanges, InitScheme};
use evocf::network::{decode, init_weights, Sample, TrainConfig};
use evocf::operators::{pm_real, sbx_real};
use evocf::seed::{derive_seed, Rng as SeedRng, STREAM_FINAL_TRAIN};
use evocf::synthetic::{planted_dataset, planted_interactions, write_movielens_dat, PlantedConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> SeedRng {
    SeedRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// 1. Operator math

fn operator_math() -> Verdict {
    // Hand evaluation: u = 0.8 > 0.5, so beta = (1 / (2 * 0.2))^(1/2) = sqrt(2.5).
    let (c1, c2) = sbx_real(100.0, 200.0, 1.0, 0.8).unwrap();
    let sbx_ok = (c1 - 70.943).abs() <= 1e-3 && (c2 - 229.057).abs() <= 1e-3;
    // delta2 = 0.5, val = 2(0.2) + 2(0.3)(0.5)^2 = 0.55, dq = 1 - 0.55^(1/2).
    let m = pm_real(0.25, 0.0, 0.5, 1.0, 0.8).unwrap();
    let pm_ok = (m - 0.37919).abs() <= 1e-4;

    let mut r = rng(1);
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let x1: f64 = r.random_range(-1000.0..1000.0);
        let x2: f64 = r.random_range(-1000.0..1000.0);
        let eta: f64 = r.random_range(0.0..30.0);
        let u: f64 = r.random_range(f64::EPSILON..1.0);
        let (a, b) = sbx_real(x1, x2, eta, u).unwrap();
        worst = worst.max(((a + b) / 2.0 - (x1 + x2) / 2.0).abs());
    }
    verdict(
        sbx_ok && pm_ok && worst < 1e-9,
        format!("sbx = ({c1:.4}, {c2:.4}), pm = {m:.5}, max midpoint drift {worst:.2e} over 1e5 draws"),
    )
}

// ---------------------------------------------------------------------------
// 2. Metric oracle

/// DCG of the first K positions, summed term by term.
fn brute_dcg(rel: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for i in 1..=k.min(rel.len()) {
        total += (2f64.powf(rel[i - 1]) - 1.0) / ((i + 1) as f64).log2();
    }
    total
}

fn permutations(items: &mut Vec<f64>, start: usize, visit: &mut dyn FnMut(&[f64])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permutations(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Ideal DCG: exhaustive search over orderings for short lists, greedy
/// largest-first selection otherwise.
fn brute_ideal(rel: &[f64], k: usize) -> f64 {
    if rel.len() <= 6 {
        let mut best = 0.0f64;
        let mut work = rel.to_vec();
        permutations(&mut work, 0, &mut |p| best = best.max(brute_dcg(p, k)));
        return best;
    }
    let mut left = rel.to_vec();
    let mut order = Vec::new();
    while !left.is_empty() {
        let mut arg = 0;
        for j in 1..left.len() {
            if left[j] > left[arg] {
                arg = j;
            }
        }
        order.push(left.remove(arg));
    }
    brute_dcg(&order, k)
}

fn brute_ndcg(rel: &[f64], k: usize) -> f64 {
    let ideal = brute_ideal(rel, k);
    if ideal == 0.0 {
        0.0
    } else {
        brute_dcg(rel, k) / ideal
    }
}

fn metric_oracle() -> Verdict {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for case in 0..10_000 {
        let len = r.random_range(1..=12);
        let k = r.random_range(1..=12);
        let graded = case % 2 == 1;
        let rel: Vec<f64> = (0..len)
            .map(|_| {
                if graded {
                    r.random_range(0..=3) as f64
                } else {
                    r.random_range(0..=1) as f64
                }
            })
            .collect();
        worst = worst.max((ndcg_graded(&rel, k) - brute_ndcg(&rel, k)).abs());

        // Single relevant item through the ranking path.
        let items: Vec<usize> = (0..len).map(|i| i * 7 + 3).collect();
        let scores: Vec<f64> = (0..len).map(|_| r.random_range(0..5) as f64).collect();
        let relevant = items[r.random_range(0..len)];
        let ranked = RankedList::from_scores(&items, &scores);
        let order: Vec<f64> = ranked.items().map(|i| if i == relevant { 1.0 } else { 0.0 }).collect();
        worst = worst.max((ndcg_at_k(&ranked, relevant, k) - brute_ndcg(&order, k)).abs());
    }

    let table = [(1, 10, 1.0), (3, 10, 0.5), (11, 10, 0.0), (4, 3, 0.0)];
    let mut table_ok = true;
    for (pos, k, want) in table {
        let order: Vec<usize> = (0..12).collect();
        let got = ndcg_at_k(&RankedList::from_order(&order), pos - 1, k);
        table_ok &= got == want;
    }
    verdict(
        worst <= 1e-12 && table_ok,
        format!("max |ndcg - brute force| = {worst:.1e} over 1e4 lists; positional table exact: {table_ok}"),
    )
}

// ---------------------------------------------------------------------------
// 3. Gradient checks

fn gradient_checks() -> Verdict {
    let ranges = GenomeRanges {
        length: (3, 5),
        neurons: (3, 6),
        dropout: (0.0, 0.5),
        embedding_dim: (2, 4),
    };
    let (users, items) = (4, 5);
    let eps = 1e-4;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut r = rng(3);
    let mut nets = 0;
    while nets < 20 {
        let genome = random_genome(&ranges, &mut r).unwrap();
        let mut net = decode(&genome, users, items, &mut r).unwrap();
        let params: Vec<f64> = (0..net.parameter_count()).map(|_| r.random_range(-1.0..1.0)).collect();
        net.set_parameters(&params).unwrap();
        let batch: Vec<Sample> = (0..6)
            .map(|_| Sample {
                user: r.random_range(0..users),
                item: r.random_range(0..items),
                label: r.random_range(0..=1) as f64,
            })
            .collect();
        let (us, is): (Vec<usize>, Vec<usize>) = batch.iter().map(|s| (s.user, s.item)).unzip();
        let mask_seed: u64 = r.random();

        // ReLU is not differentiable at 0; redraw networks whose hidden
        // pre-activations come close enough for the difference to straddle it.
        let pre = net.pre_activations(&us, &is, true, &mut rng(mask_seed)).unwrap();
        let hidden = &pre[..pre.len() - 1];
        if hidden.iter().flatten().any(|v| v.abs() < 1e-3) {
            continue;
        }
        nets += 1;

        let (_, grads) = net.loss_and_gradients(&batch, true, &mut rng(mask_seed)).unwrap();
        let analytic = grads.to_flat(&net);
        let mut probe = net.clone();
        let mut p = params.clone();
        for k in 0..params.len() {
            p[k] = params[k] + eps;
            probe.set_parameters(&p).unwrap();
            let up = probe.loss(&batch, true, &mut rng(mask_seed)).unwrap();
            p[k] = params[k] - eps;
            probe.set_parameters(&p).unwrap();
            let down = probe.loss(&batch, true, &mut rng(mask_seed)).unwrap();
            p[k] = params[k];
            let numeric = (up - down) / (2.0 * eps);
            let denom = analytic[k].abs().max(numeric.abs()).max(1e-7);
            worst = worst.max((analytic[k] - numeric).abs() / denom);
            checked += 1;
        }
    }
    verdict(
        worst < 1e-4,
        format!("max relative error {worst:.2e} over {checked} parameters in 20 networks (dropout active)"),
    )
}

// ---------------------------------------------------------------------------
// 4. Initialisation statistics

fn sample_weights(scheme: InitScheme, fan_out: usize, fan_in: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.extend_from_slice(init_weights(fan_out, fan_in, scheme, &mut r).data());
    }
    out.truncate(n);
    out
}

fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
}

fn init_statistics() -> Verdict {
    let n = 100_000;
    let (fan_out, fan_in) = (40usize, 50usize);
    let (fo, fi) = (fan_out as f64, fan_in as f64);
    let targets = [
        (InitScheme::Rn, 0.01f64.powi(2), None),
        (InitScheme::Ru, 0.1f64.powi(2) / 3.0, Some(0.1)),
        (InitScheme::Xn, 2.0 / (fi + fo), None),
        (InitScheme::Xu, 2.0 / (fi + fo), Some((6.0 / (fi + fo)).sqrt())),
        (InitScheme::Kn, 2.0 / fi, None),
        (InitScheme::Ku, 2.0 / fi, Some((6.0 / fi).sqrt())),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (scheme, target, bound)) in targets.into_iter().enumerate() {
        let w = sample_weights(scheme, fan_out, fan_in, n, 40 + i as u64);
        let rel = variance(&w) / target - 1.0;
        let inside = bound.is_none_or(|b| w.iter().all(|x| x.abs() <= b));
        pass &= rel.abs() < 0.05 && inside;
        parts.push(format!("{scheme} {:+.1}%", 100.0 * rel));
    }

    let kn = sample_weights(InitScheme::Kn, 64, 50, n, 50);
    let kn_std = variance(&kn).sqrt();
    pass &= (kn_std / 0.2 - 1.0).abs() < 0.05;
    let xu = sample_weights(InitScheme::Xu, 32, 64, n, 51);
    let xu_max = xu.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let xu_var = variance(&xu);
    pass &= xu_max <= 0.25 && (xu_var / (0.25f64.powi(2) / 3.0) - 1.0).abs() < 0.05;
    parts.push(format!("Kn fan_in 50 std {kn_std:.4}"));
    parts.push(format!("Xu 64/32 max |w| {xu_max:.4} <= 0.25"));
    verdict(pass, format!("variance vs target: {}", parts.join(", ")))
}

// ---------------------------------------------------------------------------
// 5. Evolution invariants

fn planted_small() -> InteractionDataset {
    planted_dataset(&PlantedConfig::default(), 49).unwrap()
}

fn evolution_invariants() -> Verdict {
    let ds = planted_small();
    let mut improved = 0;
    let mut problems = Vec::new();
    let mut gains = Vec::new();
    for seed in 1..=5u64 {
        let cfg = EvolutionConfig {
            population_size: 8,
            max_generations: 5,
            train: TrainConfig {
                proxy_epochs: 1,
                ..TrainConfig::default()
            },
            seed,
            ..EvolutionConfig::default()
        };
        let ranges = cfg.ranges.clone();
        let mut evo = Evolution::new(cfg, &ds).unwrap();
        while !evo.is_finished() {
            evo.step().unwrap();
            if evo.state().population.len() != 8 {
                problems.push(format!("seed {seed}: population size {}", evo.state().population.len()));
            }
        }
        let outcome = evo.outcome().unwrap();
        let invalid = evo
            .trained_genomes()
            .iter()
            .filter(|g| !validate(g, &ranges).is_empty())
            .count();
        if invalid > 0 {
            problems.push(format!("seed {seed}: {invalid} invalid genomes trained"));
        }
        let mut bests: Vec<f64> = outcome.history.iter().map(|h| h.best).collect();
        let final_best = outcome.best.fitness.unwrap();
        bests.push(final_best);
        if bests.windows(2).any(|w| w[1] < w[0]) {
            problems.push(format!("seed {seed}: best fitness decreased {bests:?}"));
        }
        let gain = final_best - outcome.history[0].mean;
        gains.push(format!("{gain:+.3}"));
        if gain >= 0.02 {
            improved += 1;
        }
    }
    verdict(
        problems.is_empty() && improved >= 4,
        format!(
            "best - initial mean per seed [{}]; {improved}/5 seeds >= 0.02; {}",
            gains.join(", "),
            if problems.is_empty() {
                "invariants hold".to_string()
            } else {
                problems.join("; ")
            }
        ),
    )
}

// ---------------------------------------------------------------------------
// 6. End-to-end against baselines

fn ml100k_scale_config() -> PlantedConfig {
    PlantedConfig {
        num_users: 943,
        num_items: 1682,
        rank: 8,
        min_per_user: 20,
        max_per_user: 190,
        sharpness: 3.0,
        popularity: 1.0,
        seed: 100,
    }
}

/// Writes the planted log as a ratings file and ingests it like real data.
fn ingest_ml100k_scale(dir: &Path) -> (evocf::evaldata::LoadedInteractions, InteractionDataset) {
    let path = dir.join("ratings.dat");
    let log = planted_interactions(&ml100k_scale_config());
    write_movielens_dat(&log, fs::File::create(&path).unwrap()).unwrap();
    let loaded = load_interactions(&path, InteractionFormat::MovielensDat).unwrap();
    let ds = leave_one_out_split(
        &loaded.interactions,
        loaded.num_users(),
        loaded.num_items(),
        DEFAULT_EVAL_NEGATIVES,
        &mut rng(7),
    )
    .unwrap();
    (loaded, ds)
}

fn end_to_end() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let (loaded, ds) = ingest_ml100k_scale(dir.path());
    let cfg = EvolutionConfig {
        population_size: 8,
        max_generations: 4,
        ranges: GenomeRanges {
            length: (4, 6),
            neurons: (16, 64),
            ..GenomeRanges::default()
        },
        train: TrainConfig {
            proxy_epochs: 1,
            ..TrainConfig::default()
        },
        final_epochs: 10,
        seed: 2024,
        jobs: 1,
        ..EvolutionConfig::default()
    };
    let outcome = Evolution::new(cfg.clone(), &ds).unwrap().run().unwrap();
    let best = &outcome.best.genome;
    let seed = derive_seed(cfg.seed, STREAM_FINAL_TRAIN, best.structural_hash());
    let (_, sweep) = final_train(best, &ds, &cfg.train, cfg.final_epochs, seed, 10).unwrap();
    let trained = &sweep[9];

    let untrained_net = decode(best, ds.num_users, ds.num_items, &mut rng(seed)).unwrap();
    let untrained = evaluate_model(&untrained_net, &ds, Split::Test, 10).unwrap();
    let popular = evaluate_model(&PopularityScorer::from_train(&ds), &ds, Split::Test, 10).unwrap();
    let random = evaluate_model(&RandomScorer { seed: 9 }, &ds, Split::Test, 10).unwrap();

    let beats = |o: &evocf::evaldata::EvalResult| trained.hr > o.hr && trained.ndcg > o.ndcg;
    let pass = beats(&untrained) && beats(&popular) && (random.hr - 0.10).abs() <= 0.03;
    verdict(
        pass,
        format!(
            "{} interactions, {} users x {} items; HR@10/NDCG@10 evolved {:.3}/{:.3}, untrained {:.3}/{:.3}, popularity {:.3}/{:.3}, random HR@10 {:.3}",
            loaded.interactions.len(),
            ds.num_users,
            ds.num_items,
            trained.hr,
            trained.ndcg,
            untrained.hr,
            untrained.ndcg,
            popular.hr,
            popular.ndcg,
            random.hr
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. Determinism and resume

fn small_run_config(seed: u64, checkpoint: Option<&Path>, jobs: usize) -> EvolutionConfig {
    EvolutionConfig {
        population_size: 6,
        max_generations: 4,
        ranges: GenomeRanges {
            length: (4, 6),
            neurons: (16, 48),
            embedding_dim: (8, 24),
            ..GenomeRanges::default()
        },
        train: TrainConfig {
            proxy_epochs: 1,
            ..TrainConfig::default()
        },
        seed,
        checkpoint_dir: checkpoint.map(Path::to_path_buf),
        jobs,
        ..EvolutionConfig::default()
    }
}

fn history_bytes(evo: Evolution<'_>) -> Vec<u8> {
    let outcome = evo.run().unwrap();
    let mut buf = Vec::new();
    write_history_csv(&outcome.history, &mut buf).unwrap();
    buf.extend_from_slice(evocf::genome::serialize(&outcome.best.genome).as_bytes());
    buf
}

fn determinism_and_resume() -> Verdict {
    let ds = planted_small();
    let full_dir = tempfile::tempdir().unwrap();
    let a = history_bytes(Evolution::new(small_run_config(31, Some(full_dir.path()), 1), &ds).unwrap());
    let repeat = history_bytes(Evolution::new(small_run_config(31, None, 1), &ds).unwrap());
    let b = history_bytes(Evolution::new(small_run_config(31, None, 2), &ds).unwrap());
    let other = history_bytes(Evolution::new(small_run_config(32, None, 1), &ds).unwrap());

    let dir = tempfile::tempdir().unwrap();
    let mut first = Evolution::new(small_run_config(31, Some(dir.path()), 1), &ds).unwrap();
    first.run_until(2).unwrap();
    drop(first);
    let resumed = history_bytes(Evolution::resume(small_run_config(31, Some(dir.path()), 1), &ds).unwrap());

    let mut same_files = true;
    for name in [
        "state.txt",
        "fitness_cache.csv",
        "history.csv",
        "genomes/0000.json",
        "genomes/0005.json",
    ] {
        same_files &= fs::read(full_dir.path().join(name)).unwrap() == fs::read(dir.path().join(name)).unwrap();
    }
    verdict(
        a == repeat && a == b && a == resumed && same_files && a != other,
        format!(
            "repeat run identical: {}, 2 threads identical: {}, resumed after generation 2 identical: {}, checkpoint files identical: {same_files}",
            a == repeat,
            a == b,
            a == resumed
        ),
    )
}

// ---------------------------------------------------------------------------
// 8. Protocol integrity

/// Recomputes the leave-one-out assignment from the raw log and checks the
/// dataset against it, independently of the library's own scan.
fn independent_scan(log: &[Interaction], ds: &InteractionDataset) -> Vec<String> {
    let mut raw: BTreeMap<usize, Vec<(i64, usize, usize)>> = BTreeMap::new();
    for (order, it) in log.iter().enumerate() {
        raw.entry(it.user)
            .or_default()
            .push((it.timestamp.unwrap_or(0), order, it.item));
    }
    let mut bad = Vec::new();
    let kept: BTreeSet<usize> = ds.user_origin.iter().copied().collect();
    for (&origin, events) in &raw {
        if events.len() >= 3 && !kept.contains(&origin) {
            bad.push(format!("user {origin} with {} interactions was dropped", events.len()));
        }
    }
    for u in 0..ds.num_users {
        let origin = ds.user_origin[u];
        let Some(events) = raw.get(&origin) else {
            bad.push(format!("user {u} has no raw interactions"));
            continue;
        };
        let mut events = events.clone();
        events.sort();
        let n = events.len();
        let observed: BTreeSet<usize> = events.iter().map(|e| e.2).collect();
        let want_train: BTreeSet<usize> = events[..n - 2].iter().map(|e| e.2).collect();
        let got_train: BTreeSet<usize> = ds.train[u].iter().copied().collect();
        if got_train != want_train || ds.train[u].len() != want_train.len() {
            bad.push(format!("user {u}: train set differs from the raw log"));
        }
        if ds.validation_item[u] != events[n - 2].2 || ds.test_item[u] != events[n - 1].2 {
            bad.push(format!("user {u}: held-out items are not the two latest"));
        }
        let (v, t) = (ds.validation_item[u], ds.test_item[u]);
        if v == t || got_train.contains(&v) || got_train.contains(&t) {
            bad.push(format!("user {u}: train/validation/test overlap"));
        }
        let negs: BTreeSet<usize> = ds.eval_negatives[u].iter().copied().collect();
        if negs.len() != ds.eval_negatives[u].len() {
            bad.push(format!("user {u}: repeated negatives"));
        }
        if negs.iter().any(|j| observed.contains(j) || *j >= ds.num_items) {
            bad.push(format!("user {u}: negative set contains an observed or unknown item"));
        }
    }
    bad
}

fn protocol_integrity() -> Verdict {
    let mut report = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, log: &[Interaction], ds: &InteractionDataset| {
        let mut bad = ds.integrity_violations();
        bad.extend(independent_scan(log, ds));
        pass &= bad.is_empty();
        report.push(format!("{name}: {} users, {} violations", ds.num_users, bad.len()));
    };

    let small_log = planted_interactions(&PlantedConfig::default());
    check("planted 200x100", &small_log, &planted_small());

    let dir = tempfile::tempdir().unwrap();
    let (loaded, ds) = ingest_ml100k_scale(dir.path());
    check("ML-100K scale", &loaded.interactions, &ds);

    let toy = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/toy/ratings.dat");
    let loaded = load_interactions(&toy, InteractionFormat::MovielensDat).unwrap();
    let ds = leave_one_out_split(
        &loaded.interactions,
        loaded.num_users(),
        loaded.num_items(),
        99,
        &mut rng(1),
    )
    .unwrap();
    check("bundled toy", &loaded.interactions, &ds);

    // Shuffled, duplicated and sparse users.
    let mut r = rng(8);
    let mut lines = Vec::new();
    for u in 0..60 {
        let n = r.random_range(1..12);
        for _ in 0..n {
            lines.push(format!("u{u}\tm{}\t{}", r.random_range(0..40), r.random_range(0..1000)));
        }
    }
    lines.shuffle(&mut r);
    let path = dir.path().join("mixed.tsv");
    fs::write(&path, lines.join("\n")).unwrap();
    let loaded = load_interactions(&path, InteractionFormat::TsvTriples).unwrap();
    let ds = leave_one_out_split(
        &loaded.interactions,
        loaded.num_users(),
        loaded.num_items(),
        20,
        &mut rng(2),
    )
    .unwrap();
    check(
        &format!("mixed tsv ({} dropped)", ds.dropped_users),
        &loaded.interactions,
        &ds,
    );

    verdict(pass, report.join("; "))
}

// ---------------------------------------------------------------------------

type Criterion = (&'static str, Duration, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("operator math conformance", Duration::from_secs(1), operator_math),
        ("metric oracle", Duration::from_secs(5), metric_oracle),
        ("gradient checks", Duration::from_secs(30), gradient_checks),
        ("initialisation statistics", Duration::from_secs(5), init_statistics),
        ("evolution invariants", Duration::from_secs(600), evolution_invariants),
        ("end-to-end vs baselines", Duration::from_secs(1800), end_to_end),
        (
            "determinism and resume",
            Duration::from_secs(300),
            determinism_and_resume,
        ),
        ("protocol integrity", Duration::from_secs(60), protocol_integrity),
    ];
    let only: Option<usize> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(v) => (v.pass && elapsed < limit, v.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!(
            "{} criterion {n}: {name} ({:.1}s, limit {}s): {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
