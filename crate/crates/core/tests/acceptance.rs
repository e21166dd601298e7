//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any hard
//! criterion fails; the method-trend line is informational.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lc_protonets::bench::{run_scaling_with, ScalingConfig};
use lc_protonets::episodic::{split_labels, EpisodeSpec, LabelPool};
use lc_protonets::evaluation::{evaluate, EvalConfig, Method};
use lc_protonets::label_space::{lc_classes, LabelSet, DEFAULT_POWER_SET_CAP};
use lc_protonets::metrics::{macro_f1, micro_f1, PredictionBatch};
use lc_protonets::prototypes::{build_store, classify, dedup_store, EmbeddedItem, DEFAULT_TIE_EPSILON};
use lc_protonets::synthgen::{generate, SynthConfig};
use lc_protonets::trainer::{
    adapted_episode_loss, bce_with_logit, episode_loss, loss_gradient, train_adapter, validation_episodes,
    validation_macro_f1, AdapterState, TrainConfig,
};
use lc_protonets::episodic::Episode;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random_labels(rng: &mut ChaCha8Rng, universe: usize, max_card: usize) -> LabelSet {
    let k = rng.random_range(1..=max_card.min(universe));
    let mut s = LabelSet::new();
    while s.len() < k {
        s.insert(rng.random_range(0..universe));
    }
    s
}

fn subsets(universe: usize) -> impl Iterator<Item = LabelSet> {
    (1u32..(1 << universe)).map(move |mask| LabelSet::from_indices((0..universe).filter(|b| mask & (1 << b) != 0)))
}

fn lc_class_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let universe = rng.random_range(1..=8);
        let n_items = rng.random_range(1..=6);
        let support: Vec<LabelSet> = (0..n_items).map(|_| random_labels(&mut rng, universe, 4)).collect();
        let mut expected: Vec<LabelSet> =
            subsets(universe).filter(|c| support.iter().any(|y| c.is_subset_of(y))).collect();
        expected.sort();
        let got = lc_classes(&support, DEFAULT_POWER_SET_CAP).unwrap();
        if got.as_slice() != expected.as_slice() {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("1000 supports, {mismatches} mismatches"))
}

fn random_support(rng: &mut ChaCha8Rng, universe: usize, n_items: usize, dim: usize) -> Vec<EmbeddedItem> {
    (0..n_items)
        .map(|i| {
            let labels = random_labels(rng, universe, 4);
            let e = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            EmbeddedItem::new(format!("s{i}"), labels, e)
        })
        .collect()
}

fn prototype_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut membership_errors = 0;
    for _ in 0..200 {
        let universe = rng.random_range(1..=7);
        let n_items = rng.random_range(1..=8);
        let dim = rng.random_range(1..=6);
        let support = random_support(&mut rng, universe, n_items, dim);
        let store = build_store(&support).unwrap();
        let mut seen = 0;
        for class in subsets(universe) {
            let members: Vec<usize> = (0..n_items).filter(|&i| class.is_subset_of(&support[i].labels)).collect();
            match store.classes().position(&class) {
                None if members.is_empty() => {}
                None => membership_errors += 1,
                Some(j) => {
                    seen += 1;
                    if store.membership(j) != members.as_slice() {
                        membership_errors += 1;
                        continue;
                    }
                    for k in 0..dim {
                        let mean = members.iter().map(|&i| support[i].embedding[k]).sum::<f64>() / members.len() as f64;
                        worst = worst.max((mean - store.representation(j)[k]).abs());
                    }
                }
            }
        }
        if seen != store.len() {
            membership_errors += 1;
        }
    }
    outcome(
        membership_errors == 0 && worst <= 1e-12,
        format!("200 supports, {membership_errors} membership errors, max mean error {worst:.2e}"),
    )
}

fn dedup_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut mismatches = 0;
    let mut grew = 0;
    let (mut before, mut after) = (0, 0);
    for _ in 0..100 {
        // few items over many labels: identical memberships are common
        let universe = rng.random_range(2..=6);
        let n_items = rng.random_range(1..=5);
        let dim = rng.random_range(2..=5);
        let mut support = random_support(&mut rng, universe, n_items, dim);
        if rng.random_bool(0.3) {
            // exact copies of prototype rows as queries stress ties
            support.push(support[0].clone());
            support.last_mut().unwrap().id = "dup".into();
        }
        let store = build_store(&support).unwrap();
        let deduped = dedup_store(&store);
        before += store.len();
        after += deduped.len();
        if deduped.len() > store.len() {
            grew += 1;
        }
        for qi in 0..100 {
            let q: Vec<f64> = if qi % 10 == 0 {
                store.representation(rng.random_range(0..store.len())).to_vec()
            } else {
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            if classify(&q, &store, DEFAULT_TIE_EPSILON).unwrap() != classify(&q, &deduped, DEFAULT_TIE_EPSILON).unwrap() {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && grew == 0,
        format!("100 stores x 100 queries, {mismatches} mismatches, classes {before} -> {after}"),
    )
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let h = 1e-5;
    let mut worst_rel: f64 = 0.0;
    let mut largest: f64 = 0.0;
    let mut failures = 0;
    let instances = 24;
    for trial in 0..instances {
        let dim = 8;
        let support = random_support(&mut rng, 3, 2, dim);
        let query = random_support(&mut rng, 3, 1, dim);
        let episode = Episode {
            active_labels: LabelSet::from_indices([0, 1, 2]),
            support_targets: vec![0; support.len()],
            support,
            query,
        };
        let adapter = AdapterState::random(dim, dim, 0.4, trial);
        let analytic = loss_gradient(&adapter, &episode).unwrap();
        let f = |a: &AdapterState| adapted_episode_loss(a, &episode).unwrap();
        let n_w = analytic.weight.len();
        for k in 0..n_w + analytic.bias.len() {
            let (mut plus, mut minus) = (adapter.clone(), adapter.clone());
            if k < n_w {
                plus.weight_mut()[k] += h;
                minus.weight_mut()[k] -= h;
            } else {
                plus.bias_mut()[k - n_w] += h;
                minus.bias_mut()[k - n_w] -= h;
            }
            let numeric = (f(&plus) - f(&minus)) / (2.0 * h);
            let a = if k < n_w { analytic.weight[k] } else { analytic.bias[k - n_w] };
            let diff = (a - numeric).abs();
            let scale = a.abs().max(numeric.abs());
            largest = largest.max(scale);
            if scale > 1e-7 {
                worst_rel = worst_rel.max(diff / scale);
            }
            if diff > 1e-7 && diff / scale > 1e-4 {
                failures += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!(
            "{instances} instances, {failures} bad entries, worst relative error {worst_rel:.2e}, largest entry {largest:.2e}"
        ),)
}

fn loss_anchors() -> Outcome {
    let ln2 = std::f64::consts::LN_2;
    let store = build_store(&[EmbeddedItem::new("s", LabelSet::singleton(0), vec![0.3, 0.4])]).unwrap();
    let hit = episode_loss(&[EmbeddedItem::new("q", LabelSet::singleton(0), vec![0.6, 0.8])], &store).unwrap();
    let miss = episode_loss(&[EmbeddedItem::new("q", LabelSet::singleton(1), vec![0.6, 0.8])], &store).unwrap();
    let direct = [bce_with_logit(0.0, true), bce_with_logit(0.0, false)];
    let err = [hit, miss, direct[0], direct[1]].iter().map(|l| (l - ln2).abs()).fold(0.0, f64::max);
    outcome(err <= 1e-9, format!("target 1: {hit:.9}, target 0: {miss:.9}"))
}

fn batch(labels: &[usize], rows: &[(&[usize], &[usize])]) -> PredictionBatch {
    let mut b = PredictionBatch::new(LabelSet::from_indices(labels.iter().copied()));
    for (t, p) in rows {
        b.push(LabelSet::from_indices(t.iter().copied()), LabelSet::from_indices(p.iter().copied()))
            .unwrap();
    }
    b
}

fn metric_fixtures() -> Outcome {
    let pooled = batch(&[0, 1], &[(&[0], &[0]), (&[0, 1], &[0, 1]), (&[1], &[]), (&[0], &[]), (&[], &[1])]);
    let half = batch(&[0, 1], &[(&[0], &[0]), (&[1], &[]), (&[1], &[])]);
    let perfect = batch(&[0, 1, 2], &[(&[0], &[0]), (&[1, 2], &[1, 2]), (&[2], &[2])]);
    let micro = micro_f1(&pooled).unwrap();
    let mac = macro_f1(&half).unwrap();
    let pass = (micro - 6.0 / 9.0).abs() <= 1e-9
        && (mac - 0.5).abs() <= 1e-9
        && macro_f1(&perfect).unwrap() == 1.0
        && micro_f1(&perfect).unwrap() == 1.0;
    outcome(pass, format!("pooled micro {micro:.9}, macro {mac:.9}, perfect 1.0"))
}

fn separable_recovery() -> Outcome {
    let ds = generate(&SynthConfig {
        n_labels: 10,
        dimension: 32,
        noise_sigma: 0.05,
        cardinality: vec![0.9, 0.1],
        ..SynthConfig::default()
    })
    .unwrap()
    .dataset;
    let cfg = EvalConfig {
        methods: vec![Method::LcProtonets],
        spec: EpisodeSpec::new(5, 3, 3, 0),
        n_episodes: 20,
        runs: 1,
        ..EvalConfig::default()
    };
    let res = evaluate(&ds, &LabelPool::Uniform((0..10).collect()), &cfg).unwrap();
    let s = &res.get(Method::LcProtonets).unwrap().summary;
    let (mac, mic) = (s.macro_mean(), s.micro_mean());
    outcome(mac >= 0.95 && mic >= 0.95, format!("macro {mac:.4}, micro {mic:.4}"))
}

fn method_trend() -> Outcome {
    let ds = generate(&SynthConfig {
        n_labels: 15,
        dimension: 32,
        items_per_label: 20,
        cardinality: vec![0.4, 0.4, 0.2],
        noise_sigma: 0.3,
        cooccurrence_bias: 0.8,
        seed: 0,
    })
    .unwrap()
    .dataset;
    let cfg = EvalConfig {
        methods: vec![Method::LcProtonets, Method::MlPn],
        spec: EpisodeSpec::new(15, 3, 3, 0),
        n_episodes: 20,
        runs: 5,
        ..EvalConfig::default()
    };
    let res = evaluate(&ds, &LabelPool::Uniform((0..15).collect()), &cfg).unwrap();
    let lc = res.get(Method::LcProtonets).unwrap().summary.micro_mean();
    let ml = res.get(Method::MlPn).unwrap().summary.micro_mean();
    outcome(lc >= ml, format!("micro-F1 LC-Protonets {lc:.4} vs ML-PNs {ml:.4} over 5 runs"))
}

fn scalability() -> Outcome {
    let triples = |n: usize| {
        Ok(generate(&SynthConfig {
            n_labels: n,
            dimension: 64,
            items_per_label: 10,
            cardinality: vec![0.0, 0.0, 1.0],
            ..SynthConfig::default()
        })?
        .dataset)
    };
    let cfg = ScalingConfig { n_values: vec![5, 15, 60], repetitions: 5, ..ScalingConfig::default() };
    let multi = run_scaling_with(triples, &cfg).unwrap();
    let c: Vec<f64> = multi.rows.iter().map(|r| r.lcp_count).collect();
    let (r1, r2) = (c[1] / c[0], c[2] / c[1]);
    let bounded = multi.rows.iter().all(|r| r.bound_holds);

    let singles = |n: usize| {
        Ok(generate(&SynthConfig { n_labels: n, dimension: 64, items_per_label: 10, cardinality: vec![1.0], ..SynthConfig::default() })?
            .dataset)
    };
    let single = run_scaling_with(singles, &ScalingConfig { repetitions: 2, ..cfg }).unwrap();
    let exact = single.rows.iter().all(|r| r.lcp_count == r.n as f64 && r.bound_holds);
    outcome(
        r1 > 3.0 && r2 > 4.0 && bounded && exact,
        format!("|L| {:?}, ratios {r1:.2} and {r2:.2}, bound held: {bounded}, singletons |L| = N: {exact}", c),
    )
}

fn adapter_training() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    for seed in 0..3u64 {
        let ds = generate(&SynthConfig { n_labels: 20, dimension: 32, noise_sigma: 0.05, seed, ..SynthConfig::default() })
            .unwrap()
            .dataset;
        let split = split_labels(ds.vocabulary(), 10, 5, seed).unwrap();
        let cfg = TrainConfig { seed, max_epochs: 40, ..TrainConfig::default() };
        let first = train_adapter(&ds, &split, &cfg).unwrap();
        let second = train_adapter(&ds, &split, &cfg).unwrap();
        let episodes = validation_episodes(&ds, &split, &cfg).unwrap();
        let before = validation_macro_f1(&AdapterState::identity(ds.dim()), &episodes, DEFAULT_TIE_EPSILON).unwrap();
        let after = validation_macro_f1(&first.adapter, &episodes, DEFAULT_TIE_EPSILON).unwrap();
        let identical = first.log.to_csv() == second.log.to_csv();
        pass &= after >= before && identical;
        details.push(format!(
            "seed {seed}: {before:.4} -> {after:.4} (best epoch {}){}",
            first.log.best_epoch,
            if identical { "" } else { ", logs differ" }
        ));
    }
    outcome(pass, details.join("; "))
}

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    hard: bool,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion { name: "lc-class oracle equivalence", limit: Some(Duration::from_secs(10)), hard: true, run: lc_class_oracle },
        Criterion { name: "prototype correctness", limit: Some(Duration::from_secs(5)), hard: true, run: prototype_oracle },
        Criterion { name: "dedup equivalence", limit: None, hard: true, run: dedup_equivalence },
        Criterion { name: "gradient check", limit: Some(Duration::from_secs(30)), hard: true, run: gradient_check },
        Criterion { name: "loss anchors", limit: None, hard: true, run: loss_anchors },
        Criterion { name: "metric fixtures", limit: None, hard: true, run: metric_fixtures },
        Criterion { name: "separable recovery", limit: Some(Duration::from_secs(60)), hard: true, run: separable_recovery },
        Criterion { name: "method trend (soft)", limit: None, hard: false, run: method_trend },
        Criterion { name: "scalability shape", limit: Some(Duration::from_secs(120)), hard: true, run: scalability },
        Criterion { name: "adapter training", limit: None, hard: true, run: adapter_training },
    ];
    let mut hard_failures = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut out = (c.run)();
        let elapsed = start.elapsed();
        if let Some(limit) = c.limit {
            if elapsed > limit {
                out.pass = false;
                out.detail.push_str(&format!("; over the {}s limit", limit.as_secs()));
            }
        }
        let tag = match (out.pass, c.hard) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "WARN",
        };
        if !out.pass && c.hard {
            hard_failures += 1;
        }
        println!("{tag} {:<30} {:>8.2}s  {}", c.name, elapsed.as_secs_f64(), out.detail);
    }
    println!("acceptance: {} criteria, {hard_failures} hard failures", criteria.len());
    if hard_failures > 0 {
        std::process::exit(1);
    }
}
