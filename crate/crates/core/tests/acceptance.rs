//! End-to-end acceptance checks, one pass/fail line per criterion.
//!
//! Failing criteria are reported but do not fail the run unless
//! `NEUROLOGIC_ACCEPTANCE_STRICT=1` is set.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use neurologic::cli::main_with_args;
use neurologic::datagen::{
    annotator_rules, inject_label_noise, make_world, sample_dataset, Dataset, Split, WorldSpec,
    DEFAULT_NOISE_SWEEP,
};
use neurologic::engine::{
    average_precision, train, Combination, InferMode, ModelConfig, ReasoningModel, RegReduction,
    TrainConfig,
};
use neurologic::logic::{
    ambient_samples, ambiguous_fraction, expression_accuracy, logic_law_loss_rows, Expression,
};
use neurologic::numcore::{grad_check, Matrix, Tape};
use neurologic::rulebase::{
    bernoulli_kl, default_betas, generate_candidates, update_rules, Branch, Candidate,
    GeneratorProfile, Provenance, Rule, RuleBase,
};
use neurologic::search::{rule_search, SearchConfig};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn single_worker<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .expect("thread pool")
        .install(f)
}

struct Trained {
    data: Dataset,
    model: ReasoningModel<f64>,
    base: RuleBase,
    elapsed: Duration,
}

fn benchmark_run(seed: u64, update_rules: bool) -> Trained {
    let world = make_world(&WorldSpec::default(), seed).expect("world");
    let data = sample_dataset(&world, world.spec.samples, seed).expect("dataset");
    let rules = annotator_rules(&world, 5, 4, true, seed).expect("annotator rules");
    let cfg = ModelConfig::default();
    let base = RuleBase::from_rules(world.a(), cfg.l0, rules).expect("base");
    let mut model = ReasoningModel::<f64>::new(&cfg, &world.primitives, &world.activities, 0, seed)
        .expect("model");
    let tc = TrainConfig {
        update_rules,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let train_split = data.split(Split::Train);
    let out = train(&mut model, &train_split, None, base, &tc, seed).expect("training");
    Trained {
        data,
        model,
        base: out.base,
        elapsed: start.elapsed(),
    }
}

fn test_map(t: &Trained) -> f64 {
    let set = t.model.rule_set(&t.base).expect("rule set");
    t.model
        .evaluate(
            &t.data.split(Split::Test),
            &set,
            InferMode::Fused,
            t.model.combination,
        )
        .expect("evaluate")
        .map
}

fn test_events(t: &Trained) -> Matrix<f64> {
    let set = t.model.rule_set(&t.base).expect("rule set");
    t.model
        .event_pool(&t.data.split(Split::Test).samples, &set)
        .expect("event pool")
}

fn ac1_logic_laws(t: &Trained) -> Outcome {
    let start = Instant::now();
    let events = test_events(t);
    let table = single_worker(|| {
        expression_accuracy(&t.model.arch.logic, &t.model.params, &events, 0.8, 5000, 1)
    })
    .map_err(|e| e.to_string())?;
    let runtime = t.elapsed + start.elapsed();
    let mut failures = Vec::new();
    let mut cells = Vec::new();
    for e in Expression::ALL {
        let acc = table.accuracy(e);
        let need = if e.reference_accuracy() >= 0.88 {
            0.85
        } else {
            0.70
        };
        cells.push(format!("{}={acc:.3}", e.label()));
        if acc < need {
            failures.push(format!("{} {acc:.3} < {need}", e.label()));
        }
    }
    let fast = runtime <= Duration::from_secs(300);
    if !fast {
        failures.push(format!("runtime {:.0}s > 300s", runtime.as_secs_f64()));
    }
    let detail = format!(
        "{} events (T {}, F {}), {:.0}s; {}{}",
        table.events,
        table.n_true,
        table.n_false,
        runtime.as_secs_f64(),
        cells.join(", "),
        if failures.is_empty() {
            String::new()
        } else {
            format!("; failing: {}", failures.join("; "))
        }
    );
    check(failures.is_empty(), detail)
}

fn ac2_bimodality(t: &Trained) -> Outcome {
    let events = test_events(t);
    let ops = &t.model.arch.logic;
    let trained =
        ambiguous_fraction(ops, &t.model.params, &events, 0.2, 0.8).map_err(|e| e.to_string())?;
    let ambient = ambient_samples(&events, 5000, 2).map_err(|e| e.to_string())?;
    let random =
        ambiguous_fraction(ops, &t.model.params, &ambient, 0.2, 0.8).map_err(|e| e.to_string())?;
    check(
        trained <= 0.20 && random >= 0.50,
        format!(
            "ambiguous fraction on {} test events {trained:.3} (need <= 0.20), on ambient vectors {random:.3} (need >= 0.50)",
            events.rows()
        ),
    )
}

fn ac3_gradients() -> Outcome {
    let world = make_world(
        &WorldSpec {
            primitives: 8,
            activities: 3,
            max_rules: 2,
            samples: 60,
            visual_dim: 5,
            ..WorldSpec::default()
        },
        11,
    )
    .map_err(|e| e.to_string())?;
    let data = sample_dataset(&world, 60, 11).map_err(|e| e.to_string())?;
    let batch: Vec<_> = data.samples.iter().take(8).collect();
    let base =
        RuleBase::from_rules(world.a(), 4, world.rules.clone()).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (comb, reduction) in [
        (Combination::Late, RegReduction::Mean),
        (Combination::Early, RegReduction::Mean),
        (Combination::Late, RegReduction::Sum),
        (Combination::Early, RegReduction::Sum),
    ] {
        let cfg = ModelConfig {
            d: 6,
            embed_dim: 5,
            l0: 4,
            perceptual_hidden: 4,
            reg_sample: 12,
            reg_reduction: reduction,
            ..ModelConfig::default()
        };
        let mut model =
            ReasoningModel::<f64>::new(&cfg, &world.primitives, &world.activities, 5, 3)
                .map_err(|e| e.to_string())?;
        let set = model.rule_set(&base).map_err(|e| e.to_string())?;
        let arch = model.arch.clone();
        let err = grad_check(
            &mut model.params,
            |tape, p| Ok(arch.loss(tape, p, &batch, &set, comb, 5)?.total),
            1e-5,
            usize::MAX,
        )
        .map_err(|e| e.to_string())?;
        parts.push(format!("{comb:?}/{reduction:?} {err:.1e}"));
        worst = worst.max(err);
    }
    let cfg = ModelConfig {
        d: 6,
        ..ModelConfig::default()
    };
    let mut model = ReasoningModel::<f64>::new(&cfg, &world.primitives, &world.activities, 0, 4)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let events = Matrix::from_vec(8, 6, (0..48).map(|_| rng.random_range(-1.5..1.5)).collect())
        .map_err(|e| e.to_string())?;
    let ops = model.arch.logic.clone();
    let err = grad_check(
        &mut model.params,
        |tape: &mut Tape<f64>, p| {
            let x = tape.constant(events.clone());
            logic_law_loss_rows(tape, &ops, p, x)
        },
        1e-5,
        usize::MAX,
    )
    .map_err(|e| e.to_string())?;
    parts.push(format!("logic laws {err:.1e}"));
    worst = worst.max(err);
    check(
        worst < 1e-4,
        format!("max relative error {worst:.2e} ({})", parts.join(", ")),
    )
}

fn ac4_rule_updates() -> Outcome {
    let rule = |m: usize, body: &[usize]| {
        Rule::new(m, body.to_vec(), Provenance::HumanPrior).expect("rule")
    };
    let cand = |m: usize, body: &[usize], loss: f64| Candidate {
        rule: rule(m, body),
        loss,
    };
    let losses = |b: &RuleBase, m: usize| b.rules(m).iter().map(|s| s.loss).collect::<Vec<_>>();
    let mut failures = Vec::new();

    let mut base = RuleBase::new(1, 2).map_err(|e| e.to_string())?;
    base.insert(rule(0, &[0]), 0.5).map_err(|e| e.to_string())?;
    base.insert(rule(0, &[1]), 0.2).map_err(|e| e.to_string())?;
    let (next, _) = update_rules(&base, &[cand(0, &[2], 0.3)], 2).map_err(|e| e.to_string())?;
    let mut got = losses(&next, 0);
    got.sort_by(f64::total_cmp);
    if got != [0.2, 0.3] {
        failures.push(format!("replace trace gave {got:?}"));
    }
    let (next, diff) = update_rules(&base, &[cand(0, &[2], 0.6)], 2).map_err(|e| e.to_string())?;
    if next != base || !diff.is_empty() {
        failures.push("worse candidate changed the base".into());
    }
    let mut base = RuleBase::new(1, 3).map_err(|e| e.to_string())?;
    base.insert(rule(0, &[0]), 0.5).map_err(|e| e.to_string())?;
    let (next, _) = update_rules(&base, &[cand(0, &[3], 0.1)], 3).map_err(|e| e.to_string())?;
    if next.rules(0).len() != 2 {
        failures.push(format!("append trace left {} rules", next.rules(0).len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let trials = 500;
    for trial in 0..trials {
        let a = rng.random_range(1..4);
        let l0 = rng.random_range(1..6);
        let mut base = RuleBase::new(a, l0).map_err(|e| e.to_string())?;
        let mut next_body = 0usize;
        let mut fresh = |rng: &mut ChaCha8Rng, m: usize| {
            next_body += 1;
            let mut body = vec![next_body % 30, 30 + next_body / 30];
            if rng.random_bool(0.5) {
                body.pop();
            }
            rule(m, &body)
        };
        for m in 0..a {
            for _ in 0..rng.random_range(0..=l0) {
                let r = fresh(&mut rng, m);
                base.insert(r, rng.random::<f64>())
                    .map_err(|e| e.to_string())?;
            }
        }
        let candidates: Vec<Candidate> = (0..rng.random_range(0..12))
            .map(|_| {
                let m = rng.random_range(0..a);
                Candidate {
                    rule: fresh(&mut rng, m),
                    loss: rng.random::<f64>(),
                }
            })
            .collect();
        let (next, _) = update_rules(&base, &candidates, l0).map_err(|e| e.to_string())?;
        for m in 0..a {
            let mut before = losses(&base, m);
            let mut after = losses(&next, m);
            before.sort_by(f64::total_cmp);
            after.sort_by(f64::total_cmp);
            if after.len() > l0 {
                failures.push(format!(
                    "trial {trial}: {} rules exceed l0 = {l0}",
                    after.len()
                ));
            }
            if after.len() < before.len() || before.iter().zip(&after).any(|(b, x)| x > b) {
                failures.push(format!("trial {trial}: {before:?} -> {after:?}"));
            }
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "three traces reproduced; dominance and capacity held over {trials} random updates"
            )
        } else {
            failures.join("; ")
        },
    )
}

fn ac5_update_efficacy(first: &Trained) -> Outcome {
    let mut gains = Vec::new();
    for seed in 1..=5u64 {
        let with = if seed == 1 {
            test_map(first)
        } else {
            test_map(&benchmark_run(seed, true))
        };
        let without = test_map(&benchmark_run(seed, false));
        gains.push(100.0 * (with - without));
    }
    let mut sorted = gains.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[2];
    let listed: Vec<String> = gains.iter().map(|g| format!("{g:+.2}")).collect();
    check(
        median >= 2.0,
        format!(
            "median gain {median:+.2} mAP points (need >= 2.00); per seed {}",
            listed.join(", ")
        ),
    )
}

fn ac6_noise_sweep(t: &Trained) -> Outcome {
    let set = t.model.rule_set(&t.base).map_err(|e| e.to_string())?;
    let test = t.data.split(Split::Test);
    let mut maps = Vec::new();
    for (k, &mr) in DEFAULT_NOISE_SWEEP.iter().enumerate() {
        let noisy = inject_label_noise(&test, mr, 100 + k as u64).map_err(|e| e.to_string())?;
        let r = t
            .model
            .evaluate(&noisy, &set, InferMode::LrOnly, t.model.combination)
            .map_err(|e| e.to_string())?;
        maps.push(r.map);
    }
    let monotone = maps.windows(2).all(|w| w[1] <= w[0] + 0.005);
    let drop = maps[0] - maps[maps.len() - 1];
    let curve: Vec<String> = DEFAULT_NOISE_SWEEP
        .iter()
        .zip(&maps)
        .map(|(mr, m)| format!("{mr}:{m:.4}"))
        .collect();
    check(
        monotone && drop >= 0.10,
        format!(
            "curve {}; non-increasing within 0.005: {monotone}; drop {:.2} points (need >= 10)",
            curve.join(" "),
            100.0 * drop
        ),
    )
}

fn ac7_rule_search() -> Outcome {
    let spec = WorldSpec {
        primitives: 8,
        activities: 3,
        samples: 400,
        noiseless: true,
        ..WorldSpec::default()
    };
    let world = make_world(&spec, 21).map_err(|e| e.to_string())?;
    let data = sample_dataset(&world, spec.samples, 21).map_err(|e| e.to_string())?;
    let cfg = ModelConfig {
        d: 32,
        ..ModelConfig::default()
    };
    let mut model = ReasoningModel::<f64>::new(&cfg, &world.primitives, &world.activities, 0, 21)
        .map_err(|e| e.to_string())?;
    let base =
        RuleBase::from_rules(world.a(), cfg.l0, world.rules.clone()).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        epochs: 3,
        update_rules: false,
        ..TrainConfig::default()
    };
    train(&mut model, &data.split(Split::Train), None, base, &tc, 21).map_err(|e| e.to_string())?;
    let sc = SearchConfig::default();
    let test = data.split(Split::Test);
    let reports = rule_search(&model, &test.samples, &[], &sc, 21).map_err(|e| e.to_string())?;
    let maps: Vec<f64> = reports.iter().map(|r| r.map).collect();
    let monotone = maps.windows(2).all(|w| w[1] >= w[0]);
    let last = *maps.last().expect("reports");
    let shown: Vec<String> = reports
        .iter()
        .map(|r| format!("K={}:{:.4}", r.k, r.map))
        .collect();
    check(
        monotone && last >= 0.95,
        format!(
            "{}; non-decreasing: {monotone}; mAP(K=1000) {last:.4} (need >= 0.95)",
            shown.join(" ")
        ),
    )
}

fn ac8_generators() -> Outcome {
    let mut failures = Vec::new();
    let dec = Branch::Decrease.apply(0.8, 0.5);
    let inc = Branch::Increase.apply(0.8, 0.5);
    if dec != 0.4 || inc != 0.9 {
        failures.push(format!("c'=0.8, β=0.5 gave {dec}/{inc}"));
    }
    for branch in [Branch::Decrease, Branch::Increase] {
        let prior = vec![0.1, 0.5, 0.8];
        let g = GeneratorProfile::with_branches(0, prior.clone(), 0.0, vec![branch; 3])
            .map_err(|e| e.to_string())?;
        if g.probs != prior {
            failures.push(format!("β=0 changed the prior on {branch:?}"));
        }
        for k in 1..=9 {
            let c = k as f64 / 10.0;
            let kls: Vec<f64> = (0..=100)
                .map(|t| bernoulli_kl(c, branch.apply(c, t as f64 / 100.0)))
                .collect();
            if kls.windows(2).any(|w| w[1] < w[0]) {
                failures.push(format!("KL not monotone at c'={c} on {branch:?}"));
            }
        }
    }
    let prior: Vec<f64> = (0..12).map(|i| 0.05 + 0.07 * i as f64).collect();
    for m in 0..4 {
        let n = generate_candidates(m, &prior, &default_betas(), 5, 9 + m as u64)
            .map_err(|e| e.to_string())?
            .len();
        if n != 55 {
            failures.push(format!("activity {m}: {n} rules"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            "perturbation arithmetic exact; KL non-decreasing in β for c' in 0.1..0.9 on both branches; 55 rules per activity"
                .into()
        } else {
            failures.join("; ")
        },
    )
}

fn oracle_ap(scores: &[f64], labels: &[u8], ids: &[u64]) -> Option<f64> {
    let n = scores.len();
    let rank = |i: usize| {
        1 + (0..n)
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && ids[j] < ids[i]))
            .count()
    };
    let mut positives: Vec<usize> = (0..n).filter(|&i| labels[i] == 1).map(rank).collect();
    if positives.is_empty() {
        return None;
    }
    positives.sort_unstable();
    let mut total = 0.0;
    for (k, &r) in positives.iter().enumerate() {
        total += (k + 1) as f64 / r as f64;
    }
    Some(total / positives.len() as f64)
}

fn ac9_metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = Vec::new();
    let mut ties = 0;
    for case in 0..100 {
        let n = rng.random_range(1..=8);
        let scores: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..4u8)) / 4.0)
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.4))).collect();
        let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 7 + 3).collect();
        for i in (1..n).rev() {
            ids.swap(i, rng.random_range(0..=i));
        }
        let mut seen = scores.clone();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        if seen.len() < n {
            ties += 1;
        }
        let got = average_precision(&scores, &labels, &ids).map_err(|e| e.to_string())?;
        let want = oracle_ap(&scores, &labels, &ids);
        if got != want {
            mismatches.push(format!("case {case}: {got:?} vs {want:?}"));
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("100 instances match exactly ({ties} with tied scores)")
        } else {
            mismatches.join("; ")
        },
    )
}

const CLI_CONFIG: &str = r#"seed = 5

[world]
primitives = 10
activities = 3
samples = 300

[model]
d = 16
embed_dim = 16

[train]
epochs = 2

[logic]
t_l = 0.5
tuples = 500
ambient = 500

[search]
ks = [5, 20]
"#;

const COMMANDS: [&str; 8] = [
    "gen-data",
    "gen-rules",
    "train",
    "eval",
    "eval-logic",
    "noise-sweep",
    "search-rules",
    "update-rules",
];

fn run_pipeline(config: &Path, out: &Path) -> Result<(), String> {
    for cmd in COMMANDS {
        let args = [
            "neurologic",
            cmd,
            "--config",
            config.to_str().expect("utf-8 path"),
            "--out",
            out.to_str().expect("utf-8 path"),
            "--seed",
            "7",
        ];
        let code = main_with_args(args);
        if code != 0 {
            return Err(format!("{cmd} exited with {code}"));
        }
    }
    Ok(())
}

fn ac10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(&config, CLI_CONFIG).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&config, &a)?;
    run_pipeline(&config, &b)?;
    let mut names: Vec<_> = std::fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .map(|e| e.map(|e| e.file_name()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    names.sort();
    let mut differing = Vec::new();
    for name in &names {
        let x = std::fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(name)).map_err(|e| e.to_string())?;
        if x != y {
            differing.push(name.to_string_lossy().into_owned());
        }
    }
    check(
        differing.is_empty() && names.len() >= COMMANDS.len(),
        format!(
            "{} output files from {} subcommands compared; differing: {:?}",
            names.len(),
            COMMANDS.len(),
            differing
        ),
    )
}

fn report(name: &str, outcome: &Outcome) {
    match outcome {
        Ok(d) => println!("{name} PASS: {d}"),
        Err(d) => println!("{name} FAIL: {d}"),
    }
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut record = |name: &'static str, outcome: Outcome| {
        report(name, &outcome);
        results.push((name, outcome));
    };
    record("AC3 gradient correctness", ac3_gradients());
    record("AC4 rule-update properties", ac4_rule_updates());
    record("AC8 generator analytics", ac8_generators());
    record("AC9 metric oracle", ac9_metric_oracle());
    record("AC10 determinism", ac10_determinism());
    record("AC7 rule search", ac7_rule_search());
    let bench = single_worker(|| benchmark_run(1, true));
    record("AC1 logic-law suite", ac1_logic_laws(&bench));
    record("AC2 bimodality", ac2_bimodality(&bench));
    record("AC6 noise sweep", ac6_noise_sweep(&bench));
    record("AC5 rule-update efficacy", ac5_update_efficacy(&bench));

    results.sort_by_key(|(name, _)| {
        name[2..]
            .split(' ')
            .next()
            .and_then(|n| n.parse::<u32>().ok())
    });
    let passed = results.iter().filter(|(_, o)| o.is_ok()).count();
    println!("\nsummary: {passed}/{} criteria passed", results.len());
    for (name, outcome) in &results {
        println!("  {} {name}", if outcome.is_ok() { "pass" } else { "FAIL" });
    }
    let strict = std::env::var("NEUROLOGIC_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if strict && passed < results.len() {
        std::process::exit(1);
    }
}
