use super::*;
use crate::datagen::{make_world, sample_dataset, Split, World, WorldSpec};
use crate::logic::CompiledRule;
use crate::numcore::grad_check;
use crate::numcore::OptimizerConfig;
use crate::rulebase::{Provenance, Rule};

fn small_world(visual_dim: usize) -> World {
    make_world(
        &WorldSpec {
            primitives: 8,
            activities: 3,
            max_rules: 2,
            samples: 200,
            visual_dim,
            ..WorldSpec::default()
        },
        3,
    )
    .unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        d: 6,
        embed_dim: 5,
        l0: 4,
        perceptual_hidden: 4,
        reg_sample: 0,
        ..ModelConfig::default()
    }
}

fn model(world: &World, cfg: &ModelConfig) -> ReasoningModel<f64> {
    ReasoningModel::new(
        cfg,
        &world.primitives,
        &world.activities,
        world.spec.visual_dim,
        9,
    )
    .unwrap()
}

fn truth_base(world: &World, l0: usize) -> RuleBase {
    RuleBase::from_rules(world.a(), l0, world.rules.iter().cloned()).unwrap()
}

#[test]
fn late_combination_examples() {
    assert!((combine_late(&[0.2, 0.4, 0.6]).unwrap() - 0.4).abs() < 1e-12);
    assert_eq!(combine_late(&[0.7]).unwrap(), 0.7);
    assert_eq!(
        combine_late(&[0.6, 0.2, 0.4]).unwrap(),
        combine_late(&[0.2, 0.4, 0.6]).unwrap()
    );
    assert!(combine_late(&[]).is_err());
}

#[test]
fn fusion_examples() {
    assert!((fuse(0.8, 0.5, None) - 0.4).abs() < 1e-12);
    assert_eq!(fuse(1.0, 0.37, None), 0.37);
    assert!((fuse(0.5, 0.5, Some(0.5)) - 0.125).abs() < 1e-12);
}

#[test]
fn single_rule_scores_and_activity_isolation() {
    let world = small_world(0);
    let m = model(&world, &small_config());
    let data = sample_dataset(&world, 40, 1).unwrap();
    let s = &data.samples[0];
    let one = RuleSet::new(vec![CompiledRule::new(vec![0, 2], 0).unwrap()]);
    let scores = m.rule_scores(s, &one).unwrap();
    assert_eq!(scores[0].len(), 1);
    assert!(scores[0][0] > 0.0 && scores[0][0] < 1.0);
    assert!(scores[1].is_empty() && scores[2].is_empty());

    let more = RuleSet::new(vec![
        CompiledRule::new(vec![0, 2], 0).unwrap(),
        CompiledRule::new(vec![1], 1).unwrap(),
        CompiledRule::new(vec![3, 4, 5], 2).unwrap(),
    ]);
    let again = m.rule_scores(s, &more).unwrap();
    assert_eq!(again[0], scores[0]);

    let rec = m
        .predict(
            &data.samples[..1],
            &one,
            InferMode::Fused,
            Combination::Late,
        )
        .unwrap();
    assert_eq!(rec[0].missing, vec![1, 2]);
    assert_eq!(rec[0].lr[1], 0.0);
}

#[test]
fn batched_prediction_matches_single_sample_prediction() {
    let world = small_world(0);
    let m = model(&world, &small_config());
    let data = sample_dataset(&world, 130, 1).unwrap();
    let set = m.rule_set(&truth_base(&world, 4)).unwrap();
    for comb in [Combination::Late, Combination::Early] {
        let all = m
            .predict(&data.samples, &set, InferMode::Fused, comb)
            .unwrap();
        for i in [0, 64, 129] {
            let one = m
                .predict(&data.samples[i..=i], &set, InferMode::Fused, comb)
                .unwrap();
            for (x, y) in one[0].fused.iter().zip(&all[i].fused) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn early_combination_attention_properties() {
    let world = small_world(0);
    let m = model(&world, &small_config());
    let votes: Vec<EventVector<f64>> = (0..3)
        .map(|i| EventVector((0..6).map(|j| ((i * 6 + j) as f64 * 0.37).sin()).collect()))
        .collect();
    let out = m.combine_early(&votes).unwrap();
    assert!(out.score > 0.0 && out.score < 1.0);
    assert_eq!(out.attention.len(), 2);
    for head in &out.attention {
        for row in head {
            assert_eq!(row.len(), 3);
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
    let same = vec![votes[0].clone(); 3];
    let out = m.combine_early(&same).unwrap();
    for head in &out.attention {
        for row in head {
            for &w in row {
                assert!((w - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }
    assert!(m.combine_early(&[]).is_err());
    assert!(m.combine_early(&vec![votes[0].clone(); 5]).is_err());
    assert!(m.combine_early(&[EventVector(vec![0.0; 4])]).is_err());
}

#[test]
fn zero_alpha_loss_is_classification_loss() {
    let world = small_world(0);
    let cfg = ModelConfig {
        alpha: 0.0,
        ..small_config()
    };
    let m = model(&world, &cfg);
    let data = sample_dataset(&world, 20, 1).unwrap();
    let batch: Vec<&Sample> = data.samples.iter().take(6).collect();
    let set = m.rule_set(&truth_base(&world, 4)).unwrap();
    let mut tape = Tape::new();
    let l = m
        .arch
        .loss(&mut tape, &m.params, &batch, &set, Combination::Late, 1)
        .unwrap();
    assert_eq!(tape.value(l.total).get(0, 0), tape.value(l.cls).get(0, 0));
    assert!(tape.value(l.reg).get(0, 0) > 0.0);
}

#[test]
fn full_loss_gradients_match_finite_differences() {
    let world = small_world(5);
    let cfg = small_config();
    let data = sample_dataset(&world, 30, 2).unwrap();
    let batch: Vec<&Sample> = data.samples.iter().take(8).collect();
    for (comb, reduction) in [
        (Combination::Late, RegReduction::Mean),
        (Combination::Early, RegReduction::Sum),
    ] {
        let cfg = ModelConfig {
            reg_reduction: reduction,
            reg_sample: 12,
            ..cfg.clone()
        };
        let mut m = model(&world, &cfg);
        assert!(m.arch.has_perceptual());
        let set = m.rule_set(&truth_base(&world, 4)).unwrap();
        let arch = m.arch.clone();
        let err = grad_check(
            &mut m.params,
            |t, p| Ok(arch.loss(t, p, &batch, &set, comb, 4)?.total),
            1e-5,
            400,
        )
        .unwrap();
        assert!(err < 1e-4, "{comb:?}: max relative error {err}");
    }
}

#[test]
fn perceptual_mode_multiplies_three_factors() {
    let world = small_world(5);
    let m = model(&world, &small_config());
    let data = sample_dataset(&world, 20, 1).unwrap();
    let set = m.rule_set(&truth_base(&world, 4)).unwrap();
    let rec = m
        .predict(
            &data.samples,
            &set,
            InferMode::FusedPerceptual,
            Combination::Late,
        )
        .unwrap();
    for r in &rec {
        let pr = r.perceptual.as_ref().unwrap();
        assert_eq!(pr.len(), 3);
        for (k, &p) in pr.iter().enumerate() {
            assert!(p > 0.0 && p < 1.0);
            assert!((r.fused[k] - r.inst[k] * r.lr[k] * p).abs() < 1e-12);
        }
    }
    let plain = model(&small_world(0), &small_config());
    let data0 = sample_dataset(&small_world(0), 20, 1).unwrap();
    let set0 = plain.rule_set(&truth_base(&small_world(0), 4)).unwrap();
    assert!(plain
        .predict(
            &data0.samples,
            &set0,
            InferMode::FusedPerceptual,
            Combination::Late
        )
        .is_err());
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let world = small_world(0);
    let mut m = model(&world, &small_config());
    m.combination = Combination::Early;
    let data = sample_dataset(&world, 20, 1).unwrap();
    let set = m.rule_set(&truth_base(&world, 4)).unwrap();
    let ckpt = m.checkpoint(serde_json::json!({"note": "x"}));
    let text = ckpt.to_json();
    let back =
        ReasoningModel::<f64>::from_checkpoint(&serde_json::from_str(&text).unwrap()).unwrap();
    assert_eq!(back.combination, Combination::Early);
    let a = m
        .predict(&data.samples, &set, InferMode::Fused, Combination::Early)
        .unwrap();
    let b = back
        .predict(&data.samples, &set, InferMode::Fused, Combination::Early)
        .unwrap();
    assert_eq!(a, b);
}

fn train_small(update: bool, seed: u64) -> (ReasoningModel<f64>, TrainOutcome, Dataset) {
    let world = small_world(0);
    let data = sample_dataset(&world, 200, 4).unwrap();
    let train_split = data.split(Split::Train);
    let test = data.split(Split::Test);
    let cfg = ModelConfig {
        d: 16,
        embed_dim: 16,
        l0: 4,
        ..ModelConfig::default()
    };
    let mut m = ReasoningModel::new(&cfg, &world.primitives, &world.activities, 0, seed).unwrap();
    let base = truth_base(&world, 4);
    let tc = TrainConfig {
        epochs: 3,
        finetune_epochs: 1,
        optimizer: OptimizerConfig::adam(3e-3),
        update_rules: update,
        candidates: CandidateConfig {
            per_generator: 2,
            harvest: 6,
            eval_positives: 16,
            ..CandidateConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train(&mut m, &train_split, Some(&test), base, &tc, seed).unwrap();
    (m, out, test)
}

#[test]
fn training_reduces_loss_is_deterministic_and_freezes_rules_in_finetune() {
    let (_, a, _) = train_small(true, 5);
    let (_, b, _) = train_small(true, 5);
    assert_eq!(a.history, b.history);
    assert_eq!(a.history.len(), 4);
    assert!(a.history[2].cls < a.history[0].cls);
    assert_eq!(a.history[3].phase, Phase::Finetune);
    assert_eq!(a.history[3].base_checksum, a.history[2].base_checksum);
    assert!(a.history[3].added.is_empty());
    for m in 0..a.base.n_activities() {
        assert!(a.base.rules(m).len() <= 4);
    }
}

#[test]
fn update_pass_respects_capacity_and_dominance() {
    let world = small_world(0);
    let data = sample_dataset(&world, 200, 4).unwrap();
    let m = model(&world, &small_config());
    let base = RuleBase::from_rules(
        world.a(),
        2,
        (0..world.a()).map(|a| Rule::new(a, vec![a, a + 1], Provenance::HumanPrior).unwrap()),
    )
    .unwrap();
    let cfg = CandidateConfig {
        per_generator: 2,
        harvest: 4,
        eval_positives: 8,
        ..CandidateConfig::default()
    };
    let (next, diff) = update_pass(&m, &base, &data.samples, &cfg, 1).unwrap();
    assert!(!diff.added.is_empty());
    for a in 0..world.a() {
        assert!(next.rules(a).len() <= 2);
    }
    let (again, _) = update_pass(&m, &base, &data.samples, &cfg, 1).unwrap();
    assert_eq!(again, next);
}

#[test]
fn empty_rule_base_is_rejected() {
    let world = small_world(0);
    let data = sample_dataset(&world, 50, 4).unwrap();
    let mut m = model(&world, &small_config());
    let base = RuleBase::new(world.a(), 4).unwrap();
    let err = train(&mut m, &data, None, base, &TrainConfig::default(), 1).unwrap_err();
    assert!(matches!(err, Error::InsufficientSample(_)));
}

#[test]
fn divergence_restores_last_good_parameters() {
    let world = small_world(0);
    let data = sample_dataset(&world, 60, 4).unwrap();
    let mut m = model(&world, &small_config());
    let before = m.params.clone();
    let tc = TrainConfig {
        epochs: 1,
        finetune_epochs: 0,
        optimizer: OptimizerConfig::adam(1e300),
        update_rules: false,
        ..TrainConfig::default()
    };
    let res = train(&mut m, &data, None, truth_base(&world, 4), &tc, 1);
    assert!(matches!(res, Err(Error::Diverged { .. })), "{res:?}");
    assert_eq!(m.params.checksum(), before.checksum());
}
