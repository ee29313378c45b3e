use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{average_precision, Combination, InferMode, ReasoningModel, RuleSet};
use crate::datagen::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::logic::{compile_rule_sized, CompiledRule};
use crate::numcore::{Optimizer, OptimizerConfig, Real, SeedStream, Tape};
use crate::rulebase::{
    cooccurrence_prior, default_betas, generate_candidates, harvest_annotation_rules, update_rules,
    Candidate, Rule, RuleBase, RuleDiff,
};

/// How candidate and selected rules are ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    /// Mean BCE of the single-rule score against the label.
    Loss,
    /// `1 − AP` of the single-rule score.
    Map,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CandidateConfig {
    /// Rules drawn from each perturbed generator.
    pub per_generator: usize,
    pub betas: Vec<f64>,
    /// Rules harvested from positive samples.
    pub harvest: usize,
    /// Detection probability above which a primitive counts as present.
    pub presence_threshold: f64,
    /// Positives per activity used to score rules.
    pub eval_positives: usize,
    /// Negatives drawn per evaluation positive.
    pub eval_negative_ratio: usize,
    pub selection: Selection,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        CandidateConfig {
            per_generator: 5,
            betas: default_betas(),
            harvest: 55,
            presence_threshold: 0.5,
            eval_positives: 64,
            eval_negative_ratio: 4,
            selection: Selection::Loss,
        }
    }
}

impl CandidateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::contract("candidate betas must lie in [0,1]"));
        }
        if !(0.0..1.0).contains(&self.presence_threshold) {
            return Err(Error::contract("presence_threshold must lie in [0,1)"));
        }
        if self.eval_positives == 0 {
            return Err(Error::contract("eval_positives must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Late-combination epochs with rule updates.
    pub epochs: usize,
    /// Early-combination epochs with the rule base frozen.
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub update_rules: bool,
    pub candidates: CandidateConfig,
    /// Score used for the per-epoch validation mAP.
    pub val_mode: InferMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            finetune_epochs: 1,
            batch_size: 32,
            optimizer: OptimizerConfig::adam(1e-3),
            update_rules: true,
            candidates: CandidateConfig::default(),
            val_mode: InferMode::Fused,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be >= 1"));
        }
        self.optimizer.validate()?;
        self.candidates.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Rules,
    Finetune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub cls: f64,
    pub reg: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceptual: Option<f64>,
    pub total: f64,
    pub val_map: Option<f64>,
    pub rules: usize,
    pub added: Vec<String>,
    pub removed: Vec<String>,
    pub base_checksum: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub base: RuleBase,
    pub history: Vec<EpochRecord>,
}

const RULE_CHUNK: usize = 32;
const SAMPLE_CHUNK: usize = 64;
const PROB_EPS: f64 = 1e-7;

/// Single-rule probabilities `[rule][sample]`, computed in parallel chunks.
pub fn rule_probabilities<T: Real>(
    model: &ReasoningModel<T>,
    rules: &[CompiledRule],
    samples: &[&Sample],
) -> Result<Vec<Vec<f64>>> {
    let tasks: Vec<(usize, usize)> = (0..rules.len())
        .step_by(RULE_CHUNK)
        .flat_map(|r| {
            (0..samples.len())
                .step_by(SAMPLE_CHUNK)
                .map(move |s| (r, s))
        })
        .collect();
    let parts: Vec<Result<Vec<f64>>> = tasks
        .par_iter()
        .map(|&(r0, s0)| {
            let rs = &rules[r0..(r0 + RULE_CHUNK).min(rules.len())];
            let ss = &samples[s0..(s0 + SAMPLE_CHUNK).min(samples.len())];
            let mut tape = Tape::new();
            let enc = model.arch.encode(&mut tape, &model.params, ss)?;
            let fold = model.arch.votes(&mut tape, &model.params, &enc, rs)?;
            let j = model
                .arch
                .logic
                .judge_rows(&mut tape, &model.params, fold.votes)?;
            Ok(tape
                .value(j)
                .as_slice()
                .iter()
                .map(|v| v.to_f64_lossy())
                .collect())
        })
        .collect();
    let mut out = vec![vec![0.0; samples.len()]; rules.len()];
    for (&(r0, s0), part) in tasks.iter().zip(parts) {
        let part = part?;
        let batch = SAMPLE_CHUNK.min(samples.len() - s0);
        for (k, v) in part.into_iter().enumerate() {
            out[r0 + k / batch][s0 + k % batch] = v;
        }
    }
    Ok(out)
}

/// Per-rule selection losses on `samples`, labels taken from each rule's activity.
pub fn rule_losses<T: Real>(
    model: &ReasoningModel<T>,
    rules: &[CompiledRule],
    samples: &[&Sample],
    selection: Selection,
) -> Result<Vec<f64>> {
    if samples.is_empty() {
        return Err(Error::InsufficientSample(
            "no samples to score rules on".into(),
        ));
    }
    let probs = rule_probabilities(model, rules, samples)?;
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    rules
        .iter()
        .zip(probs)
        .map(|(rule, p)| {
            let labels: Vec<u8> = samples.iter().map(|s| s.labels[rule.activity()]).collect();
            Ok(match selection {
                Selection::Loss => {
                    let sum: f64 = p
                        .iter()
                        .zip(&labels)
                        .map(|(&q, &l)| {
                            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
                            if l == 1 {
                                -q.ln()
                            } else {
                                -(1.0 - q).ln()
                            }
                        })
                        .sum();
                    sum / p.len() as f64
                }
                Selection::Map => 1.0 - average_precision(&p, &labels, &ids)?.unwrap_or(0.0),
            })
        })
        .collect()
}

/// Positives of `m` followed by a seeded draw of negatives.
fn evaluation_samples<'a>(
    samples: &'a [Sample],
    m: usize,
    cfg: &CandidateConfig,
    seed: u64,
) -> Vec<&'a Sample> {
    let mut rng = SeedStream::new(seed).rng(&format!("evaluation-{m}"));
    let mut pos: Vec<&Sample> = samples.iter().filter(|s| s.labels[m] == 1).collect();
    let mut neg: Vec<&Sample> = samples.iter().filter(|s| s.labels[m] == 0).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    pos.truncate(cfg.eval_positives);
    neg.truncate(pos.len() * cfg.eval_negative_ratio);
    pos.extend(neg);
    pos
}

/// One evaluate-and-update pass: selected rules are rescored, candidates are
/// generated from co-occurrence priors and harvested from positives, scored
/// on the same samples, and merged with [`update_rules`].
pub fn update_pass<T: Real>(
    model: &ReasoningModel<T>,
    base: &RuleBase,
    samples: &[Sample],
    cfg: &CandidateConfig,
    seed: u64,
) -> Result<(RuleBase, RuleDiff)> {
    cfg.validate()?;
    let p = model.primitives.len();
    let a = model.activities.len();
    if base.n_activities() != a {
        return Err(Error::dim("rule base", a, base.n_activities()));
    }
    let stream = SeedStream::new(seed);
    let mut rescored = base.clone();
    let mut candidates = Vec::new();
    for m in 0..a {
        let eval = evaluation_samples(samples, m, cfg, stream.derive("evaluation"));
        if !eval.iter().any(|s| s.labels[m] == 1) {
            continue;
        }
        let mut fresh: Vec<Rule> = Vec::new();
        let prior = cooccurrence_prior(samples, m, cfg.presence_threshold)?;
        if cfg.per_generator > 0 && !cfg.betas.is_empty() {
            fresh.extend(generate_candidates(
                m,
                &prior,
                &cfg.betas,
                cfg.per_generator,
                stream.derive(&format!("generate-{m}")),
            )?);
        }
        if cfg.harvest > 0 {
            fresh.extend(harvest_annotation_rules(
                samples,
                m,
                cfg.harvest,
                cfg.presence_threshold,
                stream.derive(&format!("harvest-{m}")),
            )?);
        }
        let mut unique: Vec<Rule> = Vec::new();
        for r in fresh {
            if !base.contains(&r) && !unique.iter().any(|u| u.same_body(&r)) {
                unique.push(r);
            }
        }
        let selected: Vec<&Rule> = base.rules(m).iter().map(|s| &s.rule).collect();
        let compiled = selected
            .iter()
            .copied()
            .chain(&unique)
            .map(|r| compile_rule_sized(r, p, a))
            .collect::<Result<Vec<_>>>()?;
        let losses = rule_losses(model, &compiled, &eval, cfg.selection)?;
        let (old, new) = losses.split_at(selected.len());
        rescored.set_losses(m, old)?;
        candidates.extend(
            unique
                .into_iter()
                .zip(new)
                .map(|(rule, &loss)| Candidate { rule, loss }),
        );
    }
    update_rules(&rescored, &candidates, base.capacity())
}

struct EpochStats {
    cls: f64,
    reg: f64,
    perceptual: Option<f64>,
    total: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_epoch<T: Real>(
    model: &mut ReasoningModel<T>,
    opt: &mut Optimizer<T>,
    train: &[Sample],
    set: &RuleSet,
    comb: Combination,
    batch_size: usize,
    stream: SeedStream,
    epoch: usize,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream.rng("shuffle"));
    let (mut cls, mut reg, mut pr, mut total) = (0.0, 0.0, 0.0, 0.0);
    let mut has_pr = false;
    let mut batches = 0usize;
    for (k, chunk) in order.chunks(batch_size).enumerate() {
        let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
        let mut tape = Tape::new();
        let vars = model.arch.loss(
            &mut tape,
            &model.params,
            &batch,
            set,
            comb,
            stream.derive(&format!("batch-{k}")),
        )?;
        let t = tape.value(vars.total).get(0, 0).to_f64_lossy();
        if !t.is_finite() {
            return Err(Error::Diverged { epoch, loss: t });
        }
        let grads = tape.backward(vars.total)?;
        model.params.set_grads(&grads);
        if let Err(e) = opt.step(&mut model.params) {
            return match e {
                Error::Numeric { .. } => Err(Error::Diverged {
                    epoch,
                    loss: f64::NAN,
                }),
                other => Err(other),
            };
        }
        cls += tape.value(vars.cls).get(0, 0).to_f64_lossy();
        reg += tape.value(vars.reg).get(0, 0).to_f64_lossy();
        if let Some(p) = vars.perceptual {
            has_pr = true;
            pr += tape.value(p).get(0, 0).to_f64_lossy();
        }
        total += t;
        batches += 1;
    }
    let n = batches as f64;
    Ok(EpochStats {
        cls: cls / n,
        reg: reg / n,
        perceptual: has_pr.then_some(pr / n),
        total: total / n,
    })
}

/// Two-phase training. Phase one uses late combination and, when enabled,
/// updates the rule base after every epoch; phase two freezes the base and
/// fine-tunes with early combination. On divergence the parameters of the
/// last completed epoch are restored and [`Error::Diverged`] is returned.
pub fn train<T: Real>(
    model: &mut ReasoningModel<T>,
    data: &Dataset,
    val: Option<&Dataset>,
    base: RuleBase,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InsufficientSample("empty training split".into()));
    }
    if base.is_empty() {
        return Err(Error::InsufficientSample("rule base has no rules".into()));
    }
    if base.capacity() > model.config().l0 {
        return Err(Error::contract(format!(
            "rule capacity {} exceeds the model's l0 = {}",
            base.capacity(),
            model.config().l0
        )));
    }
    let stream = SeedStream::new(seed).child("train");
    let mut opt = Optimizer::new(cfg.optimizer.clone())?;
    let mut base = base;
    let mut history = Vec::new();
    let mut last_good = model.params.clone();

    let phases = std::iter::repeat_n(Phase::Rules, cfg.epochs)
        .chain(std::iter::repeat_n(Phase::Finetune, cfg.finetune_epochs));
    for (epoch, phase) in phases.enumerate() {
        let comb = match phase {
            Phase::Rules => Combination::Late,
            Phase::Finetune => Combination::Early,
        };
        let set = model.rule_set(&base)?;
        let epoch_stream = stream.child(&format!("epoch-{epoch}"));
        let stats = match run_epoch(
            model,
            &mut opt,
            &data.samples,
            &set,
            comb,
            cfg.batch_size,
            epoch_stream,
            epoch,
        ) {
            Ok(s) => s,
            Err(e @ Error::Diverged { .. }) => {
                model.params = last_good;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        last_good = model.params.clone();
        model.combination = comb;

        let mut diff = RuleDiff::default();
        if phase == Phase::Rules && cfg.update_rules {
            let (next, d) = update_pass(
                model,
                &base,
                &data.samples,
                &cfg.candidates,
                epoch_stream.derive("update"),
            )?;
            base = next;
            diff = d;
        }
        let val_map = match val {
            Some(v) if !v.is_empty() => {
                let set = model.rule_set(&base)?;
                Some(model.evaluate(v, &set, cfg.val_mode, comb)?.map)
            }
            _ => None,
        };
        history.push(EpochRecord {
            epoch,
            phase,
            cls: stats.cls,
            reg: stats.reg,
            perceptual: stats.perceptual,
            total: stats.total,
            val_map,
            rules: base.len(),
            added: diff.added.iter().map(|r| model.render_rule(r)).collect(),
            removed: diff.removed.iter().map(|r| model.render_rule(r)).collect(),
            base_checksum: format!("{:016x}", base.checksum()),
        });
    }
    Ok(TrainOutcome { base, history })
}
