use std::ops::Range;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::events::{
    embed_activities, embed_primitives, ActivityDictionary, EventProjector, PrimitiveDictionary,
};
use crate::logic::{
    compile_rule_sized, fold_rules, logic_law_loss_rows, CompiledRule, FoldOutput, LogicOps,
};
use crate::numcore::{Activation, LayerSpec, Matrix, Mlp, ParamSet, Real, SeedStream, Tape, Var};
use crate::rulebase::RuleBase;

/// How per-rule votes become one activity score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Mean of the per-rule probabilities.
    Late,
    /// Attention over vote vectors, aggregation MLP, separate discriminator.
    Early,
}

/// How the logic-law penalty is reduced over the sampled events.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegReduction {
    Sum,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Event-space width.
    pub d: usize,
    /// Width of the fixed phrase embeddings.
    pub embed_dim: usize,
    pub heads: usize,
    /// Rule capacity per activity.
    pub l0: usize,
    /// Weight of the logic-law regularizer.
    pub alpha: f64,
    /// Events drawn per batch for the regularizer; 0 uses all of them.
    pub reg_sample: usize,
    pub reg_reduction: RegReduction,
    pub perceptual_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d: 64,
            embed_dim: 64,
            heads: 2,
            l0: 15,
            alpha: 0.2,
            reg_sample: 256,
            reg_reduction: RegReduction::Mean,
            perceptual_hidden: 32,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::contract(format!("model config: {m}")));
        if self.d == 0 || self.embed_dim == 0 {
            return fail("d and embed_dim must be positive");
        }
        if self.heads == 0 {
            return fail("heads must be >= 1");
        }
        if self.l0 == 0 {
            return fail("l0 must be >= 1");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be finite and >= 0");
        }
        if self.perceptual_hidden == 0 {
            return fail("perceptual_hidden must be positive");
        }
        Ok(())
    }
}

/// A rule base compiled to clause form, rules grouped by activity.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleSet {
    rules: Vec<CompiledRule>,
    groups: Vec<(usize, Range<usize>)>,
}

impl RuleSet {
    pub fn new(mut rules: Vec<CompiledRule>) -> Self {
        rules.sort_by_key(CompiledRule::activity);
        let mut groups: Vec<(usize, Range<usize>)> = Vec::new();
        for (i, r) in rules.iter().enumerate() {
            match groups.last_mut() {
                Some((m, range)) if *m == r.activity() => range.end = i + 1,
                _ => groups.push((r.activity(), i..i + 1)),
            }
        }
        RuleSet { rules, groups }
    }

    pub fn from_base(base: &RuleBase, n_primitives: usize) -> Result<Self> {
        let rules = base
            .iter()
            .map(|s| compile_rule_sized(&s.rule, n_primitives, base.n_activities()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(rules))
    }

    pub fn rules(&self) -> &[CompiledRule] {
        &self.rules
    }

    /// `(activity, rule index range)`, ascending by activity.
    pub fn groups(&self) -> &[(usize, Range<usize>)] {
        &self.groups
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn group_of(&self, m: usize) -> Option<usize> {
        self.groups.iter().position(|(a, _)| *a == m)
    }
}

/// Primitive and activity events of a batch on a tape.
#[derive(Clone, Copy, Debug)]
pub struct Encoded {
    /// `batch · p` rows of expectation-mixed primitive events.
    pub mixed: Var,
    /// `NOT` of every row of `mixed`.
    pub negated: Var,
    /// One event per activity.
    pub activities: Var,
    pub batch: usize,
}

/// Scalar loss nodes of one batch.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub cls: Var,
    pub reg: Var,
    pub perceptual: Option<Var>,
}

/// Everything but the parameter values: layer layout and fixed embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture<T> {
    pub config: ModelConfig,
    pub n_primitives: usize,
    pub n_activities: usize,
    pub visual_dim: usize,
    pub logic: LogicOps,
    prim_proj: EventProjector,
    act_proj: EventProjector,
    prim_raw: Matrix<T>,
    act_raw: Matrix<T>,
    queries: Vec<Mlp>,
    keys: Vec<Mlp>,
    aggregator: Mlp,
    early_judge: Mlp,
    perceptual: Option<Mlp>,
}

fn column<T: Real>(values: impl Iterator<Item = f64>) -> Matrix<T> {
    let v: Vec<T> = values.map(T::of).collect();
    Matrix::column(&v)
}

impl<T: Real> Architecture<T> {
    pub fn new(
        params: &mut ParamSet<T>,
        config: &ModelConfig,
        primitives: &PrimitiveDictionary,
        activities: &ActivityDictionary,
        visual_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if primitives.is_empty() || activities.is_empty() {
            return Err(Error::contract("model needs primitives and activities"));
        }
        let d = config.d;
        let stream = SeedStream::new(seed);
        let mut rng = stream.rng("init");
        let logic = LogicOps::new(params, d, &mut rng)?;
        let prim_proj =
            EventProjector::new(params, "project.primitive", config.embed_dim, d, &mut rng)?;
        let act_proj =
            EventProjector::new(params, "project.activity", config.embed_dim, d, &mut rng)?;
        let linear = LayerSpec::new(&[d, d], Activation::Identity, Activation::Identity);
        let mut queries = Vec::new();
        let mut keys = Vec::new();
        for h in 0..config.heads {
            queries.push(Mlp::new(
                params,
                &format!("attention.q{h}"),
                linear.clone(),
                &mut rng,
            )?);
            keys.push(Mlp::new(
                params,
                &format!("attention.k{h}"),
                linear.clone(),
                &mut rng,
            )?);
        }
        let aggregator = Mlp::new(
            params,
            "early.aggregate",
            LayerSpec::new(
                &[config.l0 * d, d, d],
                Activation::Relu,
                Activation::Identity,
            ),
            &mut rng,
        )?;
        let early_judge = Mlp::new(
            params,
            "early.judge",
            LayerSpec::new(&[d, d, 1], Activation::Relu, Activation::Sigmoid),
            &mut rng,
        )?;
        let perceptual = if visual_dim > 0 {
            Some(Mlp::new(
                params,
                "perceptual",
                LayerSpec::new(
                    &[visual_dim, config.perceptual_hidden, activities.len()],
                    Activation::Relu,
                    Activation::Sigmoid,
                ),
                &mut rng,
            )?)
        } else {
            None
        };
        let embed_seed = stream.derive("phrases");
        Ok(Architecture {
            config: config.clone(),
            n_primitives: primitives.len(),
            n_activities: activities.len(),
            visual_dim,
            logic,
            prim_proj,
            act_proj,
            prim_raw: embed_primitives(primitives, config.embed_dim, embed_seed)?,
            act_raw: embed_activities(activities, config.embed_dim, embed_seed)?,
            queries,
            keys,
            aggregator,
            early_judge,
            perceptual,
        })
    }

    pub fn has_perceptual(&self) -> bool {
        self.perceptual.is_some()
    }

    fn check_batch(&self, samples: &[&Sample]) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::contract("empty batch"));
        }
        for s in samples {
            if s.s_pri.len() != self.n_primitives || s.labels.len() != self.n_activities {
                return Err(Error::dim(
                    "sample",
                    format!(
                        "{} primitives / {} activities",
                        self.n_primitives, self.n_activities
                    ),
                    format!("{} / {}", s.s_pri.len(), s.labels.len()),
                ));
            }
        }
        Ok(())
    }

    /// Primitive events mixed by detection probability, their negations,
    /// and the activity events.
    pub fn encode(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        samples: &[&Sample],
    ) -> Result<Encoded> {
        self.check_batch(samples)?;
        let p = self.n_primitives;
        let raw = tape.constant(self.prim_raw.clone());
        let e = self.prim_proj.project(tape, params, raw)?;
        let ne = self.logic.not_rows(tape, params, e)?;
        let diff = tape.sub(e, ne)?;
        let idx: Vec<usize> = (0..samples.len()).flat_map(|_| 0..p).collect();
        let base = tape.gather_rows(ne, idx.clone())?;
        let spread = tape.gather_rows(diff, idx)?;
        let s = tape.constant(column(samples.iter().flat_map(|s| s.s_pri.iter().copied())));
        let scaled = tape.scale_rows(spread, s)?;
        let mixed = tape.add(base, scaled)?;
        let negated = self.logic.not_rows(tape, params, mixed)?;
        let araw = tape.constant(self.act_raw.clone());
        let activities = self.act_proj.project(tape, params, araw)?;
        Ok(Encoded {
            mixed,
            negated,
            activities,
            batch: samples.len(),
        })
    }

    pub fn votes(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        enc: &Encoded,
        rules: &[CompiledRule],
    ) -> Result<FoldOutput> {
        fold_rules(
            tape,
            &self.logic,
            params,
            enc.negated,
            enc.activities,
            rules,
            enc.batch,
        )
    }

    /// Per-group mean of rule probabilities; row `g·batch + b`.
    pub fn late(
        &self,
        tape: &mut Tape<T>,
        rule_scores: Var,
        set: &RuleSet,
        batch: usize,
    ) -> Result<Var> {
        let groups = set
            .groups()
            .iter()
            .flat_map(|(_, range)| {
                let range = range.clone();
                (0..batch).map(move |b| range.clone().map(|r| r * batch + b).collect())
            })
            .collect();
        tape.group_mean_rows(rule_scores, groups)
    }

    /// Attention-weighted fusion of each group's votes; row `g·batch + b`.
    /// Also returns the attention nodes, `[group][head]`.
    pub fn early(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        votes: Var,
        set: &RuleSet,
        batch: usize,
    ) -> Result<(Var, Vec<Vec<Var>>)> {
        let d = self.config.d;
        let scale = T::one() / T::of(d as f64).sqrt();
        let inv_heads = T::one() / T::of(self.config.heads as f64);
        let mut outs = Vec::with_capacity(set.groups().len());
        let mut attn = Vec::with_capacity(set.groups().len());
        for (_, range) in set.groups() {
            let l = range.len();
            if l > self.config.l0 {
                return Err(Error::contract(format!(
                    "{l} rules exceed the early-combination width l0 = {}",
                    self.config.l0
                )));
            }
            let idx: Vec<usize> = range
                .clone()
                .flat_map(|r| (0..batch).map(move |b| r * batch + b))
                .collect();
            let v = tape.gather_rows(votes, idx)?;
            let mut heads = Vec::with_capacity(self.config.heads);
            let mut acc: Option<Var> = None;
            for (q_map, k_map) in self.queries.iter().zip(&self.keys) {
                let q = q_map.apply(tape, params, v)?;
                let k = k_map.apply(tape, params, v)?;
                let a = tape.block_attention(q, k, v, l, scale)?;
                heads.push(a);
                acc = Some(match acc {
                    None => a,
                    Some(prev) => tape.add(prev, a)?,
                });
            }
            let mean = tape.scale(acc.expect("heads >= 1"), inv_heads);
            let wide = tape.blocks_to_cols(mean, l, self.config.l0)?;
            let e = self.aggregator.apply(tape, params, wide)?;
            outs.push(self.early_judge.apply(tape, params, e)?);
            attn.push(heads);
        }
        let out = if outs.len() == 1 {
            outs[0]
        } else {
            tape.concat_rows(&outs)?
        };
        Ok((out, attn))
    }

    /// Per-activity perceptual scores (`batch × A`), when the head exists
    /// and every sample carries a visual feature.
    pub fn perceptual(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        samples: &[&Sample],
    ) -> Result<Option<Var>> {
        let Some(mlp) = &self.perceptual else {
            return Ok(None);
        };
        let mut data = Vec::with_capacity(samples.len() * self.visual_dim);
        for s in samples {
            match &s.visual {
                Some(v) if v.len() == self.visual_dim => data.extend(v.iter().map(|&x| T::of(x))),
                _ => return Ok(None),
            }
        }
        let x = tape.constant(Matrix::from_vec(samples.len(), self.visual_dim, data)?);
        Ok(Some(mlp.apply(tape, params, x)?))
    }

    /// `L_cls + α·L_reg` (plus the perceptual head's BCE when present).
    /// The regularizer sees a seeded subset of the batch's events.
    pub fn loss(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        samples: &[&Sample],
        set: &RuleSet,
        comb: Combination,
        reg_seed: u64,
    ) -> Result<LossVars> {
        if set.is_empty() {
            return Err(Error::contract("cannot train with an empty rule base"));
        }
        let batch = samples.len();
        let enc = self.encode(tape, params, samples)?;
        let fold = self.votes(tape, params, &enc, set.rules())?;
        let scores = match comb {
            Combination::Late => {
                let j = self.logic.judge_rows(tape, params, fold.votes)?;
                self.late(tape, j, set, batch)?
            }
            Combination::Early => self.early(tape, params, fold.votes, set, batch)?.0,
        };
        let targets: Vec<T> = set
            .groups()
            .iter()
            .flat_map(|(m, _)| samples.iter().map(move |s| T::of(f64::from(s.labels[*m]))))
            .collect();
        let bce = tape.bce(scores, targets)?;
        let cls = tape.mean(bce)?;

        let mut parts = vec![enc.mixed];
        parts.extend(&fold.disjunctions);
        parts.push(enc.activities);
        let pool = tape.concat_rows(&parts)?;
        let total_rows = tape.shape(pool).0;
        let n = match self.config.reg_sample {
            0 => total_rows,
            k => k.min(total_rows),
        };
        let mut rng = SeedStream::new(reg_seed).rng("regularizer");
        let idx = index::sample(&mut rng, total_rows, n).into_vec();
        let x = tape.gather_rows(pool, idx)?;
        let law = logic_law_loss_rows(tape, &self.logic, params, x)?;
        let reg = match self.config.reg_reduction {
            RegReduction::Sum => law,
            RegReduction::Mean => tape.scale(law, T::one() / T::of(n as f64)),
        };
        let weighted = tape.scale(reg, T::of(self.config.alpha));
        let mut total = tape.add(cls, weighted)?;

        let perceptual = match self.perceptual(tape, params, samples)? {
            Some(pr) => {
                let targets = samples
                    .iter()
                    .flat_map(|s| s.labels.iter().map(|&l| T::of(f64::from(l))))
                    .collect();
                let b = tape.bce(pr, targets)?;
                let l = tape.mean(b)?;
                total = tape.add(total, l)?;
                Some(l)
            }
            None => None,
        };
        Ok(LossVars {
            total,
            cls,
            reg,
            perceptual,
        })
    }
}
