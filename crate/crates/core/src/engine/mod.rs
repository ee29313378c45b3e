//! The reasoning engine: per-rule votes, late and early combination, the
//! composite training loss, the two-phase training loop with rule-base
//! updates, fused inference and ranking metrics.

mod metrics;
mod model;
mod train;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{average_precision, map_of, mean_ap, MapReport};
pub use model::{Architecture, Combination, Encoded, LossVars, ModelConfig, RegReduction, RuleSet};
pub use train::{
    rule_losses, rule_probabilities, train, update_pass, CandidateConfig, EpochRecord, Phase,
    Selection, TrainConfig, TrainOutcome,
};

use crate::datagen::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::events::{ActivityDictionary, EventVector, PrimitiveDictionary};
use crate::numcore::{Checkpoint, Matrix, ParamSet, Real, Tape};
use crate::rulebase::{serialize_rule, RuleBase};

/// Which factors enter the fused score.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    /// `S = S_LR`
    LrOnly,
    /// `S = S_inst · S_LR`
    Fused,
    /// `S = S_inst · S_LR · S_PR`
    FusedPerceptual,
}

/// Scores of one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    /// Reasoning score per activity; 0 for activities without rules.
    pub lr: Vec<f64>,
    /// Activities that had no rule and therefore no reasoning score.
    pub missing: Vec<usize>,
    pub inst: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perceptual: Option<Vec<f64>>,
    pub fused: Vec<f64>,
    /// Single-rule probabilities, per activity in rule-base order.
    pub rule_scores: Vec<Vec<f64>>,
}

/// `S_inst · S_LR (· S_PR)`.
pub fn fuse(inst: f64, lr: f64, perceptual: Option<f64>) -> f64 {
    inst * lr * perceptual.unwrap_or(1.0)
}

/// Arithmetic mean of per-rule scores.
pub fn combine_late(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::contract("combine_late needs at least one score"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Early combination of one activity's vote vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyOutput {
    pub score: f64,
    /// `[head][rule i][rule j]` attention weights.
    pub attention: Vec<Vec<Vec<f64>>>,
}

/// Trained parameters together with the layout that reads them.
#[derive(Clone, Debug)]
pub struct ReasoningModel<T: Real> {
    pub arch: Architecture<T>,
    pub params: ParamSet<T>,
    pub primitives: PrimitiveDictionary,
    pub activities: ActivityDictionary,
    pub seed: u64,
    /// Combination used when none is requested explicitly.
    pub combination: Combination,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    model: ModelConfig,
    seed: u64,
    visual_dim: usize,
    combination: Combination,
    primitives: Vec<crate::events::PrimitiveEntry>,
    activities: Vec<crate::events::ActivityEntry>,
}

impl<T: Real> ReasoningModel<T> {
    pub fn new(
        config: &ModelConfig,
        primitives: &PrimitiveDictionary,
        activities: &ActivityDictionary,
        visual_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut params = ParamSet::new();
        let arch = Architecture::new(
            &mut params,
            config,
            primitives,
            activities,
            visual_dim,
            seed,
        )?;
        Ok(ReasoningModel {
            arch,
            params,
            primitives: primitives.clone(),
            activities: activities.clone(),
            seed,
            combination: Combination::Late,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let meta = CheckpointMeta {
            model: self.arch.config.clone(),
            seed: self.seed,
            visual_dim: self.arch.visual_dim,
            combination: self.combination,
            primitives: self.primitives.entries().to_vec(),
            activities: self.activities.entries().to_vec(),
        };
        let mut meta = serde_json::to_value(meta).expect("meta serializes");
        if let (Some(obj), serde_json::Value::Object(more)) = (meta.as_object_mut(), extra) {
            obj.extend(more);
        }
        Checkpoint::capture(&self.params, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta: CheckpointMeta =
            serde_json::from_value(ckpt.meta.clone()).map_err(|e| Error::Format {
                path: "checkpoint meta".into(),
                msg: e.to_string(),
            })?;
        let primitives = PrimitiveDictionary::new(meta.primitives)?;
        let activities = ActivityDictionary::new(meta.activities)?;
        let mut model = Self::new(
            &meta.model,
            &primitives,
            &activities,
            meta.visual_dim,
            meta.seed,
        )?;
        ckpt.restore(&mut model.params)?;
        model.combination = meta.combination;
        Ok(model)
    }

    pub fn rule_set(&self, base: &RuleBase) -> Result<RuleSet> {
        if base.n_activities() != self.activities.len() {
            return Err(Error::dim(
                "rule base",
                self.activities.len(),
                base.n_activities(),
            ));
        }
        RuleSet::from_base(base, self.primitives.len())
    }

    pub fn render_rule(&self, rule: &crate::rulebase::Rule) -> String {
        serialize_rule(rule, &self.primitives, &self.activities)
    }

    /// Scores a batch of samples; chunks are evaluated in parallel and
    /// reassembled in input order.
    pub fn predict(
        &self,
        samples: &[Sample],
        set: &RuleSet,
        mode: InferMode,
        comb: Combination,
    ) -> Result<Vec<PredictionRecord>> {
        const CHUNK: usize = 64;
        let chunks: Vec<Result<Vec<PredictionRecord>>> = samples
            .par_chunks(CHUNK)
            .map(|chunk| self.predict_chunk(chunk, set, mode, comb))
            .collect();
        let mut out = Vec::with_capacity(samples.len());
        for c in chunks {
            out.extend(c?);
        }
        Ok(out)
    }

    fn predict_chunk(
        &self,
        chunk: &[Sample],
        set: &RuleSet,
        mode: InferMode,
        comb: Combination,
    ) -> Result<Vec<PredictionRecord>> {
        let refs: Vec<&Sample> = chunk.iter().collect();
        let batch = refs.len();
        let a = self.activities.len();
        let mut tape = Tape::new();
        let (p, arch) = (&self.params, &self.arch);

        let mut rule_scores = vec![vec![Vec::new(); a]; batch];
        let mut lr = vec![vec![0.0; a]; batch];
        if !set.is_empty() {
            let enc = arch.encode(&mut tape, p, &refs)?;
            let fold = arch.votes(&mut tape, p, &enc, set.rules())?;
            let j = arch.logic.judge_rows(&mut tape, p, fold.votes)?;
            let jv = tape.value(j).clone();
            for (r, rule) in set.rules().iter().enumerate() {
                for (b, row) in rule_scores.iter_mut().enumerate() {
                    row[rule.activity()].push(jv.get(r * batch + b, 0).to_f64_lossy());
                }
            }
            let combined = match comb {
                Combination::Late => arch.late(&mut tape, j, set, batch)?,
                Combination::Early => arch.early(&mut tape, p, fold.votes, set, batch)?.0,
            };
            let cv = tape.value(combined);
            for (g, (m, _)) in set.groups().iter().enumerate() {
                for (b, row) in lr.iter_mut().enumerate() {
                    row[*m] = cv.get(g * batch + b, 0).to_f64_lossy();
                }
            }
        }
        let missing: Vec<usize> = (0..a).filter(|&m| set.group_of(m).is_none()).collect();

        let perceptual = if mode == InferMode::FusedPerceptual {
            let pr = arch.perceptual(&mut tape, p, &refs)?.ok_or_else(|| {
                Error::contract(
                    "perceptual mode needs a perceptual head and visual inputs on every sample",
                )
            })?;
            let v = tape.value(pr);
            Some(
                (0..batch)
                    .map(|b| {
                        v.row(b)
                            .iter()
                            .map(|x| x.to_f64_lossy())
                            .collect::<Vec<f64>>()
                    })
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };

        Ok(refs
            .iter()
            .enumerate()
            .map(|(b, s)| {
                let inst: Vec<f64> = (0..a).map(|m| s.s_inst.for_activity(m)).collect();
                let pr = perceptual.as_ref().map(|v| v[b].clone());
                let fused = (0..a)
                    .map(|m| match mode {
                        InferMode::LrOnly => lr[b][m],
                        InferMode::Fused => fuse(inst[m], lr[b][m], None),
                        InferMode::FusedPerceptual => {
                            fuse(inst[m], lr[b][m], pr.as_ref().map(|v| v[m]))
                        }
                    })
                    .collect();
                PredictionRecord {
                    id: s.id,
                    lr: lr[b].clone(),
                    missing: missing.clone(),
                    inst,
                    perceptual: pr,
                    fused,
                    rule_scores: std::mem::take(&mut rule_scores[b]),
                }
            })
            .collect())
    }

    /// Per-activity single-rule scores of one sample.
    pub fn rule_scores(&self, sample: &Sample, set: &RuleSet) -> Result<Vec<Vec<f64>>> {
        let rec = self.predict_chunk(
            std::slice::from_ref(sample),
            set,
            InferMode::LrOnly,
            Combination::Late,
        )?;
        Ok(rec.into_iter().next().expect("one record").rule_scores)
    }

    /// Early combination of explicit vote vectors for one activity.
    pub fn combine_early(&self, votes: &[EventVector<T>]) -> Result<EarlyOutput> {
        if votes.is_empty() {
            return Err(Error::contract("combine_early needs at least one vote"));
        }
        let d = self.arch.config.d;
        if let Some(v) = votes.iter().find(|v| v.dim() != d) {
            return Err(Error::dim("combine_early", d, v.dim()));
        }
        let rows: Vec<Vec<T>> = votes.iter().map(|v| v.0.clone()).collect();
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&rows)?);
        let set = RuleSet::new(
            (0..votes.len())
                .map(|i| crate::logic::CompiledRule::new(vec![i], 0))
                .collect::<Result<Vec<_>>>()?,
        );
        let (out, attn) = self.arch.early(&mut tape, &self.params, x, &set, 1)?;
        let attention = attn[0]
            .iter()
            .map(|&node| {
                tape.attention_probs(node).expect("attention node")[0]
                    .iter()
                    .map(|row| row.iter().map(|p| p.to_f64_lossy()).collect())
                    .collect()
            })
            .collect();
        Ok(EarlyOutput {
            score: tape.value(out).get(0, 0).to_f64_lossy(),
            attention,
        })
    }

    /// Observable event vectors of `samples`: mixed primitive events, the
    /// vote vector of every rule, and the activity events (once).
    pub fn event_pool(&self, samples: &[Sample], set: &RuleSet) -> Result<Matrix<T>> {
        const CHUNK: usize = 64;
        let parts: Vec<Result<Vec<Vec<T>>>> = samples
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(k, chunk)| {
                let refs: Vec<&Sample> = chunk.iter().collect();
                let mut tape = Tape::new();
                let enc = self.arch.encode(&mut tape, &self.params, &refs)?;
                let mut nodes = vec![enc.mixed];
                if !set.is_empty() {
                    nodes.push(
                        self.arch
                            .votes(&mut tape, &self.params, &enc, set.rules())?
                            .votes,
                    );
                }
                if k == 0 {
                    nodes.push(enc.activities);
                }
                let mut rows = Vec::new();
                for n in nodes {
                    let v = tape.value(n);
                    rows.extend((0..v.rows()).map(|r| v.row(r).to_vec()));
                }
                Ok(rows)
            })
            .collect();
        let mut rows = Vec::new();
        for p in parts {
            rows.extend(p?);
        }
        if rows.is_empty() {
            return Err(Error::InsufficientSample("no events".into()));
        }
        Matrix::from_rows(&rows)
    }

    /// mAP of `mode` scores over a dataset.
    pub fn evaluate(
        &self,
        data: &Dataset,
        set: &RuleSet,
        mode: InferMode,
        comb: Combination,
    ) -> Result<MapReport> {
        let preds = self.predict(&data.samples, set, mode, comb)?;
        let scores: Vec<Vec<f64>> = preds.iter().map(|p| p.fused.clone()).collect();
        let labels: Vec<Vec<u8>> = data.samples.iter().map(|s| s.labels.clone()).collect();
        let ids: Vec<u64> = data.samples.iter().map(|s| s.id).collect();
        map_of(&scores, &labels, &ids)
    }
}

#[cfg(test)]
mod tests;
