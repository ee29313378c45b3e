//! Upper-bound rule search: for every (sample, activity) cell a nested
//! sequence of sampled rules is scored with the frozen model and the rule
//! whose single-rule score lies closest to the label is kept. Selection
//! reads the labels, so results are diagnostics, never headline metrics.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::Sample;
use crate::engine::{map_of, rule_probabilities, ReasoningModel};
use crate::error::{Error, Result};
use crate::logic::compile_rule_sized;
use crate::numcore::{Real, SeedStream};
use crate::rulebase::{
    cooccurrence_prior, default_betas, perturbed_generator, sample_rules, Provenance, Rule,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Rule counts to report; each is a prefix of the same sequence.
    pub ks: Vec<usize>,
    /// Share of rules drawn from perturbed generators; the rest are
    /// uniform-random antecedent sets.
    pub generator_fraction: f64,
    /// Largest body of a uniform-random rule.
    pub max_antecedents: usize,
    pub presence_threshold: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            ks: vec![10, 100, 1000],
            generator_fraction: 0.5,
            max_antecedents: 4,
            presence_threshold: 0.5,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ks.is_empty() || self.ks.contains(&0) {
            return Err(Error::contract("search ks must be non-empty and >= 1"));
        }
        if !(0.0..=1.0).contains(&self.generator_fraction) {
            return Err(Error::contract("generator_fraction must lie in [0,1]"));
        }
        if self.max_antecedents == 0 {
            return Err(Error::contract("max_antecedents must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramEntry {
    pub rule: String,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub k: usize,
    pub map: f64,
    pub per_activity: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
    /// How often each rule was selected, most frequent first.
    pub histogram: Vec<HistogramEntry>,
}

/// The first `n` rules of activity `m`'s search sequence. Shorter requests
/// with the same seed are prefixes of longer ones. `forced` rules lead the
/// sequence.
pub fn search_rules(
    samples: &[Sample],
    p: usize,
    m: usize,
    n: usize,
    forced: &[Rule],
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Vec<Rule>> {
    cfg.validate()?;
    let stream = SeedStream::new(seed).child(&format!("search-{m}"));
    let prior = match cooccurrence_prior(samples, m, cfg.presence_threshold) {
        Ok(c) => Some(c),
        Err(Error::EmptyClass { .. }) => None,
        Err(e) => return Err(e),
    };
    let betas = default_betas();
    let mut choose = stream.rng("source");
    let mut uniform = stream.rng("uniform");
    let max_len = cfg.max_antecedents.min(p);
    let mut out: Vec<Rule> = forced
        .iter()
        .filter(|r| r.activity() == m)
        .take(n)
        .map(|r| r.clone().with_provenance(Provenance::Searched))
        .collect();
    let mut k = 0usize;
    while out.len() < n {
        let from_generator = choose.random::<f64>() < cfg.generator_fraction;
        let rule = match (&prior, from_generator) {
            (Some(prior), true) => {
                let beta = betas[k % betas.len()];
                let gen = perturbed_generator(m, prior, beta, stream.derive(&format!("gen-{k}")))?;
                let r = sample_rules(&gen, 1, stream.derive(&format!("draw-{k}")))?.remove(0);
                r.with_provenance(Provenance::Searched)
            }
            _ => {
                let len = uniform.random_range(1..=max_len);
                let body = index::sample(&mut uniform, p, len).into_vec();
                Rule::new(m, body, Provenance::Searched)?
            }
        };
        out.push(rule);
        k += 1;
    }
    Ok(out)
}

/// Runs the search for every `k` in `cfg.ks` over one shared nested rule
/// sequence per activity.
pub fn rule_search<T: Real>(
    model: &ReasoningModel<T>,
    samples: &[Sample],
    forced: &[Rule],
    cfg: &SearchConfig,
    seed: u64,
) -> Result<Vec<SearchReport>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::InsufficientSample(
            "rule search needs samples".into(),
        ));
    }
    let p = model.primitives.len();
    let a = model.activities.len();
    let k_max = *cfg.ks.iter().max().expect("validated non-empty");
    let refs: Vec<&Sample> = samples.iter().collect();

    let mut sequences = Vec::with_capacity(a);
    let mut probs = Vec::with_capacity(a);
    for m in 0..a {
        let rules = search_rules(samples, p, m, k_max, forced, cfg, seed)?;
        let compiled = rules
            .iter()
            .map(|r| compile_rule_sized(r, p, a))
            .collect::<Result<Vec<_>>>()?;
        probs.push(rule_probabilities(model, &compiled, &refs)?);
        sequences.push(rules);
    }

    let labels: Vec<Vec<u8>> = samples.iter().map(|s| s.labels.clone()).collect();
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    let mut ks = cfg.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut reports = Vec::with_capacity(ks.len());
    for &k in &ks {
        let mut scores = vec![vec![0.0; a]; samples.len()];
        let mut hist: BTreeMap<String, usize> = BTreeMap::new();
        for m in 0..a {
            for (i, s) in samples.iter().enumerate() {
                let target = f64::from(s.labels[m]);
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (r, row) in probs[m].iter().take(k).enumerate() {
                    let d = (row[i] - target).powi(2);
                    if d < best_d {
                        best_d = d;
                        best = r;
                    }
                }
                scores[i][m] = probs[m][best][i];
                *hist
                    .entry(model.render_rule(&sequences[m][best]))
                    .or_default() += 1;
            }
        }
        let report = map_of(&scores, &labels, &ids)?;
        let mut histogram: Vec<HistogramEntry> = hist
            .into_iter()
            .map(|(rule, count)| HistogramEntry { rule, count })
            .collect();
        histogram.sort_by(|x, y| y.count.cmp(&x.count).then_with(|| x.rule.cmp(&y.rule)));
        reports.push(SearchReport {
            k,
            map: report.map,
            per_activity: report.per_activity,
            skipped: report.skipped,
            histogram,
        });
    }
    Ok(reports)
}
