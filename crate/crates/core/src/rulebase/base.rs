use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Provenance, Rule};
use crate::datagen::Sample;
use crate::error::{Error, Result};
use crate::numcore::SeedStream;

/// A selected rule and its most recent classification loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub rule: Rule,
    pub loss: f64,
}

/// Per-activity selected rules, at most `capacity` each, no duplicate bodies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleBase {
    capacity: usize,
    selected: Vec<Vec<Scored>>,
}

impl RuleBase {
    pub fn new(n_activities: usize, capacity: usize) -> Result<Self> {
        if capacity < 1 {
            return Err(Error::contract("rule capacity l_0 must be >= 1"));
        }
        Ok(RuleBase {
            capacity,
            selected: vec![Vec::new(); n_activities],
        })
    }

    /// Inserts in order, skipping duplicates and rules beyond capacity.
    pub fn from_rules(
        n_activities: usize,
        capacity: usize,
        rules: impl IntoIterator<Item = Rule>,
    ) -> Result<Self> {
        let mut base = Self::new(n_activities, capacity)?;
        for r in rules {
            base.insert(r, f64::INFINITY)?;
        }
        Ok(base)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn n_activities(&self) -> usize {
        self.selected.len()
    }

    pub fn rules(&self, m: usize) -> &[Scored] {
        &self.selected[m]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Scored> {
        self.selected.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.selected.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, rule: &Rule) -> bool {
        self.selected
            .get(rule.activity())
            .is_some_and(|v| v.iter().any(|s| s.rule.same_body(rule)))
    }

    /// Appends if there is room and the body is new; returns whether it was added.
    pub fn insert(&mut self, rule: Rule, loss: f64) -> Result<bool> {
        let m = rule.activity();
        if m >= self.selected.len() {
            return Err(Error::contract(format!(
                "activity {m} outside rule base of {} activities",
                self.selected.len()
            )));
        }
        if self.contains(&rule) || self.selected[m].len() >= self.capacity {
            return Ok(false);
        }
        self.selected[m].push(Scored { rule, loss });
        Ok(true)
    }

    /// Overwrites the recorded losses of activity `m`, one per selected rule.
    pub fn set_losses(&mut self, m: usize, losses: &[f64]) -> Result<()> {
        if losses.len() != self.selected[m].len() {
            return Err(Error::dim(
                "RuleBase::set_losses",
                self.selected[m].len(),
                losses.len(),
            ));
        }
        for (s, &l) in self.selected[m].iter_mut().zip(losses) {
            s.loss = l;
        }
        Ok(())
    }

    /// Rules with their losses, activity-major, for writing a rule file.
    pub fn to_records(&self) -> Vec<(Rule, Option<f64>)> {
        self.iter()
            .map(|s| (s.rule.clone(), s.loss.is_finite().then_some(s.loss)))
            .collect()
    }

    /// Order-insensitive digest of the selected bodies.
    pub fn checksum(&self) -> u64 {
        let mut keys: Vec<String> = self
            .iter()
            .map(|s| format!("{}:{:?}", s.rule.activity(), s.rule.antecedents()))
            .collect();
        keys.sort();
        crate::numcore::fnv1a(keys.join(";").as_bytes())
    }
}

/// A candidate rule with its loss on the current evaluation samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub rule: Rule,
    pub loss: f64,
}

/// What one evaluate-and-update pass changed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleDiff {
    pub added: Vec<Rule>,
    pub removed: Vec<Rule>,
}

impl RuleDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }
}

/// One evaluate-and-update pass: a candidate whose loss is below the worst
/// selected loss of its activity is appended while there is room, otherwise
/// it replaces the worst rule. An activity with no selected rule accepts
/// any candidate. Candidates whose body is already selected are skipped.
pub fn update_rules(
    base: &RuleBase,
    candidates: &[Candidate],
    l0: usize,
) -> Result<(RuleBase, RuleDiff)> {
    if l0 < 1 {
        return Err(Error::contract("rule capacity l_0 must be >= 1"));
    }
    if let Some(c) = candidates.iter().find(|c| !c.loss.is_finite()) {
        return Err(Error::contract(format!(
            "candidate loss {} is not finite",
            c.loss
        )));
    }
    let mut next = base.clone();
    next.capacity = l0;
    let mut diff = RuleDiff::default();
    for c in candidates {
        let m = c.rule.activity();
        if m >= next.selected.len() {
            return Err(Error::contract(format!(
                "candidate activity {m} out of range"
            )));
        }
        if next.contains(&c.rule) {
            continue;
        }
        let sel = &mut next.selected[m];
        let worst = sel
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |acc, (j, s)| match acc {
                Some((_, l)) if l >= s.loss => acc,
                _ => Some((j, s.loss)),
            });
        let max_loss = worst.map_or(f64::INFINITY, |(_, l)| l);
        if c.loss < max_loss {
            let entry = Scored {
                rule: c.rule.clone(),
                loss: c.loss,
            };
            if sel.len() < l0 {
                sel.push(entry);
            } else {
                let (k, _) = worst.expect("full base has a worst rule");
                let old = std::mem::replace(&mut sel[k], entry);
                diff.removed.push(old.rule);
            }
            diff.added.push(c.rule.clone());
        }
    }
    Ok((next, diff))
}

/// Up to `n` distinct candidate rules taken from the active primitives
/// (score above `threshold`) of randomly chosen positives of activity `m`.
pub fn harvest_annotation_rules(
    samples: &[Sample],
    m: usize,
    n: usize,
    threshold: f64,
    seed: u64,
) -> Result<Vec<Rule>> {
    let mut positives: Vec<&Sample> = samples
        .iter()
        .filter(|s| s.labels.get(m) == Some(&1))
        .collect();
    if positives.is_empty() {
        return Err(Error::EmptyClass { activity: m });
    }
    positives.shuffle(&mut SeedStream::new(seed).rng(&format!("harvest-{m}")));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for s in positives {
        if out.len() >= n {
            break;
        }
        let body: Vec<usize> = s
            .s_pri
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > threshold)
            .map(|(i, _)| i)
            .collect();
        if body.is_empty() || !seen.insert(body.clone()) {
            continue;
        }
        out.push(Rule::new(m, body, Provenance::Annotation)?);
    }
    Ok(out)
}

/// Condenses many rules per activity into `n`: duplicates are dropped, the
/// rest ranked by Euclidean distance of their masks to the mean mask, and
/// `n` rules taken at equal intervals along that ranking.
pub fn aggregate_rules(rules: &[Rule], p: usize, n: usize) -> Vec<Rule> {
    let mut activities: Vec<usize> = rules.iter().map(Rule::activity).collect();
    activities.sort_unstable();
    activities.dedup();
    let mut out = Vec::new();
    for m in activities {
        let mut unique: Vec<&Rule> = Vec::new();
        for r in rules.iter().filter(|r| r.activity() == m) {
            if !unique.iter().any(|u| u.same_body(r)) {
                unique.push(r);
            }
        }
        let k = unique.len() as f64;
        let mut mean = vec![0.0; p];
        for r in &unique {
            for &a in r.antecedents() {
                mean[a] += 1.0 / k;
            }
        }
        let dist = |r: &Rule| -> f64 {
            let mask = r.mask(p);
            mean.iter()
                .zip(&mask)
                .map(|(&c, &b)| {
                    let d = if b { 1.0 } else { 0.0 } - c;
                    d * d
                })
                .sum::<f64>()
                .sqrt()
        };
        let mut ranked: Vec<(f64, &Rule)> = unique.iter().map(|r| (dist(r), *r)).collect();
        ranked.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| a.1.antecedents().cmp(b.1.antecedents()))
        });
        let len = ranked.len();
        if n >= len {
            out.extend(ranked.into_iter().map(|(_, r)| r.clone()));
        } else {
            for i in 0..n {
                out.push(ranked[i * len / n].1.clone());
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{InstScore, Split};

    fn rule(m: usize, body: &[usize]) -> Rule {
        Rule::new(m, body.iter().copied(), Provenance::HumanPrior).unwrap()
    }

    fn base(losses: &[f64], cap: usize) -> RuleBase {
        let mut b = RuleBase::new(1, cap).unwrap();
        for (i, &l) in losses.iter().enumerate() {
            assert!(b.insert(rule(0, &[i]), l).unwrap());
        }
        b
    }

    fn losses(b: &RuleBase) -> Vec<f64> {
        b.rules(0).iter().map(|s| s.loss).collect()
    }

    #[test]
    fn replace_the_worst_when_full() {
        let b = base(&[0.5, 0.2], 2);
        let c = Candidate {
            rule: rule(0, &[7]),
            loss: 0.3,
        };
        let (next, diff) = update_rules(&b, &[c], 2).unwrap();
        assert_eq!(losses(&next), vec![0.3, 0.2]);
        assert_eq!(diff.removed, vec![rule(0, &[0])]);
    }

    #[test]
    fn worse_candidate_changes_nothing() {
        let b = base(&[0.5, 0.2], 2);
        let c = Candidate {
            rule: rule(0, &[7]),
            loss: 0.6,
        };
        let (next, diff) = update_rules(&b, &[c], 2).unwrap();
        assert_eq!(next, b);
        assert!(diff.is_empty());
    }

    #[test]
    fn append_while_there_is_room() {
        let b = base(&[0.5], 3);
        let c = Candidate {
            rule: rule(0, &[7]),
            loss: 0.1,
        };
        let (next, _) = update_rules(&b, &[c], 3).unwrap();
        assert_eq!(losses(&next), vec![0.5, 0.1]);
        assert!(update_rules(&b, &[], 0).is_err());
    }

    #[test]
    fn duplicates_are_rejected() {
        let mut b = base(&[0.5], 3);
        assert!(!b.insert(rule(0, &[0]), 0.1).unwrap());
        let c = Candidate {
            rule: rule(0, &[0]),
            loss: 0.01,
        };
        let (next, _) = update_rules(&b, &[c], 3).unwrap();
        assert_eq!(next.rules(0).len(), 1);
    }

    #[test]
    fn empty_activity_accepts_a_candidate() {
        let b = RuleBase::new(2, 2).unwrap();
        let c = Candidate {
            rule: rule(1, &[3]),
            loss: 0.9,
        };
        let (next, _) = update_rules(&b, &[c], 2).unwrap();
        assert_eq!(next.rules(1).len(), 1);
    }

    fn sample(id: u64, s_pri: Vec<f64>, labels: Vec<u8>) -> Sample {
        Sample {
            id,
            split: Split::Train,
            s_pri,
            s_inst: InstScore::Shared(1.0),
            labels,
            visual: None,
        }
    }

    #[test]
    fn harvesting_converts_active_sets() {
        let s = vec![
            sample(0, vec![0.9, 0.1, 0.8], vec![1]),
            sample(1, vec![0.9, 0.2, 0.7], vec![1]),
            sample(2, vec![0.1, 0.9, 0.9], vec![0]),
        ];
        let r = harvest_annotation_rules(&s, 0, 10, 0.5, 3).unwrap();
        assert_eq!(
            r,
            vec![Rule::new(0, [0, 2], Provenance::Annotation).unwrap()]
        );
        assert_eq!(r, harvest_annotation_rules(&s, 0, 10, 0.5, 3).unwrap());
        let none = vec![sample(0, vec![0.9], vec![0])];
        assert!(matches!(
            harvest_annotation_rules(&none, 0, 1, 0.5, 0),
            Err(Error::EmptyClass { .. })
        ));
    }

    #[test]
    fn aggregation_dedupes_and_spreads() {
        let rules = vec![
            rule(0, &[0, 1]),
            rule(0, &[0, 1]),
            rule(0, &[0, 2]),
            rule(0, &[0, 1, 3]),
            rule(0, &[4]),
            rule(1, &[2]),
        ];
        let all = aggregate_rules(&rules, 5, 10);
        assert_eq!(all.len(), 5);
        let two = aggregate_rules(&rules, 5, 2);
        assert_eq!(two.iter().filter(|r| r.activity() == 0).count(), 2);
        assert_eq!(two[0], rule(0, &[0, 1]));
        assert_eq!(two[1], rule(0, &[0, 2]));
    }
}
