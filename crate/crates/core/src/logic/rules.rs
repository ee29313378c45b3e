use crate::error::{Error, Result};
use crate::events::{ActivityDictionary, EventVector, PrimitiveDictionary};
use crate::numcore::{ParamSet, Real, Tape, Var};
use crate::rulebase::Rule;

use super::LogicOps;

/// One position of the clause `¬P_a ∨ ¬P_b ∨ … ∨ A_m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Not(usize),
    Activity(usize),
}

/// A rule in clause form, ready for evaluation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CompiledRule {
    antecedents: Vec<usize>,
    activity: usize,
}

impl CompiledRule {
    pub fn new(mut antecedents: Vec<usize>, activity: usize) -> Result<Self> {
        if antecedents.is_empty() {
            return Err(Error::contract("compiled rule without antecedents"));
        }
        antecedents.sort_unstable();
        let n = antecedents.len();
        antecedents.dedup();
        if antecedents.len() != n {
            return Err(Error::contract(
                "compiled rule antecedents must be distinct",
            ));
        }
        Ok(CompiledRule {
            antecedents,
            activity,
        })
    }

    pub fn antecedents(&self) -> &[usize] {
        &self.antecedents
    }

    pub fn activity(&self) -> usize {
        self.activity
    }

    /// Negated antecedents in ascending id order, then the activity.
    pub fn slots(&self) -> Vec<Slot> {
        self.antecedents
            .iter()
            .map(|&a| Slot::Not(a))
            .chain(std::iter::once(Slot::Activity(self.activity)))
            .collect()
    }
}

/// Resolves a rule against the dictionaries it refers to.
pub fn compile_rule(
    rule: &Rule,
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
) -> Result<CompiledRule> {
    compile_rule_sized(rule, primitives.len(), activities.len())
}

/// [`compile_rule`] when only the vocabulary sizes are known.
pub fn compile_rule_sized(
    rule: &Rule,
    n_primitives: usize,
    n_activities: usize,
) -> Result<CompiledRule> {
    if rule.activity() >= n_activities {
        return Err(Error::Dictionary {
            token: format!("activity #{}", rule.activity()),
            context: format!("{n_activities} activities known"),
        });
    }
    if let Some(&bad) = rule.antecedents().iter().find(|&&a| a >= n_primitives) {
        return Err(Error::Dictionary {
            token: format!("primitive #{bad}"),
            context: format!("{n_primitives} primitives known"),
        });
    }
    CompiledRule::new(rule.antecedents().to_vec(), rule.activity())
}

/// Vote of a single rule together with the operator calls that built it.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleTrace<T> {
    pub vote: EventVector<T>,
    pub intermediates: Vec<EventVector<T>>,
    pub not_calls: usize,
    pub or_calls: usize,
}

/// `OR(…OR(OR(¬e'_a, ¬e'_b), ¬e'_c)…, e_Act)`, where `primitive_events[i]`
/// is the mixed event of primitive `i`.
pub fn eval_rule<T: Real>(
    ops: &LogicOps,
    params: &ParamSet<T>,
    rule: &CompiledRule,
    primitive_events: &[EventVector<T>],
    activity_event: &EventVector<T>,
) -> Result<RuleTrace<T>> {
    let mut not_calls = 0;
    let mut or_calls = 0;
    let mut intermediates = Vec::new();
    let mut acc: Option<EventVector<T>> = None;
    for &a in rule.antecedents() {
        let e = primitive_events.get(a).ok_or_else(|| {
            Error::contract(format!(
                "no event for antecedent {a} ({} supplied)",
                primitive_events.len()
            ))
        })?;
        let neg = ops.not_op(params, e)?;
        not_calls += 1;
        acc = Some(match acc {
            None => neg,
            Some(prev) => {
                or_calls += 1;
                let o = ops.or_op(params, &prev, &neg)?;
                intermediates.push(o.clone());
                o
            }
        });
    }
    let acc = acc.ok_or_else(|| Error::contract("rule without antecedents"))?;
    let vote = ops.or_op(params, &acc, activity_event)?;
    or_calls += 1;
    Ok(RuleTrace {
        vote,
        intermediates,
        not_calls,
        or_calls,
    })
}

/// Votes of many rules over a batch, on a tape.
#[derive(Clone, Debug)]
pub struct FoldOutput {
    /// `rules.len() · batch` rows; row `r·batch + b` is rule `r` on sample `b`.
    pub votes: Var,
    /// Every disjunction computed along the way, the votes included.
    pub disjunctions: Vec<Var>,
}

/// Evaluates every rule on every sample of a batch, one disjunction depth at
/// a time. `negated` holds `NOT(e')` with `batch · p` rows (sample-major) and
/// `activities` holds one event per activity.
pub fn fold_rules<T: Real>(
    tape: &mut Tape<T>,
    ops: &LogicOps,
    params: &ParamSet<T>,
    negated: Var,
    activities: Var,
    rules: &[CompiledRule],
    batch: usize,
) -> Result<FoldOutput> {
    if rules.is_empty() || batch == 0 {
        return Err(Error::contract(
            "fold_rules needs rules and a nonempty batch",
        ));
    }
    let (rows, _) = tape.shape(negated);
    if rows % batch != 0 {
        return Err(Error::dim(
            "fold_rules",
            format!("multiple of {batch} rows"),
            rows,
        ));
    }
    let p = rows / batch;
    let n_act = tape.shape(activities).0;
    for r in rules {
        if r.antecedents().iter().any(|&a| a >= p) || r.activity() >= n_act {
            return Err(Error::contract(format!(
                "rule {:?} -> {} outside {p} primitives / {n_act} activities",
                r.antecedents(),
                r.activity()
            )));
        }
    }
    let source = tape.concat_rows(&[negated, activities])?;
    let operand = |r: &CompiledRule, s: usize, b: usize| match r.antecedents().get(s) {
        Some(&a) => b * p + a,
        None => rows + r.activity(),
    };

    // position of each rule's block in the previous step's output
    let mut pos: Vec<Option<usize>> = vec![None; rules.len()];
    let mut final_at: Vec<(usize, usize)> = vec![(0, 0); rules.len()];
    let mut disjunctions = Vec::new();
    let depth = rules
        .iter()
        .map(|r| r.antecedents().len())
        .max()
        .unwrap_or(0);
    let mut prev: Option<Var> = None;
    for s in 1..=depth {
        let active: Vec<usize> = (0..rules.len())
            .filter(|&r| rules[r].antecedents().len() >= s)
            .collect();
        let mut left_idx = Vec::with_capacity(active.len() * batch);
        let mut right_idx = Vec::with_capacity(active.len() * batch);
        for &r in &active {
            for b in 0..batch {
                left_idx.push(match (s, pos[r]) {
                    (1, _) => b * p + rules[r].antecedents()[0],
                    (_, Some(k)) => k * batch + b,
                    (_, None) => unreachable!("rule dropped out of the fold early"),
                });
                right_idx.push(operand(&rules[r], s, b));
            }
        }
        let left = match prev {
            Some(pv) if s > 1 => tape.gather_rows(pv, left_idx)?,
            _ => tape.gather_rows(negated, left_idx)?,
        };
        let right = tape.gather_rows(source, right_idx)?;
        let out = ops.or_rows(tape, params, left, right)?;
        let step = disjunctions.len();
        disjunctions.push(out);
        pos.iter_mut().for_each(|x| *x = None);
        for (k, &r) in active.iter().enumerate() {
            pos[r] = Some(k);
            if rules[r].antecedents().len() == s {
                final_at[r] = (step, k);
            }
        }
        prev = Some(out);
    }

    let all = if disjunctions.len() == 1 {
        disjunctions[0]
    } else {
        tape.concat_rows(&disjunctions)?
    };
    let mut offsets = Vec::with_capacity(disjunctions.len());
    let mut acc = 0;
    for &d in &disjunctions {
        offsets.push(acc);
        acc += tape.shape(d).0;
    }
    let mut idx = Vec::with_capacity(rules.len() * batch);
    for &(step, k) in &final_at {
        for b in 0..batch {
            idx.push(offsets[step] + k * batch + b);
        }
    }
    let votes = tape.gather_rows(all, idx)?;
    Ok(FoldOutput {
        votes,
        disjunctions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, Matrix, SeedStream};
    use crate::rulebase::Provenance;

    fn setup(d: usize) -> (ParamSet<f64>, LogicOps) {
        let mut ps = ParamSet::new();
        let mut rng = SeedStream::new(3).rng("ops");
        let ops = LogicOps::new(&mut ps, d, &mut rng).unwrap();
        (ps, ops)
    }

    fn events(n: usize, d: usize, seed: f64) -> Vec<EventVector<f64>> {
        (0..n)
            .map(|i| EventVector((0..d).map(|j| ((i * d + j) as f64 * seed).sin()).collect()))
            .collect()
    }

    #[test]
    fn slot_layouts() {
        let r = Rule::new(4, [7, 2], Provenance::HumanPrior).unwrap();
        let c = compile_rule_sized(&r, 10, 5).unwrap();
        assert_eq!(
            c.slots(),
            vec![Slot::Not(2), Slot::Not(7), Slot::Activity(4)]
        );
        let r = Rule::new(0, [3], Provenance::HumanPrior).unwrap();
        assert_eq!(
            compile_rule_sized(&r, 10, 5).unwrap().slots(),
            vec![Slot::Not(3), Slot::Activity(0)]
        );
        let bad = Rule::new(0, [30], Provenance::HumanPrior).unwrap();
        assert!(matches!(
            compile_rule_sized(&bad, 10, 5),
            Err(Error::Dictionary { .. })
        ));
        let bad = Rule::new(9, [1], Provenance::HumanPrior).unwrap();
        assert!(matches!(
            compile_rule_sized(&bad, 10, 5),
            Err(Error::Dictionary { .. })
        ));
    }

    #[test]
    fn operator_call_counts() {
        let (ps, ops) = setup(6);
        let prims = events(5, 6, 0.37);
        let act = &events(1, 6, 0.11)[0];
        let two = CompiledRule::new(vec![1, 3], 0).unwrap();
        let t = eval_rule(&ops, &ps, &two, &prims, act).unwrap();
        assert_eq!((t.not_calls, t.or_calls), (2, 2));
        let one = CompiledRule::new(vec![4], 0).unwrap();
        let t = eval_rule(&ops, &ps, &one, &prims, act).unwrap();
        assert_eq!((t.not_calls, t.or_calls), (1, 1));
        let missing = CompiledRule::new(vec![9], 0).unwrap();
        assert!(matches!(
            eval_rule(&ops, &ps, &missing, &prims, act),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn three_antecedents_fold_left() {
        let (ps, ops) = setup(5);
        let prims = events(4, 5, 0.71);
        let act = &events(1, 5, 0.23)[0];
        let rule = CompiledRule::new(vec![3, 0, 2], 1).unwrap();
        let got = eval_rule(&ops, &ps, &rule, &prims, act).unwrap().vote;
        let n = |i: usize| ops.not_op(&ps, &prims[i]).unwrap();
        let ab = ops.or_op(&ps, &n(0), &n(2)).unwrap();
        let abc = ops.or_op(&ps, &ab, &n(3)).unwrap();
        let want = ops.or_op(&ps, &abc, act).unwrap();
        assert_eq!(got, want);
    }

    #[test]
    fn batched_fold_matches_single_rule_evaluation() {
        let d = 4;
        let (ps, ops) = setup(d);
        let batch = 3;
        let p = 5;
        let prims = events(batch * p, d, 0.19);
        let acts = events(2, d, 0.53);
        let rules = vec![
            CompiledRule::new(vec![0, 4], 1).unwrap(),
            CompiledRule::new(vec![2], 0).unwrap(),
            CompiledRule::new(vec![1, 2, 3], 1).unwrap(),
        ];
        let mut tape = Tape::new();
        let rows: Vec<Vec<f64>> = prims.iter().map(|e| e.0.clone()).collect();
        let x = tape.constant(Matrix::from_rows(&rows).unwrap());
        let neg = ops.not_rows(&mut tape, &ps, x).unwrap();
        let a_rows: Vec<Vec<f64>> = acts.iter().map(|e| e.0.clone()).collect();
        let a = tape.constant(Matrix::from_rows(&a_rows).unwrap());
        let out = fold_rules(&mut tape, &ops, &ps, neg, a, &rules, batch).unwrap();
        let votes = tape.value(out.votes).clone();
        let total: usize = out.disjunctions.iter().map(|&v| tape.shape(v).0).sum();
        assert_eq!(total, batch * (2 + 1 + 3));
        for (r, rule) in rules.iter().enumerate() {
            for b in 0..batch {
                let sample = &prims[b * p..(b + 1) * p];
                let want = eval_rule(&ops, &ps, rule, sample, &acts[rule.activity()])
                    .unwrap()
                    .vote;
                for (g, w) in votes.row(r * batch + b).iter().zip(&want.0) {
                    assert!((g - w).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn vote_is_differentiable_end_to_end() {
        let d = 4;
        let (mut ps, ops) = setup(d);
        let prims = events(3, d, 0.41);
        let act = events(1, d, 0.29);
        let rules = vec![CompiledRule::new(vec![0, 2], 0).unwrap()];
        let rel = grad_check(
            &mut ps,
            |tape, ps| {
                let rows: Vec<Vec<f64>> = prims.iter().map(|e| e.0.clone()).collect();
                let x = tape.constant(Matrix::from_rows(&rows).unwrap());
                let neg = ops.not_rows(tape, ps, x)?;
                let a = tape.constant(act[0].to_row());
                let out = fold_rules(tape, &ops, ps, neg, a, &rules, 1)?;
                let j = ops.judge_rows(tape, ps, out.votes)?;
                Ok(tape.sum(j))
            },
            1e-5,
            400,
        )
        .unwrap();
        assert!(rel < 1e-4, "relative error {rel}");
    }
}
