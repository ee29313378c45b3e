use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Matrix, ParamSet, Real, SeedStream, Tape, Var};

use super::LogicOps;

/// The twelve probe expressions of the logic-module evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expression {
    NotDiffers,
    DoubleNegation,
    Idempotence,
    Complementation,
    TOrT,
    TOrF,
    FOrT,
    FOrF,
    TOrTOrT,
    TOrTOrF,
    TOrFOrF,
    FOrFOrF,
}

impl Expression {
    pub const ALL: [Expression; 12] = [
        Expression::NotDiffers,
        Expression::DoubleNegation,
        Expression::Idempotence,
        Expression::Complementation,
        Expression::TOrT,
        Expression::TOrF,
        Expression::FOrT,
        Expression::FOrF,
        Expression::TOrTOrT,
        Expression::TOrTOrF,
        Expression::TOrFOrF,
        Expression::FOrFOrF,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Expression::NotDiffers => "x ≠ ¬x",
            Expression::DoubleNegation => "x = ¬¬x",
            Expression::Idempotence => "x ∨ x = x",
            Expression::Complementation => "x ∨ ¬x = T",
            Expression::TOrT => "T ∨ T = T",
            Expression::TOrF => "T ∨ F = T",
            Expression::FOrT => "F ∨ T = T",
            Expression::FOrF => "F ∨ F = F",
            Expression::TOrTOrT => "T ∨ T ∨ T = T",
            Expression::TOrTOrF => "T ∨ T ∨ F = T",
            Expression::TOrFOrF => "T ∨ F ∨ F = T",
            Expression::FOrFOrF => "F ∨ F ∨ F = F",
        }
    }

    /// Accuracy reported for the full-scale model.
    pub fn reference_accuracy(self) -> f64 {
        match self {
            Expression::NotDiffers => 0.9411,
            Expression::DoubleNegation => 0.9426,
            Expression::Idempotence => 0.8854,
            Expression::Complementation => 0.9425,
            Expression::TOrT => 0.9870,
            Expression::TOrF => 0.9960,
            Expression::FOrT => 0.9990,
            Expression::FOrF => 0.7950,
            Expression::TOrTOrT => 0.9870,
            Expression::TOrTOrF => 0.9940,
            Expression::TOrFOrF => 0.9790,
            Expression::FOrFOrF => 0.7180,
        }
    }

    /// Truth-value operands (`true` = T) for the constant expressions.
    fn operands(self) -> Option<&'static [bool]> {
        Some(match self {
            Expression::TOrT => &[true, true],
            Expression::TOrF => &[true, false],
            Expression::FOrT => &[false, true],
            Expression::FOrF => &[false, false],
            Expression::TOrTOrT => &[true, true, true],
            Expression::TOrTOrF => &[true, true, false],
            Expression::TOrFOrF => &[true, false, false],
            Expression::FOrFOrF => &[false, false, false],
            _ => return None,
        })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressionScore {
    pub expression: Expression,
    pub label: String,
    pub accuracy: f64,
    pub tuples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub t_l: f64,
    pub events: usize,
    pub n_true: usize,
    pub n_false: usize,
    pub rows: Vec<ExpressionScore>,
    /// Mean `|J(a ∨ b) − J(b ∨ a)|` over random pairs; reported, not enforced.
    pub commutativity_gap: f64,
}

impl AccuracyTable {
    pub fn accuracy(&self, e: Expression) -> f64 {
        self.rows
            .iter()
            .find(|r| r.expression == e)
            .map_or(f64::NAN, |r| r.accuracy)
    }
}

/// Splits events by the discriminator: `J > t_l` is True, `J < 1 − t_l` is
/// False (at `t_l = 0.5`, everything below one half).
pub fn truth_pools(judgements: &[f64], t_l: f64) -> (Vec<usize>, Vec<usize>) {
    let lo = 1.0 - t_l;
    let mut t = Vec::new();
    let mut f = Vec::new();
    for (i, &j) in judgements.iter().enumerate() {
        if j > t_l {
            t.push(i);
        } else if j < lo {
            f.push(i);
        }
    }
    (t, f)
}

/// Fraction of events whose judgement falls strictly inside `(lo, hi)`.
pub fn ambiguous_fraction<T: Real>(
    ops: &LogicOps,
    params: &ParamSet<T>,
    events: &Matrix<T>,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    if events.rows() == 0 {
        return Err(Error::InsufficientSample("no events to judge".into()));
    }
    let j = ops.judge_matrix(params, events)?;
    let inside = j
        .iter()
        .filter(|v| {
            let v = v.to_f64_lossy();
            v > lo && v < hi
        })
        .count();
    Ok(inside as f64 / j.len() as f64)
}

/// `n` isotropic zero-mean normal vectors whose per-coordinate spread is
/// the root-mean-square entry of `like`: points of the ambient space at the
/// scale of real events but with none of their structure.
pub fn ambient_samples<T: Real>(like: &Matrix<T>, n: usize, seed: u64) -> Result<Matrix<T>> {
    let values = like.as_slice();
    if values.is_empty() {
        return Err(Error::InsufficientSample(
            "no events to take the scale from".into(),
        ));
    }
    let rms =
        (values.iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    let mut rng = SeedStream::new(seed).rng("ambient");
    let data = (0..n * like.cols())
        .map(|_| T::of(rms * rng.sample::<f64, _>(rand_distr::StandardNormal)))
        .collect();
    Matrix::from_vec(n, like.cols(), data)
}

fn rows_of<T: Real>(tape: &mut Tape<T>, events: &Matrix<T>, idx: &[usize]) -> Var {
    let d = events.cols();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend_from_slice(events.row(i));
    }
    tape.constant(Matrix::from_vec(idx.len(), d, data).expect("row gather"))
}

fn truths<T: Real>(
    tape: &mut Tape<T>,
    ops: &LogicOps,
    params: &ParamSet<T>,
    x: Var,
) -> Result<Vec<bool>> {
    let j = ops.judge_rows(tape, params, x)?;
    Ok(tape
        .value(j)
        .as_slice()
        .iter()
        .map(|v| v.to_f64_lossy() > 0.5)
        .collect())
}

fn agreement(got: &[bool], want: &[bool]) -> f64 {
    let hits = got.iter().zip(want).filter(|(a, b)| a == b).count();
    hits as f64 / got.len().max(1) as f64
}

/// Scores the twelve probe expressions on `tuples` random draws from the
/// True/False pools of `events` (one event per row).
pub fn expression_accuracy<T: Real>(
    ops: &LogicOps,
    params: &ParamSet<T>,
    events: &Matrix<T>,
    t_l: f64,
    tuples: usize,
    seed: u64,
) -> Result<AccuracyTable> {
    if !(0.5..1.0).contains(&t_l) {
        return Err(Error::contract(format!(
            "t_l must lie in [0.5, 1), got {t_l}"
        )));
    }
    if tuples == 0 {
        return Err(Error::contract("expression_accuracy needs tuples >= 1"));
    }
    let judged: Vec<f64> = ops
        .judge_matrix(params, events)?
        .iter()
        .map(|v| v.to_f64_lossy())
        .collect();
    let (t_pool, f_pool) = truth_pools(&judged, t_l);
    if t_pool.is_empty() || f_pool.is_empty() {
        return Err(Error::InsufficientSample(format!(
            "{} True and {} False events at t_l = {t_l}",
            t_pool.len(),
            f_pool.len()
        )));
    }
    let both: Vec<usize> = t_pool.iter().chain(&f_pool).copied().collect();
    let stream = SeedStream::new(seed);
    let draw = |pool: &[usize], rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
        (0..tuples)
            .map(|_| pool[rng.random_range(0..pool.len())])
            .collect()
    };

    let mut rows = Vec::with_capacity(12);
    let mut push = |e: Expression, acc: f64| {
        rows.push(ExpressionScore {
            expression: e,
            label: e.label().to_string(),
            accuracy: acc,
            tuples,
        })
    };

    // expressions over a single event x
    {
        let mut rng = stream.rng("x");
        let idx = draw(&both, &mut rng);
        let x_true: Vec<bool> = idx.iter().map(|&i| judged[i] > 0.5).collect();
        let mut tape = Tape::new();
        let x = rows_of(&mut tape, events, &idx);
        let nx = ops.not_rows(&mut tape, params, x)?;
        let nnx = ops.not_rows(&mut tape, params, nx)?;
        let xx = ops.or_rows(&mut tape, params, x, x)?;
        let xnx = ops.or_rows(&mut tape, params, x, nx)?;
        let t_nx = truths(&mut tape, ops, params, nx)?;
        let t_nnx = truths(&mut tape, ops, params, nnx)?;
        let t_xx = truths(&mut tape, ops, params, xx)?;
        let t_xnx = truths(&mut tape, ops, params, xnx)?;
        let flipped: Vec<bool> = x_true.iter().map(|v| !v).collect();
        push(Expression::NotDiffers, agreement(&t_nx, &flipped));
        push(Expression::DoubleNegation, agreement(&t_nnx, &x_true));
        push(Expression::Idempotence, agreement(&t_xx, &x_true));
        push(
            Expression::Complementation,
            agreement(&t_xnx, &vec![true; tuples]),
        );
    }

    for e in Expression::ALL {
        let Some(ops_truth) = e.operands() else {
            continue;
        };
        let mut rng = stream.rng(e.label());
        let mut tape = Tape::new();
        let mut acc: Option<Var> = None;
        for &truth in ops_truth {
            let idx = draw(if truth { &t_pool } else { &f_pool }, &mut rng);
            let v = rows_of(&mut tape, events, &idx);
            acc = Some(match acc {
                None => v,
                Some(prev) => ops.or_rows(&mut tape, params, prev, v)?,
            });
        }
        let expected = ops_truth.iter().any(|&b| b);
        let got = truths(&mut tape, ops, params, acc.expect("operands"))?;
        push(e, agreement(&got, &vec![expected; tuples]));
    }

    let commutativity_gap = {
        let mut rng = stream.rng("commutativity");
        let a_idx = draw(&both, &mut rng);
        let b_idx = draw(&both, &mut rng);
        let mut tape = Tape::new();
        let a = rows_of(&mut tape, events, &a_idx);
        let b = rows_of(&mut tape, events, &b_idx);
        let ab = ops.or_rows(&mut tape, params, a, b)?;
        let ba = ops.or_rows(&mut tape, params, b, a)?;
        let jab = ops.judge_rows(&mut tape, params, ab)?;
        let jba = ops.judge_rows(&mut tape, params, ba)?;
        let gap: f64 = tape
            .value(jab)
            .as_slice()
            .iter()
            .zip(tape.value(jba).as_slice())
            .map(|(x, y)| (x.to_f64_lossy() - y.to_f64_lossy()).abs())
            .sum();
        gap / tuples as f64
    };

    Ok(AccuracyTable {
        t_l,
        events: events.rows(),
        n_true: t_pool.len(),
        n_false: f_pool.len(),
        rows,
        commutativity_gap,
    })
}
