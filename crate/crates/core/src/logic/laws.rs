use crate::error::{Error, Result};
use crate::events::EventVector;
use crate::numcore::{Matrix, ParamSet, Real, Tape, Var};

use super::LogicOps;

/// Discriminator readings that enter the four logic laws for one event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LawJudgements<T> {
    pub x: T,
    pub not_x: T,
    pub not_not_x: T,
    pub x_or_x: T,
    pub x_or_not_x: T,
}

impl<T: Real> LawJudgements<T> {
    /// `[negation, double negation, idempotence, complementation]` penalties.
    pub fn penalties(&self) -> [T; 4] {
        let one = T::one();
        let sq = |v: T| v * v;
        [
            sq(self.not_x - (one - self.x)),
            sq(self.not_not_x - self.x),
            sq(self.x_or_x - self.x),
            sq(self.x_or_not_x - one),
        ]
    }

    pub fn loss(&self) -> T {
        self.penalties().into_iter().sum()
    }
}

/// Per-event penalties as n×1 columns, in the order of
/// [`LawJudgements::penalties`].
pub fn law_terms<T: Real>(
    tape: &mut Tape<T>,
    ops: &LogicOps,
    params: &ParamSet<T>,
    x: Var,
) -> Result<[Var; 4]> {
    let n = tape.shape(x).0;
    if n == 0 {
        return Err(Error::contract("logic laws need at least one event"));
    }
    let nx = ops.not_rows(tape, params, x)?;
    let nnx = ops.not_rows(tape, params, nx)?;
    let left = tape.concat_rows(&[x, x])?;
    let right = tape.concat_rows(&[x, nx])?;
    let ors = ops.or_rows(tape, params, left, right)?;
    let all = tape.concat_rows(&[x, nx, nnx, ors])?;
    let j = ops.judge_rows(tape, params, all)?;
    let mut part = |k: usize| tape.gather_rows(j, (k * n..(k + 1) * n).collect());
    let (jx, jn, jnn, jxx, jxn) = (part(0)?, part(1)?, part(2)?, part(3)?, part(4)?);

    let s = tape.add(jn, jx)?;
    let neg = tape.affine(s, T::one(), -T::one());
    let dbl = tape.sub(jnn, jx)?;
    let idem = tape.sub(jxx, jx)?;
    let comp = tape.affine(jxn, T::one(), -T::one());
    Ok([
        tape.square(neg),
        tape.square(dbl),
        tape.square(idem),
        tape.square(comp),
    ])
}

/// Sum over events and laws of the squared law violations.
pub fn logic_law_loss_rows<T: Real>(
    tape: &mut Tape<T>,
    ops: &LogicOps,
    params: &ParamSet<T>,
    x: Var,
) -> Result<Var> {
    let terms = law_terms(tape, ops, params, x)?;
    let all = tape.concat_rows(&terms)?;
    Ok(tape.sum(all))
}

/// [`logic_law_loss_rows`] evaluated on a set of events.
pub fn logic_law_loss<T: Real>(
    ops: &LogicOps,
    params: &ParamSet<T>,
    events: &[EventVector<T>],
) -> Result<T> {
    if events.is_empty() {
        return Err(Error::contract("logic laws need at least one event"));
    }
    let rows: Vec<Vec<T>> = events.iter().map(|e| e.0.clone()).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Matrix::from_rows(&rows)?);
    let l = logic_law_loss_rows(&mut tape, ops, params, x)?;
    Ok(tape.value(l).get(0, 0))
}
