use rand::Rng;

use crate::error::{Error, Result};
use crate::events::EventVector;
use crate::numcore::{Activation, LayerSpec, Matrix, Mlp, ParamId, ParamSet, Real, Tape, Var};

/// The shared logic modules: `NOT` (d→d), `OR` (2d→d) and the truth
/// discriminator (d→1, sigmoid). One instance serves every event and every
/// activity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicOps {
    not: Mlp,
    or: Mlp,
    judge: Mlp,
    dim: usize,
}

impl LogicOps {
    pub fn new<T: Real>(params: &mut ParamSet<T>, d: usize, rng: &mut impl Rng) -> Result<Self> {
        if d == 0 {
            return Err(Error::contract("event dimension must be > 0"));
        }
        let not = Mlp::new(
            params,
            "logic.not",
            LayerSpec::new(&[d, 2 * d, d], Activation::Relu, Activation::Identity),
            rng,
        )?;
        let or = Mlp::new(
            params,
            "logic.or",
            LayerSpec::new(&[2 * d, 2 * d, d], Activation::Relu, Activation::Identity),
            rng,
        )?;
        let judge = Mlp::new(
            params,
            "logic.judge",
            LayerSpec::new(&[d, d, 1], Activation::Relu, Activation::Sigmoid),
            rng,
        )?;
        Ok(LogicOps {
            not,
            or,
            judge,
            dim: d,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn judge_mlp(&self) -> &Mlp {
        &self.judge
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.not
            .param_ids()
            .chain(self.or.param_ids())
            .chain(self.judge.param_ids())
            .collect()
    }

    fn check(&self, tape: &Tape<impl Real>, x: Var, op: &'static str) -> Result<()> {
        let cols = tape.shape(x).1;
        if cols != self.dim {
            return Err(Error::dim(op, self.dim, cols));
        }
        Ok(())
    }

    /// Row-wise negation of an n×d batch.
    pub fn not_rows<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        x: Var,
    ) -> Result<Var> {
        self.check(tape, x, "not_op")?;
        self.not.apply(tape, params, x)
    }

    /// Row-wise disjunction of two n×d batches.
    pub fn or_rows<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        a: Var,
        b: Var,
    ) -> Result<Var> {
        self.check(tape, a, "or_op")?;
        self.check(tape, b, "or_op")?;
        if tape.shape(a).0 != tape.shape(b).0 {
            return Err(Error::dim("or_op", tape.shape(a).0, tape.shape(b).0));
        }
        let ab = tape.concat_cols(&[a, b])?;
        self.or.apply(tape, params, ab)
    }

    /// Truth probability of each row, as an n×1 column.
    pub fn judge_rows<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        x: Var,
    ) -> Result<Var> {
        self.check(tape, x, "judge")?;
        self.judge.apply(tape, params, x)
    }

    pub fn not_op<T: Real>(
        &self,
        params: &ParamSet<T>,
        e: &EventVector<T>,
    ) -> Result<EventVector<T>> {
        let mut t = Tape::new();
        let x = t.constant(e.to_row());
        let y = self.not_rows(&mut t, params, x)?;
        EventVector::new(t.value(y).as_slice().to_vec())
    }

    pub fn or_op<T: Real>(
        &self,
        params: &ParamSet<T>,
        a: &EventVector<T>,
        b: &EventVector<T>,
    ) -> Result<EventVector<T>> {
        let mut t = Tape::new();
        let x = t.constant(a.to_row());
        let y = t.constant(b.to_row());
        let z = self.or_rows(&mut t, params, x, y)?;
        EventVector::new(t.value(z).as_slice().to_vec())
    }

    pub fn judge<T: Real>(&self, params: &ParamSet<T>, e: &EventVector<T>) -> Result<T> {
        let mut t = Tape::new();
        let x = t.constant(e.to_row());
        let y = self.judge_rows(&mut t, params, x)?;
        Ok(t.value(y).get(0, 0))
    }

    /// Judges every row of a matrix.
    pub fn judge_matrix<T: Real>(
        &self,
        params: &ParamSet<T>,
        events: &Matrix<T>,
    ) -> Result<Vec<T>> {
        let mut t = Tape::new();
        let x = t.constant(events.clone());
        let y = self.judge_rows(&mut t, params, x)?;
        Ok(t.value(y).as_slice().to_vec())
    }
}
