//! Primitive and activity vocabularies, the deterministic phrase embedding,
//! projection into event space, and expectation mixing of primitive events.

mod dictionary;
mod embed;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use dictionary::{
    ActivityDictionary, ActivityEntry, PrimitiveDictionary, PrimitiveEntry, PrimitiveKind,
    TokenRole,
};
pub(crate) use dictionary::{BODY_ONLY_ACTIVITIES, BUILTIN_ACTIVITY_VERBS};
pub use embed::{cosine, embed_token_phrase};

use crate::error::{Error, Result};
use crate::numcore::{Activation, LayerSpec, Matrix, Mlp, ParamSet, Real, Tape, Var};

/// A point in event space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventVector<T>(pub Vec<T>);

impl<T: Real> EventVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                param: "event vector".into(),
            });
        }
        Ok(EventVector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn to_row(&self) -> Matrix<T> {
        Matrix::row_vector(&self.0)
    }
}

/// Embeds every entry of a dictionary, one row per id.
pub fn embed_primitives<T: Real>(
    dict: &PrimitiveDictionary,
    dim: usize,
    seed: u64,
) -> Result<Matrix<T>> {
    let rows = dict
        .entries()
        .iter()
        .map(|e| embed_token_phrase(&e.tokens(), dim, seed))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

pub fn embed_activities<T: Real>(
    dict: &ActivityDictionary,
    dim: usize,
    seed: u64,
) -> Result<Matrix<T>> {
    let rows = dict
        .entries()
        .iter()
        .map(|e| embed_token_phrase(&e.tokens(), dim, seed))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_rows(&rows)
}

/// Maps raw representations (width `raw_dim`) into event space (width `d`)
/// with a two-layer MLP and a linear output.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventProjector {
    mlp: Mlp,
}

impl EventProjector {
    pub fn new<T: Real>(
        params: &mut ParamSet<T>,
        name: &str,
        raw_dim: usize,
        d: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let spec = LayerSpec::new(&[raw_dim, d, d], Activation::Relu, Activation::Identity);
        Ok(EventProjector {
            mlp: Mlp::new(params, name, spec, rng)?,
        })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn raw_dim(&self) -> usize {
        self.mlp.in_width()
    }

    pub fn dim(&self) -> usize {
        self.mlp.out_width()
    }

    pub fn project<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        raw: Var,
    ) -> Result<Var> {
        self.mlp.apply(tape, params, raw)
    }
}

/// Projects a single raw representation.
pub fn project_event<T: Real>(
    projector: &EventProjector,
    params: &ParamSet<T>,
    raw: &[T],
) -> Result<EventVector<T>> {
    if raw.len() != projector.raw_dim() {
        return Err(Error::dim("project_event", projector.raw_dim(), raw.len()));
    }
    let mut tape = Tape::new();
    let x = tape.constant(Matrix::row_vector(raw));
    let y = projector.project(&mut tape, params, x)?;
    EventVector::new(tape.value(y).as_slice().to_vec())
}

/// Expected event of a primitive observed with probability `score`:
/// `e·score + not_e·(1 − score)`.
pub fn mix_expectation<T: Real>(
    e: &EventVector<T>,
    not_e: &EventVector<T>,
    score: T,
) -> Result<EventVector<T>> {
    if !(score >= T::zero() && score <= T::one()) {
        return Err(Error::contract(format!(
            "score must lie in [0,1], got {score}"
        )));
    }
    if e.dim() != not_e.dim() {
        return Err(Error::dim("mix_expectation", e.dim(), not_e.dim()));
    }
    Ok(EventVector(
        e.0.iter()
            .zip(&not_e.0)
            .map(|(&a, &b)| a * score + b * (T::one() - score))
            .collect(),
    ))
}

/// Row-wise [`mix_expectation`] on a tape; `scores` is an n×1 column.
pub fn mix_expectation_rows<T: Real>(
    tape: &mut Tape<T>,
    e: Var,
    not_e: Var,
    scores: Var,
) -> Result<Var> {
    let diff = tape.sub(e, not_e)?;
    let scaled = tape.scale_rows(diff, scores)?;
    tape.add(not_e, scaled)
}

/// Visual events are already probabilistic and enter reasoning unchanged.
pub fn visual_event<T: Real>(e: EventVector<T>) -> EventVector<T> {
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::{grad_check, SeedStream};

    fn ev(v: &[f64]) -> EventVector<f64> {
        EventVector(v.to_vec())
    }

    #[test]
    fn mixing_endpoints_and_midpoint() {
        let e = ev(&[1.0, -2.0, 0.5]);
        let n = ev(&[-1.0, 4.0, 0.0]);
        assert_eq!(mix_expectation(&e, &n, 1.0).unwrap(), e);
        assert_eq!(mix_expectation(&e, &n, 0.0).unwrap(), n);
        assert_eq!(mix_expectation(&e, &n, 0.5).unwrap(), ev(&[0.0, 1.0, 0.25]));
        assert!(mix_expectation(&e, &n, 1.5).is_err());
        assert!(mix_expectation(&e, &n, -0.1).is_err());
        assert!(mix_expectation(&e, &ev(&[1.0]), 0.3).is_err());
    }

    #[test]
    fn mixing_is_affine_on_a_grid() {
        let e = ev(&[0.3, -0.7]);
        let n = ev(&[2.0, 0.1]);
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let m = mix_expectation(&e, &n, s).unwrap();
            for i in 0..2 {
                assert_eq!(m.0[i], s * e.0[i] + (1.0 - s) * n.0[i]);
            }
        }
    }

    #[test]
    fn visual_path_is_identity() {
        let e = ev(&[0.1, 0.2]);
        assert_eq!(visual_event(e.clone()), e);
    }

    #[test]
    fn zero_projector_maps_zero_to_zero() {
        let mut ps = ParamSet::<f64>::new();
        let mut rng = SeedStream::new(0).rng("p");
        let proj = EventProjector::new(&mut ps, "proj", 16, 64, &mut rng).unwrap();
        for id in proj.mlp().param_ids().collect::<Vec<_>>() {
            ps.value_mut(id).fill(0.0);
        }
        let out = project_event(&proj, &ps, &[0.0; 16]).unwrap();
        assert_eq!(out.dim(), 64);
        assert!(out.0.iter().all(|&v| v == 0.0));
        assert!(project_event(&proj, &ps, &[0.0; 3]).is_err());
    }

    #[test]
    fn projector_gradient_matches_finite_differences() {
        let mut ps = ParamSet::<f64>::new();
        let mut rng = SeedStream::new(5).rng("p");
        let proj = EventProjector::new(&mut ps, "proj", 6, 4, &mut rng).unwrap();
        let raw = Matrix::from_vec(
            3,
            6,
            (0..18).map(|i| ((i * 7) % 11) as f64 / 5.0 - 1.0).collect(),
        )
        .unwrap();
        let scores = Matrix::column(&[0.2, 0.9, 0.5]);
        let err = grad_check(
            &mut ps,
            |t, p| {
                let x = t.constant(raw.clone());
                let e = proj.project(t, p, x)?;
                let n = t.affine(e, -0.5, 0.1);
                let s = t.constant(scores.clone());
                let m = mix_expectation_rows(t, e, n, s)?;
                let sq = t.square(m);
                Ok(t.sum(sq))
            },
            1e-5,
            64,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn dictionary_embedding_rows() {
        let d = PrimitiveDictionary::builtin();
        let m: Matrix<f64> = embed_primitives(&d, 32, 1).unwrap();
        assert_eq!(m.shape(), (173, 32));
    }
}
