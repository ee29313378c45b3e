use super::{ParamSet, Real, Tape, Var};
use crate::error::{Error, Result};

/// Compares tape gradients against central differences.
///
/// `loss` rebuilds the scalar on a fresh tape from the current parameter
/// values. Up to `max_coords` evenly spaced coordinates of each parameter
/// are probed. Returns the largest `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<T, F>(params: &mut ParamSet<T>, loss: F, eps: T, max_coords: usize) -> Result<T>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamSet<T>) -> Result<Var>,
{
    if eps <= T::zero() {
        return Err(Error::contract("grad_check needs eps > 0"));
    }
    let mut tape = Tape::new();
    let l = loss(&mut tape, params)?;
    let grads = tape.backward(l)?;
    let mut worst = T::zero();
    let two = T::of(2.0);
    for id in params.ids().collect::<Vec<_>>() {
        let n = params.value(id).len();
        let analytic = grads.wrt(id).cloned();
        let stride = (n / max_coords.max(1)).max(1);
        for k in (0..n).step_by(stride).take(max_coords.max(1)) {
            let orig = params.value(id).as_slice()[k];
            params.value_mut(id).as_mut_slice()[k] = orig + eps;
            let up = eval(params, &loss)?;
            params.value_mut(id).as_mut_slice()[k] = orig - eps;
            let down = eval(params, &loss)?;
            params.value_mut(id).as_mut_slice()[k] = orig;
            let numeric = (up - down) / (two * eps);
            let a = analytic.as_ref().map_or(T::zero(), |g| g.as_slice()[k]);
            let err = (a - numeric).abs() / a.abs().max(T::one());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn eval<T, F>(params: &ParamSet<T>, loss: &F) -> Result<T>
where
    T: Real,
    F: Fn(&mut Tape<T>, &ParamSet<T>) -> Result<Var>,
{
    let mut tape = Tape::new();
    let l = loss(&mut tape, params)?;
    tape.value(l)
        .to_scalar()
        .ok_or_else(|| Error::contract("grad_check loss is not 1x1"))
}
