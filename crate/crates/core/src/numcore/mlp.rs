use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Matrix, ParamId, ParamSet, Real, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

/// Widths `[in, hidden.., out]` plus the activations between and after layers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub widths: Vec<usize>,
    pub hidden: Activation,
    pub output: Activation,
}

impl LayerSpec {
    pub fn new(widths: &[usize], hidden: Activation, output: Activation) -> Self {
        LayerSpec {
            widths: widths.to_vec(),
            hidden,
            output,
        }
    }
}

/// Stack of affine layers whose weights live in a [`ParamSet`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    spec: LayerSpec,
    weights: Vec<ParamId>,
    biases: Vec<ParamId>,
}

impl Mlp {
    /// Registers `prefix.w{i}` / `prefix.b{i}` with Glorot-uniform weights and
    /// zero biases.
    pub fn new<T: Real>(
        params: &mut ParamSet<T>,
        prefix: &str,
        spec: LayerSpec,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if spec.widths.len() < 2 || spec.widths.contains(&0) {
            return Err(Error::contract(format!(
                "layer spec for `{prefix}` needs >= 2 positive widths, got {:?}",
                spec.widths
            )));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (i, pair) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| T::of(rng.random_range(-limit..=limit)))
                .collect();
            weights.push(params.add(
                format!("{prefix}.w{i}"),
                Matrix::from_vec(fan_in, fan_out, data)?,
            )?);
            biases.push(params.add(format!("{prefix}.b{i}"), Matrix::zeros(1, fan_out))?);
        }
        Ok(Mlp {
            spec,
            weights,
            biases,
        })
    }

    pub fn spec(&self) -> &LayerSpec {
        &self.spec
    }

    pub fn in_width(&self) -> usize {
        self.spec.widths[0]
    }

    pub fn out_width(&self) -> usize {
        *self.spec.widths.last().expect("validated")
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [*w, *b])
    }

    /// Zeroes the last layer, making the pre-activation output identically zero.
    pub fn zero_output_layer<T: Real>(&self, params: &mut ParamSet<T>) {
        let (w, b) = (
            *self.weights.last().expect("validated"),
            *self.biases.last().expect("validated"),
        );
        params.value_mut(w).fill(T::zero());
        params.value_mut(b).fill(T::zero());
    }

    pub fn apply<T: Real>(
        &self,
        tape: &mut Tape<T>,
        params: &ParamSet<T>,
        input: Var,
    ) -> Result<Var> {
        let (_, cols) = tape.shape(input);
        if cols != self.in_width() {
            return Err(Error::dim(
                "mlp_apply",
                format!("{} input columns", self.in_width()),
                cols,
            ));
        }
        let mut x = input;
        let last = self.weights.len() - 1;
        for (i, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wv = tape.param(params, w);
            let bv = tape.param(params, b);
            let z = tape.matmul(x, wv)?;
            let z = tape.add_bias(z, bv)?;
            let act = if i == last {
                self.spec.output
            } else {
                self.spec.hidden
            };
            x = activate(tape, z, act);
        }
        Ok(x)
    }
}

pub(crate) fn activate<T: Real>(tape: &mut Tape<T>, x: Var, act: Activation) -> Var {
    match act {
        Activation::Identity => x,
        Activation::Relu => tape.relu(x),
        Activation::Sigmoid => tape.sigmoid(x),
    }
}

/// Applies `mlp` to `input` on a fresh tape and returns the output values.
pub fn mlp_apply<T: Real>(params: &ParamSet<T>, mlp: &Mlp, input: &Matrix<T>) -> Result<Matrix<T>> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let y = mlp.apply(&mut tape, params, x)?;
    Ok(tape.value(y).clone())
}
