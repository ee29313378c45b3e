use serde::{Deserialize, Serialize};

use super::{Matrix, ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
    SgdMomentum {
        momentum: f64,
    },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum { momentum }
    }
}

/// Cosine decay with warm restarts; each period is `t_mul` times longer than
/// the previous one and its peak is scaled by `m_mul`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineRestarts {
    pub first_decay_steps: u64,
    #[serde(default = "default_t_mul")]
    pub t_mul: f64,
    #[serde(default = "one")]
    pub m_mul: f64,
    #[serde(default)]
    pub alpha: f64,
}

fn default_t_mul() -> f64 {
    2.0
}

fn one() -> f64 {
    1.0
}

impl CosineRestarts {
    pub fn new(first_decay_steps: u64) -> Self {
        CosineRestarts {
            first_decay_steps,
            t_mul: 2.0,
            m_mul: 1.0,
            alpha: 0.0,
        }
    }

    pub fn factor(&self, step: u64) -> f64 {
        let mut frac = step as f64 / self.first_decay_steps as f64;
        let restart = if (self.t_mul - 1.0).abs() < f64::EPSILON {
            let i = frac.floor();
            frac -= i;
            i
        } else {
            let i = ((1.0 - frac * (1.0 - self.t_mul)).ln() / self.t_mul.ln()).floor();
            let elapsed = (1.0 - self.t_mul.powf(i)) / (1.0 - self.t_mul);
            frac = (frac - elapsed) / self.t_mul.powf(i);
            i
        };
        let peak = self.m_mul.powf(restart);
        let cosine = 0.5 * peak * (1.0 + (std::f64::consts::PI * frac).cos());
        (1.0 - self.alpha) * cosine + self.alpha
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub lr: f64,
    #[serde(default)]
    pub schedule: Option<CosineRestarts>,
}

impl OptimizerConfig {
    pub fn adam(lr: f64) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::adam(),
            lr,
            schedule: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::contract(format!(
                "learning rate must be > 0, got {}",
                self.lr
            )));
        }
        match self.kind {
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                    return Err(Error::contract(
                        "adam betas must lie in [0,1) and epsilon > 0",
                    ));
                }
            }
            OptimizerKind::SgdMomentum { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::contract(format!(
                        "momentum must lie in [0,1), got {momentum}"
                    )));
                }
            }
        }
        if let Some(s) = &self.schedule {
            if s.first_decay_steps == 0
                || s.t_mul <= 0.0
                || s.m_mul <= 0.0
                || !(0.0..=1.0).contains(&s.alpha)
            {
                return Err(Error::contract("invalid cosine-restart schedule"));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        self.schedule
            .as_ref()
            .map_or(self.lr, |s| self.lr * s.factor(step))
    }
}

/// Optimizer state: config plus per-parameter moment buffers.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    config: OptimizerConfig,
    first: Vec<Matrix<T>>,
    second: Vec<Matrix<T>>,
}

impl<T: Real> Optimizer<T> {
    pub fn new(config: OptimizerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Optimizer {
            config,
            first: Vec::new(),
            second: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Applies one update from the gradient slots and advances the step.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        for id in params.ids() {
            if !params.grad(id).is_finite() {
                return Err(Error::Numeric {
                    param: params.name(id).to_string(),
                });
            }
        }
        if self.first.len() != params.len() {
            self.first = params
                .ids()
                .map(|id| zeros_like(params.value(id)))
                .collect();
            self.second = self.first.clone();
        }
        let step = params.step();
        let lr = T::of(self.config.lr_at(step));
        match self.config.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                let mu = T::of(momentum);
                for id in params.ids() {
                    let g = params.grad(id).clone();
                    let buf = &mut self.first[id.index()];
                    for (b, &gv) in buf.as_mut_slice().iter_mut().zip(g.as_slice()) {
                        *b = mu * *b + gv;
                    }
                    let buf = buf.clone();
                    for (w, &b) in params
                        .value_mut(id)
                        .as_mut_slice()
                        .iter_mut()
                        .zip(buf.as_slice())
                    {
                        *w = *w - lr * b;
                    }
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                let t = (step + 1) as i32;
                let (b1, b2, eps) = (T::of(beta1), T::of(beta2), T::of(epsilon));
                let c1 = T::one() - b1.powi(t);
                let c2 = T::one() - b2.powi(t);
                for id in params.ids() {
                    let g = params.grad(id).clone();
                    let m = &mut self.first[id.index()];
                    let v = &mut self.second[id.index()];
                    let w = params.value_mut(id);
                    for (((w, m), v), &gv) in w
                        .as_mut_slice()
                        .iter_mut()
                        .zip(m.as_mut_slice())
                        .zip(v.as_mut_slice())
                        .zip(g.as_slice())
                    {
                        *m = b1 * *m + (T::one() - b1) * gv;
                        *v = b2 * *v + (T::one() - b2) * gv * gv;
                        let mhat = *m / c1;
                        let vhat = *v / c2;
                        *w = *w - lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        params.bump_step();
        Ok(())
    }
}

fn zeros_like<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    Matrix::zeros(m.rows(), m.cols())
}
