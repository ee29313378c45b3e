use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Matrix, ParamSet, Real};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "neurologic-ckpt-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Self-describing parameter snapshot. `meta` carries whatever the owner
/// needs to rebuild the parameter layout (model config, dictionaries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub step: u64,
    pub params: Vec<ParamRecord>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn capture<T: Real>(params: &ParamSet<T>, meta: serde_json::Value) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            step: params.step(),
            params: params
                .ids()
                .map(|id| {
                    let v = params.value(id);
                    ParamRecord {
                        name: params.name(id).to_string(),
                        rows: v.rows(),
                        cols: v.cols(),
                        values: v.as_slice().iter().map(|x| x.to_f64_lossy()).collect(),
                    }
                })
                .collect(),
            meta,
        }
    }

    /// Copies values into a parameter set with the same names and shapes.
    pub fn restore<T: Real>(&self, params: &mut ParamSet<T>) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Format {
                path: "checkpoint".into(),
                msg: format!("unknown format tag `{}`", self.format),
            });
        }
        if self.params.len() != params.len() {
            return Err(Error::dim(
                "Checkpoint::restore",
                params.len(),
                self.params.len(),
            ));
        }
        for rec in &self.params {
            let id = params.id(&rec.name).ok_or_else(|| Error::Dictionary {
                token: rec.name.clone(),
                context: "checkpoint parameters".into(),
            })?;
            let data = rec.values.iter().map(|&v| T::of(v)).collect();
            let m = Matrix::from_vec(rec.rows, rec.cols, data)?;
            if !m.is_finite() {
                return Err(Error::Numeric {
                    param: rec.name.clone(),
                });
            }
            params.assign(id, m)?;
        }
        params.set_step(self.step);
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_bits() {
        let mut ps = ParamSet::<f64>::new();
        let a = ps
            .add(
                "a",
                Matrix::from_vec(1, 3, vec![0.1, -1.0 / 3.0, 1e-300]).unwrap(),
            )
            .unwrap();
        ps.add("b", Matrix::scalar(std::f64::consts::PI)).unwrap();
        ps.bump_step();
        let ck = Checkpoint::capture(&ps, serde_json::json!({"d": 4}));
        let parsed: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        let mut fresh = ParamSet::<f64>::new();
        fresh.add("a", Matrix::zeros(1, 3)).unwrap();
        fresh.add("b", Matrix::zeros(1, 1)).unwrap();
        parsed.restore(&mut fresh).unwrap();
        assert_eq!(fresh.value(a), ps.value(a));
        assert_eq!(fresh.step(), 1);
        assert_eq!(fresh.checksum(), ps.checksum());
    }

    #[test]
    fn wrong_format_tag_is_rejected() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("a", Matrix::zeros(1, 1)).unwrap();
        let mut ck = Checkpoint::capture(&ps, serde_json::Value::Null);
        ck.format = "other".into();
        assert!(ck.restore(&mut ps).is_err());
    }
}
