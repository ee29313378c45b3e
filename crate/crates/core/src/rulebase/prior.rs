use crate::datagen::Sample;
use crate::error::{Error, Result};

/// Smoothing added to every probability in [`npmi`].
pub const NPMI_EPSILON: f64 = 1e-6;

/// Min-max normalization to `[0,1]`; a constant input maps to all 0.5.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Co-occurrence counts of each primitive (score above `threshold`) with
/// activity `m`, min-max normalized.
pub fn cooccurrence_prior(samples: &[Sample], m: usize, threshold: f64) -> Result<Vec<f64>> {
    let p = samples.first().map_or(0, |s| s.s_pri.len());
    let mut counts = vec![0.0; p];
    let mut positives = 0;
    for s in samples.iter().filter(|s| s.labels.get(m) == Some(&1)) {
        positives += 1;
        for (c, &v) in counts.iter_mut().zip(&s.s_pri) {
            if v > threshold {
                *c += 1.0;
            }
        }
    }
    if positives == 0 {
        return Err(Error::EmptyClass { activity: m });
    }
    Ok(min_max(&counts))
}

/// `ln(p(x,y) / (p(x)p(y))) / −ln p(x,y)` with every probability smoothed by
/// `eps`, clamped to `[−1, 1]`.
pub fn npmi_value(pxy: f64, px: f64, py: f64, eps: f64) -> f64 {
    let (pxy, px, py) = (pxy + eps, px + eps, py + eps);
    let v = (pxy / (px * py)).ln() / -pxy.ln();
    v.clamp(-1.0, 1.0)
}

/// Primitive-by-activity NPMI table (`p` rows, `A` columns).
pub fn npmi(samples: &[Sample], threshold: f64, eps: f64) -> Result<Vec<Vec<f64>>> {
    if samples.is_empty() {
        return Err(Error::InsufficientSample(
            "npmi over an empty dataset".into(),
        ));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::contract("npmi smoothing must be > 0"));
    }
    let p = samples[0].s_pri.len();
    let a = samples[0].labels.len();
    let n = samples.len() as f64;
    let mut px = vec![0.0; p];
    let mut py = vec![0.0; a];
    let mut pxy = vec![vec![0.0; a]; p];
    for s in samples {
        for (i, &v) in s.s_pri.iter().enumerate() {
            if v > threshold {
                px[i] += 1.0;
                for (m, &l) in s.labels.iter().enumerate() {
                    if l == 1 {
                        pxy[i][m] += 1.0;
                    }
                }
            }
        }
        for (m, &l) in s.labels.iter().enumerate() {
            if l == 1 {
                py[m] += 1.0;
            }
        }
    }
    Ok((0..p)
        .map(|i| {
            (0..a)
                .map(|m| npmi_value(pxy[i][m] / n, px[i] / n, py[m] / n, eps))
                .collect()
        })
        .collect())
}
