use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Instance-level score: one per activity, or one shared by all.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstScore {
    Shared(f64),
    PerActivity(Vec<f64>),
}

impl InstScore {
    pub fn for_activity(&self, m: usize) -> f64 {
        match self {
            InstScore::Shared(v) => *v,
            InstScore::PerActivity(v) => v[m],
        }
    }

    pub fn is_shared(&self) -> bool {
        matches!(self, InstScore::Shared(_))
    }

    /// Multiplies every entry by `c`, clamping to `[0, 1]`.
    pub fn scaled(&self, c: f64) -> InstScore {
        match self {
            InstScore::Shared(v) => InstScore::Shared((v * c).clamp(0.0, 1.0)),
            InstScore::PerActivity(v) => {
                InstScore::PerActivity(v.iter().map(|x| (x * c).clamp(0.0, 1.0)).collect())
            }
        }
    }
}

/// One image/instance: primitive detections, instance scores, labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub split: Split,
    pub s_pri: Vec<f64>,
    pub s_inst: InstScore,
    pub labels: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visual: Option<Vec<f64>>,
}

impl Sample {
    pub fn validate(&self, p: usize, a: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::contract(format!("sample {}: {msg}", self.id)));
        if self.s_pri.len() != p {
            return bad(format!(
                "{} primitive scores, expected {p}",
                self.s_pri.len()
            ));
        }
        if self.labels.len() != a {
            return bad(format!("{} labels, expected {a}", self.labels.len()));
        }
        if !self.s_pri.iter().all(|v| (0.0..=1.0).contains(v)) {
            return bad("primitive score outside [0,1]".into());
        }
        if self.labels.iter().any(|&l| l > 1) {
            return bad("label is not 0/1".into());
        }
        let inst_ok = match &self.s_inst {
            InstScore::Shared(v) => (0.0..=1.0).contains(v),
            InstScore::PerActivity(v) => v.len() == a && v.iter().all(|x| (0.0..=1.0).contains(x)),
        };
        if !inst_ok {
            return bad("instance score malformed".into());
        }
        Ok(())
    }

    pub fn is_positive(&self) -> bool {
        self.labels.contains(&1)
    }

    /// Presence mask at `threshold`.
    pub fn present(&self, threshold: f64) -> Vec<bool> {
        self.s_pri.iter().map(|&s| s > threshold).collect()
    }
}

/// Ordered samples plus the label-noise ratio that was applied to them.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub noise_ratio: f64,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let (p, a) = match samples.first() {
            Some(s) => (s.s_pri.len(), s.labels.len()),
            None => (0, 0),
        };
        let mut ids = std::collections::HashSet::new();
        for s in &samples {
            s.validate(p, a)?;
            if !ids.insert(s.id) {
                return Err(Error::contract(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset {
            samples,
            noise_ratio: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_primitives(&self) -> usize {
        self.samples.first().map_or(0, |s| s.s_pri.len())
    }

    pub fn n_activities(&self) -> usize {
        self.samples.first().map_or(0, |s| s.labels.len())
    }

    pub fn split(&self, split: Split) -> Dataset {
        Dataset {
            samples: self
                .samples
                .iter()
                .filter(|s| s.split == split)
                .cloned()
                .collect(),
            noise_ratio: self.noise_ratio,
        }
    }

    pub fn positives(&self, m: usize) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.labels[m] == 1)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let line = serde_json::to_string(s).expect("sample serializes");
            let _ = writeln!(out, "{line}");
        }
        out
    }

    pub fn from_jsonl(text: &str, origin: &str) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let s: Sample = serde_json::from_str(line).map_err(|e| Error::Format {
                path: format!("{origin}:{}", i + 1),
                msg: e.to_string(),
            })?;
            samples.push(s);
        }
        Self::new(samples)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text, &path.display().to_string())
    }
}
