use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a rule came from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    HumanPrior,
    Annotation,
    Generated { beta: f64 },
    Searched,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::HumanPrior => f.write_str("human-prior"),
            Provenance::Annotation => f.write_str("annotation"),
            Provenance::Generated { beta } => write!(f, "generated({beta})"),
            Provenance::Searched => f.write_str("searched"),
        }
    }
}

/// `P_a ∧ P_b ∧ … → A_m`, with antecedents kept sorted and distinct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    activity: usize,
    antecedents: Vec<usize>,
    provenance: Provenance,
}

impl Rule {
    pub fn new(
        activity: usize,
        antecedents: impl IntoIterator<Item = usize>,
        provenance: Provenance,
    ) -> Result<Self> {
        let mut antecedents: Vec<usize> = antecedents.into_iter().collect();
        antecedents.sort_unstable();
        antecedents.dedup();
        if antecedents.is_empty() {
            return Err(Error::contract("a rule needs at least one antecedent"));
        }
        Ok(Rule {
            activity,
            antecedents,
            provenance,
        })
    }

    /// Rule from an inclusion mask `r ∈ {0,1}^p`.
    pub fn from_mask(activity: usize, mask: &[bool], provenance: Provenance) -> Result<Self> {
        Self::new(
            activity,
            mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i),
            provenance,
        )
    }

    pub fn activity(&self) -> usize {
        self.activity
    }

    pub fn antecedents(&self) -> &[usize] {
        &self.antecedents
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    /// Same activity and antecedent set, whatever the provenance.
    pub fn same_body(&self, other: &Rule) -> bool {
        self.activity == other.activity && self.antecedents == other.antecedents
    }

    pub fn mask(&self, p: usize) -> Vec<bool> {
        let mut m = vec![false; p];
        for &a in &self.antecedents {
            if a < p {
                m[a] = true;
            }
        }
        m
    }

    /// Boolean truth of the body on a presence vector.
    pub fn fires(&self, present: &[bool]) -> bool {
        self.antecedents
            .iter()
            .all(|&a| present.get(a).copied().unwrap_or(false))
    }
}
