use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Provenance, Rule};
use crate::error::{Error, Result};
use crate::numcore::SeedStream;

/// Direction in which a prior probability is perturbed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `(1 − β)·c'`
    Decrease,
    /// `c' + β·(1 − c')`
    Increase,
}

impl Branch {
    pub fn apply(self, c: f64, beta: f64) -> f64 {
        match self {
            Branch::Decrease => (1.0 - beta) * c,
            Branch::Increase => c + beta * (1.0 - c),
        }
    }
}

/// Independent Bernoulli inclusion probabilities for one activity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorProfile {
    pub activity: usize,
    pub prior: Vec<f64>,
    pub beta: f64,
    pub branches: Vec<Branch>,
    pub probs: Vec<f64>,
}

impl GeneratorProfile {
    pub fn with_branches(
        activity: usize,
        prior: Vec<f64>,
        beta: f64,
        branches: Vec<Branch>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::contract(format!("β = {beta} outside [0,1]")));
        }
        if prior.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::contract("prior probabilities must lie in [0,1]"));
        }
        if branches.len() != prior.len() {
            return Err(Error::dim("GeneratorProfile", prior.len(), branches.len()));
        }
        let probs = prior
            .iter()
            .zip(&branches)
            .map(|(&c, b)| b.apply(c, beta).clamp(0.0, 1.0))
            .collect();
        Ok(GeneratorProfile {
            activity,
            prior,
            beta,
            branches,
            probs,
        })
    }
}

/// Perturbs `prior` by `beta`, choosing the branch of every primitive at random.
pub fn perturbed_generator(
    activity: usize,
    prior: &[f64],
    beta: f64,
    seed: u64,
) -> Result<GeneratorProfile> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::contract(format!("β = {beta} outside [0,1]")));
    }
    let mut rng = SeedStream::new(seed).rng("branches");
    let branches = prior
        .iter()
        .map(|_| {
            if rng.random_bool(0.5) {
                Branch::Increase
            } else {
                Branch::Decrease
            }
        })
        .collect();
    GeneratorProfile::with_branches(activity, prior.to_vec(), beta, branches)
}

const MAX_EMPTY_DRAWS: usize = 1000;

/// `n` rules whose antecedents are independent Bernoulli draws; empty draws
/// are redrawn.
pub fn sample_rules(gen: &GeneratorProfile, n: usize, seed: u64) -> Result<Vec<Rule>> {
    if n == 0 {
        return Err(Error::contract("sample_rules needs n >= 1"));
    }
    let mut rng = SeedStream::new(seed).rng("rules");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut empty = 0;
        loop {
            let body: Vec<usize> = gen
                .probs
                .iter()
                .enumerate()
                .filter(|(_, &c)| rng.random::<f64>() < c)
                .map(|(i, _)| i)
                .collect();
            if !body.is_empty() {
                out.push(Rule::new(
                    gen.activity,
                    body,
                    Provenance::Generated { beta: gen.beta },
                )?);
                break;
            }
            empty += 1;
            if empty >= MAX_EMPTY_DRAWS {
                return Err(Error::DegenerateGenerator { tries: empty });
            }
        }
    }
    Ok(out)
}

/// `θ = 0..=10`, `β = 0.1·θ`.
pub fn default_betas() -> Vec<f64> {
    (0..=10).map(|t| t as f64 / 10.0).collect()
}

/// One generator per β, `per_generator` rules each.
pub fn generate_candidates(
    activity: usize,
    prior: &[f64],
    betas: &[f64],
    per_generator: usize,
    seed: u64,
) -> Result<Vec<Rule>> {
    let stream = SeedStream::new(seed).child(&format!("activity-{activity}"));
    let mut out = Vec::with_capacity(betas.len() * per_generator);
    for (k, &beta) in betas.iter().enumerate() {
        let gen = perturbed_generator(activity, prior, beta, stream.derive(&format!("gen-{k}")))?;
        out.extend(sample_rules(
            &gen,
            per_generator,
            stream.derive(&format!("draw-{k}")),
        )?);
    }
    Ok(out)
}

/// `KL(ℬ(p) ‖ ℬ(q))` in nats.
pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    let term = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * (a / b).ln() };
    term(p, q) + term(1.0 - p, 1.0 - q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbation_arithmetic() {
        assert!((Branch::Decrease.apply(0.8, 0.5) - 0.4).abs() < 1e-15);
        assert!((Branch::Increase.apply(0.8, 0.5) - 0.9).abs() < 1e-15);
        for b in [Branch::Decrease, Branch::Increase] {
            assert_eq!(b.apply(0.37, 0.0), 0.37);
        }
        assert!(perturbed_generator(0, &[0.5], 1.2, 0).is_err());
        assert!(perturbed_generator(0, &[0.5], -0.1, 0).is_err());
    }

    #[test]
    fn kl_grows_with_beta() {
        for c in 1..=9 {
            let c = c as f64 / 10.0;
            for b in [Branch::Decrease, Branch::Increase] {
                let mut last = -1.0;
                for beta in default_betas().into_iter().take(10) {
                    let kl = bernoulli_kl(c, b.apply(c, beta));
                    assert!(kl >= last, "c={c} {b:?} β={beta}");
                    last = kl;
                }
            }
        }
    }

    #[test]
    fn all_ones_include_everything() {
        let g = GeneratorProfile::with_branches(2, vec![1.0; 4], 0.0, vec![Branch::Increase; 4])
            .unwrap();
        for r in sample_rules(&g, 10, 3).unwrap() {
            assert_eq!(r.antecedents(), &[0, 1, 2, 3]);
            assert_eq!(r.activity(), 2);
        }
    }

    #[test]
    fn empty_generator_is_degenerate() {
        let g = GeneratorProfile::with_branches(0, vec![0.0; 3], 0.0, vec![Branch::Decrease; 3])
            .unwrap();
        assert!(matches!(
            sample_rules(&g, 1, 0),
            Err(Error::DegenerateGenerator { tries: 1000 })
        ));
    }

    #[test]
    fn default_schedule_gives_55_rules() {
        let prior = vec![0.1, 0.9, 0.5, 0.3];
        let a = generate_candidates(1, &prior, &default_betas(), 5, 7).unwrap();
        assert_eq!(a.len(), 55);
        assert_eq!(
            a,
            generate_candidates(1, &prior, &default_betas(), 5, 7).unwrap()
        );
    }

    #[test]
    fn marginals_match_probabilities() {
        let prior = vec![0.1, 0.35, 0.6, 0.85, 0.5];
        let g = perturbed_generator(0, &prior, 0.3, 11).unwrap();
        let rules = sample_rules(&g, 10_000, 12).unwrap();
        // empty draws are rejected, so compare against the conditional rate
        let p_empty: f64 = g.probs.iter().map(|c| 1.0 - c).product();
        for (i, &c) in g.probs.iter().enumerate() {
            let freq = rules
                .iter()
                .filter(|r| r.antecedents().contains(&i))
                .count() as f64
                / 1e4;
            assert!(
                (freq - c / (1.0 - p_empty)).abs() < 0.02,
                "primitive {i}: {freq} vs {c}"
            );
        }
    }
}
