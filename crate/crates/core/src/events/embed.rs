use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::TokenRole;
use crate::error::{Error, Result};
use crate::numcore::{fnv1a, splitmix64, Real};

/// Deterministic stand-in for a pretrained language model: every
/// `(role, token)` hashes to a Gaussian vector, token vectors are averaged
/// and the mean is scaled to unit length.
pub fn embed_token_phrase<T: Real>(
    tokens: &[(TokenRole, String)],
    dim: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if dim == 0 {
        return Err(Error::contract("embedding dimension must be > 0"));
    }
    if tokens.is_empty() {
        return Err(Error::contract("cannot embed an empty phrase"));
    }
    let mut acc = vec![0.0f64; dim];
    for (role, tok) in tokens {
        let key = format!("{}:{}", role.tag(), tok.trim().to_lowercase());
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ fnv1a(key.as_bytes())));
        for a in acc.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *a += g;
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Numeric {
            param: "token embedding".into(),
        });
    }
    Ok(acc.into_iter().map(|v| T::of(v / norm)).collect())
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
