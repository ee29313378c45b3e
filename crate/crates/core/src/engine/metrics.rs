use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranking average precision. Samples are ordered by descending score, ties
/// by ascending id; AP is the mean precision at the rank of each positive.
/// `None` when there is no positive.
pub fn average_precision(scores: &[f64], labels: &[u8], ids: &[u64]) -> Result<Option<f64>> {
    if scores.len() != labels.len() || scores.len() != ids.len() {
        return Err(Error::dim(
            "average_precision",
            scores.len(),
            labels.len().min(ids.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::contract("average_precision: NaN score"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(ids[a].cmp(&ids[b])));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok((hits > 0).then(|| total / hits as f64))
}

/// Per-activity APs and their mean over activities with positives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub per_activity: Vec<Option<f64>>,
    pub map: f64,
    /// Activities without positives, left out of the mean.
    pub skipped: Vec<usize>,
}

pub fn mean_ap(per_activity: Vec<Option<f64>>) -> MapReport {
    let present: Vec<f64> = per_activity.iter().flatten().copied().collect();
    let skipped = per_activity
        .iter()
        .enumerate()
        .filter(|(_, a)| a.is_none())
        .map(|(i, _)| i)
        .collect();
    let map = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    MapReport {
        per_activity,
        map,
        skipped,
    }
}

/// mAP of a score table `scores[sample][activity]`.
pub fn map_of(scores: &[Vec<f64>], labels: &[Vec<u8>], ids: &[u64]) -> Result<MapReport> {
    let a = labels.first().map_or(0, Vec::len);
    let mut per = Vec::with_capacity(a);
    for m in 0..a {
        let s: Vec<f64> = scores.iter().map(|r| r[m]).collect();
        let l: Vec<u8> = labels.iter().map(|r| r[m]).collect();
        per.push(average_precision(&s, &l, ids)?);
    }
    Ok(mean_ap(per))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_enumerated_ranking() {
        let ap = average_precision(&[0.9, 0.8, 0.7], &[1, 0, 1], &[0, 1, 2])
            .unwrap()
            .unwrap();
        assert!((ap - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_ranking_is_one() {
        let ap = average_precision(&[0.1, 0.9, 0.8, 0.2], &[0, 1, 1, 0], &[0, 1, 2, 3])
            .unwrap()
            .unwrap();
        assert_eq!(ap, 1.0);
    }

    #[test]
    fn ties_follow_sample_id() {
        let a = average_precision(&[0.5, 0.5], &[0, 1], &[0, 1])
            .unwrap()
            .unwrap();
        let b = average_precision(&[0.5, 0.5], &[0, 1], &[1, 0])
            .unwrap()
            .unwrap();
        assert_eq!((a, b), (0.5, 1.0));
    }

    #[test]
    fn no_positive_is_skipped() {
        assert_eq!(average_precision(&[0.3], &[0], &[0]).unwrap(), None);
        let r = mean_ap(vec![Some(1.0), None, Some(0.5)]);
        assert_eq!(r.map, 0.75);
        assert_eq!(r.skipped, vec![1]);
    }
}
