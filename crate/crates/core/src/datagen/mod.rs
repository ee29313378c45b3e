//! Seeded synthetic worlds: a primitive vocabulary, ground-truth rules,
//! probabilistic detections, label-noise injection and serialization.

mod dataset;
mod world;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution, Normal};

pub use dataset::{Dataset, InstScore, Sample, Split};
pub use world::{make_world, BetaShape, DetectorNoise, InstNoise, Relevance, World, WorldSpec};

use crate::error::{Error, Result};
use crate::numcore::SeedStream;
use crate::rulebase::{aggregate_rules, Provenance, Rule};

fn beta(shape: BetaShape) -> Beta<f64> {
    Beta::new(shape.alpha, shape.beta).expect("validated Beta shape")
}

fn background(p: usize, rate: f64, rng: &mut impl Rng) -> Vec<bool> {
    (0..p).map(|_| rng.random_bool(rate)).collect()
}

/// A presence vector that fires no rule of `world`.
fn negative_presence(world: &World, rng: &mut impl Rng) -> Vec<bool> {
    let spec = &world.spec;
    let p = world.p();
    for _ in 0..100 {
        let mut present = background(p, spec.background_rate, rng);
        if rng.random_bool(spec.hard_negative_rate) {
            let rule = world.rules.choose(rng).expect("world has rules");
            let drop = rng.random_range(0..rule.antecedents().len());
            for (k, &a) in rule.antecedents().iter().enumerate() {
                present[a] = k != drop;
            }
        }
        if !world.rules.iter().any(|r| r.fires(&present)) {
            return present;
        }
    }
    let mut present = background(p, spec.background_rate, rng);
    while let Some(r) = world.rules.iter().find(|r| r.fires(&present)) {
        let a = *r.antecedents().choose(rng).expect("nonempty body");
        present[a] = false;
    }
    present
}

fn draw_sample(
    world: &World,
    stream: &SeedStream,
    index: usize,
    positive: bool,
) -> (Vec<bool>, Vec<f64>, InstScore, Option<Vec<f64>>) {
    let spec = &world.spec;
    let key = index.to_string();
    let mut rng = stream.child("structure").rng(&key);
    let present = if positive {
        let rule = world.rules.choose(&mut rng).expect("world has rules");
        let mut present = background(world.p(), spec.background_rate, &mut rng);
        for &a in rule.antecedents() {
            present[a] = true;
        }
        present
    } else {
        negative_presence(world, &mut rng)
    };
    let labels = world.oracle(&present);

    let mut rng = stream.child("detector").rng(&key);
    let (on, off) = (beta(spec.detector.present), beta(spec.detector.absent));
    let mut s_pri: Vec<f64> = present
        .iter()
        .map(|&b| {
            let noisy = if b {
                on.sample(&mut rng)
            } else {
                off.sample(&mut rng)
            };
            if spec.noiseless {
                if b {
                    1.0
                } else {
                    0.0
                }
            } else {
                noisy
            }
        })
        .collect();
    if let Some(rel) = &spec.relevance {
        for &i in &rel.primitives {
            s_pri[i] *= rel.weight;
        }
    }

    let mut rng = stream.child("inst").rng(&key);
    let (pos, neg) = (beta(spec.inst.positive), beta(spec.inst.negative));
    let s_inst = if spec.inst.shared {
        let any = labels.contains(&1);
        InstScore::Shared(if any {
            pos.sample(&mut rng)
        } else {
            neg.sample(&mut rng)
        })
    } else {
        InstScore::PerActivity(
            labels
                .iter()
                .map(|&l| {
                    if l == 1 {
                        pos.sample(&mut rng)
                    } else {
                        neg.sample(&mut rng)
                    }
                })
                .collect(),
        )
    };

    let visual = (spec.visual_dim > 0).then(|| {
        let mut rng = stream.child("visual").rng(&key);
        let noise = Normal::new(0.0, spec.visual_noise.max(1e-12)).expect("valid normal");
        let mut v = vec![0.0; spec.visual_dim];
        for (i, proto) in world.prototypes.iter().enumerate() {
            for (x, &w) in v.iter_mut().zip(proto) {
                *x += s_pri[i] * w / world.p() as f64;
            }
        }
        for x in &mut v {
            *x += noise.sample(&mut rng);
        }
        v
    });
    (present, s_pri, s_inst, visual)
}

/// Draws `n` samples with one positive per `negatives_per_positive`
/// negatives, shuffled and split.
pub fn sample_dataset(world: &World, n: usize, seed: u64) -> Result<Dataset> {
    if n < 5 {
        return Err(Error::contract(format!(
            "sample_dataset needs n >= 5, got {n}"
        )));
    }
    let spec = &world.spec;
    let stream = SeedStream::new(seed);
    let n_pos = ((n as f64) / (1.0 + spec.negatives_per_positive)).round() as usize;
    let n_pos = n_pos.clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.rng("order"));
    let n_test = ((n as f64) * spec.test_fraction).round() as usize;
    let mut test_ids: Vec<usize> = (0..n).collect();
    test_ids.shuffle(&mut stream.rng("split"));
    let mut is_test = vec![false; n];
    for &i in &test_ids[..n_test] {
        is_test[i] = true;
    }

    let mut samples = Vec::with_capacity(n);
    for (slot, &gen_index) in order.iter().enumerate() {
        let (present, s_pri, s_inst, visual) =
            draw_sample(world, &stream, gen_index, gen_index < n_pos);
        samples.push(Sample {
            id: slot as u64,
            split: if is_test[slot] {
                Split::Test
            } else {
                Split::Train
            },
            labels: world.oracle(&present),
            s_pri,
            s_inst,
            visual,
        });
    }
    Dataset::new(samples)
}

/// Replaces all primitive scores of `⌊n·mr⌋` samples by Uniform(0,1) draws.
/// The chosen samples for a smaller `mr` are a prefix of those for a larger
/// one, and each sample's replacement depends only on its id, so sweeps
/// under one seed are nested.
pub fn inject_label_noise(dataset: &Dataset, mr: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&mr) {
        return Err(Error::contract(format!("noise ratio {mr} outside [0,1]")));
    }
    let n = dataset.len();
    let count = ((n as f64) * mr + 1e-9).floor() as usize;
    let stream = SeedStream::new(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream.rng("noise-order"));
    let mut out = dataset.clone();
    for &i in &order[..count.min(n)] {
        let s = &mut out.samples[i];
        let mut rng = stream.child("noise").rng(&s.id.to_string());
        for v in &mut s.s_pri {
            *v = rng.random::<f64>();
        }
    }
    out.noise_ratio = mr;
    Ok(out)
}

/// The noise ratios swept by default.
pub const DEFAULT_NOISE_SWEEP: [f64; 7] = [0.0, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5];

/// Rules written by simulated annotators: each restates a ground-truth rule
/// with one antecedent dropped, swapped or added at random. The variants
/// of each activity are aggregated to `per_activity` rules; exact
/// ground-truth bodies are removed when `exclude_truth` is set.
pub fn annotator_rules(
    world: &World,
    annotators: usize,
    per_activity: usize,
    exclude_truth: bool,
    seed: u64,
) -> Result<Vec<Rule>> {
    let stream = SeedStream::new(seed);
    let p = world.p();
    let mut out = Vec::new();
    for m in 0..world.a() {
        let mut rng = stream.child("annotators").rng(&m.to_string());
        let mut drafts = Vec::new();
        for _ in 0..annotators {
            for gt in world.rules_for(m) {
                let mut body = gt.antecedents().to_vec();
                match rng.random_range(0..3) {
                    0 if body.len() > 1 => {
                        let k = rng.random_range(0..body.len());
                        body.remove(k);
                    }
                    1 => {
                        let k = rng.random_range(0..body.len());
                        body[k] = rng.random_range(0..p);
                    }
                    _ => body.push(rng.random_range(0..p)),
                }
                let rule = Rule::new(m, body, Provenance::HumanPrior)?;
                let is_truth = world.rules_for(m).any(|g| g.same_body(&rule));
                if !(exclude_truth && is_truth) {
                    drafts.push(rule);
                }
            }
        }
        out.extend(aggregate_rules(&drafts, p, per_activity));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> World {
        make_world(
            &WorldSpec {
                samples: 300,
                ..WorldSpec::default()
            },
            9,
        )
        .unwrap()
    }

    #[test]
    fn noiseless_scores_are_exact_and_match_the_oracle() {
        let mut w = small();
        w.spec.noiseless = true;
        let d = sample_dataset(&w, 300, 4).unwrap();
        for s in &d.samples {
            assert!(s.s_pri.iter().all(|&v| v == 0.0 || v == 1.0));
            assert_eq!(w.oracle(&s.present(0.5)), s.labels);
        }
    }

    #[test]
    fn positive_negative_ratio_is_one_to_four() {
        let w = small();
        let d = sample_dataset(&w, 500, 1).unwrap();
        let pos = d.samples.iter().filter(|s| s.is_positive()).count();
        assert_eq!(pos, 100);
        let test = d.samples.iter().filter(|s| s.split == Split::Test).count();
        assert_eq!(test, 100);
    }

    #[test]
    fn noiseless_variant_shares_structure() {
        let w = small();
        let mut clean = w.clone();
        clean.spec.noiseless = true;
        let a = sample_dataset(&w, 200, 8).unwrap();
        let b = sample_dataset(&clean, 200, 8).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.labels, y.labels);
            assert_eq!(x.split, y.split);
            assert!(y.s_pri.iter().all(|&t| t == 0.0 || t == 1.0));
        }
    }

    #[test]
    fn serialization_is_deterministic() {
        let w = small();
        let a = sample_dataset(&w, 120, 2).unwrap().to_jsonl();
        let b = sample_dataset(&w, 120, 2).unwrap().to_jsonl();
        assert_eq!(a, b);
        let back = Dataset::from_jsonl(&a, "mem").unwrap();
        assert_eq!(back.to_jsonl(), a);
    }

    #[test]
    fn label_noise_extremes_and_nesting() {
        let w = small();
        let d = sample_dataset(&w, 200, 3).unwrap();
        assert_eq!(inject_label_noise(&d, 0.0, 1).unwrap().samples, d.samples);
        let all = inject_label_noise(&d, 1.0, 1).unwrap();
        assert!(all
            .samples
            .iter()
            .zip(&d.samples)
            .all(|(a, b)| a.s_pri != b.s_pri));
        let small_mr = inject_label_noise(&d, 0.05, 1).unwrap();
        let big_mr = inject_label_noise(&d, 0.2, 1).unwrap();
        let changed = |x: &Dataset| -> Vec<usize> {
            (0..d.len())
                .filter(|&i| x.samples[i].s_pri != d.samples[i].s_pri)
                .collect()
        };
        assert_eq!(changed(&small_mr).len(), 10);
        for i in changed(&small_mr) {
            assert_eq!(small_mr.samples[i].s_pri, big_mr.samples[i].s_pri);
        }
        assert!(inject_label_noise(&d, 1.5, 1).is_err());
    }

    #[test]
    fn annotator_rules_can_exclude_ground_truth() {
        let w = small();
        let rules = annotator_rules(&w, 5, 4, true, 2).unwrap();
        for r in &rules {
            assert!(!w.rules.iter().any(|g| g.same_body(r)));
        }
        assert!(rules.iter().all(|r| r.activity() < w.a()));
    }
}
