use std::collections::HashSet;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{
    ActivityDictionary, ActivityEntry, PrimitiveDictionary, PrimitiveKind, BODY_ONLY_ACTIVITIES,
    BUILTIN_ACTIVITY_VERBS,
};
use crate::numcore::SeedStream;
use crate::rulebase::{parse_rule, serialize_rule, Provenance, Rule};

/// Beta shape pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaShape {
    pub const fn new(alpha: f64, beta: f64) -> Self {
        BetaShape { alpha, beta }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite())
        {
            return Err(Error::contract(format!(
                "{what}: Beta shapes must be positive"
            )));
        }
        Ok(())
    }
}

/// Detection probabilities for present and absent primitives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorNoise {
    pub present: BetaShape,
    pub absent: BetaShape,
}

impl Default for DetectorNoise {
    fn default() -> Self {
        DetectorNoise {
            present: BetaShape::new(8.0, 2.0),
            absent: BetaShape::new(2.0, 8.0),
        }
    }
}

/// Instance scores drawn per activity depending on its label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstNoise {
    pub positive: BetaShape,
    pub negative: BetaShape,
    /// One score per sample instead of one per activity.
    pub shared: bool,
}

impl Default for InstNoise {
    fn default() -> Self {
        InstNoise {
            positive: BetaShape::new(5.0, 3.0),
            negative: BetaShape::new(3.0, 5.0),
            shared: false,
        }
    }
}

/// Down-weights a subset of primitive scores per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relevance {
    pub primitives: Vec<usize>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub primitives: usize,
    pub activities: usize,
    pub min_rules: usize,
    pub max_rules: usize,
    pub min_antecedents: usize,
    pub max_antecedents: usize,
    pub samples: usize,
    pub negatives_per_positive: f64,
    pub test_fraction: f64,
    /// Chance that a primitive outside the chosen rule is present anyway.
    pub background_rate: f64,
    /// Share of negatives built from a rule body with one antecedent removed.
    pub hard_negative_rate: f64,
    pub detector: DetectorNoise,
    pub noiseless: bool,
    pub inst: InstNoise,
    /// Width of the pooled visual feature; 0 disables it.
    pub visual_dim: usize,
    pub visual_noise: f64,
    pub relevance: Option<Relevance>,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            primitives: 20,
            activities: 8,
            min_rules: 1,
            max_rules: 3,
            min_antecedents: 2,
            max_antecedents: 3,
            samples: 2000,
            negatives_per_positive: 4.0,
            test_fraction: 0.2,
            background_rate: 0.15,
            hard_negative_rate: 0.5,
            detector: DetectorNoise::default(),
            noiseless: false,
            inst: InstNoise::default(),
            visual_dim: 0,
            visual_noise: 0.3,
            relevance: None,
        }
    }
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::contract(format!("world spec: {m}")));
        if self.activities == 0 {
            return fail("need at least one activity".into());
        }
        if self.min_rules == 0 || self.min_rules > self.max_rules {
            return fail(format!(
                "rule count range {}..={}",
                self.min_rules, self.max_rules
            ));
        }
        if self.min_antecedents == 0 || self.min_antecedents > self.max_antecedents {
            return fail(format!(
                "antecedent range {}..={}",
                self.min_antecedents, self.max_antecedents
            ));
        }
        if self.primitives < self.max_antecedents {
            return fail(format!(
                "{} primitives cannot hold {}-antecedent rules",
                self.primitives, self.max_antecedents
            ));
        }
        let builtin = PrimitiveDictionary::builtin().len();
        if self.primitives > builtin {
            return fail(format!("at most {builtin} primitives are available"));
        }
        if !(self.negatives_per_positive > 0.0 && self.negatives_per_positive.is_finite()) {
            return fail("negatives_per_positive must be positive".into());
        }
        for (name, v) in [
            ("test_fraction", self.test_fraction),
            ("background_rate", self.background_rate),
            ("hard_negative_rate", self.hard_negative_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} = {v} outside [0,1]"));
            }
        }
        self.detector.present.validate("detector.present")?;
        self.detector.absent.validate("detector.absent")?;
        self.inst.positive.validate("inst.positive")?;
        self.inst.negative.validate("inst.negative")?;
        if self.visual_noise.is_nan() || self.visual_noise < 0.0 {
            return fail("visual_noise must be >= 0".into());
        }
        if let Some(r) = &self.relevance {
            if !(0.0..=1.0).contains(&r.weight)
                || r.primitives.iter().any(|&i| i >= self.primitives)
            {
                return fail("relevance weight or primitive ids out of range".into());
            }
        }
        Ok(())
    }
}

/// Vocabulary plus ground-truth rules.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub seed: u64,
    pub spec: WorldSpec,
    pub primitives: PrimitiveDictionary,
    pub activities: ActivityDictionary,
    pub rules: Vec<Rule>,
    /// Per-primitive prototypes for the pooled visual feature.
    pub prototypes: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct WorldFile {
    seed: u64,
    spec: WorldSpec,
    primitives: Vec<crate::events::PrimitiveEntry>,
    activities: Vec<ActivityEntry>,
    rules: Vec<String>,
}

impl World {
    pub fn p(&self) -> usize {
        self.primitives.len()
    }

    pub fn a(&self) -> usize {
        self.activities.len()
    }

    pub fn rules_for(&self, m: usize) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(move |r| r.activity() == m)
    }

    /// Boolean labels implied by the ground-truth rules.
    pub fn oracle(&self, present: &[bool]) -> Vec<u8> {
        let mut labels = vec![0u8; self.a()];
        for r in &self.rules {
            if r.fires(present) {
                labels[r.activity()] = 1;
            }
        }
        labels
    }

    pub fn to_json(&self) -> String {
        let file = WorldFile {
            seed: self.seed,
            spec: self.spec.clone(),
            primitives: self.primitives.entries().to_vec(),
            activities: self.activities.entries().to_vec(),
            rules: self
                .rules
                .iter()
                .map(|r| serialize_rule(r, &self.primitives, &self.activities))
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("world serializes")
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: WorldFile = serde_json::from_str(text).map_err(|e| Error::Format {
            path: origin.to_string(),
            msg: e.to_string(),
        })?;
        let primitives = PrimitiveDictionary::new(file.primitives)?;
        let activities = ActivityDictionary::new(file.activities)?;
        let rules = file
            .rules
            .iter()
            .map(|t| parse_rule(t, &primitives, &activities))
            .collect::<Result<Vec<_>>>()?;
        let prototypes = prototypes(&file.spec, primitives.len(), file.seed);
        Ok(World {
            seed: file.seed,
            spec: file.spec,
            primitives,
            activities,
            rules,
            prototypes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

fn prototypes(spec: &WorldSpec, p: usize, seed: u64) -> Vec<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = SeedStream::new(seed).rng("visual-prototypes");
    (0..p)
        .map(|_| {
            (0..spec.visual_dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect()
        })
        .collect()
}

/// Draws a vocabulary and pairwise-distinct ground-truth rules.
pub fn make_world(spec: &WorldSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let stream = SeedStream::new(seed);

    let builtin = PrimitiveDictionary::builtin();
    let mut rng = stream.rng("primitives");
    let mut ids: Vec<usize> = (0..builtin.len()).collect();
    ids.shuffle(&mut rng);
    let mut chosen: Vec<usize> = ids[..spec.primitives].to_vec();
    chosen.sort_unstable();
    let entries = chosen
        .iter()
        .enumerate()
        .map(|(new_id, &old)| {
            let mut e = builtin.entries()[old].clone();
            e.id = new_id;
            e
        })
        .collect();
    let primitives = PrimitiveDictionary::new(entries)?;

    let objects: Vec<String> = builtin
        .entries()
        .iter()
        .filter(|e| e.kind == PrimitiveKind::Object)
        .filter_map(|e| e.object.clone())
        .collect();
    let mut names: Vec<(String, Option<String>)> = Vec::new();
    for verb in BUILTIN_ACTIVITY_VERBS {
        if BODY_ONLY_ACTIVITIES.contains(verb) {
            names.push((verb.to_string(), None));
        } else {
            for o in &objects {
                names.push((verb.to_string(), Some(o.clone())));
            }
        }
    }
    if spec.activities > names.len() {
        return Err(Error::contract(format!(
            "at most {} activities are available",
            names.len()
        )));
    }
    let mut rng = stream.rng("activities");
    let picked: Vec<(String, Option<String>)> = names
        .choose_multiple(&mut rng, spec.activities)
        .cloned()
        .collect();
    let activities = ActivityDictionary::new(
        picked
            .into_iter()
            .enumerate()
            .map(|(id, (verb, object))| ActivityEntry { id, verb, object })
            .collect(),
    )?;

    let mut rng = stream.rng("rules");
    let mut bodies: HashSet<Vec<usize>> = HashSet::new();
    let mut rules = Vec::new();
    let all: Vec<usize> = (0..spec.primitives).collect();
    for m in 0..spec.activities {
        let count = rng.random_range(spec.min_rules..=spec.max_rules);
        for _ in 0..count {
            let mut placed = false;
            for _ in 0..1000 {
                let k = rng.random_range(spec.min_antecedents..=spec.max_antecedents);
                let mut body: Vec<usize> = all.choose_multiple(&mut rng, k).copied().collect();
                body.sort_unstable();
                if bodies.insert(body.clone()) {
                    rules.push(Rule::new(m, body, Provenance::HumanPrior)?);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::contract(
                    "world spec is infeasible: cannot draw pairwise distinct rules",
                ));
            }
        }
    }
    let prototypes = prototypes(spec, spec.primitives, seed);
    Ok(World {
        seed,
        spec: spec.clone(),
        primitives,
        activities,
        rules,
        prototypes,
    })
}
