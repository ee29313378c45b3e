use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Pasta,
    Object,
    Scene,
}

/// One primitive. Part states carry `part` + `verb` (+ `object` unless
/// body-only); objects and scenes carry their name in `object`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveEntry {
    pub id: usize,
    pub kind: PrimitiveKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verb: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenRole {
    Part,
    Verb,
    Object,
}

impl TokenRole {
    pub fn tag(self) -> &'static str {
        match self {
            TokenRole::Part => "part",
            TokenRole::Verb => "verb",
            TokenRole::Object => "object",
        }
    }
}

fn slug(s: &str) -> String {
    s.trim().replace(' ', "_")
}

impl PrimitiveEntry {
    pub fn pasta(id: usize, part: &str, verb: &str, object: Option<&str>) -> Self {
        PrimitiveEntry {
            id,
            kind: PrimitiveKind::Pasta,
            part: Some(part.to_string()),
            verb: Some(verb.to_string()),
            object: object.map(str::to_string),
        }
    }

    pub fn object(id: usize, name: &str) -> Self {
        PrimitiveEntry {
            id,
            kind: PrimitiveKind::Object,
            part: None,
            verb: None,
            object: Some(name.to_string()),
        }
    }

    pub fn scene(id: usize, name: &str) -> Self {
        PrimitiveEntry {
            kind: PrimitiveKind::Scene,
            ..Self::object(id, name)
        }
    }

    /// Phrase used in rule files, e.g. `hand-hold-sth`, `cup`.
    pub fn phrase(&self) -> String {
        self.tokens()
            .iter()
            .map(|(_, t)| slug(t))
            .collect::<Vec<_>>()
            .join("-")
    }

    pub fn tokens(&self) -> Vec<(TokenRole, String)> {
        let mut out = Vec::new();
        if let Some(p) = &self.part {
            out.push((TokenRole::Part, p.clone()));
        }
        if let Some(v) = &self.verb {
            out.push((TokenRole::Verb, v.clone()));
        }
        if let Some(o) = &self.object {
            out.push((TokenRole::Object, o.clone()));
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            PrimitiveKind::Pasta => self.part.is_some() && self.verb.is_some(),
            PrimitiveKind::Object | PrimitiveKind::Scene => {
                self.object.is_some() && self.part.is_none()
            }
        };
        if !ok {
            return Err(Error::contract(format!(
                "primitive {} has fields inconsistent with kind {:?}",
                self.id, self.kind
            )));
        }
        if self.tokens().iter().any(|(_, t)| t.trim().is_empty()) {
            return Err(Error::contract(format!(
                "primitive {} has an empty token",
                self.id
            )));
        }
        Ok(())
    }
}

fn check_dense(ids: impl Iterator<Item = usize>, what: &str) -> Result<()> {
    for (expect, id) in ids.enumerate() {
        if id != expect {
            return Err(Error::contract(format!(
                "{what} ids must be dense and ascending: expected {expect}, found {id}"
            )));
        }
    }
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimitiveDictionary {
    entries: Vec<PrimitiveEntry>,
    by_phrase: HashMap<String, usize>,
}

impl PrimitiveDictionary {
    pub fn new(entries: Vec<PrimitiveEntry>) -> Result<Self> {
        check_dense(entries.iter().map(|e| e.id), "primitive")?;
        let mut by_phrase = HashMap::new();
        for e in &entries {
            e.validate()?;
            if by_phrase.insert(e.phrase(), e.id).is_some() {
                return Err(Error::contract(format!(
                    "duplicate primitive phrase `{}`",
                    e.phrase()
                )));
            }
        }
        Ok(PrimitiveDictionary { entries, by_phrase })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PrimitiveEntry] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&PrimitiveEntry> {
        self.entries.get(id)
    }

    pub fn phrase(&self, id: usize) -> String {
        self.entries[id].phrase()
    }

    pub fn id_of(&self, phrase: &str) -> Result<usize> {
        self.by_phrase
            .get(phrase.trim())
            .copied()
            .ok_or_else(|| Error::Dictionary {
                token: phrase.trim().to_string(),
                context: "primitive dictionary".into(),
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<PrimitiveEntry> =
            serde_json::from_str(text).map_err(|e| Error::Format {
                path: "primitive dictionary".into(),
                msg: e.to_string(),
            })?;
        Self::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::new(read_json(path)?)
    }

    /// 93 body-part states over six parts plus the 80 common object classes.
    pub fn builtin() -> Self {
        let mut entries = Vec::new();
        for (part, verbs) in BUILTIN_PASTA {
            for verb in *verbs {
                let object = (!BODY_ONLY_VERBS.contains(verb)).then_some("sth");
                entries.push(PrimitiveEntry::pasta(entries.len(), part, verb, object));
            }
        }
        for obj in BUILTIN_OBJECTS {
            entries.push(PrimitiveEntry::object(entries.len(), obj));
        }
        Self::new(entries).expect("builtin dictionary is valid")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEntry {
    pub id: usize,
    pub verb: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<String>,
}

impl ActivityEntry {
    /// `verb_object`, or just the verb for body-only activities.
    pub fn name(&self) -> String {
        match &self.object {
            Some(o) => format!("{}_{}", slug(&self.verb), slug(o)),
            None => slug(&self.verb),
        }
    }

    /// Tokens with the part slot filled by `human`.
    pub fn tokens(&self) -> Vec<(TokenRole, String)> {
        let mut t = vec![
            (TokenRole::Part, "human".to_string()),
            (TokenRole::Verb, self.verb.clone()),
        ];
        if let Some(o) = &self.object {
            t.push((TokenRole::Object, o.clone()));
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityDictionary {
    entries: Vec<ActivityEntry>,
    by_name: HashMap<String, usize>,
}

impl ActivityDictionary {
    pub fn new(entries: Vec<ActivityEntry>) -> Result<Self> {
        check_dense(entries.iter().map(|e| e.id), "activity")?;
        let mut by_name = HashMap::new();
        for e in &entries {
            if e.verb.trim().is_empty() {
                return Err(Error::contract(format!(
                    "activity {} has an empty verb",
                    e.id
                )));
            }
            if by_name.insert(e.name(), e.id).is_some() {
                return Err(Error::contract(format!(
                    "duplicate activity `{}`",
                    e.name()
                )));
            }
        }
        Ok(ActivityDictionary { entries, by_name })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ActivityEntry] {
        &self.entries
    }

    pub fn name(&self, id: usize) -> String {
        self.entries[id].name()
    }

    pub fn id_of(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name.trim())
            .copied()
            .ok_or_else(|| Error::Dictionary {
                token: name.trim().to_string(),
                context: "activity dictionary".into(),
            })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("dictionary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let entries: Vec<ActivityEntry> =
            serde_json::from_str(text).map_err(|e| Error::Format {
                path: "activity dictionary".into(),
                msg: e.to_string(),
            })?;
        Self::new(entries)
    }
}

pub(crate) const BODY_ONLY_VERBS: &[&str] = &[
    "no activity",
    "crawl",
    "dance",
    "martial art",
    "material art",
    "bend",
    "kneel",
    "fall down",
    "walk away",
    "jump down",
    "raise up",
];

pub(crate) const BUILTIN_PASTA: &[(&str, &[&str])] = &[
    (
        "head",
        &[
            "eat",
            "inspect",
            "talk with",
            "talk to",
            "close with",
            "kiss",
            "raise up",
            "lick",
            "blow",
            "drink with",
            "smell",
            "wear",
            "listen to",
            "no activity",
        ],
    ),
    (
        "arm",
        &[
            "carry",
            "close to",
            "hug",
            "swing",
            "crawl",
            "dance",
            "material art",
            "no activity",
        ],
    ),
    (
        "hand",
        &[
            "hold",
            "carry",
            "reach for",
            "touch",
            "put on",
            "twist",
            "wear",
            "throw",
            "throw out",
            "write on",
            "point with",
            "point to",
            "use sth to point to",
            "press",
            "squeeze",
            "scratch",
            "pinch",
            "gesture to",
            "push",
            "pull",
            "pull with",
            "wash",
            "wash with",
            "hold in both hands",
            "lift",
            "raise",
            "feed",
            "cut with",
            "catch with",
            "pour into",
            "crawl",
            "dance",
            "martial art",
            "no activity",
        ],
    ),
    (
        "hip",
        &[
            "sit on",
            "sit in",
            "sit beside",
            "close with",
            "bend",
            "no activity",
        ],
    ),
    (
        "thigh",
        &[
            "walk with",
            "walk to",
            "run with",
            "run to",
            "jump with",
            "close with",
            "straddle",
            "jump down",
            "walk away",
            "bend",
            "kneel",
            "crawl",
            "dance",
            "material art",
            "no activity",
        ],
    ),
    (
        "foot",
        &[
            "stand on",
            "step on",
            "walk with",
            "walk to",
            "run with",
            "run to",
            "dribble",
            "kick",
            "jump down",
            "jump with",
            "walk away",
            "crawl",
            "dance",
            "fall down",
            "martial art",
            "no activity",
        ],
    ),
];

pub(crate) const BUILTIN_OBJECTS: &[&str] = &[
    "airplane",
    "apple",
    "backpack",
    "banana",
    "baseball bat",
    "baseball glove",
    "bear",
    "bed",
    "bench",
    "bicycle",
    "bird",
    "boat",
    "book",
    "bottle",
    "bowl",
    "broccoli",
    "bus",
    "cake",
    "car",
    "carrot",
    "cat",
    "cell phone",
    "chair",
    "clock",
    "couch",
    "cow",
    "cup",
    "dining table",
    "dog",
    "donut",
    "elephant",
    "fire hydrant",
    "fork",
    "frisbee",
    "giraffe",
    "hair drier",
    "handbag",
    "horse",
    "hot dog",
    "keyboard",
    "kite",
    "knife",
    "laptop",
    "microwave",
    "motorcycle",
    "mouse",
    "orange",
    "oven",
    "parking meter",
    "person",
    "pizza",
    "potted plant",
    "refrigerator",
    "remote",
    "sandwich",
    "scissors",
    "sheep",
    "sink",
    "skateboard",
    "skis",
    "snowboard",
    "spoon",
    "sports ball",
    "stop sign",
    "suitcase",
    "surfboard",
    "teddy bear",
    "tennis racket",
    "tie",
    "toaster",
    "toilet",
    "toothbrush",
    "traffic light",
    "train",
    "truck",
    "tv",
    "umbrella",
    "vase",
    "wine glass",
    "zebra",
];

pub(crate) const BUILTIN_ACTIVITY_VERBS: &[&str] = &[
    "carry",
    "catch",
    "drink with",
    "eat",
    "feed",
    "hold",
    "hug",
    "inspect",
    "kick",
    "kiss",
    "lift",
    "pet",
    "pick up",
    "push",
    "read",
    "ride",
    "sit on",
    "throw",
    "wash",
    "watch",
    "wear",
    "cut with",
    "open",
    "pull",
    "repair",
    "walk",
    "run",
    "jump",
    "dance",
    "sing",
];

pub(crate) const BODY_ONLY_ACTIVITIES: &[&str] = &["walk", "run", "jump", "dance", "sing"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_93_part_states_and_80_objects() {
        let d = PrimitiveDictionary::builtin();
        assert_eq!(d.len(), 173);
        let pasta = d
            .entries()
            .iter()
            .filter(|e| e.kind == PrimitiveKind::Pasta)
            .count();
        assert_eq!(pasta, 93);
        assert_eq!(
            d.id_of("hand-hold-sth").unwrap(),
            d.id_of(" hand-hold-sth ").unwrap()
        );
        assert!(d.id_of("foot-no_activity").is_ok());
        assert!(d
            .get(d.id_of("foot-no_activity").unwrap())
            .unwrap()
            .object
            .is_none());
    }

    #[test]
    fn json_round_trip() {
        let d = PrimitiveDictionary::builtin();
        let back = PrimitiveDictionary::from_json(&d.to_json()).unwrap();
        assert_eq!(back, d);
        for e in d.entries() {
            assert_eq!(back.id_of(&e.phrase()).unwrap(), e.id);
        }
    }

    #[test]
    fn ids_must_be_dense() {
        let bad = vec![
            PrimitiveEntry::object(0, "cup"),
            PrimitiveEntry::object(2, "bowl"),
        ];
        assert!(PrimitiveDictionary::new(bad).is_err());
        let dup = vec![
            PrimitiveEntry::object(0, "cup"),
            PrimitiveEntry::object(1, "cup"),
        ];
        assert!(PrimitiveDictionary::new(dup).is_err());
    }

    #[test]
    fn activity_names() {
        let a = ActivityDictionary::new(vec![
            ActivityEntry {
                id: 0,
                verb: "drink with".into(),
                object: Some("cup".into()),
            },
            ActivityEntry {
                id: 1,
                verb: "walk".into(),
                object: None,
            },
        ])
        .unwrap();
        assert_eq!(a.id_of("drink_with_cup").unwrap(), 0);
        assert_eq!(a.name(1), "walk");
        assert!(matches!(a.id_of("fly"), Err(Error::Dictionary { .. })));
    }
}
