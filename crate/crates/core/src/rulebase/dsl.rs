use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Provenance, Rule};
use crate::error::{Error, Result};
use crate::events::{ActivityDictionary, PrimitiveDictionary};

/// Parses `phrase ("&" phrase)* "->" activity`.
pub fn parse_rule(
    text: &str,
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
) -> Result<Rule> {
    parse_line(text, 1, primitives, activities)
}

fn parse_line(
    text: &str,
    line: usize,
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
) -> Result<Rule> {
    let syntax = |msg: &str| Error::Syntax {
        line,
        msg: msg.to_string(),
    };
    let mut halves = text.split("->");
    let (body, head) = match (halves.next(), halves.next(), halves.next()) {
        (Some(b), Some(h), None) => (b.trim(), h.trim()),
        (_, None, _) => return Err(syntax("expected `->`")),
        _ => return Err(syntax("more than one `->`")),
    };
    if body.is_empty() {
        return Err(syntax("rule has no antecedents"));
    }
    if head.is_empty() {
        return Err(syntax("rule has no activity"));
    }
    let mut ids = Vec::new();
    for phrase in body.split('&') {
        let phrase = phrase.trim();
        if phrase.is_empty() {
            return Err(syntax("empty antecedent between `&`"));
        }
        ids.push(primitives.id_of(phrase)?);
    }
    Rule::new(activities.id_of(head)?, ids, Provenance::HumanPrior)
}

pub fn serialize_rule(
    rule: &Rule,
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
) -> String {
    let body: Vec<String> = rule
        .antecedents()
        .iter()
        .map(|&a| primitives.phrase(a))
        .collect();
    format!(
        "{} -> {}",
        body.join(" & "),
        activities.name(rule.activity())
    )
}

/// Sidecar record for one rule line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineMeta {
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

/// Rule file text and its provenance sidecar (JSON keyed by line number).
pub fn render_rule_file(
    rules: &[(Rule, Option<f64>)],
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
    header: &str,
) -> (String, String) {
    let mut text = String::new();
    let mut line = 0;
    for h in header.lines() {
        let _ = writeln!(text, "# {h}");
        line += 1;
    }
    let mut sidecar = BTreeMap::new();
    for (rule, loss) in rules {
        line += 1;
        let _ = writeln!(text, "{}", serialize_rule(rule, primitives, activities));
        sidecar.insert(
            line,
            LineMeta {
                provenance: rule.provenance(),
                loss: *loss,
            },
        );
    }
    let sidecar = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    (text, sidecar)
}

/// Inverse of [`render_rule_file`]; lines without a sidecar record keep
/// the human-prior provenance.
pub fn parse_rule_file(
    text: &str,
    sidecar: Option<&str>,
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
) -> Result<Vec<(Rule, Option<f64>)>> {
    let meta: BTreeMap<usize, LineMeta> = match sidecar {
        Some(s) => serde_json::from_str(s).map_err(|e| Error::Format {
            path: "rule sidecar".into(),
            msg: e.to_string(),
        })?,
        None => BTreeMap::new(),
    };
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let rule = parse_line(content, line, primitives, activities)?;
        let (rule, loss) = match meta.get(&line) {
            Some(m) => (rule.with_provenance(m.provenance), m.loss),
            None => (rule, None),
        };
        out.push((rule, loss));
    }
    Ok(out)
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".provenance.json");
    PathBuf::from(s)
}

pub fn save_rule_file(
    path: &Path,
    rules: &[(Rule, Option<f64>)],
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
    header: &str,
) -> Result<()> {
    let (text, sidecar) = render_rule_file(rules, primitives, activities, header);
    std::fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    std::fs::write(&side, sidecar).map_err(|e| Error::io(side, e))
}

pub fn load_rule_file(
    path: &Path,
    primitives: &PrimitiveDictionary,
    activities: &ActivityDictionary,
) -> Result<Vec<(Rule, Option<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let sidecar = match std::fs::read_to_string(&side) {
        Ok(s) => Some(s),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(side, e)),
    };
    parse_rule_file(&text, sidecar.as_deref(), primitives, activities).map_err(|e| match e {
        Error::Syntax { line, msg } => Error::Syntax {
            line,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{ActivityEntry, PrimitiveEntry};

    fn dicts() -> (PrimitiveDictionary, ActivityDictionary) {
        let p = PrimitiveDictionary::new(vec![
            PrimitiveEntry::pasta(0, "hand", "hold", Some("sth")),
            PrimitiveEntry::object(1, "cup"),
            PrimitiveEntry::pasta(2, "head", "eat", Some("sth")),
        ])
        .unwrap();
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
        (p, a)
    }

    #[test]
    fn resolves_phrases() {
        let (p, a) = dicts();
        let r = parse_rule("hand-hold-sth & cup -> drink_with_cup", &p, &a).unwrap();
        assert_eq!(r.antecedents(), &[0, 1]);
        assert_eq!(r.activity(), 0);
    }

    #[test]
    fn duplicate_antecedents_collapse() {
        let (p, a) = dicts();
        let r = parse_rule("cup & cup -> walk", &p, &a).unwrap();
        assert_eq!(r.antecedents(), &[1]);
    }

    #[test]
    fn malformed_rules() {
        let (p, a) = dicts();
        assert!(matches!(
            parse_rule("-> walk", &p, &a),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_rule("cup walk", &p, &a),
            Err(Error::Syntax { .. })
        ));
        assert!(matches!(
            parse_rule("cup & -> walk", &p, &a),
            Err(Error::Syntax { .. })
        ));
        match parse_rule("cup & spoon -> walk", &p, &a) {
            Err(Error::Dictionary { token, .. }) => assert_eq!(token, "spoon"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_rule("cup -> fly", &p, &a),
            Err(Error::Dictionary { .. })
        ));
    }

    #[test]
    fn file_round_trip_with_provenance() {
        let (p, a) = dicts();
        let rules = vec![
            (
                Rule::new(0, [0, 1], Provenance::Annotation).unwrap(),
                Some(0.25),
            ),
            (
                Rule::new(1, [2], Provenance::Generated { beta: 0.3 }).unwrap(),
                None,
            ),
            (
                Rule::new(0, [2, 1, 0], Provenance::HumanPrior).unwrap(),
                None,
            ),
        ];
        let (text, side) = render_rule_file(&rules, &p, &a, "rule base\nseed 1");
        assert!(text.starts_with("# rule base\n# seed 1\n"));
        let back = parse_rule_file(&text, Some(&side), &p, &a).unwrap();
        assert_eq!(back, rules);
    }

    #[test]
    fn comments_and_line_numbers() {
        let (p, a) = dicts();
        let text = "# header\n\ncup -> walk  # trailing\nbogus -> walk\n";
        match parse_rule_file(text, None, &p, &a) {
            Err(Error::Dictionary { token, .. }) => assert_eq!(token, "bogus"),
            other => panic!("{other:?}"),
        }
        let text = "# header\ncup -> walk\n& -> walk\n";
        match parse_rule_file(text, None, &p, &a) {
            Err(Error::Syntax { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
