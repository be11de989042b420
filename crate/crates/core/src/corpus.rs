//! Samples, quintuple annotations, label schemas and their file formats.
//!
//! A corpus file holds one JSON object per line:
//!
//! ```text
//! {"id":"s1","text":"RT @saladinMY: TV3 with the MCMC .","caption":"a man","gold":[{"e1":"TV3","t1":"organization","e2":"MCMC","t2":"organization","r":"subsidiary"}]}
//! ```
//!
//! `image_path` is optional and `gold` is optional; a missing `gold` marks
//! the sample as unannotated while `"gold":[]` is an annotated sample with
//! no relations.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::scalar::Field;

/// Case-normalized label: trimmed and lowercased.
pub fn normalize_label(label: &str) -> String {
    label.trim().to_lowercase()
}

fn check_label(label: &str) -> std::result::Result<(), String> {
    if label.is_empty() {
        return Err("empty label".into());
    }
    if label.contains([';', '(', ')', '\n', '\r']) {
        return Err(format!("label {label:?} contains a reserved character"));
    }
    Ok(())
}

fn check_entity(entity: &str) -> std::result::Result<(), String> {
    if entity.is_empty() {
        return Err("empty entity".into());
    }
    if entity.contains([';', '(', ')', '\n', '\r']) {
        return Err(format!("entity {entity:?} contains a reserved character"));
    }
    Ok(())
}

/// One extracted fact: two typed entities and the relation between them.
///
/// Labels are stored normalized, entity surfaces are stored trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawQuintuple", into = "RawQuintuple")]
pub struct Quintuple {
    e1: String,
    t1: String,
    e2: String,
    t2: String,
    r: String,
}

#[derive(Serialize, Deserialize)]
struct RawQuintuple {
    e1: String,
    t1: String,
    e2: String,
    t2: String,
    r: String,
}

impl TryFrom<RawQuintuple> for Quintuple {
    type Error = String;

    fn try_from(q: RawQuintuple) -> std::result::Result<Self, String> {
        Quintuple::new(&q.e1, &q.t1, &q.e2, &q.t2, &q.r)
    }
}

impl From<Quintuple> for RawQuintuple {
    fn from(q: Quintuple) -> Self {
        RawQuintuple {
            e1: q.e1,
            t1: q.t1,
            e2: q.e2,
            t2: q.t2,
            r: q.r,
        }
    }
}

impl Quintuple {
    /// Build a quintuple, normalizing labels. Schema membership is checked
    /// separately by [`Schema::check`].
    pub fn new(e1: &str, t1: &str, e2: &str, t2: &str, r: &str) -> std::result::Result<Self, String> {
        let q = Quintuple {
            e1: e1.trim().to_string(),
            t1: normalize_label(t1),
            e2: e2.trim().to_string(),
            t2: normalize_label(t2),
            r: normalize_label(r),
        };
        check_entity(&q.e1)?;
        check_entity(&q.e2)?;
        check_label(&q.t1)?;
        check_label(&q.t2)?;
        check_label(&q.r)?;
        if q.e1 == q.e2 && q.t1 == q.t2 {
            return Err(format!("both arguments are the same entity ({}, {})", q.e1, q.t1));
        }
        Ok(q)
    }

    pub fn e1(&self) -> &str {
        &self.e1
    }
    pub fn t1(&self) -> &str {
        &self.t1
    }
    pub fn e2(&self) -> &str {
        &self.e2
    }
    pub fn t2(&self) -> &str {
        &self.t2
    }
    pub fn relation(&self) -> &str {
        &self.r
    }
}

impl fmt::Display for Quintuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {}, {})", self.e1, self.t1, self.e2, self.t2, self.r)
    }
}

/// Allowed entity types and relation types, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    entity_types: Vec<String>,
    relation_types: Vec<String>,
}

const DEFAULT_ENTITY_TYPES: &[&str] = &["person", "organization", "location", "misc"];

const DEFAULT_RELATION_TYPES: &[&str] = &[
    "peer",
    "member_of",
    "contain",
    "present_in",
    "part_of",
    "locate_at",
    "subsidiary",
    "alternate_names",
    "place_of_residence",
    "nationality",
    "couple",
    "awarded",
    "held_on",
    "place_of_birth",
    "parent",
    "siblings",
    "neighbor",
    "charges",
    "alumni",
    "religion",
    "race",
];

impl Default for Schema {
    fn default() -> Self {
        Schema::new(DEFAULT_ENTITY_TYPES, DEFAULT_RELATION_TYPES).expect("default schema is valid")
    }
}

impl Schema {
    pub fn new<S: AsRef<str>>(entity_types: &[S], relation_types: &[S]) -> Result<Self> {
        fn collect<S: AsRef<str>>(kind: &str, labels: &[S]) -> Result<Vec<String>> {
            let mut seen = HashSet::new();
            let mut out = Vec::with_capacity(labels.len());
            for l in labels {
                let l = normalize_label(l.as_ref());
                check_label(&l).map_err(|m| Error::Schema(format!("{kind}: {m}")))?;
                if !seen.insert(l.clone()) {
                    return Err(Error::Schema(format!("{kind}: duplicate label {l:?}")));
                }
                out.push(l);
            }
            if out.is_empty() {
                return Err(Error::Schema(format!("{kind}: no labels")));
            }
            Ok(out)
        }
        Ok(Schema {
            entity_types: collect("entity types", entity_types)?,
            relation_types: collect("relation types", relation_types)?,
        })
    }

    pub fn entity_types(&self) -> &[String] {
        &self.entity_types
    }

    pub fn relation_types(&self) -> &[String] {
        &self.relation_types
    }

    pub fn has_entity_type(&self, label: &str) -> bool {
        let l = normalize_label(label);
        self.entity_types.contains(&l)
    }

    pub fn has_relation_type(&self, label: &str) -> bool {
        let l = normalize_label(label);
        self.relation_types.contains(&l)
    }

    /// Labels of `q` that the schema does not know, in field order.
    pub fn offending_labels(&self, q: &Quintuple) -> Vec<String> {
        let mut bad = Vec::new();
        for t in [q.t1(), q.t2()] {
            if !self.has_entity_type(t) && !bad.iter().any(|b| b == t) {
                bad.push(t.to_string());
            }
        }
        if !self.has_relation_type(q.relation()) {
            bad.push(q.relation().to_string());
        }
        bad
    }

    pub fn check(&self, q: &Quintuple) -> Result<()> {
        let bad = self.offending_labels(q);
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Schema(format!("{q}: unknown labels {}", bad.join(", "))))
        }
    }

    /// Parse the sectioned schema format:
    ///
    /// ```text
    /// [entity_types]
    /// person
    /// [relation_types]
    /// peer
    /// ```
    ///
    /// `#` starts a comment; blank lines are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, (usize, String)> {
        let mut section: Option<&mut Vec<String>> = None;
        let mut entities = Vec::new();
        let mut relations = Vec::new();
        let mut seen = (false, false);
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[entity_types]" => {
                    seen.0 = true;
                    section = Some(&mut entities);
                }
                "[relation_types]" => {
                    seen.1 = true;
                    section = Some(&mut relations);
                }
                _ if line.starts_with('[') => {
                    return Err((idx + 1, format!("unknown section {line}")));
                }
                _ => match section.as_mut() {
                    Some(s) => s.push(line.to_string()),
                    None => return Err((idx + 1, "label outside of a section".into())),
                },
            }
        }
        if !(seen.0 && seen.1) {
            return Err((0, "schema needs [entity_types] and [relation_types] sections".into()));
        }
        Schema::new(&entities, &relations).map_err(|e| (0, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::parse(&text).map_err(|(line, message)| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::from("[entity_types]\n");
        for t in &self.entity_types {
            out.push_str(t);
            out.push('\n');
        }
        out.push_str("[relation_types]\n");
        for r in &self.relation_types {
            out.push_str(r);
            out.push('\n');
        }
        out
    }
}

/// A text-image post. The image itself is only referenced by path; the
/// pipeline consumes the precomputed caption.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<BTreeSet<Quintuple>>,
}

impl Sample {
    pub fn new(id: impl Into<String>, text: impl Into<String>, caption: impl Into<String>) -> Self {
        Sample {
            id: id.into(),
            text: text.into(),
            caption: caption.into(),
            image_path: None,
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: impl IntoIterator<Item = Quintuple>) -> Self {
        self.gold = Some(gold.into_iter().collect());
        self
    }

    pub fn is_annotated(&self) -> bool {
        self.gold.is_some()
    }

    /// Gold quintuples, empty for unannotated samples.
    pub fn gold_iter(&self) -> impl Iterator<Item = &Quintuple> {
        self.gold.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub schema: Schema,
    pub samples: Vec<Sample>,
}

/// Relation label to frequency fraction.
pub type Distribution<S> = BTreeMap<String, S>;

impl Corpus {
    /// Validate `samples` against `schema`.
    pub fn new(schema: Schema, samples: Vec<Sample>) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &samples {
            validate_sample(&schema, s).map_err(Error::Invalid)?;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate sample id {:?}", s.id)));
            }
        }
        Ok(Corpus { schema, samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn quintuple_count(&self) -> usize {
        self.samples.iter().map(|s| s.gold_iter().count()).sum()
    }

    /// Relation frequencies over quintuple occurrences.
    pub fn relation_distribution<S: Field>(&self) -> Result<Distribution<S>> {
        relation_distribution(&self.samples)
    }

    pub fn to_jsonl(&self) -> Vec<u8> {
        io::to_jsonl(&self.samples)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.to_jsonl())
    }
}

/// Per-relation counts over every gold quintuple of `samples`.
pub fn relation_counts<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for s in samples {
        for q in s.gold_iter() {
            *counts.entry(q.relation().to_string()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn relation_distribution<S: Field>(samples: &[Sample]) -> Result<Distribution<S>> {
    let counts = relation_counts(samples);
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Error::Invalid("corpus has no gold quintuples".into()));
    }
    let denom = S::from_count(total);
    Ok(counts.into_iter().map(|(r, c)| (r, S::from_count(c) / denom)).collect())
}

fn validate_sample(schema: &Schema, s: &Sample) -> std::result::Result<(), String> {
    if s.id.trim().is_empty() {
        return Err("field `id`: empty".into());
    }
    if s.text.trim().is_empty() {
        return Err(format!("sample {:?}: field `text`: empty", s.id));
    }
    let mut bad: Vec<String> = Vec::new();
    for q in s.gold_iter() {
        for l in schema.offending_labels(q) {
            if !bad.contains(&l) {
                bad.push(l);
            }
        }
    }
    if !bad.is_empty() {
        return Err(format!(
            "sample {:?}: field `gold`: labels not in schema: {}",
            s.id,
            bad.join(", ")
        ));
    }
    Ok(())
}

/// Load a line-delimited corpus file and validate every record.
pub fn load_corpus(path: &Path, schema: &Schema) -> Result<Corpus> {
    let records: Vec<(usize, Sample)> = io::read_jsonl(path)?;
    let mut ids = HashSet::new();
    let mut samples = Vec::with_capacity(records.len());
    for (line, s) in records {
        validate_sample(schema, &s).map_err(|message| {
            if message.contains("labels not in schema") {
                Error::Schema(format!("{}:{line}: {message}", path.display()))
            } else {
                Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message,
                }
            }
        })?;
        if !ids.insert(s.id.clone()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("field `id`: duplicate id {:?}", s.id),
            });
        }
        samples.push(s);
    }
    Ok(Corpus {
        schema: schema.clone(),
        samples,
    })
}
