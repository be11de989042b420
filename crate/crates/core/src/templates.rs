//! Stage-2 input rendering and the natural-language quintuple sketch.
//!
//! A quintuple is written as
//! `The relation between <e1> (<t1>) and <e2> (<t2>) is <r>`; several are
//! joined with `"; "` in canonical order, and the empty set is `none`.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Quintuple, Sample, Schema};
use crate::error::{Error, Result};
use crate::prompting::SelectedKnowledge;

pub const EMPTY_SENTINEL: &str = "none";
pub const SKETCH_SEPARATOR: &str = "; ";
pub const DEFAULT_MAX_INPUT_LEN: usize = 500;

pub fn render_quintuple(q: &Quintuple) -> String {
    format!(
        "The relation between {} ({}) and {} ({}) is {}",
        q.e1(),
        q.t1(),
        q.e2(),
        q.t2(),
        q.relation()
    )
}

fn canonical_key(q: &Quintuple) -> (&str, &str, &str, &str, &str) {
    (q.relation(), q.e1(), q.e2(), q.t1(), q.t2())
}

/// Canonical sketch of a quintuple set: sorted by (relation, e1, e2).
pub fn serialize_quintuples<'a>(quints: impl IntoIterator<Item = &'a Quintuple>) -> String {
    let mut qs: Vec<&Quintuple> = quints.into_iter().collect();
    if qs.is_empty() {
        return EMPTY_SENTINEL.to_string();
    }
    qs.sort_by(|a, b| canonical_key(a).cmp(&canonical_key(b)));
    qs.dedup();
    qs.iter()
        .map(|q| render_quintuple(q))
        .collect::<Vec<_>>()
        .join(SKETCH_SEPARATOR)
}

fn sketch_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)the relation between\s+(.+?)\s+\(([^()]+)\)\s+and\s+(.+?)\s+\(([^()]+)\)\s+is\s+(.+)$")
            .expect("valid sketch regex")
    })
}

/// A sketch fragment as written, before label normalization or schema checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSketch {
    pub e1: String,
    pub t1: String,
    pub e2: String,
    pub t2: String,
    pub r: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fragment {
    Sketch(RawSketch),
    Unparsed(String),
}

/// Split `text` into `;`/newline fragments and match each against the
/// sketch grammar. Empty fragments and the `none` sentinel are skipped.
pub fn parse_fragments(text: &str) -> Vec<Fragment> {
    let mut out = Vec::new();
    for raw in text.split([';', '\n']) {
        let frag = raw.trim().trim_end_matches('.').trim_end();
        if frag.is_empty() || frag.eq_ignore_ascii_case(EMPTY_SENTINEL) {
            continue;
        }
        match sketch_regex().captures(frag) {
            Some(c) => out.push(Fragment::Sketch(RawSketch {
                e1: c[1].trim().to_string(),
                t1: c[2].trim().to_string(),
                e2: c[3].trim().to_string(),
                t2: c[4].trim().to_string(),
                r: c[5].trim().trim_end_matches('.').trim().to_string(),
            })),
            None => out.push(Fragment::Unparsed(frag.to_string())),
        }
    }
    out
}

/// Extract every schema-valid quintuple from `text`; everything dropped is
/// reported as a warning. Never fails.
pub fn parse_quintuples(text: &str, schema: &Schema) -> (BTreeSet<Quintuple>, Vec<String>) {
    let mut set = BTreeSet::new();
    let mut warnings = Vec::new();
    for frag in parse_fragments(text) {
        match frag {
            Fragment::Unparsed(f) => warnings.push(format!("unparseable fragment: {f:?}")),
            Fragment::Sketch(s) => match Quintuple::new(&s.e1, &s.t1, &s.e2, &s.t2, &s.r) {
                Err(m) => warnings.push(format!("invalid quintuple dropped: {m}")),
                Ok(q) => {
                    let bad = schema.offending_labels(&q);
                    if bad.is_empty() {
                        set.insert(q);
                    } else {
                        warnings.push(format!("off-schema labels {} in {q}; dropped", bad.join(", ")));
                    }
                }
            },
        }
    }
    (set, warnings)
}

/// Allowed types rendered for the `Type:` field.
pub fn type_prompt(schema: &Schema) -> String {
    format!(
        "Entity types: {}. Relation types: {}.",
        schema.entity_types().join(", "),
        schema.relation_types().join(", ")
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Input {
    pub type_prompt: String,
    pub caption: String,
    pub knowledge: String,
    pub text: String,
}

impl Stage2Input {
    pub fn render(&self) -> String {
        format!(
            "Type: {}; Image: {}; Knowledge: {}; Text: {}",
            self.type_prompt, self.caption, self.knowledge, self.text
        )
    }

    pub fn rendered_len(&self) -> usize {
        self.render().chars().count()
    }
}

fn take_chars(s: &str, n: usize) -> String {
    s.chars().take(n).collect()
}

/// Assemble the generation-model input for `sample`, truncating the
/// knowledge first and then the caption so the rendering fits `max_len`
/// characters. The text itself is never shortened.
pub fn build_stage2_input<S>(
    schema: &Schema,
    sample: &Sample,
    knowledge: &SelectedKnowledge<S>,
    max_len: usize,
) -> Result<Stage2Input> {
    if knowledge.sample_id != sample.id {
        return Err(Error::Invalid(format!(
            "knowledge for {:?} passed with sample {:?}",
            knowledge.sample_id, sample.id
        )));
    }
    let mut input = Stage2Input {
        type_prompt: type_prompt(schema),
        caption: String::new(),
        knowledge: String::new(),
        text: sample.text.clone(),
    };
    let base = input.rendered_len();
    if base > max_len {
        return Err(Error::Invalid(format!(
            "sample {:?}: text alone renders to {base} characters, budget is {max_len}",
            sample.id
        )));
    }
    let mut room = max_len - base;
    let caption_len = sample.caption.chars().count();
    let caption_keep = caption_len.min(room);
    room -= caption_keep;
    input.caption = take_chars(&sample.caption, caption_keep);
    input.knowledge = take_chars(&knowledge.text, room);
    debug_assert!(input.rendered_len() <= max_len);
    Ok(input)
}

/// One line of a training or prediction-input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

/// One line of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub raw_output: String,
    pub quintuples: BTreeSet<Quintuple>,
    pub warnings: Vec<String>,
}
