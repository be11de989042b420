//! Exact-match quintuple scoring with micro and macro averages.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{Quintuple, Schema};
use crate::error::{Error, Result};
use crate::scalar::Field;

pub type QuintupleSets = BTreeMap<String, BTreeSet<Quintuple>>;

/// Which relation types the macro average runs over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroMode {
    /// Relations with at least one gold quintuple.
    #[default]
    Supported,
    /// Every relation type in the schema.
    Schema,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub pred: usize,
    pub gold: usize,
}

impl Counts {
    pub fn precision<S: Field>(&self) -> S {
        ratio(self.tp, self.pred)
    }

    pub fn recall<S: Field>(&self) -> S {
        ratio(self.tp, self.gold)
    }

    pub fn f1<S: Field>(&self) -> S {
        f1(self.precision(), self.recall())
    }
}

fn ratio<S: Field>(num: usize, den: usize) -> S {
    if den == 0 {
        S::zero()
    } else {
        S::from_count(num) / S::from_count(den)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1<S: Field>(p: S, r: S) -> S {
    if (p + r).is_zero() {
        S::zero()
    } else {
        (S::one() + S::one()) * p * r / (p + r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport<S> {
    pub micro_p: S,
    pub micro_r: S,
    pub micro_f1: S,
    /// Keys are exactly the relations the macro average is taken over.
    pub per_relation_f1: BTreeMap<String, S>,
    pub macro_f1: S,
    /// Gold count per relation with any gold support.
    pub support: BTreeMap<String, usize>,
    pub totals: Counts,
    /// Counts for every relation seen in gold or predictions.
    pub per_relation: BTreeMap<String, Counts>,
    pub macro_mode: MacroMode,
}

type MatchKey = (String, String, String, String, String);

/// Matching ignores case in all five fields.
pub fn match_key(q: &Quintuple) -> MatchKey {
    (
        q.e1().to_lowercase(),
        q.t1().to_string(),
        q.e2().to_lowercase(),
        q.t2().to_string(),
        q.relation().to_string(),
    )
}

fn check_set(schema: &Schema, id: &str, set: &BTreeSet<Quintuple>) -> Result<()> {
    for q in set {
        schema.check(q).map_err(|e| Error::Schema(format!("sample {id:?}: {e}")))?;
    }
    Ok(())
}

/// Score predictions against golds. Gold samples without a prediction count
/// as empty predictions; a prediction for an unknown id is an error.
pub fn score<S: Field>(
    predictions: &QuintupleSets,
    golds: &QuintupleSets,
    schema: &Schema,
    mode: MacroMode,
) -> Result<ScoreReport<S>> {
    if let Some(id) = predictions.keys().find(|id| !golds.contains_key(*id)) {
        return Err(Error::Invalid(format!("prediction for unknown sample id {id:?}")));
    }
    let empty = BTreeSet::new();
    let mut totals = Counts::default();
    let mut per_relation: BTreeMap<String, Counts> = BTreeMap::new();

    for (id, gold) in golds {
        let pred = predictions.get(id).unwrap_or(&empty);
        check_set(schema, id, gold)?;
        check_set(schema, id, pred)?;
        let gold_keys: HashSet<MatchKey> = gold.iter().map(match_key).collect();
        let pred_keys: HashSet<MatchKey> = pred.iter().map(match_key).collect();
        for g in &gold_keys {
            per_relation.entry(g.4.clone()).or_default().gold += 1;
        }
        for p in &pred_keys {
            let c = per_relation.entry(p.4.clone()).or_default();
            c.pred += 1;
            if gold_keys.contains(p) {
                c.tp += 1;
                totals.tp += 1;
            }
        }
        totals.gold += gold_keys.len();
        totals.pred += pred_keys.len();
    }

    let support: BTreeMap<String, usize> = per_relation
        .iter()
        .filter(|(_, c)| c.gold > 0)
        .map(|(r, c)| (r.clone(), c.gold))
        .collect();
    let macro_keys: Vec<String> = match mode {
        MacroMode::Supported => support.keys().cloned().collect(),
        MacroMode::Schema => schema.relation_types().to_vec(),
    };
    let per_relation_f1: BTreeMap<String, S> = macro_keys
        .into_iter()
        .map(|r| {
            let f = per_relation.get(&r).copied().unwrap_or_default().f1();
            (r, f)
        })
        .collect();
    let macro_f1 = if per_relation_f1.is_empty() {
        S::zero()
    } else {
        per_relation_f1.values().fold(S::zero(), |a, b| a + *b) / S::from_count(per_relation_f1.len())
    };

    Ok(ScoreReport {
        micro_p: totals.precision(),
        micro_r: totals.recall(),
        micro_f1: totals.f1(),
        per_relation_f1,
        macro_f1,
        support,
        totals,
        per_relation,
        macro_mode: mode,
    })
}

impl<S: Field> ScoreReport<S> {
    /// Pretty-printed JSON mirroring the struct.
    pub fn to_json(&self) -> String
    where
        S: Serialize,
    {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let width = self.per_relation.keys().map(|k| k.len()).max().unwrap_or(8).max(8);
        writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8}",
            "relation", "tp", "pred", "gold", "f1"
        )
        .unwrap();
        for (r, c) in &self.per_relation {
            let f: S = c.f1();
            writeln!(
                out,
                "{:<width$}  {:>6}  {:>6}  {:>6}  {:>8.4}",
                r,
                c.tp,
                c.pred,
                c.gold,
                f.to_f64()
            )
            .unwrap();
        }
        writeln!(
            out,
            "micro  P {:.4}  R {:.4}  F1 {:.4}  (tp {} pred {} gold {})",
            self.micro_p.to_f64(),
            self.micro_r.to_f64(),
            self.micro_f1.to_f64(),
            self.totals.tp,
            self.totals.pred,
            self.totals.gold
        )
        .unwrap();
        writeln!(
            out,
            "macro  F1 {:.4}  over {} relation type(s)",
            self.macro_f1.to_f64(),
            self.per_relation_f1.len()
        )
        .unwrap();
        out
    }
}
