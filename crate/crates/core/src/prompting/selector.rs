use std::path::Path;

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, EmbeddingVector, Encoder};
use crate::error::{Error, Result};
use crate::prompting::KnowledgeCandidate;
use crate::scalar::Scalar;

pub const DEFAULT_BOILERPLATE_PATTERNS: &str = include_str!("../../assets/boilerplate_patterns.txt");

/// The knowledge kept for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedKnowledge<S> {
    pub sample_id: String,
    pub text: String,
    pub source_round: usize,
    pub similarity: S,
}

/// Regexes identifying contentless reflections.
#[derive(Debug, Clone)]
pub struct BoilerplateFilter {
    patterns: Vec<Regex>,
}

impl Default for BoilerplateFilter {
    fn default() -> Self {
        Self::parse(DEFAULT_BOILERPLATE_PATTERNS).expect("bundled patterns compile")
    }
}

impl BoilerplateFilter {
    pub fn none() -> Self {
        BoilerplateFilter { patterns: vec![] }
    }

    /// One case-insensitive pattern per line; `#` lines and blank lines skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let patterns = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                RegexBuilder::new(l)
                    .case_insensitive(true)
                    .build()
                    .map_err(|e| Error::Config(format!("boilerplate pattern {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(BoilerplateFilter { patterns })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn is_boilerplate(&self, text: &str) -> bool {
        self.patterns.iter().any(|p| p.is_match(text.trim()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct SelectorConfig {
    /// Let the round-0 answer compete with the reflections. When it is the
    /// only candidate it is used regardless.
    pub exclude_initial: bool,
    pub boilerplate: BoilerplateFilter,
}

/// Similarities closer than this count as a tie.
fn tie_tolerance<S: Scalar>() -> S {
    S::epsilon() * S::from_f64(64.0)
}

/// Return the candidate most cosine-similar to the sample embedding; ties go
/// to the earliest round. Candidates without an embedding are encoded with
/// `encoder`.
pub fn select_knowledge<S: Scalar>(
    sample_id: &str,
    sample_embedding: &EmbeddingVector<S>,
    candidates: &[KnowledgeCandidate<S>],
    encoder: Option<&Encoder<'_, S>>,
    cfg: &SelectorConfig,
) -> Result<SelectedKnowledge<S>> {
    if candidates.is_empty() {
        return Err(Error::Invalid(format!("sample {sample_id:?}: no knowledge candidates")));
    }
    let mut pool: Vec<&KnowledgeCandidate<S>> = candidates.iter().filter(|c| !c.response_text.trim().is_empty()).collect();
    if pool.is_empty() {
        return Err(Error::Invalid(format!(
            "sample {sample_id:?}: every knowledge candidate is empty"
        )));
    }
    if cfg.exclude_initial && pool.iter().any(|c| c.round > 0) {
        pool.retain(|c| c.round > 0);
    }
    if pool.iter().any(|c| !cfg.boilerplate.is_boilerplate(&c.response_text)) {
        pool.retain(|c| !cfg.boilerplate.is_boilerplate(&c.response_text));
    }
    pool.sort_by_key(|c| c.round);

    let missing: Vec<String> = pool
        .iter()
        .filter(|c| c.embedding.is_none())
        .map(|c| c.response_text.clone())
        .collect();
    let mut encoded = if missing.is_empty() {
        Vec::new()
    } else {
        let enc = encoder.ok_or_else(|| Error::Invalid("candidates need embedding but no encoder given".into()))?;
        enc.embed_raw(&missing)?
    }
    .into_iter();

    let tol = tie_tolerance::<S>();
    let mut best: Option<(&KnowledgeCandidate<S>, S)> = None;
    for c in pool {
        let owned;
        let emb = match &c.embedding {
            Some(e) => e,
            None => {
                let raw = encoded.next().expect("one vector per missing embedding");
                match EmbeddingVector::from_f64(&raw) {
                    Ok(v) => {
                        owned = v;
                        &owned
                    }
                    Err(_) => continue,
                }
            }
        };
        // Zero-norm embeddings have no direction to compare.
        let sim = match cosine(sample_embedding, emb) {
            Ok(s) => s,
            Err(_) if emb.norm().is_zero() => continue,
            Err(e) => return Err(e),
        };
        match best {
            Some((_, b)) if sim <= b + tol => {}
            _ => best = Some((c, sim)),
        }
    }
    let (c, similarity) =
        best.ok_or_else(|| Error::Invalid(format!("sample {sample_id:?}: no candidate has a usable embedding")))?;
    Ok(SelectedKnowledge {
        sample_id: sample_id.to_string(),
        text: c.response_text.clone(),
        source_round: c.round,
        similarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{fuse, EmbeddingCache, MockEmbedder};
    use std::sync::Arc;

    fn cand(round: usize, text: &str, v: &[f64]) -> KnowledgeCandidate<f64> {
        KnowledgeCandidate {
            round,
            response_text: text.into(),
            embedding: Some(EmbeddingVector::new(v.to_vec()).unwrap()),
        }
    }

    fn q() -> EmbeddingVector<f64> {
        EmbeddingVector::new(vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn single_candidate_returned() {
        let s = select_knowledge("s", &q(), &[cand(0, "A", &[1.0, 1.0])], None, &Default::default()).unwrap();
        assert_eq!(s.source_round, 0);
        assert!((s.similarity - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identical_text_scores_one() {
        let mock = MockEmbedder::new(16);
        let enc = Encoder::new(&mock, Arc::new(EmbeddingCache::in_memory()));
        let qv: EmbeddingVector<f64> = enc.embed_fused("TV3 with the MCMC", "two men").unwrap();
        let cands = vec![
            KnowledgeCandidate::new(0, "something unrelated entirely"),
            KnowledgeCandidate::new(1, fuse("TV3 with the MCMC", "two men")),
            KnowledgeCandidate::new(2, "another thing"),
        ];
        let s = select_knowledge("s", &qv, &cands, Some(&enc), &Default::default()).unwrap();
        assert_eq!(s.source_round, 1);
        assert!((s.similarity - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_go_to_earliest_round() {
        let c = [
            cand(0, "A", &[1.0, 1.0]),
            cand(1, "B", &[2.0, 2.0]),
            cand(2, "C", &[0.0, 1.0]),
        ];
        assert_eq!(
            select_knowledge("s", &q(), &c, None, &Default::default())
                .unwrap()
                .source_round,
            0
        );
    }

    #[test]
    fn all_empty_is_error() {
        let c = [KnowledgeCandidate::<f64>::new(0, ""), KnowledgeCandidate::new(1, "  ")];
        assert!(select_knowledge("s", &q(), &c, None, &Default::default()).is_err());
        assert!(select_knowledge::<f64>("s", &q(), &[], None, &Default::default()).is_err());
    }

    #[test]
    fn boilerplate_excluded_unless_alone() {
        let bp = "The entities, relations, and reasoning provided above are correct.";
        let c = [cand(0, "real answer", &[0.0, 1.0]), cand(1, bp, &[1.0, 0.0])];
        let s = select_knowledge("s", &q(), &c, None, &Default::default()).unwrap();
        assert_eq!(s.source_round, 0);
        let s = select_knowledge("s", &q(), &c[1..], None, &Default::default()).unwrap();
        assert_eq!(s.source_round, 1);
        let cfg = SelectorConfig {
            boilerplate: BoilerplateFilter::none(),
            ..Default::default()
        };
        assert_eq!(select_knowledge("s", &q(), &c, None, &cfg).unwrap().source_round, 1);
    }

    #[test]
    fn initial_answer_can_be_excluded() {
        let c = [cand(0, "A", &[1.0, 0.0]), cand(1, "B", &[1.0, 1.0])];
        let cfg = SelectorConfig {
            exclude_initial: true,
            ..Default::default()
        };
        assert_eq!(select_knowledge("s", &q(), &c, None, &cfg).unwrap().source_round, 1);
        assert_eq!(select_knowledge("s", &q(), &c[..1], None, &cfg).unwrap().source_round, 0);
    }

    #[test]
    fn bad_pattern_is_config_error() {
        assert!(matches!(BoilerplateFilter::parse("(unclosed"), Err(Error::Config(_))));
    }
}
