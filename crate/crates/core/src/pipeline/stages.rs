use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::corpus::{Corpus, Schema};
use crate::embedding::{EmbeddingBackend, EmbeddingCache, Encoder};
use crate::error::{BackendError, Error, Result};
use crate::eval::{score, MacroMode, QuintupleSets, ScoreReport};
use crate::generation::GenerationBackend;
use crate::llm::{CachedLlm, ChatCache, LlmBackend};
use crate::pipeline::{Assets, RunConfig};
use crate::prompting::{assemble_context, generate_with_reflection, select_knowledge, PromptBank, SelectedKnowledge};
use crate::templates::{build_stage2_input, parse_quintuples, serialize_quintuples, PredictionRecord, TrainingExample};

/// Model backends and caches used by stage 1.
pub struct Stage1Backends<'a> {
    pub embedder: &'a dyn EmbeddingBackend,
    pub llm: &'a dyn LlmBackend,
    pub embed_cache: Arc<EmbeddingCache>,
    pub chat_cache: Arc<ChatCache>,
}

fn knowledge_for_sample(
    cfg: &RunConfig,
    assets: &Assets,
    encoder: &Encoder<'_, f64>,
    llm: &CachedLlm<'_>,
    bank: &PromptBank<f64>,
    sample: &crate::corpus::Sample,
) -> Result<SelectedKnowledge<f64>> {
    let context = assemble_context(&assets.head, bank, sample, cfg.k, encoder)?;
    let candidates = generate_with_reflection(&context, &assets.reflection, llm).map_err(|e| Error::Backend(e.source))?;
    select_knowledge(
        &sample.id,
        &context.query_embedding,
        &candidates,
        Some(encoder),
        &assets.selector,
    )
}

/// Stage 1: one selected knowledge record per sample, in corpus order.
///
/// Samples are processed by at most `concurrency_limit` workers; each
/// worker's reflection chain is sequential, so no more than that many
/// backend requests are ever in flight. On failure the error reports how
/// many leading samples completed; everything finished is already cached,
/// so rerunning resumes from there.
pub fn run_stage1(
    cfg: &RunConfig,
    assets: &Assets,
    backends: &Stage1Backends<'_>,
    corpus: &Corpus,
    bank: &PromptBank<f64>,
) -> Result<Vec<SelectedKnowledge<f64>>> {
    if cfg.k > bank.len() {
        return Err(Error::Config(format!(
            "k = {} but the prompt bank has {} prompts",
            cfg.k,
            bank.len()
        )));
    }
    let encoder = Encoder::new(backends.embedder, backends.embed_cache.clone()).with_batch_size(cfg.embed_batch_size);
    let llm = CachedLlm::new(backends.llm, backends.chat_cache.clone());
    bank.embeddings(&encoder)?;

    let total = corpus.len();
    let results: Mutex<Vec<Option<SelectedKnowledge<f64>>>> = Mutex::new(vec![None; total]);
    let first_error: Mutex<Option<(usize, Error)>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = cfg.concurrency_limit.min(total).max(1);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= total {
                    break;
                }
                match knowledge_for_sample(cfg, assets, &encoder, &llm, bank, &corpus.samples[i]) {
                    Ok(k) => results.lock().expect("results lock")[i] = Some(k),
                    Err(e) => {
                        stop.store(true, Ordering::SeqCst);
                        let mut slot = first_error.lock().expect("error lock");
                        if slot.as_ref().is_none_or(|(j, _)| i < *j) {
                            *slot = Some((i, e));
                        }
                        break;
                    }
                }
            });
        }
    });

    let results = results.into_inner().expect("results lock");
    if let Some((_, err)) = first_error.into_inner().expect("error lock") {
        let completed = results.iter().take_while(|r| r.is_some()).count();
        return Err(match err {
            Error::Backend(source) if !matches!(source, BackendError::Config(_)) => Error::Interrupted {
                completed,
                total,
                source,
            },
            other => other,
        });
    }
    Ok(results.into_iter().map(|r| r.expect("every sample processed")).collect())
}

/// Stage-2 records: inputs for every sample, targets for annotated ones.
pub fn run_stage2_prepare(
    cfg: &RunConfig,
    schema: &Schema,
    corpus: &Corpus,
    knowledge: &[SelectedKnowledge<f64>],
) -> Result<Vec<TrainingExample>> {
    let by_id: HashMap<&str, &SelectedKnowledge<f64>> = knowledge.iter().map(|k| (k.sample_id.as_str(), k)).collect();
    corpus
        .samples
        .iter()
        .map(|s| {
            let k = by_id
                .get(s.id.as_str())
                .ok_or_else(|| Error::Invalid(format!("no knowledge record for sample {:?}", s.id)))?;
            let input = build_stage2_input(schema, s, k, cfg.max_input_len)?;
            Ok(TrainingExample {
                id: s.id.clone(),
                input: input.render(),
                target: s.gold.as_ref().map(serialize_quintuples),
            })
        })
        .collect()
}

/// Outcome of [`run_predict`]: every record, plus ids whose generation failed.
pub struct Predictions {
    pub records: Vec<PredictionRecord>,
    pub failed: Vec<String>,
}

/// Generate in batches and parse each output. A failing batch is retried
/// one input at a time; inputs that still fail get an empty output and a
/// warning naming the error.
pub fn run_predict(
    cfg: &RunConfig,
    schema: &Schema,
    examples: &[TrainingExample],
    generator: &dyn GenerationBackend,
) -> Predictions {
    let mut records = Vec::with_capacity(examples.len());
    let mut failed = Vec::new();
    for chunk in examples.chunks(cfg.generation.batch_size) {
        let inputs: Vec<String> = chunk.iter().map(|e| e.input.clone()).collect();
        let outputs: Vec<std::result::Result<String, String>> = match generator.generate(&inputs) {
            Ok(out) => out.into_iter().map(Ok).collect(),
            Err(_) => inputs
                .iter()
                .map(|i| {
                    generator
                        .generate(std::slice::from_ref(i))
                        .map(|mut v| v.remove(0))
                        .map_err(|e| e.to_string())
                })
                .collect(),
        };
        for (ex, out) in chunk.iter().zip(outputs) {
            let rec = match out {
                Ok(raw) => {
                    let (quintuples, warnings) = parse_quintuples(&raw, schema);
                    PredictionRecord {
                        id: ex.id.clone(),
                        raw_output: raw,
                        quintuples,
                        warnings,
                    }
                }
                Err(e) => {
                    failed.push(ex.id.clone());
                    PredictionRecord {
                        id: ex.id.clone(),
                        raw_output: String::new(),
                        quintuples: Default::default(),
                        warnings: vec![format!("generation failed: {e}")],
                    }
                }
            };
            records.push(rec);
        }
    }
    Predictions { records, failed }
}

/// Score prediction records against a gold corpus.
pub fn run_score(predictions: &[PredictionRecord], gold: &Corpus, mode: MacroMode) -> Result<ScoreReport<f64>> {
    let mut preds = QuintupleSets::new();
    for p in predictions {
        if preds.insert(p.id.clone(), p.quintuples.clone()).is_some() {
            return Err(Error::Invalid(format!("duplicate prediction for {:?}", p.id)));
        }
    }
    let golds: QuintupleSets = gold
        .samples
        .iter()
        .map(|s| (s.id.clone(), s.gold.clone().unwrap_or_default()))
        .collect::<BTreeMap<_, _>>();
    score(&preds, &golds, &gold.schema, mode)
}
