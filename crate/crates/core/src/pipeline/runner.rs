use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::cache::RecordCache;
use crate::corpus::{load_corpus, Corpus, Schema};
use crate::error::{Error, Result};
use crate::eval::{MacroMode, ScoreReport};
use crate::generation::GenerationBackend;
use crate::io;
use crate::pipeline::manifest::{unix_now, RunManifest, StageRecord, StageStatus};
use crate::pipeline::stages::{run_predict, run_score, run_stage1, run_stage2_prepare, Predictions, Stage1Backends};
use crate::pipeline::RunConfig;
use crate::prompting::{PromptBank, SelectedKnowledge};
use crate::templates::{PredictionRecord, TrainingExample};

pub const KNOWLEDGE_FILE: &str = "knowledge.jsonl";
pub const STAGE2_FILE: &str = "stage2.jsonl";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SCORE_TEXT_FILE: &str = "score.txt";
pub const SCORE_JSON_FILE: &str = "score.json";
pub const MANIFEST_FILE: &str = "manifest.json";

fn manifest_path(output: &Path) -> PathBuf {
    output.parent().unwrap_or(Path::new(".")).join(MANIFEST_FILE)
}

fn read_records<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(io::read_jsonl(path)?.into_iter().map(|(_, r)| r).collect())
}

fn failed_record(err: &Error) -> StageRecord {
    let (completed, total) = match err {
        Error::Interrupted { completed, total, .. } => (*completed, *total),
        _ => (0, 0),
    };
    StageRecord {
        status: StageStatus::Failed,
        output: None,
        output_sha256: None,
        completed,
        total,
        error: Some(err.to_string()),
        finished_at: unix_now(),
    }
}

/// Run stage 1 over the corpus at `corpus_path` and write `out`.
pub fn stage1_files(cfg: &RunConfig, corpus_path: &Path, bank_path: &Path, out: &Path) -> Result<Vec<SelectedKnowledge<f64>>> {
    let assets = cfg.assets()?;
    let corpus = load_corpus(corpus_path, &assets.schema)?;
    let bank = PromptBank::load(bank_path)?;
    let embedder = cfg.build_embedder()?;
    let llm = cfg.build_llm()?;
    let backends = Stage1Backends {
        embedder: embedder.as_ref(),
        llm: llm.as_ref(),
        embed_cache: Arc::new(RecordCache::open(&cfg.embedding_cache_path())?),
        chat_cache: Arc::new(RecordCache::open(&cfg.chat_cache_path())?),
    };

    let mpath = manifest_path(out);
    let mut manifest = RunManifest::load_or_new(&mpath, cfg)?;
    manifest.record_input(corpus_path)?;
    manifest.record_input(bank_path)?;
    manifest.backends.insert("embedding".into(), embedder.model_id().to_string());
    manifest
        .backends
        .insert("embedding_pooling".into(), embedder.pooling().to_string());
    manifest.backends.insert("llm".into(), llm.model_id().to_string());

    match run_stage1(cfg, &assets, &backends, &corpus, &bank) {
        Ok(knowledge) => {
            let bytes = io::to_jsonl(&knowledge);
            io::write_atomic(out, &bytes)?;
            manifest.record_stage("stage1", RunManifest::complete(out, &bytes, knowledge.len()));
            manifest.save(&mpath)?;
            Ok(knowledge)
        }
        Err(e) => {
            manifest.record_stage("stage1", failed_record(&e));
            manifest.save(&mpath)?;
            Err(e)
        }
    }
}

/// Build the stage-2 file from a corpus and its knowledge records.
pub fn prepare_files(cfg: &RunConfig, corpus_path: &Path, knowledge_path: &Path, out: &Path) -> Result<Vec<TrainingExample>> {
    let schema = cfg.assets()?.schema;
    let corpus = load_corpus(corpus_path, &schema)?;
    let knowledge: Vec<SelectedKnowledge<f64>> = read_records(knowledge_path)?;
    let examples = run_stage2_prepare(cfg, &schema, &corpus, &knowledge)?;
    let bytes = io::to_jsonl(&examples);
    io::write_atomic(out, &bytes)?;

    let mpath = manifest_path(out);
    let mut manifest = RunManifest::load_or_new(&mpath, cfg)?;
    manifest.record_input(knowledge_path)?;
    manifest.record_stage("prepare", RunManifest::complete(out, &bytes, examples.len()));
    manifest.save(&mpath)?;
    Ok(examples)
}

/// Generate predictions for a stage-2 file. With no explicit generator the
/// one configured in `cfg` is used.
pub fn predict_files(
    cfg: &RunConfig,
    input: &Path,
    out: &Path,
    generator: Option<&dyn GenerationBackend>,
) -> Result<Predictions> {
    let schema = cfg.assets()?.schema;
    let examples: Vec<TrainingExample> = read_records(input)?;
    let built;
    let generator = match generator {
        Some(g) => g,
        None => {
            built = cfg.build_generator(&examples)?;
            built.as_ref()
        }
    };
    let preds = run_predict(cfg, &schema, &examples, generator);
    let bytes = io::to_jsonl(&preds.records);
    io::write_atomic(out, &bytes)?;

    let mpath = manifest_path(out);
    let mut manifest = RunManifest::load_or_new(&mpath, cfg)?;
    manifest
        .backends
        .insert("generation".into(), generator.model_id().to_string());
    let mut rec = RunManifest::complete(out, &bytes, preds.records.len());
    rec.completed -= preds.failed.len();
    if !preds.failed.is_empty() {
        rec.error = Some(format!("{} samples failed generation", preds.failed.len()));
    }
    manifest.record_stage("predict", rec);
    manifest.save(&mpath)?;
    Ok(preds)
}

/// Score a prediction file against a gold corpus.
pub fn score_files(pred_path: &Path, gold_path: &Path, schema: &Schema, mode: MacroMode) -> Result<ScoreReport<f64>> {
    let gold = load_corpus(gold_path, schema)?;
    let preds: Vec<PredictionRecord> = read_records(pred_path)?;
    run_score(&preds, &gold, mode)
}

/// Write `score.txt` and `score.json` into `dir`.
pub fn write_score(dir: &Path, report: &ScoreReport<f64>) -> Result<()> {
    io::write_atomic(&dir.join(SCORE_TEXT_FILE), report.to_table().as_bytes())?;
    let json = report.to_json() + "\n";
    io::write_atomic(&dir.join(SCORE_JSON_FILE), json.as_bytes())
}

/// Every stage in sequence, writing all artifacts into `out_dir`.
pub fn run_all(cfg: &RunConfig, corpus_path: &Path, bank_path: &Path, out_dir: &Path) -> Result<ScoreReport<f64>> {
    let knowledge_path = out_dir.join(KNOWLEDGE_FILE);
    let stage2_path = out_dir.join(STAGE2_FILE);
    let pred_path = out_dir.join(PREDICTIONS_FILE);
    stage1_files(cfg, corpus_path, bank_path, &knowledge_path)?;
    prepare_files(cfg, corpus_path, &knowledge_path, &stage2_path)?;
    predict_files(cfg, &stage2_path, &pred_path, None)?;
    let schema = cfg.assets()?.schema;
    let corpus: Corpus = load_corpus(corpus_path, &schema)?;
    let preds: Vec<PredictionRecord> = read_records(&pred_path)?;
    let report = run_score(&preds, &corpus, cfg.macro_mode)?;
    write_score(out_dir, &report)?;
    Ok(report)
}
