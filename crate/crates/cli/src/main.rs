use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mmre_core::corpus::{load_corpus, Schema};
use mmre_core::io;
use mmre_core::pipeline::{self, EmbeddingKind, GenerationKind, LlmKind, RunConfig};
use mmre_core::prompting::ReflectionMode;
use mmre_core::sampler::{divergence_report, sample_few_shot, SplitSpec};
use mmre_core::{Error, MacroMode, Result};

#[derive(Parser)]
#[command(name = "mmre", version, about = "Few-shot multimodal entity-relation extraction pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw distribution-matched train and dev splits from a corpus.
    Sample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        train_size: usize,
        #[arg(long)]
        dev_size: usize,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
    },
    /// Generate and select auxiliary knowledge for every sample.
    Stage1 {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Build stage-2 training or prediction inputs.
    Prepare {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        knowledge: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Run the stage-2 generator and parse its outputs.
    Predict {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Score a prediction file against a gold corpus.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long, default_value = "supported")]
        macro_mode: MacroMode,
        /// Also write the report as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// All stages end to end.
    Run {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        opts: ConfigArgs,
    },
}

/// Overrides applied on top of `--config` (or the defaults).
#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(short = 'k', long)]
    k: Option<usize>,
    #[arg(short = 'n', long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_input_len: Option<usize>,
    #[arg(long)]
    concurrency_limit: Option<usize>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    head_prompt: Option<PathBuf>,
    #[arg(long)]
    reflection_instruction: Option<PathBuf>,
    #[arg(long)]
    boilerplate_patterns: Option<PathBuf>,
    #[arg(long)]
    reflection_mode: Option<ReflectionMode>,
    #[arg(long)]
    exclude_initial_answer: bool,
    #[arg(long)]
    history_budget: Option<usize>,
    #[arg(long)]
    macro_mode: Option<MacroMode>,
    #[arg(long)]
    llm: Option<LlmKind>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long)]
    embedding: Option<EmbeddingKind>,
    #[arg(long)]
    embedding_endpoint: Option<String>,
    #[arg(long)]
    embedding_model: Option<String>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    generator: Option<GenerationKind>,
    #[arg(long)]
    generator_endpoint: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl ConfigArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        set(&mut c.k, self.k);
        set(&mut c.n, self.n);
        set(&mut c.seed, self.seed);
        set(&mut c.max_input_len, self.max_input_len);
        set(&mut c.concurrency_limit, self.concurrency_limit);
        set(&mut c.cache_dir, self.cache_dir);
        set(&mut c.reflection_mode, self.reflection_mode);
        set(&mut c.macro_mode, self.macro_mode);
        if self.exclude_initial_answer {
            c.exclude_initial_answer = true;
        }
        for (slot, v) in [
            (&mut c.schema, self.schema),
            (&mut c.head_prompt, self.head_prompt),
            (&mut c.reflection_instruction, self.reflection_instruction),
            (&mut c.boilerplate_patterns, self.boilerplate_patterns),
            (&mut c.llm.transcript, self.transcript),
        ] {
            if v.is_some() {
                *slot = v;
            }
        }
        if self.history_budget.is_some() {
            c.history_budget = self.history_budget;
        }
        set(&mut c.llm.kind, self.llm);
        set(&mut c.llm.endpoint, self.llm_endpoint);
        set(&mut c.llm.model, self.llm_model);
        set(&mut c.embedding.kind, self.embedding);
        set(&mut c.embedding.endpoint, self.embedding_endpoint);
        set(&mut c.embedding.model, self.embedding_model);
        set(&mut c.embedding.dim, self.embedding_dim);
        set(&mut c.generation.kind, self.generator);
        set(&mut c.generation.endpoint, self.generator_endpoint);
        set(&mut c.generation.batch_size, self.batch_size);
        c.validate()?;
        c.check_paths()?;
        Ok(c)
    }
}

fn load_schema(path: Option<&Path>) -> Result<Schema> {
    match path {
        Some(p) => Schema::load(p),
        None => Ok(Schema::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sample {
            input,
            seed,
            train_size,
            dev_size,
            out_dir,
            schema,
        } => {
            let schema = load_schema(schema.as_deref())?;
            let corpus = load_corpus(&input, &schema)?;
            let (train, dev) = sample_few_shot(
                &corpus,
                &SplitSpec {
                    seed,
                    train_size,
                    dev_size,
                },
            )?;
            train.save(&out_dir.join("train.jsonl"))?;
            dev.save(&out_dir.join("dev.jsonl"))?;
            let report = divergence_report(&corpus, &train, &dev)?;
            io::write_atomic(&out_dir.join("divergence.txt"), report.as_bytes())?;
            print!("{report}");
        }
        Command::Stage1 { input, bank, out, opts } => {
            let cfg = opts.resolve()?;
            let k = pipeline::stage1_files(&cfg, &input, &bank, &out)?;
            eprintln!("wrote {} knowledge records to {}", k.len(), out.display());
        }
        Command::Prepare {
            input,
            knowledge,
            out,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let ex = pipeline::prepare_files(&cfg, &input, &knowledge, &out)?;
            eprintln!("wrote {} stage-2 records to {}", ex.len(), out.display());
        }
        Command::Predict { input, out, opts } => {
            let cfg = opts.resolve()?;
            let preds = pipeline::predict_files(&cfg, &input, &out, None)?;
            eprintln!("wrote {} predictions to {}", preds.records.len(), out.display());
            if !preds.failed.is_empty() {
                return Err(Error::Backend(mmre_core::BackendError::Transport(format!(
                    "generation failed for {} samples: {}",
                    preds.failed.len(),
                    preds.failed.join(", ")
                ))));
            }
        }
        Command::Score {
            pred,
            gold,
            schema,
            macro_mode,
            json,
        } => {
            let schema = load_schema(schema.as_deref())?;
            let report = pipeline::score_files(&pred, &gold, &schema, macro_mode)?;
            print!("{}", report.to_table());
            if let Some(path) = json {
                io::write_atomic(&path, (report.to_json() + "\n").as_bytes())?;
            }
        }
        Command::Run {
            input,
            bank,
            out_dir,
            opts,
        } => {
            let cfg = opts.resolve()?;
            let report = pipeline::run_all(&cfg, &input, &bank, &out_dir)?;
            print!("{}", report.to_table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Interrupted { completed, total, .. } = &e {
                eprintln!("{completed} of {total} samples finished and are cached; rerun the same command to resume");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
