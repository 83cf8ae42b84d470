use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use narrascore::corpus::{
    corrupt_records, load_corpus, measure_cer, read_records, records_fingerprint, synthesize_corpus, validate_records,
    write_records, Split, SynthSpec, Task, TranscriptVariant,
};
use narrascore::features::{FeatureMatrix, FeatureSchema};
use narrascore::harness::{
    apply_override, evaluate_predictions, predictions_to_jsonl, read_human_scores, read_predictions, run_experiment,
    run_grid, GridConfig, PredictionRow, RunConfig,
};
use narrascore::linear_models::{inspect_weights, train_for_task, ModelArtifact, Predictions};
use narrascore::llm_scoring::{BackendConfig, LlmKind, LlmScorer, TranslatorKind};
use narrascore::metrics::{EvalReport, TaskMetrics};
use narrascore::{Error, Result};

#[derive(Parser)]
#[command(name = "narrascore", version, about = "Score children's oral narratives from transcripts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Mock,
    Http,
}

#[derive(Clone, Copy, ValueEnum)]
enum TranslateArg {
    Identity,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Check a corpus file and print a summary.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with generator settings.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// key=value overrides, e.g. `train=100` or `ns_model.intercept=3`.
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Write ASR transcripts by corrupting oracle transcripts to a target CER.
    Corrupt {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        cer: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the feature matrix of every record as CSV.
    Featurize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "oracle")]
        variant: TranscriptVariant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tune α on dev and train one model.
    Train {
        #[arg(long)]
        task: Task,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "oracle")]
        variant: TranscriptVariant,
        /// Comma-separated α values; defaults to a log grid below α_max.
        #[arg(long, value_delimiter = ',')]
        alpha_grid: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict one task with a trained model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the test split with in-context LLM prompting.
    ScoreLlm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "oracle")]
        variant: TranscriptVariant,
        #[arg(long, value_enum, default_value = "mock")]
        backend: BackendArg,
        #[arg(long, value_enum, default_value = "identity")]
        translate: TranslateArg,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// TOML backend settings (endpoints, retries, budget).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set")]
        overrides: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a predictions file with ground truth.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Print JSON reports instead of a summary.
        #[arg(long)]
        json: bool,
    },
    /// Run one experiment cell from a run config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
    },
    /// Run a grid of cells and print the comparison tables.
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Human scores (predictions format) for an extra comparison row.
        #[arg(long)]
        human: Option<PathBuf>,
        /// Also write the tables and table JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show the largest weights of a trained model.
    Weights {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
    },
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_toml_with(path: Option<&Path>, overrides: &[String]) -> Result<toml::Table> {
    let mut table = match path {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| Error::io(p, e))?
            .parse()?,
        None => toml::Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    Ok(table)
}

fn summarize(report: &EvalReport) -> String {
    match &report.metrics {
        TaskMetrics::Regression { r2, mae } => format!("{:<3} n={:<4} R²={r2:.4}  MAE={mae:.4}", report.task, report.n),
        TaskMetrics::Ordinal { kappa_linear, .. } => {
            format!("{:<3} n={:<4} κ={kappa_linear:.4}", report.task, report.n)
        }
        TaskMetrics::Binary {
            accuracy_pct,
            recall_pct,
            f1_pct,
            precision,
            ..
        } => format!(
            "{:<3} n={:<4} accuracy={accuracy_pct}%  recall={recall_pct}%  precision={:.0}%  F1={f1_pct}%",
            report.task,
            report.n,
            precision * 100.0
        ),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { corpus } => {
            let records = read_records(&corpus)?;
            validate_records(&records)?;
            let count = |s: Split| records.iter().filter(|r| r.split == s).count();
            let language = records.first().map(|r| r.language.to_string()).unwrap_or_default();
            println!(
                "{} records ({language}): train {}, dev {}, test {}",
                records.len(),
                count(Split::Train),
                count(Split::Dev),
                count(Split::Test)
            );
            for &variant in TranscriptVariant::ALL {
                let have = records.iter().filter(|r| r.transcript(variant).is_some()).count();
                println!("{variant} transcripts: {have}");
            }
            println!("fingerprint {}", records_fingerprint(&records));
        }
        Command::Synth {
            out,
            config,
            seed,
            overrides,
        } => {
            let spec: SynthSpec = load_toml_with(config.as_deref(), &overrides)?.try_into()?;
            let synthetic = synthesize_corpus(&spec, seed)?;
            write_records(&out, synthetic.corpus.records())?;
            println!(
                "wrote {} records to {}; planted NS features {:?}",
                synthetic.corpus.records().len(),
                out.display(),
                synthetic.planted_ns_features()
            );
        }
        Command::Corrupt { corpus, cer, seed, out } => {
            let records = read_records(&corpus)?;
            let corrupted = corrupt_records(&records, cer, seed)?;
            let (mut edits, mut chars) = (0.0, 0.0);
            for r in &corrupted {
                if let (Some(o), Some(a)) = (&r.transcript_oracle, &r.transcript_asr) {
                    let n = o.chars().count() as f64;
                    edits += measure_cer(o, a)? * n;
                    chars += n;
                }
            }
            write_records(&out, &corrupted)?;
            println!("wrote {}; measured CER {:.4}", out.display(), edits / chars.max(1.0));
        }
        Command::Featurize { corpus, variant, out } => {
            let corpus = load_corpus(&corpus, variant)?;
            let schema = FeatureSchema::from_corpus(&corpus);
            let matrix = FeatureMatrix::build(corpus.records().iter(), &schema, variant)?;
            matrix.write_csv(&out)?;
            println!("wrote {}×{} features to {}", matrix.nrows(), schema.len(), out.display());
        }
        Command::Train {
            task,
            corpus,
            variant,
            alpha_grid,
            out,
        } => {
            let corpus = load_corpus(&corpus, variant)?;
            let artifact = train_for_task(&corpus, task, alpha_grid.as_deref())?;
            artifact.save(&out)?;
            let w = inspect_weights(&artifact.model, 0);
            println!(
                "{task}: α={:.6} (α_max {:.6}), {} nonzero / {} zeroed; wrote {}",
                artifact.tuning.best_alpha,
                artifact.tuning.alpha_max,
                w.nonzero,
                w.zeroed,
                out.display()
            );
        }
        Command::Predict {
            model,
            corpus,
            split,
            out,
        } => {
            let artifact = ModelArtifact::load(&model)?;
            let corpus = load_corpus(&corpus, artifact.variant)?;
            let records: Vec<_> = corpus.split(split).collect();
            let matrix = FeatureMatrix::build(records.iter().copied(), &artifact.schema(), artifact.variant)?;
            let predictions = artifact.model.predict_matrix(&matrix)?;
            let task = artifact.model.target();
            let mut text = String::new();
            for (i, r) in records.iter().enumerate() {
                let value = match &predictions {
                    Predictions::Scores(v) => serde_json::json!(v[i]),
                    Predictions::Categories(v) => serde_json::json!(v[i]),
                    Predictions::Flags(v) => serde_json::json!(v[i]),
                };
                let row = serde_json::json!({"child_id": r.child_id, "task": task, "prediction": value});
                text.push_str(&row.to_string());
                text.push('\n');
            }
            write_file(&out, &text)?;
            println!("wrote {} {task} predictions to {}", records.len(), out.display());
        }
        Command::ScoreLlm {
            corpus,
            variant,
            backend,
            translate,
            cache,
            config,
            overrides,
            out,
        } => {
            let mut settings: BackendConfig = load_toml_with(config.as_deref(), &overrides)?.try_into()?;
            settings.llm = match backend {
                BackendArg::Mock => LlmKind::MockKnn,
                BackendArg::Http => LlmKind::Http,
            };
            settings.translator = match translate {
                TranslateArg::Identity => TranslatorKind::Identity,
                TranslateArg::Http => TranslatorKind::Http,
            };
            if cache.is_some() {
                settings.cache_dir = cache;
            }
            let corpus = load_corpus(&corpus, variant)?;
            let scorer = LlmScorer::new(&corpus, variant, &settings)?;
            let test: Vec<_> = corpus.split(Split::Test).collect();
            let scores = scorer.score_all(&test)?;
            let rows: Vec<PredictionRow> = test
                .iter()
                .zip(&scores)
                .map(|(r, s)| PredictionRow {
                    child_id: r.child_id.clone(),
                    ns: s.ns,
                    cq: s.cq,
                    sc: s.sc,
                    ri: s.ri,
                })
                .collect();
            write_file(&out, &predictions_to_jsonl(&rows)?)?;
            let mut raw = String::new();
            for (r, s) in test.iter().zip(&scores) {
                raw.push_str(&serde_json::json!({"child_id": r.child_id, "raw_response": s.raw_response}).to_string());
                raw.push('\n');
            }
            let raw_path = out.with_extension("responses.jsonl");
            write_file(&raw_path, &raw)?;
            let stats = scorer.stats();
            println!(
                "scored {} children; {} LLM calls, {} cache hits, {} network calls, {} examples dropped",
                rows.len(),
                stats.llm_calls,
                stats.cache_hits,
                stats.network_calls,
                stats.dropped_examples
            );
        }
        Command::Evaluate {
            corpus,
            predictions,
            json,
        } => {
            let records = read_records(&corpus)?;
            let rows = read_predictions(&predictions)?;
            let reports = evaluate_predictions(&records, &rows)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&reports)?);
            } else {
                for r in &reports {
                    println!("{}", summarize(r));
                }
            }
        }
        Command::Run { config, overrides } => {
            let config = RunConfig::load(&config, &overrides)?;
            let manifest = run_experiment(&config)?;
            for r in &manifest.reports {
                println!("{}", summarize(r));
            }
            println!("manifest: {}", config.output_dir.join("manifest.json").display());
        }
        Command::Grid {
            config,
            overrides,
            human,
            out,
        } => {
            let grid = GridConfig::load(&config, &overrides)?;
            let human_path = human.or(grid.human.clone());
            let human = human_path.as_deref().map(read_human_scores).transpose()?;
            let outcome = run_grid(&grid.cells, human.as_deref())?;
            let headline = outcome.table.render_headline();
            let errors = outcome.table.render_errors();
            println!("{headline}\n{errors}");
            if let Some(dir) = out {
                write_file(&dir.join("table.md"), &format!("{headline}\n{errors}"))?;
                write_file(&dir.join("table.json"), &serde_json::to_string_pretty(&outcome.table)?)?;
            }
        }
        Command::Weights { model, top } => {
            let artifact = ModelArtifact::load(&model)?;
            let report = inspect_weights(&artifact.model, top);
            println!(
                "{} model, α={:.6}: {} nonzero, {} zeroed",
                artifact.model.target(),
                artifact.model.alpha(),
                report.nonzero,
                report.zeroed
            );
            for (name, weight) in &report.top {
                println!("{weight:>+12.6}  {name}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
