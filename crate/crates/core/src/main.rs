use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use rankintent::blackbox::{write_intents, Agnosticism};
use rankintent::candidates::{reductive_filter, FilterParams};
use rankintent::harness::{
    explain_pair, explain_prepared, explanation_path, prepare, run_experiment, write_atomic, Collection, ExperimentConfig,
    Explanation,
};
use rankintent::index::Index;
use rankintent::preference::PreferenceMatrix;
use rankintent::solver::{exact_select, greedy_select_with, PsumMode, StopRule};
use rankintent::synth::{SynthParams, SyntheticCollection};
use rankintent::tokenize::Tokenizer;
use rankintent::{Error, Result};

#[derive(Parser)]
#[command(name = "rankintent", version, about = "Explain black-box rankers with intent terms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tokenize a JSONL corpus and save the index.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        stem: bool,
        #[arg(long)]
        stopwords: Option<PathBuf>,
    },
    /// Write a synthetic corpus with planted intents.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 600)]
        docs: usize,
        #[arg(long, default_value_t = 25)]
        queries: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Explain queries and write one explanation JSON per query and strategy.
    Explain {
        #[command(flatten)]
        run: RunArgs,
        /// Explain only this query.
        #[arg(long)]
        query: Option<String>,
    },
    /// Run every query and strategy, write records, summaries and sweeps.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Select terms from a saved preference matrix.
    Solve {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = 10)]
        budget: usize,
        /// Exhaustive search (at most 22 candidates).
        #[arg(long)]
        exact: bool,
        #[arg(long, default_value = "all-positive")]
        psum: String,
        /// positive or non-negative.
        #[arg(long, default_value = "positive")]
        stop: String,
    },
    /// Per-term breakdown for a document pair of an explanation.
    Pair {
        #[arg(long)]
        explanation: PathBuf,
        /// JSONL corpus or saved index the explanation was built on.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Print the candidate set of a query with stage and deltas.
    Candidates {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        query: String,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    blackbox: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated strategies.
    #[arg(long)]
    sampling: Option<String>,
    #[arg(long)]
    features: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Comma-separated candidate caps, e.g. 1000,500,250.
    #[arg(long)]
    caps: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::from_file(&self.config)?;
        if let Some(b) = &self.blackbox {
            cfg.blackbox = b.clone();
        }
        if let Some(m) = &self.mode {
            cfg.mode = m.clone();
        }
        if let Some(s) = &self.sampling {
            cfg.sampling = s.split(',').map(|x| x.trim().to_string()).collect();
        }
        if self.features.is_some() {
            cfg.features = self.features;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.embeddings.is_some() {
            cfg.embeddings = self.embeddings.clone();
        }
        if let Some(c) = &self.caps {
            cfg.caps = c
                .split(',')
                .map(|x| x.trim().parse().map_err(|_| Error::Config(format!("bad cap `{x}`"))))
                .collect::<Result<_>>()?;
            if cfg.agnosticism()? == Agnosticism::Strong && cfg.caps.len() > 1 {
                return Err(Error::Config(
                    "perturbation caps need weak mode: scores are hidden when strongly agnostic".into(),
                ));
            }
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_index(path: &Path) -> Result<Index> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        Index::from_jsonl(&Tokenizer::new(), path)
    } else {
        Index::load(path)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Index {
            corpus,
            out,
            stem,
            stopwords,
        } => {
            let mut tok = Tokenizer::new().with_stemming(stem);
            if let Some(sw) = stopwords {
                tok = tok.with_stopword_file(&sw)?;
            }
            let index = Index::from_jsonl(&tok, &corpus)?;
            index.save(&out)?;
            println!("{} documents, {} terms", index.doc_count(), index.vocab_size());
        }
        Command::Synth {
            out,
            docs,
            queries,
            seed,
        } => {
            let p = SynthParams {
                docs,
                queries,
                seed,
                ..SynthParams::default()
            };
            SyntheticCollection::generate(&p)?.write(&out)?;
            println!("wrote corpus.jsonl, queries.tsv, intents.tsv, embeddings.txt to {}", out.display());
        }
        Command::Explain { run, query } => {
            let cfg = run.config()?;
            let coll = Collection::load(&cfg)?;
            let queries: Vec<_> = match &query {
                Some(id) => vec![coll.query(id)?.clone()],
                None => coll.queries.clone(),
            };
            let mut intents = Vec::new();
            for q in &queries {
                let prep = match prepare(&cfg, &coll, q) {
                    Ok(p) => p,
                    Err(e) if query.is_none() && !e.is_config() => {
                        warn!("query {}: {e}", q.id);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                intents.push(prep.blackbox.intent().clone());
                for s in cfg.strategies()? {
                    let expl = explain_prepared(&cfg, &coll, &prep, s, cfg.feature_count())?;
                    println!("{}\t{}\t{}\t{}", expl.query_id, expl.sampling, expl.coverage, expl.terms.join(" "));
                    if let Some(out) = &cfg.output {
                        write_atomic(&explanation_path(&cfg, out, &q.id, s), &serde_json::to_vec_pretty(&expl)?)?;
                    }
                }
            }
            if let Some(out) = &cfg.output {
                write_intents(&out.join(format!("{}.intents.tsv", cfg.run_name())), &intents)?;
            }
        }
        Command::Evaluate { run } => {
            let cfg = run.config()?;
            let coll = Collection::load(&cfg)?;
            let report = run_experiment(&cfg, &coll)?;
            print!("{}", report.summary_tsv());
            for f in &report.failures {
                eprintln!("failed: {} {}: {}", f.query_id, f.sampling.as_deref().unwrap_or("-"), f.reason);
            }
        }
        Command::Solve {
            matrix,
            budget,
            exact,
            psum,
            stop,
        } => {
            let text = fs::read_to_string(&matrix).map_err(|e| Error::Io {
                path: matrix.clone(),
                source: e,
            })?;
            let m = PreferenceMatrix::from_tsv("matrix", &text)?;
            let sel = if exact {
                exact_select(&m, budget)?
            } else {
                greedy_select_with(&m, budget, psum.parse::<PsumMode>()?, stop.parse::<StopRule>()?, None)
            };
            println!("{}", serde_json::to_string_pretty(&sel)?);
        }
        Command::Pair {
            explanation,
            corpus,
            a,
            b,
        } => {
            let expl = Explanation::from_json_file(&explanation)?;
            let index = load_index(&corpus)?;
            print!("{}", explain_pair(&expl, &index, &a, &b)?.to_tsv());
        }
        Command::Candidates { run, query } => {
            let cfg = run.config()?;
            let coll = Collection::load(&cfg)?;
            let q = coll.query(&query)?;
            let prep = prepare(&cfg, &coll, q)?;
            print!("{}", prep.initial.to_tsv());
            if prep.blackbox.mode() == Agnosticism::Weak {
                let params = FilterParams {
                    explain_k: cfg.k,
                    reductive_sample: cfg.reductive_sample,
                    n_add: cfg.n_add,
                    seed: cfg.sub_seed("doc-sample", &q.id),
                };
                // rerun the reductive stage so it can be shown on its own
                let red = reductive_filter(&prep.initial, &prep.blackbox, &coll.index, &prep.ranking, cfg.caps[1], &params)?;
                print!("{}", red.to_tsv());
                print!("{}", prep.filtered.to_tsv());
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
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
