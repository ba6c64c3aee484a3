//! Command-line front end. Every command prints line-delimited JSON on
//! stdout; diagnostics go to stderr.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use mixreason::checkpoint::{load_checkpoint, save_checkpoint};
use mixreason::kg::{parse_kg_tsv, synth_kg, RelationId};
use mixreason::pipeline::{
    answer_all, eval_diversity, generate, parse_heads, parse_qa_jsonl, reason_for, summarize_qa, synth_qa, train_model,
    RunConfig,
};
use mixreason::scorer::Distance;
use mixreason::trainer::TrainMode;
use mixreason::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Latent mixture seq2seq over if-then knowledge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Default)]
struct Common {
    /// JSON run config; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    kg: Option<PathBuf>,
    #[arg(long, global = true)]
    qa: Option<PathBuf>,
    #[arg(long, global = true)]
    ckpt: Option<PathBuf>,
    #[arg(long, global = true)]
    relation: Option<String>,
    #[arg(long, global = true)]
    hops: Option<usize>,
    #[arg(long, global = true)]
    latents: Option<usize>,
    #[arg(long, global = true)]
    beam: Option<usize>,
    #[arg(long, global = true)]
    top_paths: Option<usize>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// cosine, bleu, seq2seq_likelihood or avg_word_prob.
    #[arg(long, global = true)]
    distance: Option<Distance>,
    /// constrained_em, hard_em or no_latent.
    #[arg(long, global = true)]
    mode: Option<TrainMode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    batch_sets: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on --kg and write --ckpt; one JSON line per batch.
    Train,
    /// Zero-hop generations for one input text.
    Generate {
        #[arg(long)]
        text: String,
    },
    /// One decision per example in --qa.
    Answer,
    /// Accuracy over the labeled examples in --qa.
    EvalQa,
    /// Diversity of pooled generations for the heads listed in a file.
    EvalDiv {
        #[arg(long)]
        heads: PathBuf,
        /// Generations kept per head.
        #[arg(long)]
        top_m: Option<usize>,
    },
    /// Writes a synthetic corpus to --kg and, with --qa, questions about
    /// held-out heads.
    SynthKg {
        #[arg(long, default_value_t = 50)]
        n_heads: usize,
        #[arg(long, default_value_t = 3)]
        min_tails: usize,
        #[arg(long, default_value_t = 3)]
        max_tails: usize,
        /// Extra heads kept out of the corpus and used for questions.
        #[arg(long, default_value_t = 30)]
        holdout: usize,
        #[arg(long, default_value = "PersonX")]
        agent: String,
    },
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg = cfg.with_seed(s);
    }
    cfg.kg = c.kg.clone().or(cfg.kg);
    cfg.qa = c.qa.clone().or(cfg.qa);
    cfg.ckpt = c.ckpt.clone().or(cfg.ckpt);
    if let Some(k) = c.latents {
        cfg.train.num_latents = k;
        cfg.reason.latents = k;
    }
    let r = &mut cfg.reason;
    r.hops = c.hops.unwrap_or(r.hops);
    r.beam = c.beam.unwrap_or(r.beam);
    r.top_paths = c.top_paths.unwrap_or(r.top_paths);
    let s = &mut cfg.scorer;
    s.gamma = c.gamma.unwrap_or(s.gamma);
    s.distance = c.distance.unwrap_or(s.distance);
    let t = &mut cfg.train;
    t.mode = c.mode.unwrap_or(t.mode);
    t.epochs = c.epochs.unwrap_or(t.epochs);
    t.lr = c.lr.unwrap_or(t.lr);
    t.batch_sets = c.batch_sets.unwrap_or(t.batch_sets);
    Ok(cfg)
}

fn need<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::BadConfig(format!("--{flag} is required")))
}

fn relation(c: &Common) -> Result<RelationId> {
    let name = c.relation.as_deref().ok_or_else(|| Error::BadConfig("--relation is required".into()))?;
    name.parse().map_err(|s| Error::BadConfig(format!("unknown relation {s}")))
}

fn emit(out: &mut impl Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = run_config(&cli.common)?;
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    match cli.command {
        Command::Train => {
            let store = parse_kg_tsv(BufReader::new(File::open(need(&cfg.kg, "kg")?)?))?;
            let ckpt = need(&cfg.ckpt, "ckpt")?;
            if store.skipped_count() > 0 {
                eprintln!("skipped {} malformed KG lines", store.skipped_count());
            }
            let mut write_err = None;
            let (mut ck, epochs) = train_model(&store, &cfg.backbone, &cfg.train, |b| {
                if let Err(e) = emit(&mut out, b) {
                    write_err.get_or_insert(e);
                }
            })?;
            if let Some(e) = write_err {
                return Err(e);
            }
            for e in &epochs {
                eprintln!("epoch {} mean loss {:.4} distinct latents {:.2}", e.epoch, e.mean_loss, e.mean_distinct_latents);
            }
            ck.provenance.corpus = cfg.kg.as_ref().map(|p| p.display().to_string());
            save_checkpoint(ckpt, &ck.model, &ck.provenance)?;
        }
        Command::Generate { text } => {
            let ck = load_checkpoint(need(&cfg.ckpt, "ckpt")?)?;
            let gens = generate(&ck, &text, relation(&cli.common)?, cfg.reason.latents, cfg.reason.beam)?;
            emit(&mut out, &gens)?;
        }
        Command::Answer | Command::EvalQa => {
            let ck = load_checkpoint(need(&cfg.ckpt, "ckpt")?)?;
            let (examples, malformed) = parse_qa_jsonl(BufReader::new(File::open(need(&cfg.qa, "qa")?)?))?;
            if malformed > 0 {
                eprintln!("skipped {malformed} malformed QA records");
            }
            let (records, failed) = answer_all(&ck.model, &examples, &reason_for(&ck, &cfg.reason), &cfg.scorer)?;
            if failed > 0 {
                eprintln!("{failed} examples could not be scored");
            }
            if matches!(cli.command, Command::Answer) {
                for r in &records {
                    emit(&mut out, r)?;
                }
            } else {
                emit(&mut out, &summarize_qa(&records, malformed + failed))?;
            }
        }
        Command::EvalDiv { heads, top_m } => {
            let ck = load_checkpoint(need(&cfg.ckpt, "ckpt")?)?;
            let heads = parse_heads(BufReader::new(File::open(heads)?))?;
            let reason = reason_for(&ck, &cfg.reason);
            let m = top_m.unwrap_or(cfg.div_top_m);
            let rep = eval_diversity(&ck.model, &heads, relation(&cli.common)?, reason.latents, reason.beam, m)?;
            if rep.excluded_heads > 0 {
                eprintln!("{} heads had fewer than 2 generations", rep.excluded_heads);
            }
            emit(&mut out, &rep)?;
        }
        Command::SynthKg {
            n_heads,
            min_tails,
            max_tails,
            holdout,
            agent,
        } => {
            let all = synth_kg(n_heads + holdout, min_tails..=max_tails, cfg.seed);
            let train_heads: Vec<String> = all.heads().into_iter().take(n_heads).collect();
            let kg = all.filter_heads(|h| train_heads.iter().any(|t| t == h));
            kg.write_tsv(BufWriter::new(File::create(need(&cfg.kg, "kg")?)?))?;
            let mut questions = 0;
            if let Some(qa) = &cfg.qa {
                let held = all.filter_heads(|h| !train_heads.iter().any(|t| t == h));
                let mut w = BufWriter::new(File::create(qa)?);
                for ex in synth_qa(&held, &agent, cfg.seed) {
                    emit(&mut w, &ex)?;
                    questions += 1;
                }
                w.flush()?;
            }
            emit(
                &mut out,
                &json!({"triples": kg.len(), "heads": kg.heads().len(), "groups": kg.num_groups(), "questions": questions}),
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
