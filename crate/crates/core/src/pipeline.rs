//! End-to-end pipelines behind the command-line tool: train, generate,
//! answer, evaluate QA, evaluate diversity, synthesize data.

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, BackboneConfig, BackboneModel};
use crate::checkpoint::{Checkpoint, Provenance};
use crate::diversity::{div_bleu, div_ngram};
use crate::error::{Error, Result};
use crate::kg::{RelationId, TripleStore};
use crate::question::{map_question, question_patterns};
use crate::reasoning::{generate_hop, GeneratedEvent, ReasonConfig};
use crate::scorer::{answer_question, ScorerConfig};
use crate::text::{tokenize, Vocab};
use crate::trainer::{BatchMetrics, EpochMetrics, TrainConfig, Trainer};

/// Everything a command needs. Every field has a default, so a config file
/// may list only what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub kg: Option<PathBuf>,
    pub qa: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub reason: ReasonConfig,
    pub scorer: ScorerConfig,
    /// Generations per head for diversity evaluation.
    pub div_top_m: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            kg: None,
            qa: None,
            ckpt: None,
            backbone: BackboneConfig::default(),
            train: TrainConfig::default(),
            reason: ReasonConfig::default(),
            scorer: ScorerConfig::default(),
            div_top_m: 5,
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Applies `seed` to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.backbone.seed = seed;
        self.train.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<usize>,
    /// Name standing for the question's agent, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        if self.answers.len() < 2 {
            return Err(Error::TooFewAnswers {
                needed: 2,
                got: self.answers.len(),
            });
        }
        let distinct: BTreeSet<&String> = self.answers.iter().collect();
        if distinct.len() != self.answers.len() {
            return Err(Error::BadConfig(format!("example {}: answers are not distinct", self.id)));
        }
        if let Some(g) = self.gold {
            if g >= self.answers.len() {
                return Err(Error::BadConfig(format!("example {}: gold index {g} out of range", self.id)));
            }
        }
        Ok(())
    }
}

/// Line-delimited QA records. Blank lines are ignored; malformed or invalid
/// records are skipped and counted.
pub fn parse_qa_jsonl<R: BufRead>(reader: R) -> Result<(Vec<QAExample>, usize)> {
    let mut out = Vec::new();
    let mut skipped = 0;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<QAExample>(&line) {
            Ok(ex) if ex.validate().is_ok() => out.push(ex),
            _ => skipped += 1,
        }
    }
    Ok((out, skipped))
}

/// Builds a vocabulary from `store`, initializes a backbone and trains it.
pub fn train_model(
    store: &TripleStore,
    backbone: &BackboneConfig,
    train: &TrainConfig,
    mut on_batch: impl FnMut(&BatchMetrics),
) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    let vocab = Vocab::build(store, train.num_latents, 1)?;
    let mut model = BackboneModel::init(backbone.clone(), vocab)?;
    let mut trainer = Trainer::new(&model, store, train.clone())?;
    let mut epochs = Vec::with_capacity(train.epochs);
    for _ in 0..train.epochs {
        epochs.push(trainer.train_epoch(&mut model, &mut on_batch)?);
    }
    let provenance = Provenance {
        train: Some(train.clone()),
        epochs_done: trainer.epochs_done(),
        steps: trainer.steps(),
        ..Provenance::now()
    };
    Ok((Checkpoint { model, provenance }, epochs))
}

/// Zero-hop generation from `text` with the checkpoint's latent count
/// capped at `latents`.
pub fn generate(ck: &Checkpoint, text: &str, r: RelationId, latents: usize, beam: usize) -> Result<Vec<GeneratedEvent>> {
    let k = latents.min(ck.provenance.generation_latents(ck.model.vocab()));
    generate_hop(&ck.model, &tokenize(text), r, k, beam)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub example_id: String,
    pub relation: RelationId,
    pub chosen: usize,
    pub scores: Vec<f64>,
    /// Events of each answer's best path; `None` when no path was used.
    pub best_path_events: Vec<Option<Vec<String>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

/// Maps the question to a relation, reasons from the context and picks an
/// answer. See [`reason_for`] to match `reason.latents` to a checkpoint.
pub fn answer_example<B: Backbone>(
    model: &B,
    ex: &QAExample,
    reason: &ReasonConfig,
    scorer: &ScorerConfig,
) -> Result<AnswerRecord> {
    ex.validate()?;
    let relation = map_question(&ex.question, ex.agent.as_deref()).relation;
    let (decision, paths) = answer_question(model, &ex.context, relation, &ex.answers, reason, scorer)?;
    let best_path_events = decision
        .best_paths
        .iter()
        .map(|p| p.map(|i| paths[i].events.clone()))
        .collect();
    Ok(AnswerRecord {
        example_id: ex.id.clone(),
        relation,
        chosen: decision.chosen,
        correct: ex.gold.map(|g| g == decision.chosen),
        gold: ex.gold,
        scores: decision.scores,
        best_path_events,
    })
}

/// Reasoning settings adjusted to what the checkpoint supports.
pub fn reason_for(ck: &Checkpoint, reason: &ReasonConfig) -> ReasonConfig {
    ReasonConfig {
        latents: reason.latents.min(ck.provenance.generation_latents(ck.model.vocab())),
        ..*reason
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaSummary {
    /// Fraction correct over gold-labeled examples; `None` if none are labeled.
    pub accuracy: Option<f64>,
    pub labeled: usize,
    pub correct: usize,
    pub answered: usize,
    /// Malformed input records plus examples that failed to score.
    pub skipped: usize,
}

pub fn summarize_qa(records: &[AnswerRecord], skipped: usize) -> QaSummary {
    let labeled = records.iter().filter(|r| r.correct.is_some()).count();
    let correct = records.iter().filter(|r| r.correct == Some(true)).count();
    QaSummary {
        accuracy: (labeled > 0).then(|| correct as f64 / labeled as f64),
        labeled,
        correct,
        answered: records.len(),
        skipped,
    }
}

/// Answers every example in order. Examples that fail to score are skipped
/// and counted.
pub fn answer_all<B: Backbone>(
    model: &B,
    examples: &[QAExample],
    reason: &ReasonConfig,
    scorer: &ScorerConfig,
) -> Result<(Vec<AnswerRecord>, usize)> {
    scorer.validate()?;
    let mut out = Vec::with_capacity(examples.len());
    let mut failed = 0;
    for ex in examples {
        match answer_example(model, ex, reason, scorer) {
            Ok(rec) => out.push(rec),
            Err(_) => failed += 1,
        }
    }
    Ok((out, failed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadDiversity {
    pub head: String,
    pub generations: Vec<String>,
    pub div_ngram: Option<f64>,
    pub div_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityEval {
    pub relation: RelationId,
    pub beam: usize,
    pub latents: usize,
    #[serde(rename = "M")]
    pub top_m: usize,
    pub per_head: Vec<HeadDiversity>,
    pub mean_div_ngram: Option<f64>,
    pub mean_div_bleu: Option<f64>,
    /// Heads with fewer than two generations.
    pub excluded_heads: usize,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Diversity of the top-`top_m` pooled generations for each head.
pub fn eval_diversity<B: Backbone>(
    model: &B,
    heads: &[String],
    r: RelationId,
    latents: usize,
    beam: usize,
    top_m: usize,
) -> Result<DiversityEval> {
    if top_m < 2 {
        return Err(Error::BadConfig("M must be at least 2".into()));
    }
    let mut per_head = Vec::with_capacity(heads.len());
    let mut excluded = 0;
    for head in heads {
        let gens = generate_hop(model, &tokenize(head), r, latents, beam)?;
        let generations: Vec<String> = gens.into_iter().take(top_m).map(|g| g.event).collect();
        let seqs: Vec<Vec<String>> = generations.iter().map(|g| tokenize(g)).collect();
        let (dn, db) = if seqs.len() < 2 {
            excluded += 1;
            (None, None)
        } else {
            (div_ngram(&seqs).ok(), div_bleu(&seqs).ok())
        };
        per_head.push(HeadDiversity {
            head: head.clone(),
            generations,
            div_ngram: dn,
            div_bleu: db,
        });
    }
    Ok(DiversityEval {
        relation: r,
        beam,
        latents,
        top_m,
        mean_div_ngram: mean(per_head.iter().filter_map(|h| h.div_ngram)),
        mean_div_bleu: mean(per_head.iter().filter_map(|h| h.div_bleu)),
        per_head,
        excluded_heads: excluded,
    })
}

/// Three-way questions from a triple store. For each head and relation with
/// tails, the correct answer is one of its tails and the two distractors are
/// tails of other relations of the same head. The question is the relation's
/// template with `agent` in the slot.
pub fn synth_qa(store: &TripleStore, agent: &str, seed: u64) -> Vec<QAExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for head in store.heads() {
        for pattern in question_patterns() {
            let r = pattern.relation;
            let gold_pool = store.tails_of(&head, r);
            let Some(&gold) = gold_pool.choose(&mut rng) else {
                continue;
            };
            let mut others: Vec<&str> = RelationId::ALL
                .iter()
                .filter(|&&o| o != r)
                .flat_map(|&o| store.tails_of(&head, o))
                .filter(|t| !gold_pool.contains(t))
                .collect();
            others.sort_unstable();
            others.dedup();
            if others.len() < 2 {
                continue;
            }
            let mut answers: Vec<String> = others
                .choose_multiple(&mut rng, 2)
                .map(|s| s.to_string())
                .collect();
            answers.push(gold.to_string());
            answers.shuffle(&mut rng);
            let gold = answers.iter().position(|a| a == gold);
            out.push(QAExample {
                id: format!("q{}", out.len()),
                context: head.clone(),
                question: pattern.template.replace("AGENT", agent),
                answers,
                gold,
                agent: Some(agent.to_string()),
            });
        }
    }
    out
}

/// One head per line; blank lines ignored.
pub fn parse_heads<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if !t.is_empty() {
            out.push(t.to_string());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::TableBackbone;
    use crate::kg::synth_kg;

    #[test]
    fn qa_parsing_skips_and_counts_bad_records() {
        let text = r#"{"id":"a","context":"c","question":"q","answers":["x","y"],"gold":1}

not json
{"id":"b","context":"c","question":"q","answers":["x"]}
{"id":"c","context":"c","question":"q","answers":["x","x"]}
{"id":"d","context":"c","question":"q","answers":["x","y","z"]}
"#;
        let (exs, skipped) = parse_qa_jsonl(text.as_bytes()).unwrap();
        assert_eq!(exs.iter().map(|e| e.id.as_str()).collect::<Vec<_>>(), ["a", "d"]);
        assert_eq!(skipped, 3);
        assert_eq!(exs[1].gold, None);
    }

    #[test]
    fn accuracy_is_null_without_labels() {
        let rec = |correct: Option<bool>| AnswerRecord {
            example_id: "x".into(),
            relation: RelationId::XWant,
            chosen: 0,
            scores: vec![0.0, -1.0],
            best_path_events: vec![None, None],
            gold: correct.map(|_| 0),
            correct,
        };
        assert_eq!(summarize_qa(&[rec(None), rec(None)], 0).accuracy, None);
        let s = summarize_qa(&[rec(Some(true)), rec(Some(false)), rec(None)], 2);
        assert_eq!((s.accuracy, s.labeled, s.correct, s.skipped), (Some(0.5), 2, 1, 2));
    }

    #[test]
    fn synthetic_questions_are_well_formed() {
        let store = synth_kg(6, 2..=3, 3);
        let qa = synth_qa(&store, "PersonX", 5);
        assert_eq!(qa.len(), 6 * 9);
        for ex in &qa {
            ex.validate().unwrap();
            assert_eq!(ex.answers.len(), 3);
            let m = map_question(&ex.question, ex.agent.as_deref());
            assert!(m.exact);
            let gold = &ex.answers[ex.gold.unwrap()];
            assert!(store.tails_of(&ex.context, m.relation).contains(&gold.as_str()));
            for (i, a) in ex.answers.iter().enumerate() {
                if Some(i) != ex.gold {
                    assert!(!store.tails_of(&ex.context, m.relation).contains(&a.as_str()));
                }
            }
        }
        assert_eq!(qa, synth_qa(&store, "PersonX", 5));
    }

    fn flat_table() -> TableBackbone {
        let v = Vocab::from_tokens(["a", "b"].iter().map(|s| s.to_string()).collect(), 2).unwrap();
        let t = TableBackbone::table_from_weights(
            &v,
            &[(v.bos(), vec![(v.id("a"), 1.0)]), (v.id("a"), vec![(v.eos(), 1.0)])],
        );
        TableBackbone::new(v, 5, t).unwrap()
    }

    #[test]
    fn identical_generations_are_excluded_from_diversity() {
        // Both latents decode "a" and are merged, leaving one generation.
        let m = flat_table();
        let rep = eval_diversity(&m, &["b".to_string()], RelationId::XWant, 2, 1, 2).unwrap();
        assert_eq!(rep.excluded_heads, 1);
        assert_eq!(rep.mean_div_ngram, None);
        assert_eq!(rep.per_head[0].generations, ["a"]);
        let json = serde_json::to_value(&rep).unwrap();
        assert_eq!(json["M"], 2);
    }

    #[test]
    fn heads_file_ignores_blank_lines() {
        assert_eq!(parse_heads("x y\n\n  z \n".as_bytes()).unwrap(), ["x y", "z"]);
    }
}
