//! Answer scoring: distances between an answer and a path's last event, the
//! softmax answer posterior, and answer selection over paths.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{mixture_log_prob, Backbone};
use crate::diversity::bleu_smoothing1;
use crate::error::{Error, Result};
use crate::kg::RelationId;
use crate::numerics::{dot, log_sum_exp};
use crate::reasoning::{reason, ReasonConfig, ReasoningPath};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distance {
    /// Cosine distance of mean-pooled embeddings.
    #[default]
    Cosine,
    /// `1 - BLEU(answer, event)`.
    Bleu,
    /// Negative per-token log-likelihood of the answer generated from the event.
    Seq2seqLikelihood,
    /// Baseline without paths: per-token likelihood of the answer given the context.
    AvgWordProb,
}

impl Distance {
    pub fn name(self) -> &'static str {
        match self {
            Distance::Cosine => "cosine",
            Distance::Bleu => "bleu",
            Distance::Seq2seqLikelihood => "seq2seq_likelihood",
            Distance::AvgWordProb => "avg_word_prob",
        }
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distance {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "cosine" => Ok(Distance::Cosine),
            "bleu" => Ok(Distance::Bleu),
            "seq2seq_likelihood" | "seq2seq" => Ok(Distance::Seq2seqLikelihood),
            "avg_word_prob" => Ok(Distance::AvgWordProb),
            _ => Err(format!(
                "unknown distance `{s}` (cosine, bleu, seq2seq_likelihood, avg_word_prob)"
            )),
        }
    }
}

/// How per-path scores of one answer are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    /// Best single path.
    #[default]
    Max,
    /// Log of the sum over paths.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub distance: Distance,
    pub gamma: f64,
    pub combine: Combine,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            distance: Distance::Cosine,
            gamma: 1.0,
            combine: Combine::Max,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::BadConfig(format!("gamma must be positive, got {}", self.gamma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerDecision {
    pub chosen: usize,
    /// Combined score per answer.
    pub scores: Vec<f64>,
    /// Index of each answer's best path; `None` for the path-free baseline.
    pub best_paths: Vec<Option<usize>>,
}

/// `1 - cos(u, v)`, clamped to `[0, 2]`.
pub fn distance_cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - dot(u, v) / (nu * nv)).clamp(0.0, 2.0))
}

/// `1 - BLEU(hyp = answer, ref = event)`; 1 when either side is empty.
pub fn distance_bleu<S: AsRef<str>>(answer: &[S], event: &[S]) -> f64 {
    bleu_smoothing1(answer, event).map_or(1.0, |b| 1.0 - b)
}

/// `softmax(-gamma * d)`.
pub fn answer_posterior(distances: &[f64], gamma: f64) -> Vec<f64> {
    log_answer_posterior(distances, gamma).into_iter().map(f64::exp).collect()
}

fn log_answer_posterior(distances: &[f64], gamma: f64) -> Vec<f64> {
    let logits: Vec<f64> = distances.iter().map(|d| -gamma * d).collect();
    let z = log_sum_exp(&logits);
    logits.into_iter().map(|l| l - z).collect()
}

/// Mixture log-likelihood of `answer` given `source` and `r`, divided by the
/// number of predicted tokens (answer words plus EOS). Answers longer than
/// the model's target cap are truncated.
pub fn avg_word_prob<B: Backbone, S: AsRef<str>>(model: &B, source: &[S], r: RelationId, answer: &[S]) -> Result<f64> {
    if answer.is_empty() {
        return Err(Error::EmptyAnswer);
    }
    let cap = model.max_target_len() - 2;
    let answer = &answer[..answer.len().min(cap)];
    Ok(mixture_log_prob(model, source, r, answer)? / (answer.len() + 1) as f64)
}

/// Distance of every answer to one event under `distance`.
pub fn answer_distances<B: Backbone>(
    model: &B,
    event: &str,
    answers: &[String],
    r: RelationId,
    distance: Distance,
) -> Result<Vec<f64>> {
    let ev = tokenize(event);
    match distance {
        Distance::Cosine => {
            let e = model.embed_text(&ev)?;
            answers
                .iter()
                .map(|a| {
                    let toks = tokenize(a);
                    if toks.is_empty() {
                        return Err(Error::EmptyAnswer);
                    }
                    distance_cosine(&model.embed_text(&toks)?, &e)
                })
                .collect()
        }
        Distance::Bleu => Ok(answers.iter().map(|a| distance_bleu(&tokenize(a), &ev)).collect()),
        Distance::Seq2seqLikelihood => answers
            .iter()
            .map(|a| Ok(-avg_word_prob(model, &ev, r, &tokenize(a))?))
            .collect(),
        Distance::AvgWordProb => Err(Error::BadConfig(
            "avg_word_prob scores answers against the context, not a path".into(),
        )),
    }
}

fn argmax_first(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per answer, combines `path log-prob + log posterior of the answer given the
/// path's last event` over paths and picks the best answer (ties: smallest index).
pub fn select_answer<B: Backbone>(
    model: &B,
    paths: &[ReasoningPath],
    answers: &[String],
    r: RelationId,
    cfg: &ScorerConfig,
) -> Result<AnswerDecision> {
    cfg.validate()?;
    if paths.is_empty() {
        return Err(Error::NoPaths);
    }
    if answers.len() < 2 {
        return Err(Error::TooFewAnswers { needed: 2, got: answers.len() });
    }
    // terms[i][p] = score of answer i through path p
    let mut terms = vec![Vec::with_capacity(paths.len()); answers.len()];
    for p in paths {
        let d = answer_distances(model, p.last_event(), answers, r, cfg.distance)?;
        for (i, lp) in log_answer_posterior(&d, cfg.gamma).into_iter().enumerate() {
            terms[i].push(p.total_log_prob + lp);
        }
    }
    let mut scores = Vec::with_capacity(answers.len());
    let mut best_paths = Vec::with_capacity(answers.len());
    for t in &terms {
        let best = argmax_first(t);
        best_paths.push(Some(best));
        scores.push(match cfg.combine {
            Combine::Max => t[best],
            Combine::Marginal => {
                let mut sorted = t.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                log_sum_exp(&sorted)
            }
        });
    }
    Ok(AnswerDecision {
        chosen: argmax_first(&scores),
        scores,
        best_paths,
    })
}

/// Path-free baseline: pick the answer with the highest [`avg_word_prob`]
/// given the context.
pub fn select_by_avg_word_prob<B: Backbone>(
    model: &B,
    context: &str,
    answers: &[String],
    r: RelationId,
) -> Result<AnswerDecision> {
    if answers.len() < 2 {
        return Err(Error::TooFewAnswers { needed: 2, got: answers.len() });
    }
    let ctx = tokenize(context);
    let scores = answers
        .iter()
        .map(|a| avg_word_prob(model, &ctx, r, &tokenize(a)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AnswerDecision {
        chosen: argmax_first(&scores),
        best_paths: vec![None; scores.len()],
        scores,
    })
}

/// Full pipeline for one question: reason from the context, then score.
/// Returns the decision and the paths it was based on.
pub fn answer_question<B: Backbone>(
    model: &B,
    context: &str,
    r: RelationId,
    answers: &[String],
    reason_cfg: &ReasonConfig,
    scorer: &ScorerConfig,
) -> Result<(AnswerDecision, Vec<ReasoningPath>)> {
    if scorer.distance == Distance::AvgWordProb {
        return Ok((select_by_avg_word_prob(model, context, answers, r)?, Vec::new()));
    }
    let paths = reason(model, context, r, reason_cfg)?;
    Ok((select_answer(model, &paths, answers, r, scorer)?, paths))
}
