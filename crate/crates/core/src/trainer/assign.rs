//! E-step assignment of targets to latent values.

use serde::{Deserialize, Serialize};

use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::kg::RelationId;

/// `scores[j][k] = log Pr(z_j | h_k, x, r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentProblem {
    scores: Vec<Vec<f64>>,
}

impl AssignmentProblem {
    /// Requires at least one row, equal row lengths of at least one, and finite entries.
    pub fn new(scores: Vec<Vec<f64>>) -> Result<Self> {
        let k = scores.first().map_or(0, Vec::len);
        if k == 0 || scores.iter().any(|r| r.len() != k) {
            return Err(Error::BadTrainConfig("score matrix must be a non-empty rectangle".into()));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::BadTrainConfig("score matrix has non-finite entries".into()));
        }
        Ok(AssignmentProblem { scores })
    }

    pub fn num_targets(&self) -> usize {
        self.scores.len()
    }

    pub fn num_latents(&self) -> usize {
        self.scores[0].len()
    }

    pub fn score(&self, j: usize, k: usize) -> f64 {
        self.scores[j][k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.scores
    }
}

/// `latents[j]` is the latent value chosen for target `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub latents: Vec<usize>,
}

impl Assignment {
    pub fn total(&self, problem: &AssignmentProblem) -> f64 {
        self.latents.iter().enumerate().map(|(j, &k)| problem.score(j, k)).sum()
    }

    pub fn distinct_latents(&self) -> usize {
        let mut ks = self.latents.clone();
        ks.sort_unstable();
        ks.dedup();
        ks.len()
    }

    pub fn is_injective(&self) -> bool {
        self.distinct_latents() == self.latents.len()
    }
}

/// Scores every target under every latent value. The source is encoded once
/// per latent and shared by all targets.
pub fn score_matrix<B: Backbone, S: AsRef<str>>(
    model: &B,
    x: &[S],
    r: RelationId,
    targets: &[Vec<S>],
) -> Result<AssignmentProblem> {
    let vocab = model.vocab();
    let tgts: Vec<Vec<usize>> = targets.iter().map(|z| vocab.encode_target(z)).collect();
    score_ids(model, x, r, &tgts)
}

pub(crate) fn score_ids<B: Backbone, S: AsRef<str>>(
    model: &B,
    x: &[S],
    r: RelationId,
    targets: &[Vec<usize>],
) -> Result<AssignmentProblem> {
    let vocab = model.vocab();
    let k_total = vocab.num_latents();
    if targets.is_empty() {
        return Err(Error::BadTrainConfig("no targets to score".into()));
    }
    let mut scores = vec![vec![0.0; k_total]; targets.len()];
    for k in 0..k_total {
        let start = model.start(&vocab.encode_source(x, r, k)?)?;
        for (j, tgt) in targets.iter().enumerate() {
            scores[j][k] = log_prob_from_start(model, &start, tgt)?;
        }
    }
    AssignmentProblem::new(scores)
}

/// Same arithmetic as [`crate::backbone::sequence_log_prob`], resuming
/// from an already encoded source.
fn log_prob_from_start<B: Backbone>(model: &B, start: &B::State, tgt: &[usize]) -> Result<f64> {
    let vocab = model.vocab();
    if tgt.len() < 2 || tgt[0] != vocab.bos() || tgt[tgt.len() - 1] != vocab.eos() || tgt.len() > model.max_target_len() {
        return Err(Error::BadTarget(format!("cannot score target of length {}", tgt.len())));
    }
    let mut state = start.clone();
    let mut total = 0.0;
    for (i, &tok) in tgt.iter().enumerate().skip(1) {
        total += model.log_probs(&state)[tok];
        if i + 1 < tgt.len() {
            state = model.advance(&state, tok)?;
        }
    }
    Ok(total)
}

/// Greedy one-to-one assignment: visit all `(j, k)` pairs by descending
/// score (ties: smaller `j`, then smaller `k`) and accept a pair when
/// neither its target nor its latent is taken yet.
pub fn constrained_assign(problem: &AssignmentProblem) -> Result<Assignment> {
    let (j_total, k_total) = (problem.num_targets(), problem.num_latents());
    if k_total < j_total {
        return Err(Error::InfeasibleK {
            set: "score matrix".into(),
            targets: j_total,
            num_latents: k_total,
        });
    }
    let mut pairs: Vec<(usize, usize)> = (0..j_total).flat_map(|j| (0..k_total).map(move |k| (j, k))).collect();
    pairs.sort_by(|&(ja, ka), &(jb, kb)| {
        problem
            .score(jb, kb)
            .total_cmp(&problem.score(ja, ka))
            .then(ja.cmp(&jb))
            .then(ka.cmp(&kb))
    });
    let mut latents = vec![usize::MAX; j_total];
    let mut used = vec![false; k_total];
    let mut left = j_total;
    for (j, k) in pairs {
        if latents[j] == usize::MAX && !used[k] {
            latents[j] = k;
            used[k] = true;
            left -= 1;
            if left == 0 {
                break;
            }
        }
    }
    Ok(Assignment { latents })
}

/// Independent row argmax; several targets may share a latent.
pub fn hard_assign(problem: &AssignmentProblem) -> Assignment {
    let latents = problem
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &v)| if v > best.1 { (k, v) } else { best })
                .0
        })
        .collect();
    Assignment { latents }
}
