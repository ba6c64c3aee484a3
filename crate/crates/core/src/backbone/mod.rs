//! The conditional generator `Pr(z | h_k, x, r)`: scoring, generation, and
//! text embedding.
//!
//! Anything implementing [`Backbone`] can be trained against, decoded from,
//! and used for answer scoring. [`BackboneModel`] is the reference
//! recurrent encoder-decoder; tests plug in table-driven stubs.

mod graph;
mod rnn;
mod table;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::RelationId;
use crate::numerics::log_sum_exp;
use crate::text::Vocab;

pub use rnn::{BackboneConfig, BackboneModel, RnnState, INIT_RANGE};
pub use table::{TableBackbone, TableState, TransitionTable};

/// Incremental next-token model over a [`Vocab`].
///
/// A state represents the consumed target prefix (always starting with
/// BOS) and exposes the log-distribution of the next token.
pub trait Backbone {
    type State: Clone;

    fn vocab(&self) -> &Vocab;

    /// Longest target sequence, counting BOS and EOS.
    fn max_target_len(&self) -> usize;

    /// State after encoding `src` and feeding BOS.
    fn start(&self, src: &[usize]) -> Result<Self::State>;

    /// Log-probabilities of the next token, one per vocabulary id.
    fn log_probs<'s>(&self, state: &'s Self::State) -> &'s [f64];

    fn advance(&self, state: &Self::State, token: usize) -> Result<Self::State>;

    /// Fixed-size sentence vector for similarity scoring.
    fn embed_text<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>>;
}

/// Teacher-forced `Σ_t log Pr(tgt_t | tgt_<t, src)`.
///
/// `tgt` must start with BOS and end with EOS; BOS itself is not scored.
pub fn sequence_log_prob<B: Backbone>(model: &B, src: &[usize], tgt: &[usize]) -> Result<f64> {
    let vocab = model.vocab();
    if tgt.len() < 2 || tgt[0] != vocab.bos() || tgt[tgt.len() - 1] != vocab.eos() {
        return Err(Error::BadTarget("target must start with BOS and end with EOS".into()));
    }
    if tgt.len() > model.max_target_len() {
        return Err(Error::BadTarget(format!(
            "target length {} exceeds max_target_len {}",
            tgt.len(),
            model.max_target_len()
        )));
    }
    let mut state = model.start(src)?;
    let mut total = 0.0;
    for (i, &tok) in tgt.iter().enumerate().skip(1) {
        let lp = model
            .log_probs(&state)
            .get(tok)
            .copied()
            .ok_or_else(|| Error::BadTarget(format!("token id {tok} outside vocabulary")))?;
        total += lp;
        if i + 1 < tgt.len() {
            state = model.advance(&state, tok)?;
        }
    }
    Ok(total)
}

/// Per-latent component scores `log Pr(z | h_k, x, r)` for `k` in `0..K`.
pub fn component_log_probs<B: Backbone, S: AsRef<str>>(
    model: &B,
    x: &[S],
    r: RelationId,
    z: &[S],
) -> Result<Vec<f64>> {
    let vocab = model.vocab();
    let tgt = vocab.encode_target(z);
    (0..vocab.num_latents())
        .map(|k| sequence_log_prob(model, &vocab.encode_source(x, r, k)?, &tgt))
        .collect()
}

/// Mixture log-likelihood under a uniform prior over the K latents:
/// `log (1/K) Σ_k Pr(z | h_k, x, r)`.
pub fn mixture_log_prob<B: Backbone, S: AsRef<str>>(
    model: &B,
    x: &[S],
    r: RelationId,
    z: &[S],
) -> Result<f64> {
    let comps = component_log_probs(model, x, r, z)?;
    Ok(log_sum_exp(&comps) - (comps.len() as f64).ln())
}

/// A decoded sequence. `tokens` excludes BOS and ends with EOS when
/// `finished`; otherwise it was cut at the length cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

/// Descending score, then ascending token ids.
pub fn hypothesis_order(a_lp: f64, a_toks: &[usize], b_lp: f64, b_toks: &[usize]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a_toks.cmp(b_toks))
}

fn sort_hypotheses(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| hypothesis_order(a.log_prob, &a.tokens, b.log_prob, &b.tokens));
}

/// The `n` best `(token, log_prob)` pairs of one distribution, excluding `skip`.
fn top_tokens(lp: &[f64], n: usize, skip: usize) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = lp
        .iter()
        .copied()
        .enumerate()
        .filter(|&(t, v)| t != skip && v > f64::NEG_INFINITY)
        .collect();
    let by_score = |a: &(usize, f64), b: &(usize, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if cands.len() > n {
        cands.select_nth_unstable_by(n, by_score);
        cands.truncate(n);
    }
    cands.sort_by(by_score);
    cands
}

/// Length-capped beam search.
///
/// Each step scores every one-token extension of the live beam. An EOS
/// extension is retired into the result pool when it ranks among the
/// `beam_width` best candidates of that step; the `beam_width` best
/// non-EOS extensions stay live. After `max_len` generated tokens the live
/// beam is retired as capped hypotheses. Returns up to `beam_width`
/// hypotheses, best first, ties broken by ascending token ids. With
/// `beam_width == 1` this is greedy decoding.
pub fn beam_search<B: Backbone>(
    model: &B,
    src: &[usize],
    beam_width: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    let beam_width = beam_width.max(1);
    let eos = model.vocab().eos();
    let mut pool: Vec<Hypothesis> = Vec::new();
    if max_len == 0 {
        return Ok(pool);
    }
    let mut live: Vec<(Vec<usize>, f64, B::State)> = vec![(Vec::new(), 0.0, model.start(src)?)];

    for step in 0..max_len {
        // (parent, token, score)
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        for (i, (_, score, state)) in live.iter().enumerate() {
            let lp = model.log_probs(state);
            if let Some(&e) = lp.get(eos) {
                if e > f64::NEG_INFINITY {
                    cands.push((i, eos, score + e));
                }
            }
            for (tok, v) in top_tokens(lp, beam_width, eos) {
                cands.push((i, tok, score + v));
            }
        }
        let mut cands: Vec<(Vec<usize>, f64, usize)> = cands
            .into_iter()
            .map(|(i, tok, s)| {
                let mut t = live[i].0.clone();
                t.push(tok);
                (t, s, i)
            })
            .collect();
        cands.sort_by(|a, b| hypothesis_order(a.1, &a.0, b.1, &b.0));

        let ends_in_eos = |t: &[usize]| t.last() == Some(&eos);
        for (tokens, log_prob, _) in cands.iter().take(beam_width) {
            if ends_in_eos(tokens) {
                pool.push(Hypothesis {
                    tokens: tokens.clone(),
                    log_prob: *log_prob,
                    finished: true,
                });
            }
        }
        let ext: Vec<(Vec<usize>, f64, usize)> = cands
            .into_iter()
            .filter(|c| !ends_in_eos(&c.0))
            .take(beam_width)
            .collect();

        sort_hypotheses(&mut pool);
        pool.truncate(beam_width);

        if step + 1 == max_len {
            pool.extend(ext.into_iter().map(|(tokens, log_prob, _)| Hypothesis {
                tokens,
                log_prob,
                finished: false,
            }));
            break;
        }
        // Extensions only lower the score, so a full pool that beats every
        // live prefix is final.
        if ext.is_empty() || (pool.len() >= beam_width && pool[beam_width - 1].log_prob > ext[0].1) {
            break;
        }
        let mut next = Vec::with_capacity(ext.len());
        for (tokens, score, parent) in ext {
            let tok = *tokens.last().expect("extended");
            let state = model.advance(&live[parent].2, tok)?;
            next.push((tokens, score, state));
        }
        live = next;
    }
    sort_hypotheses(&mut pool);
    pool.truncate(beam_width);
    Ok(pool)
}

/// Greedy decoding: repeatedly takes the most likely token.
pub fn greedy_decode<B: Backbone>(model: &B, src: &[usize], max_len: usize) -> Result<Hypothesis> {
    let eos = model.vocab().eos();
    let mut state = model.start(src)?;
    let mut tokens = Vec::new();
    let mut score = 0.0;
    for step in 0..max_len {
        let lp = model.log_probs(&state);
        let (tok, v) = lp
            .iter()
            .copied()
            .enumerate()
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (t, v)| if v > best.1 { (t, v) } else { best });
        tokens.push(tok);
        score += v;
        if tok == eos {
            return Ok(Hypothesis {
                tokens,
                log_prob: score,
                finished: true,
            });
        }
        if step + 1 < max_len {
            state = model.advance(&state, tok)?;
        }
    }
    Ok(Hypothesis {
        tokens,
        log_prob: score,
        finished: false,
    })
}
