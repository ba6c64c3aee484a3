//! Multi-hop reasoning paths.
//!
//! Hop 0 generates events from the context; every later hop conditions only
//! on the previous event and the same relation. A path-level beam keeps the
//! `top_paths` most probable paths after each hop.

use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backbone::{beam_search, Backbone};
use crate::error::{Error, Result};
use crate::kg::RelationId;
use crate::text::tokenize;

/// One generated event with the latent value that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedEvent {
    pub event: String,
    pub log_prob: f64,
    pub latent: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningPath {
    pub events: Vec<String>,
    pub hop_log_probs: Vec<f64>,
    pub latents: Vec<usize>,
    pub total_log_prob: f64,
}

impl ReasoningPath {
    pub fn last_event(&self) -> &str {
        self.events.last().map(String::as_str).unwrap_or("")
    }

    /// Number of hops after the first event.
    pub fn hops(&self) -> usize {
        self.events.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonConfig {
    /// Hops after the first generation; 0 means generate from the context only.
    pub hops: usize,
    /// Latent values to decode from, `0..latents`.
    pub latents: usize,
    /// Token-level beam width per latent value.
    pub beam: usize,
    /// Paths kept after each hop.
    pub top_paths: usize,
}

impl Default for ReasonConfig {
    fn default() -> Self {
        ReasonConfig {
            hops: 1,
            latents: 5,
            beam: 10,
            top_paths: 10,
        }
    }
}

fn by_score_then_text(a_lp: f64, a: &[String], b_lp: f64, b: &[String]) -> Ordering {
    b_lp.total_cmp(&a_lp).then_with(|| a.cmp(b))
}

/// Beam-decodes `text` under latent values `0..num_latents` and pools the
/// results. Identical event texts are merged, keeping the higher score
/// (ties: smaller latent). Hypotheses that decode to no words are dropped.
/// Sorted by score, then text.
pub fn generate_hop<B: Backbone, S: AsRef<str>>(
    model: &B,
    text: &[S],
    r: RelationId,
    num_latents: usize,
    beam: usize,
) -> Result<Vec<GeneratedEvent>> {
    let vocab = model.vocab();
    if num_latents == 0 || beam == 0 {
        return Err(Error::BadConfig("generate_hop needs at least one latent and beam >= 1".into()));
    }
    let max_len = model.max_target_len() - 1;
    let mut best: HashMap<String, (f64, usize)> = HashMap::new();
    for k in 0..num_latents {
        let src = vocab.encode_source(text, r, k)?;
        for h in beam_search(model, &src, beam, max_len)? {
            let words = vocab.decode_ids(&h.tokens);
            if words.is_empty() {
                continue;
            }
            let event = words.join(" ");
            match best.get_mut(&event) {
                Some(e) if h.log_prob > e.0 => *e = (h.log_prob, k),
                Some(_) => {}
                None => {
                    best.insert(event, (h.log_prob, k));
                }
            }
        }
    }
    let mut out: Vec<GeneratedEvent> = best
        .into_iter()
        .map(|(event, (log_prob, latent))| GeneratedEvent { event, log_prob, latent })
        .collect();
    out.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob).then_with(|| a.event.cmp(&b.event)));
    Ok(out)
}

/// Reasoning paths from `context`, best first, at most `cfg.top_paths`.
pub fn reason<B: Backbone>(model: &B, context: &str, r: RelationId, cfg: &ReasonConfig) -> Result<Vec<ReasoningPath>> {
    let keep = |paths: &mut Vec<ReasoningPath>| {
        paths.sort_by(|a, b| by_score_then_text(a.total_log_prob, &a.events, b.total_log_prob, &b.events));
        paths.truncate(cfg.top_paths);
    };
    let mut paths: Vec<ReasoningPath> = generate_hop(model, &tokenize(context), r, cfg.latents, cfg.beam)?
        .into_iter()
        .map(|g| ReasoningPath {
            events: vec![g.event],
            hop_log_probs: vec![g.log_prob],
            latents: vec![g.latent],
            total_log_prob: g.log_prob,
        })
        .collect();
    keep(&mut paths);

    let mut cache: HashMap<String, Vec<GeneratedEvent>> = HashMap::new();
    for _ in 0..cfg.hops {
        let mut next = Vec::new();
        for p in &paths {
            let last = p.last_event().to_string();
            if !cache.contains_key(&last) {
                let gen = generate_hop(model, &tokenize(&last), r, cfg.latents, cfg.beam)?;
                cache.insert(last.clone(), gen);
            }
            for g in &cache[&last] {
                let mut q = p.clone();
                q.events.push(g.event.clone());
                q.hop_log_probs.push(g.log_prob);
                q.latents.push(g.latent);
                q.total_log_prob = q.hop_log_probs.iter().sum();
                next.push(q);
            }
        }
        paths = next;
        keep(&mut paths);
    }
    Ok(paths)
}
