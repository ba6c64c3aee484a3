//! Diversity of a set of generations: n-gram set overlap and pairwise
//! smoothed BLEU.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Epsilon added to zero match counts (Smoothing1).
pub const SMOOTHING_EPS: f64 = 0.1;

/// Unique contiguous `n`-token windows of `seq`.
pub fn ngram_set<S: AsRef<str>>(seq: &[S], n: usize) -> BTreeSet<Vec<String>> {
    if n == 0 || seq.len() < n {
        return BTreeSet::new();
    }
    seq.windows(n)
        .map(|w| w.iter().map(|t| t.as_ref().to_string()).collect())
        .collect()
}

/// `1 - |∩| / |∪|` of the `n`-gram sets, or `None` when the union is empty.
pub fn div_ngram_order<S: AsRef<str>>(seqs: &[Vec<S>], n: usize) -> Option<f64> {
    let sets: Vec<_> = seqs.iter().map(|s| ngram_set(s, n)).collect();
    let union: BTreeSet<&Vec<String>> = sets.iter().flatten().collect();
    if union.is_empty() {
        return None;
    }
    let inter = union.iter().filter(|g| sets.iter().all(|s| s.contains(**g))).count();
    Some(1.0 - inter as f64 / union.len() as f64)
}

/// Mean of [`div_ngram_order`] over n = 1..=4, skipping orders with an empty union.
pub fn div_ngram<S: AsRef<str>>(seqs: &[Vec<S>]) -> Result<f64> {
    let vals: Vec<f64> = (1..=MAX_ORDER).filter_map(|n| div_ngram_order(seqs, n)).collect();
    if vals.is_empty() {
        return Err(Error::AllUnionsEmpty);
    }
    Ok(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn ngram_counts<S: AsRef<str>>(seq: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

/// Smoothed modified precision of order `n`; `None` when `hyp` has no `n`-grams.
fn precision<S: AsRef<str>>(hyp: &[S], reference: &[S], n: usize) -> Option<f64> {
    if hyp.len() < n {
        return None;
    }
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let matches: usize = hyp_counts
        .iter()
        .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
        .sum();
    let total = (hyp.len() + 1 - n) as f64;
    let num = if matches == 0 { SMOOTHING_EPS } else { matches as f64 };
    Some(num / total)
}

fn check_non_empty<S>(hyp: &[S], reference: &[S]) -> Result<()> {
    if hyp.is_empty() || reference.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(())
}

/// Cumulative BLEU-`n` with Smoothing1: brevity penalty times the geometric
/// mean of the precisions of orders `1..=n`. Orders longer than the
/// hypothesis are left out of the mean.
pub fn bleu_n<S: AsRef<str>>(hyp: &[S], reference: &[S], n: usize) -> Result<f64> {
    check_non_empty(hyp, reference)?;
    let logs: Vec<f64> = (1..=n.max(1)).filter_map(|i| precision(hyp, reference, i)).map(f64::ln).collect();
    let bp = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    Ok(bp * (logs.iter().sum::<f64>() / logs.len() as f64).exp())
}

/// Mean of BLEU-1..BLEU-4.
pub fn bleu_smoothing1<S: AsRef<str>>(hyp: &[S], reference: &[S]) -> Result<f64> {
    let mut total = 0.0;
    for n in 1..=MAX_ORDER {
        total += bleu_n(hyp, reference, n)?;
    }
    Ok(total / MAX_ORDER as f64)
}

fn pairwise_mean<S, F>(seqs: &[Vec<S>], f: F) -> Result<f64>
where
    S: AsRef<str>,
    F: Fn(&[S], &[S]) -> Result<f64>,
{
    if seqs.len() < 2 {
        return Err(Error::TooFewSequences(seqs.len()));
    }
    let mut total = 0.0;
    for i in 0..seqs.len() {
        for j in i + 1..seqs.len() {
            total += f(&seqs[i], &seqs[j])?;
        }
    }
    let m = seqs.len() as f64;
    Ok(total / (m * (m - 1.0) / 2.0))
}

/// `1 -` mean BLEU over unordered pairs `i < j`, with `seqs[i]` as hypothesis.
pub fn div_bleu<S: AsRef<str>>(seqs: &[Vec<S>]) -> Result<f64> {
    Ok(1.0 - pairwise_mean(seqs, |h, r| bleu_smoothing1(h, r))?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerOrder {
    pub n: usize,
    /// `None` when no sequence has an `n`-gram.
    pub div_ngram: Option<f64>,
    /// `1 -` mean pairwise BLEU-`n`; `None` with fewer than 2 sequences.
    pub div_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    #[serde(rename = "M")]
    pub m: usize,
    pub div_ngram: f64,
    pub div_bleu: Option<f64>,
    pub per_n: Vec<PerOrder>,
}

/// Both metrics plus the per-order breakdown. Sequences must be non-empty
/// for the BLEU part.
pub fn diversity_report<S: AsRef<str>>(seqs: &[Vec<S>]) -> Result<DiversityReport> {
    let div_ng = div_ngram(seqs)?;
    let enough = seqs.len() >= 2;
    let per_n = (1..=MAX_ORDER)
        .map(|n| {
            let div_bleu = if enough {
                Some(1.0 - pairwise_mean(seqs, |h, r| bleu_n(h, r, n))?)
            } else {
                None
            };
            Ok(PerOrder {
                n,
                div_ngram: div_ngram_order(seqs, n),
                div_bleu,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DiversityReport {
        m: seqs.len(),
        div_ngram: div_ng,
        div_bleu: if enough { Some(div_bleu(seqs)?) } else { None },
        per_n,
    })
}
