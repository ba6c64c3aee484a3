//! Table-driven backbone with hand-fixed transition tables.
//!
//! The next-token distribution depends only on the source sequence and the
//! last consumed token, which makes exhaustive enumeration cheap. Used as a
//! fixture for decoder and path-search oracles.

use std::collections::HashMap;
use std::sync::Arc;

use super::Backbone;
use crate::error::{Error, Result};
use crate::text::Vocab;

/// `table[last_token]` is a log-distribution over the vocabulary.
pub type TransitionTable = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct TableBackbone {
    vocab: Vocab,
    max_target_len: usize,
    default: Arc<TransitionTable>,
    by_source: HashMap<Vec<usize>, Arc<TransitionTable>>,
}

#[derive(Debug, Clone)]
pub struct TableState {
    table: Arc<TransitionTable>,
    last: usize,
}

impl TableBackbone {
    /// `default` applies to every source without its own table.
    pub fn new(vocab: Vocab, max_target_len: usize, default: TransitionTable) -> Result<Self> {
        check_table(&vocab, &default)?;
        Ok(TableBackbone {
            vocab,
            max_target_len,
            default: Arc::new(default),
            by_source: HashMap::new(),
        })
    }

    pub fn with_source(mut self, src: Vec<usize>, table: TransitionTable) -> Result<Self> {
        check_table(&self.vocab, &table)?;
        self.by_source.insert(src, Arc::new(table));
        Ok(self)
    }

    /// Builds a log-table from unnormalized non-negative weights given as
    /// `(last_token, [(next_token, weight)])`. Unlisted rows are uniform over
    /// EOS only; unlisted entries get probability zero.
    pub fn table_from_weights(vocab: &Vocab, rows: &[(usize, Vec<(usize, f64)>)]) -> TransitionTable {
        let v = vocab.len();
        let mut table = vec![vec![f64::NEG_INFINITY; v]; v];
        for row in table.iter_mut() {
            row[vocab.eos()] = 0.0;
        }
        for (last, weights) in rows {
            let z: f64 = weights.iter().map(|(_, w)| w).sum();
            let row = &mut table[*last];
            row.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
            for &(tok, w) in weights {
                row[tok] = (w / z).ln();
            }
        }
        table
    }
}

fn check_table(vocab: &Vocab, table: &TransitionTable) -> Result<()> {
    if table.len() != vocab.len() || table.iter().any(|r| r.len() != vocab.len()) {
        return Err(Error::BadConfig(format!(
            "transition table must be {0}x{0}",
            vocab.len()
        )));
    }
    Ok(())
}

impl Backbone for TableBackbone {
    type State = TableState;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn max_target_len(&self) -> usize {
        self.max_target_len
    }

    fn start(&self, src: &[usize]) -> Result<TableState> {
        let table = self
            .by_source
            .get(src)
            .cloned()
            .unwrap_or_else(|| Arc::clone(&self.default));
        Ok(TableState {
            table,
            last: self.vocab.bos(),
        })
    }

    fn log_probs<'s>(&self, state: &'s TableState) -> &'s [f64] {
        &state.table[state.last]
    }

    fn advance(&self, state: &TableState, token: usize) -> Result<TableState> {
        Ok(TableState {
            table: Arc::clone(&state.table),
            last: token,
        })
    }

    /// Mean of one-hot token vectors.
    fn embed_text<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let mut v = vec![0.0; self.vocab.len()];
        for t in tokens {
            v[self.vocab.id(t.as_ref())] += 1.0;
        }
        let n = tokens.len() as f64;
        Ok(v.into_iter().map(|x| x / n).collect())
    }
}
