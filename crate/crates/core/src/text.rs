//! Word-level tokenization and the model vocabulary.
//!
//! Relation and latent-variable symbols are ordinary vocabulary entries whose
//! surface forms (`⟨rel_xWant⟩`, `⟨lat_3⟩`) use angle brackets that
//! [`tokenize`] never emits, so they cannot collide with corpus tokens.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{RelationId, TripleStore};

const PUNCT: [char; 6] = ['.', ',', '!', '?', '\'', ';'];
const RESERVED: [char; 2] = ['⟨', '⟩'];

pub const PAD: &str = "⟨pad⟩";
pub const BOS: &str = "⟨bos⟩";
pub const EOS: &str = "⟨eos⟩";
pub const UNK: &str = "⟨unk⟩";

/// Lowercases, splits on whitespace, and splits off `. , ! ? ' ;` as their
/// own tokens. Reserved bracket characters are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars().flat_map(char::to_lowercase) {
            if RESERVED.contains(&ch) {
                continue;
            }
            if PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

pub fn relation_symbol(r: RelationId) -> String {
    format!("⟨rel_{}⟩", r.name())
}

pub fn latent_symbol(k: usize) -> String {
    format!("⟨lat_{k}⟩")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabRepr", into = "VocabRepr")]
pub struct Vocab {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
    num_corpus: usize,
    num_latents: usize,
}

/// Serialized form: corpus tokens in id order plus K. Every other id is
/// derived from these.
#[derive(Serialize, Deserialize)]
struct VocabRepr {
    corpus_tokens: Vec<String>,
    num_latents: usize,
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> Self {
        VocabRepr {
            corpus_tokens: v.id_to_token[4..4 + v.num_corpus].to_vec(),
            num_latents: v.num_latents,
        }
    }
}

impl TryFrom<VocabRepr> for Vocab {
    type Error = Error;

    fn try_from(r: VocabRepr) -> Result<Self> {
        Vocab::from_tokens(r.corpus_tokens, r.num_latents)
    }
}

impl Vocab {
    /// Builds a vocabulary from an explicit corpus token list. Ids run
    /// PAD, BOS, EOS, UNK, then the corpus tokens, the nine relation symbols
    /// and `num_latents` latent symbols. EOS sorting below every corpus token
    /// means a finished hypothesis wins exact score ties in decoding.
    pub fn from_tokens(corpus_tokens: Vec<String>, num_latents: usize) -> Result<Self> {
        if num_latents == 0 {
            return Err(Error::BadConfig("K must be at least 1".into()));
        }
        let mut id_to_token = Vec::with_capacity(corpus_tokens.len() + 13 + num_latents);
        id_to_token.extend([PAD, BOS, EOS, UNK].map(String::from));
        for tok in corpus_tokens {
            if tok.is_empty() || tok.chars().any(|c| RESERVED.contains(&c) || c.is_whitespace()) {
                return Err(Error::BadConfig(format!("invalid corpus token {tok:?}")));
            }
            id_to_token.push(tok);
        }
        let num_corpus = id_to_token.len() - 4;
        id_to_token.extend(RelationId::ALL.iter().map(|&r| relation_symbol(r)));
        id_to_token.extend((0..num_latents).map(latent_symbol));
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(Error::BadConfig(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab {
            token_to_id,
            id_to_token,
            num_corpus,
            num_latents,
        })
    }

    /// Counts tokens over every head and tail in the store; tokens seen at
    /// least `min_count` times get ids, sorted lexicographically.
    pub fn build(corpus: &TripleStore, num_latents: usize, min_count: usize) -> Result<Self> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in corpus.triples() {
            for tok in tokenize(&t.head).into_iter().chain(tokenize(&t.tail)) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let min_count = min_count.max(1);
        let kept = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count)
            .map(|(t, _)| t)
            .collect();
        Self::from_tokens(kept, num_latents)
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn num_latents(&self) -> usize {
        self.num_latents
    }

    pub fn num_corpus_tokens(&self) -> usize {
        self.num_corpus
    }

    pub fn pad(&self) -> usize {
        0
    }

    pub fn bos(&self) -> usize {
        1
    }

    pub fn eos(&self) -> usize {
        2
    }

    pub fn unk(&self) -> usize {
        3
    }

    pub fn relation(&self, r: RelationId) -> usize {
        4 + self.num_corpus + r.code()
    }

    pub fn latent(&self, k: usize) -> Result<usize> {
        if k >= self.num_latents {
            return Err(Error::LatentOutOfRange {
                k,
                num_latents: self.num_latents,
            });
        }
        Ok(4 + self.num_corpus + 9 + k)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(self.unk())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// `[LAT_k] ++ ids(x) ++ [REL_r]`.
    pub fn encode_source<S: AsRef<str>>(&self, x: &[S], r: RelationId, k: usize) -> Result<Vec<usize>> {
        let mut ids = Vec::with_capacity(x.len() + 2);
        ids.push(self.latent(k)?);
        ids.extend(x.iter().map(|t| self.id(t.as_ref())));
        ids.push(self.relation(r));
        Ok(ids)
    }

    /// `[BOS] ++ ids(z) ++ [EOS]`.
    pub fn encode_target<S: AsRef<str>>(&self, z: &[S]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(z.len() + 2);
        ids.push(self.bos());
        ids.extend(z.iter().map(|t| self.id(t.as_ref())));
        ids.push(self.eos());
        ids
    }

    /// Drops PAD/BOS/EOS; UNK decodes to its literal surface form.
    pub fn decode_ids(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != self.pad() && i != self.bos() && i != self.eos())
            .filter_map(|&i| self.token(i).map(str::to_string))
            .collect()
    }
}
