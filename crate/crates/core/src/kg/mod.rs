//! If-then knowledge bases: typed `(head, relation, tail)` event triples.
//!
//! A [`TripleStore`] keeps triples in insertion order and indexes them by
//! `(head, relation)`. Each such group is an *output set*: every tail that
//! shares one input. The training E-step works on whole output sets, so
//! splitting is done by head event and never divides a group.

mod synth;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{synth_kg, topic_of, SynthSpec};

/// The nine inference dimensions. Discriminants are the stable integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationId {
    #[serde(rename = "xIntent")]
    XIntent = 0,
    #[serde(rename = "xNeed")]
    XNeed = 1,
    #[serde(rename = "xAttr")]
    XAttr = 2,
    #[serde(rename = "xReact")]
    XReact = 3,
    #[serde(rename = "xWant")]
    XWant = 4,
    #[serde(rename = "xEffect")]
    XEffect = 5,
    #[serde(rename = "oReact")]
    OReact = 6,
    #[serde(rename = "oWant")]
    OWant = 7,
    #[serde(rename = "oEffect")]
    OEffect = 8,
}

impl RelationId {
    pub const ALL: [RelationId; 9] = [
        RelationId::XIntent,
        RelationId::XNeed,
        RelationId::XAttr,
        RelationId::XReact,
        RelationId::XWant,
        RelationId::XEffect,
        RelationId::OReact,
        RelationId::OWant,
        RelationId::OEffect,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    /// On-disk spelling, e.g. `xWant`.
    pub fn name(self) -> &'static str {
        match self {
            RelationId::XIntent => "xIntent",
            RelationId::XNeed => "xNeed",
            RelationId::XAttr => "xAttr",
            RelationId::XReact => "xReact",
            RelationId::XWant => "xWant",
            RelationId::XEffect => "xEffect",
            RelationId::OReact => "oReact",
            RelationId::OWant => "oWant",
            RelationId::OEffect => "oEffect",
        }
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RelationId {
    type Err = String;

    /// Case-sensitive, matching the TSV format.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|r| r.name() == s)
            .ok_or_else(|| s.to_string())
    }
}

/// Trim, collapse internal whitespace runs, lowercase.
pub fn normalize_event(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: String,
    pub relation: RelationId,
    pub tail: String,
}

impl Triple {
    /// Builds a triple from raw text. Returns `None` when either side is
    /// empty after normalization.
    pub fn new(head: &str, relation: RelationId, tail: &str) -> Option<Self> {
        let head = normalize_event(head);
        let tail = normalize_event(tail);
        if head.is_empty() || tail.is_empty() {
            return None;
        }
        Some(Triple {
            head,
            relation,
            tail,
        })
    }
}

/// All tails sharing one `(head, relation)` input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSet {
    pub head: String,
    pub relation: RelationId,
    pub tails: Vec<String>,
}

impl OutputSet {
    pub fn label(&self) -> String {
        format!("{} | {}", self.head, self.relation)
    }
}

#[derive(Debug, Clone)]
struct Group {
    head: String,
    relation: RelationId,
    members: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct TripleStore {
    triples: Vec<Triple>,
    groups: Vec<Group>,
    index: HashMap<(String, RelationId), usize>,
    skipped: usize,
    duplicates: usize,
}

impl PartialEq for TripleStore {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl Eq for TripleStore {}

impl TripleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_triples<I: IntoIterator<Item = Triple>>(triples: I) -> Self {
        let mut store = Self::new();
        for t in triples {
            store.insert(t);
        }
        store
    }

    /// Inserts a triple; returns `false` if an identical one was already present.
    pub fn insert(&mut self, triple: Triple) -> bool {
        let key = (triple.head.clone(), triple.relation);
        let group_idx = match self.index.get(&key) {
            Some(&g) => g,
            None => {
                self.groups.push(Group {
                    head: triple.head.clone(),
                    relation: triple.relation,
                    members: Vec::new(),
                });
                self.index.insert(key, self.groups.len() - 1);
                self.groups.len() - 1
            }
        };
        let group = &mut self.groups[group_idx];
        if group
            .members
            .iter()
            .any(|&i| self.triples[i].tail == triple.tail)
        {
            self.duplicates += 1;
            return false;
        }
        group.members.push(self.triples.len());
        self.triples.push(triple);
        true
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    /// Records dropped while parsing because their tail was `none` or empty.
    pub fn skipped_count(&self) -> usize {
        self.skipped
    }

    /// Exact duplicate triples dropped on insertion.
    pub fn duplicate_count(&self) -> usize {
        self.duplicates
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Distinct head events in first-seen order.
    pub fn heads(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.triples
            .iter()
            .filter(|t| seen.insert(t.head.as_str()))
            .map(|t| t.head.clone())
            .collect()
    }

    pub fn tails_of(&self, head: &str, relation: RelationId) -> Vec<&str> {
        self.index
            .get(&(head.to_string(), relation))
            .map(|&g| {
                self.groups[g]
                    .members
                    .iter()
                    .map(|&i| self.triples[i].tail.as_str())
                    .collect()
            })
            .unwrap_or_default()
    }

    /// One entry per distinct `(head, relation)`, in first-seen order.
    pub fn output_sets(&self) -> Vec<OutputSet> {
        self.groups
            .iter()
            .map(|g| OutputSet {
                head: g.head.clone(),
                relation: g.relation,
                tails: g
                    .members
                    .iter()
                    .map(|&i| self.triples[i].tail.clone())
                    .collect(),
            })
            .collect()
    }

    /// Largest output-set size, the lower bound on the number of latents.
    pub fn max_set_size(&self) -> usize {
        self.groups.iter().map(|g| g.members.len()).max().unwrap_or(0)
    }

    /// Keeps only triples whose head satisfies `keep`, preserving order.
    pub fn filter_heads<F: Fn(&str) -> bool>(&self, keep: F) -> TripleStore {
        TripleStore::from_triples(self.triples.iter().filter(|t| keep(&t.head)).cloned())
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for t in &self.triples {
            writeln!(out, "{}\t{}\t{}", t.head, t.relation, t.tail)?;
        }
        Ok(())
    }

    pub fn to_tsv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("store text is UTF-8")
    }
}

/// Parses a TSV knowledge file: `head<TAB>relation<TAB>tail` per line.
pub fn parse_kg_tsv<R: BufRead>(reader: R) -> Result<TripleStore> {
    let mut store = TripleStore::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedLine(line_no));
        }
        let relation: RelationId = fields[1].parse().map_err(|token| Error::UnknownRelation {
            line: line_no,
            token,
        })?;
        let tail = normalize_event(fields[2]);
        if tail.is_empty() || tail == "none" {
            store.skipped += 1;
            continue;
        }
        match Triple::new(fields[0], relation, &tail) {
            Some(t) => {
                store.insert(t);
            }
            None => store.skipped += 1,
        }
    }
    Ok(store)
}

pub fn parse_kg_str(text: &str) -> Result<TripleStore> {
    parse_kg_tsv(text.as_bytes())
}

/// Partitions the store by head event into train/dev/test.
///
/// Heads are shuffled with `seed`; the train and dev shares are rounded to
/// whole heads and test takes the remainder.
pub fn split(
    store: &TripleStore,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(TripleStore, TripleStore, TripleStore)> {
    let (tr, dv, te) = ratios;
    let finite = [tr, dv, te].iter().all(|r| r.is_finite() && *r >= 0.0);
    if !finite || tr <= 0.0 || (tr + dv + te - 1.0).abs() > 1e-9 {
        return Err(Error::BadRatios(ratios));
    }
    let mut heads = store.heads();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    heads.shuffle(&mut rng);

    let n = heads.len();
    let n_train = ((tr * n as f64).round() as usize).min(n);
    let n_dev = ((dv * n as f64).round() as usize).min(n - n_train);
    let assignment: HashMap<&str, usize> = heads
        .iter()
        .enumerate()
        .map(|(i, h)| {
            let part = if i < n_train {
                0
            } else if i < n_train + n_dev {
                1
            } else {
                2
            };
            (h.as_str(), part)
        })
        .collect();

    let part = |p: usize| store.filter_heads(|h| assignment[h] == p);
    Ok((part(0), part(1), part(2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(lines: &[(&str, RelationId, &str)]) -> TripleStore {
        TripleStore::from_triples(lines.iter().map(|(h, r, t)| Triple::new(h, *r, t).unwrap()))
    }

    #[test]
    fn parses_single_record() {
        let s = parse_kg_str("X puts trust in Y\txWant\tto develop a relationship\n").unwrap();
        assert_eq!(s.len(), 1);
        let t = &s.triples()[0];
        assert_eq!(t.relation, RelationId::XWant);
        assert_eq!(t.relation.code(), 4);
        assert_eq!(t.head, "x puts trust in y");
        assert_eq!(t.tail, "to develop a relationship");
    }

    #[test]
    fn empty_stream_gives_empty_store() {
        let s = parse_kg_str("").unwrap();
        assert!(s.is_empty());
        assert_eq!(s.skipped_count(), 0);
    }

    #[test]
    fn none_tails_are_skipped_and_counted() {
        let s = parse_kg_str("e\txWant\tnone\nf\txNeed\tNONE\ng\toWant\t  \n").unwrap();
        assert_eq!(s.len(), 0);
        assert_eq!(s.skipped_count(), 3);
    }

    #[test]
    fn malformed_and_unknown_relation_errors() {
        match parse_kg_str("a\txWant\tb\nonly two\tfields\n") {
            Err(Error::MalformedLine(2)) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_kg_str("a\txwant\tb\n") {
            Err(Error::UnknownRelation { line: 1, token }) => assert_eq!(token, "xwant"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn normalization_collapses_and_lowercases() {
        assert_eq!(normalize_event("  Alex   Goes\tHome "), "alex goes home");
    }

    #[test]
    fn relation_codes_are_stable() {
        for (i, r) in RelationId::ALL.iter().enumerate() {
            assert_eq!(r.code(), i);
            assert_eq!(RelationId::from_code(i), Some(*r));
            assert_eq!(r.name().parse::<RelationId>().unwrap(), *r);
        }
        assert_eq!(RelationId::from_code(9), None);
    }

    #[test]
    fn output_sets_group_in_first_seen_order() {
        use RelationId::*;
        let s = store(&[("a", XWant, "t1"), ("a", XWant, "t2"), ("a", XNeed, "t3")]);
        let sets = s.output_sets();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].relation, XWant);
        assert_eq!(sets[0].tails, vec!["t1", "t2"]);
        assert_eq!(sets[1].relation, XNeed);
        assert_eq!(sets[1].tails, vec!["t3"]);
        assert!(TripleStore::new().output_sets().is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        use RelationId::*;
        let s = store(&[("a", XWant, "t1"), ("a", XWant, "t1")]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.duplicate_count(), 1);
        assert_eq!(s.output_sets()[0].tails, vec!["t1"]);
    }

    fn hundred_heads() -> TripleStore {
        TripleStore::from_triples((0..100).flat_map(|h| {
            [RelationId::XWant, RelationId::OEffect]
                .into_iter()
                .map(move |r| Triple::new(&format!("head {h}"), r, "tail").unwrap())
        }))
    }

    #[test]
    fn split_by_head_counts() {
        let s = hundred_heads();
        let (a, b, c) = split(&s, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!(
            (a.heads().len(), b.heads().len(), c.heads().len()),
            (80, 10, 10)
        );
        assert_eq!(a.len() + b.len() + c.len(), s.len());
    }

    #[test]
    fn split_all_train_and_determinism() {
        let s = hundred_heads();
        let (a, b, c) = split(&s, (1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(a, s);
        assert!(b.is_empty() && c.is_empty());
        assert_eq!(split(&s, (0.5, 0.25, 0.25), 9).unwrap(), split(&s, (0.5, 0.25, 0.25), 9).unwrap());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let s = hundred_heads();
        assert!(matches!(split(&s, (0.5, 0.5, 0.5), 0), Err(Error::BadRatios(_))));
        assert!(matches!(split(&s, (1.2, -0.1, -0.1), 0), Err(Error::BadRatios(_))));
        assert!(matches!(split(&s, (0.0, 0.5, 0.5), 0), Err(Error::BadRatios(_))));
    }
}
