//! Rule-based mapping from a question to the relation it asks about.
//!
//! Nine fixed templates with an `AGENT` slot, shipped as data. A question
//! is normalized, the agent's name is replaced by the slot, and the result
//! is matched exactly or, failing that, by token-set Jaccard similarity.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::kg::RelationId;
use crate::text::tokenize;

const TEMPLATES_JSON: &str = include_str!("../data/question_templates.json");

const SLOT: &str = "agent";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Cause,
    Attribute,
    Effect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionPattern {
    pub template: String,
    pub relation: RelationId,
    pub category: Category,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionMapping {
    pub relation: RelationId,
    pub category: Category,
    /// Position of the matched template in the table.
    pub template: usize,
    pub exact: bool,
    /// Jaccard similarity to the matched template (1 for exact matches).
    pub similarity: f64,
}

struct Compiled {
    patterns: Vec<QuestionPattern>,
    normalized: Vec<Vec<String>>,
    /// Every word used by a template; never mistaken for a name.
    words: BTreeSet<String>,
}

fn compiled() -> &'static Compiled {
    static CELL: OnceLock<Compiled> = OnceLock::new();
    CELL.get_or_init(|| {
        let patterns: Vec<QuestionPattern> =
            serde_json::from_str(TEMPLATES_JSON).expect("bundled question templates are valid JSON");
        let normalized: Vec<Vec<String>> = patterns.iter().map(|p| words(&p.template)).collect();
        let words = normalized.iter().flatten().cloned().collect();
        Compiled {
            patterns,
            normalized,
            words,
        }
    })
}

/// The bundled templates in table order.
pub fn question_patterns() -> &'static [QuestionPattern] {
    &compiled().patterns
}

/// Lowercased word tokens with punctuation removed.
fn words(text: &str) -> Vec<String> {
    tokenize(text)
        .into_iter()
        .filter(|t| t.chars().any(char::is_alphanumeric))
        .collect()
}

fn substitute(tokens: &[String], name: &[String]) -> Vec<String> {
    if name.is_empty() {
        return tokens.to_vec();
    }
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    while i < tokens.len() {
        if tokens[i..].starts_with(name) {
            out.push(SLOT.to_string());
            i += name.len();
        } else {
            out.push(tokens[i].clone());
            i += 1;
        }
    }
    out
}

/// First capitalized word after the first position that is not a template word.
fn guess_name(question: &str) -> Option<String> {
    let known = &compiled().words;
    question
        .split_whitespace()
        .skip(1)
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .find(|w| w.chars().next().is_some_and(char::is_uppercase) && !known.contains(&w.to_lowercase()))
        .map(str::to_lowercase)
}

fn jaccard(a: &[String], b: &[String]) -> f64 {
    let a: BTreeSet<&String> = a.iter().collect();
    let b: BTreeSet<&String> = b.iter().collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Maps `question` to a relation. `agent` is the name to treat as the
/// `AGENT` slot; without it the first capitalized non-template word after
/// the first position is used. Always returns a mapping.
pub fn map_question(question: &str, agent: Option<&str>) -> QuestionMapping {
    let c = compiled();
    let raw = words(question);
    let mut candidates = Vec::new();
    if let Some(a) = agent {
        candidates.push(substitute(&raw, &words(a)));
    }
    if let Some(name) = guess_name(question) {
        candidates.push(substitute(&raw, &[name]));
    }
    candidates.push(raw);

    for cand in &candidates {
        if let Some(i) = c.normalized.iter().position(|t| t == cand) {
            return mapping(i, true, 1.0);
        }
    }
    let cand = &candidates[0];
    let mut best = (0, f64::NEG_INFINITY);
    for (i, t) in c.normalized.iter().enumerate() {
        let s = jaccard(cand, t);
        if s > best.1 {
            best = (i, s);
        }
    }
    mapping(best.0, false, best.1)
}

fn mapping(i: usize, exact: bool, similarity: f64) -> QuestionMapping {
    let p = &compiled().patterns[i];
    QuestionMapping {
        relation: p.relation,
        category: p.category,
        template: i,
        exact,
        similarity,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_has_nine_distinct_relations() {
        let p = question_patterns();
        assert_eq!(p.len(), 9);
        let rels: BTreeSet<usize> = p.iter().map(|q| q.relation.code()).collect();
        assert_eq!(rels.len(), 9);
    }

    #[test]
    fn every_template_maps_to_its_relation() {
        for (i, p) in question_patterns().iter().enumerate() {
            let m = map_question(&p.template, None);
            assert_eq!((m.relation, m.template, m.exact), (p.relation, i, true), "{}", p.template);
            let named = p.template.replace("AGENT", "Robin");
            assert_eq!(map_question(&named, Some("Robin")).relation, p.relation);
            assert_eq!(map_question(&named, None).relation, p.relation);
        }
    }

    #[test]
    fn documented_examples() {
        assert_eq!(map_question("Why did Alex do this?", Some("Alex")).relation, RelationId::XIntent);
        assert_eq!(map_question("What will happen to Others?", None).relation, RelationId::OEffect);
        assert_eq!(map_question("How would you describe AGENT?", None).relation, RelationId::XAttr);
    }

    #[test]
    fn name_does_not_matter() {
        for name in ["Alex", "Jordan", "Kai", "Sasha"] {
            let m = map_question(&format!("What will {name} want to do next?"), Some(name));
            assert_eq!(m.relation, RelationId::XWant);
            assert!(m.exact);
        }
        let m = map_question("What does Quinn Lee need to do before this?", Some("Quinn Lee"));
        assert_eq!((m.relation, m.exact), (RelationId::XNeed, true));
    }

    #[test]
    fn paraphrases_fall_back_to_overlap() {
        let m = map_question("How would Casey feel after that?", None);
        assert_eq!(m.relation, RelationId::XReact);
        assert!(!m.exact && m.similarity > 0.0 && m.similarity < 1.0);
        let m = map_question("What will the others do next?", None);
        assert_eq!(m.relation, RelationId::OWant);
        // No overlap at all: first template by listing order.
        let m = map_question("zzz", None);
        assert_eq!((m.template, m.similarity), (0, 0.0));
    }

    #[test]
    fn mapping_is_deterministic() {
        let q = "How would Taylor feel as a result?";
        assert_eq!(map_question(q, None), map_question(q, None));
    }
}
