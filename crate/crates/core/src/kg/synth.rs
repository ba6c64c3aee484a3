//! Template-grammar corpus generator for desk-scale experiments.
//!
//! Heads look like `personx plays the guitar`. Each head belongs to a topic,
//! and every `(relation, topic)` pair owns a pool of 32 tail phrases: each of
//! eight relation-specific frames combined with each of four topic words. A
//! group draws its tails from that pool without replacement, so tails within
//! a group are distinct but may share a frame or a word, and the relation is
//! recoverable from the tail's wording.

use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{RelationId, Triple, TripleStore};

struct Topic {
    verbs: [&'static str; 4],
    objects: [&'static str; 4],
    words: [&'static str; 4],
}

const TOPICS: [Topic; 8] = [
    Topic {
        verbs: ["plays", "practices", "tunes", "records"],
        objects: ["the guitar", "the piano", "a song", "the drums"],
        words: ["music", "melodies", "songs", "rhythm"],
    },
    Topic {
        verbs: ["kicks", "throws", "catches", "chases"],
        objects: ["the ball", "a frisbee", "the bat", "the puck"],
        words: ["sports", "fitness", "teamwork", "exercise"],
    },
    Topic {
        verbs: ["bakes", "cooks", "grills", "serves"],
        objects: ["bread", "pasta", "a cake", "vegetables"],
        words: ["cooking", "recipes", "flavors", "meals"],
    },
    Topic {
        verbs: ["waters", "plants", "trims", "digs"],
        objects: ["the roses", "the tree", "the lawn", "seeds"],
        words: ["gardening", "flowers", "nature", "plants"],
    },
    Topic {
        verbs: ["reads", "studies", "writes", "reviews"],
        objects: ["a book", "the notes", "an essay", "the lecture"],
        words: ["knowledge", "learning", "science", "books"],
    },
    Topic {
        verbs: ["visits", "explores", "photographs", "tours"],
        objects: ["paris", "the beach", "the mountains", "a museum"],
        words: ["travel", "adventure", "places", "culture"],
    },
    Topic {
        verbs: ["finishes", "fixes", "presents", "organizes"],
        objects: ["the report", "the project", "the meeting", "the budget"],
        words: ["work", "success", "deadlines", "career"],
    },
    Topic {
        verbs: ["calls", "hugs", "helps", "meets"],
        objects: ["persony", "a friend", "the neighbor", "a classmate"],
        words: ["friendship", "kindness", "company", "trust"],
    },
];

const POOL: usize = 32;

const MODIFIERS: [&str; 5] = ["", "at night", "with persony", "again", "every day"];

/// Eight frames per relation; `{}` is replaced by a topic word.
fn frames(relation: RelationId) -> [&'static str; 8] {
    use RelationId::*;
    match relation {
        XIntent => [
            "wanted {}",
            "hoped for {}",
            "sought {}",
            "desired {}",
            "aimed at {}",
            "longed for {}",
            "was curious about {}",
            "intended {}",
        ],
        XNeed => [
            "needed {}",
            "had to get {}",
            "prepared {}",
            "gathered {}",
            "found {}",
            "planned {}",
            "borrowed {}",
            "arranged {}",
        ],
        XAttr => [
            "{} lover",
            "{} fan",
            "devoted to {}",
            "good at {}",
            "keen on {}",
            "fond of {}",
            "serious about {}",
            "talented with {}",
        ],
        XReact => [
            "happy about {}",
            "proud of {}",
            "excited by {}",
            "relaxed by {}",
            "thrilled by {}",
            "calm about {}",
            "glad about {}",
            "satisfied with {}",
        ],
        XWant => [
            "to share {}",
            "to continue {}",
            "to improve {}",
            "to teach {}",
            "to show {}",
            "to repeat {}",
            "to celebrate {}",
            "to practice {}",
        ],
        XEffect => [
            "gets better at {}",
            "earns praise for {}",
            "gets tired from {}",
            "becomes known for {}",
            "spends money on {}",
            "makes progress in {}",
            "loses time on {}",
            "gains {}",
        ],
        OReact => [
            "impressed by {}",
            "amused by {}",
            "inspired by {}",
            "annoyed by {}",
            "jealous of {}",
            "grateful for {}",
            "moved by {}",
            "bored by {}",
        ],
        OWant => [
            "to join {}",
            "to copy {}",
            "to ask about {}",
            "to watch {}",
            "to praise {}",
            "to try {}",
            "to support {}",
            "to discuss {}",
        ],
        OEffect => [
            "learn about {}",
            "hear {}",
            "receive {}",
            "benefit from {}",
            "notice {}",
            "talk about {}",
            "witness {}",
            "feel included in {}",
        ],
    }
}

/// Pool of candidate tails for one `(relation, topic)` pair.
fn tail_pool(relation: RelationId, topic: usize) -> Vec<String> {
    let words = &TOPICS[topic].words;
    frames(relation)
        .iter()
        .flat_map(|f| words.iter().map(move |w| f.replace("{}", w)))
        .collect()
}

/// Parameters for [`synth_kg`], handy for configs.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SynthSpec {
    pub n_heads: usize,
    pub min_tails: usize,
    pub max_tails: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn build(&self) -> TripleStore {
        synth_kg(self.n_heads, self.min_tails..=self.max_tails, self.seed)
    }
}

fn head_text(topic: usize, verb: usize, object: usize, modifier: usize) -> String {
    let t = &TOPICS[topic];
    let mut s = format!("personx {} {}", t.verbs[verb], t.objects[object]);
    if !MODIFIERS[modifier].is_empty() {
        s.push(' ');
        s.push_str(MODIFIERS[modifier]);
    }
    s
}

/// Deterministic head order: every plain head (shuffled) before any head
/// with a modifier, so a smaller corpus is a prefix of a larger one built
/// with the same seed.
fn head_order(seed: u64) -> Vec<(usize, usize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::new();
    for modifier in 0..MODIFIERS.len() {
        let mut level: Vec<_> = (0..TOPICS.len())
            .flat_map(|t| (0..4).flat_map(move |v| (0..4).map(move |o| (t, v, o, modifier))))
            .collect();
        level.shuffle(&mut rng);
        order.extend(level);
    }
    order
}

/// Topic index of a generated head, if it was produced by this grammar.
pub fn topic_of(head: &str) -> Option<usize> {
    TOPICS.iter().position(|t| {
        t.verbs
            .iter()
            .any(|v| t.objects.iter().any(|o| head.starts_with(&format!("personx {v} {o}"))))
    })
}

/// Generates a corpus of `n_heads` heads, each with all nine relations.
///
/// Tail counts per group are uniform over `tails_per_set`, clamped to
/// `1..=32`. Capacity is 640 distinct heads; larger requests are truncated.
pub fn synth_kg(n_heads: usize, tails_per_set: RangeInclusive<usize>, seed: u64) -> TripleStore {
    let lo = (*tails_per_set.start()).clamp(1, POOL);
    let hi = (*tails_per_set.end()).clamp(lo, POOL);
    let mut store = TripleStore::new();
    for (h, &(topic, verb, object, modifier)) in head_order(seed).iter().take(n_heads).enumerate() {
        let head = head_text(topic, verb, object, modifier);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (h as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for relation in RelationId::ALL {
            let count = rng.gen_range(lo..=hi);
            let mut pool = tail_pool(relation, topic);
            pool.shuffle(&mut rng);
            for tail in pool.into_iter().take(count) {
                store.insert(Triple::new(&head, relation, &tail).expect("non-empty"));
            }
        }
    }
    store
}
