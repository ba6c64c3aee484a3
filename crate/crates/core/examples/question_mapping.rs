//! Maps free-form questions to the relation they ask about.

use mixreason::question::{map_question, question_patterns};

fn main() {
    for p in question_patterns() {
        println!("{:<45} {:>8} {:?}", p.template, p.relation.to_string(), p.category);
    }
    println!();
    for (q, agent) in [
        ("What does Jordan need to do before this?", Some("Jordan")),
        ("How would Casey feel afterwards?", None),
        ("What will happen to others?", None),
        ("Why did Sam do that?", None),
    ] {
        let m = map_question(q, agent);
        println!(
            "{q:<45} -> {} (exact {}, similarity {:.2})",
            m.relation, m.exact, m.similarity
        );
    }
}
