//! n-gram and BLEU diversity of small generation sets.

use mixreason::diversity::{bleu_smoothing1, diversity_report};
use mixreason::text::tokenize;

fn main() -> mixreason::Result<()> {
    let sets = [
        vec!["to eat food", "to eat food", "to eat food"],
        vec!["to eat food", "to eat lunch", "to eat dinner"],
        vec!["to eat food", "go to bed", "call a friend"],
    ];
    for set in &sets {
        let seqs: Vec<Vec<String>> = set.iter().map(|s| tokenize(s)).collect();
        let rep = diversity_report(&seqs)?;
        let bleu = rep.div_bleu.map_or("n/a".to_string(), |d| format!("{d:.3}"));
        println!("{set:?}\n  div_ngram {:.3}  div_bleu {bleu}", rep.div_ngram);
        for p in &rep.per_n {
            println!("    n={} div_ngram {:?}", p.n, p.div_ngram);
        }
    }
    let h = tokenize("the cat sat on the mat");
    let r = tokenize("the cat is on the mat");
    println!("BLEU({h:?}, {r:?}) = {:.4}", bleu_smoothing1(&h, &r)?);
    Ok(())
}
