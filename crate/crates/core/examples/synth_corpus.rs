//! Builds a synthetic if-then corpus, splits it by head and prints a few
//! output sets with the vocabulary they induce.

use mixreason::kg::{split, synth_kg, RelationId};
use mixreason::text::Vocab;

fn main() -> mixreason::Result<()> {
    let store = synth_kg(50, 3..=3, 7);
    println!("{} triples, {} heads, {} output sets", store.len(), store.heads().len(), store.num_groups());

    let (train, dev, test) = split(&store, (0.8, 0.1, 0.1), 0)?;
    println!("split by head: {} / {} / {}", train.heads().len(), dev.heads().len(), test.heads().len());

    let head = &store.heads()[0];
    for r in [RelationId::XIntent, RelationId::XWant, RelationId::OReact] {
        println!("{head} | {r}: {:?}", store.tails_of(head, r));
    }

    let vocab = Vocab::build(&store, 5, 1)?;
    println!(
        "vocab: {} ids ({} corpus tokens, K = {})",
        vocab.len(),
        vocab.num_corpus_tokens(),
        vocab.num_latents()
    );
    let src = vocab.encode_source(&["personx", "plays", "the", "guitar"], RelationId::XWant, 2)?;
    let shown: Vec<_> = src.iter().map(|&i| vocab.token(i).unwrap_or("?")).collect();
    println!("source layout: {}", shown.join(" "));
    Ok(())
}
