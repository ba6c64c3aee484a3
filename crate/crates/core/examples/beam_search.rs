//! Beam search on a hand-written transition table, compared with greedy
//! decoding and with the exact best sequences.

use mixreason::backbone::{beam_search, greedy_decode, Backbone, TableBackbone};
use mixreason::kg::RelationId;
use mixreason::text::Vocab;

fn main() -> mixreason::Result<()> {
    let vocab = Vocab::from_tokens(vec!["a".into(), "b".into()], 1)?;
    let (a, b, eos) = (vocab.id("a"), vocab.id("b"), vocab.eos());
    let table = TableBackbone::table_from_weights(
        &vocab,
        &[
            (vocab.bos(), vec![(a, 0.6), (b, 0.4)]),
            (a, vec![(eos, 0.7), (b, 0.3)]),
            (b, vec![(eos, 0.5), (a, 0.5)]),
        ],
    );
    let model = TableBackbone::new(vocab.clone(), 5, table)?;
    let src = vocab.encode_source(&["x"], RelationId::XWant, 0)?;

    let g = greedy_decode(&model, &src, 4)?;
    println!("greedy: {:?} p = {:.4}", vocab.decode_ids(&g.tokens), g.log_prob.exp());
    for width in 1..=4 {
        let hyps = beam_search(&model, &src, width, 4)?;
        let shown: Vec<String> = hyps
            .iter()
            .map(|h| format!("{} ({:.3})", model.vocab().decode_ids(&h.tokens).join(" "), h.log_prob.exp()))
            .collect();
        println!("beam {width}: {}", shown.join(", "));
    }
    Ok(())
}
