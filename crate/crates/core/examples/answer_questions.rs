//! Zero-shot multiple choice: questions about heads held out of training,
//! scored with each answer scorer.
//!
//! Usage: `cargo run --release --example answer_questions`

use mixreason::backbone::BackboneConfig;
use mixreason::kg::synth_kg;
use mixreason::pipeline::{answer_all, answer_example, reason_for, summarize_qa, synth_qa, train_model};
use mixreason::reasoning::ReasonConfig;
use mixreason::scorer::{Distance, ScorerConfig};
use mixreason::trainer::TrainConfig;

fn main() -> mixreason::Result<()> {
    let all = synth_kg(24, 2..=3, 1);
    let seen: Vec<String> = all.heads().into_iter().take(16).collect();
    let train = all.filter_heads(|h| seen.iter().any(|s| s == h));
    let held = all.filter_heads(|h| !seen.iter().any(|s| s == h));
    let cfg = TrainConfig {
        epochs: 25,
        lr: 1e-2,
        ..TrainConfig::default()
    };
    let (ck, _) = train_model(&train, &BackboneConfig::default(), &cfg, |_| {})?;
    let questions = synth_qa(&held, "Alex", 0);
    let reason = reason_for(
        &ck,
        &ReasonConfig {
            beam: 3,
            ..ReasonConfig::default()
        },
    );

    let ex = &questions[0];
    println!("context: {}\nquestion: {}\nanswers: {:?}", ex.context, ex.question, ex.answers);
    let rec = answer_example(&ck.model, ex, &reason, &ScorerConfig::default())?;
    println!("relation {} -> chose {} (gold {:?}), scores {:?}", rec.relation, rec.chosen, rec.gold, rec.scores);

    println!("\n{} held-out questions, chance 0.333", questions.len());
    for distance in [Distance::Cosine, Distance::Bleu, Distance::Seq2seqLikelihood, Distance::AvgWordProb] {
        let scorer = ScorerConfig {
            distance,
            ..ScorerConfig::default()
        };
        let (records, failed) = answer_all(&ck.model, &questions, &reason, &scorer)?;
        let s = summarize_qa(&records, failed);
        println!("{:>20}: accuracy {:.3}", distance.name(), s.accuracy.unwrap_or(f64::NAN));
    }
    Ok(())
}
