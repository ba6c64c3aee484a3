//! Pooled generations from every latent value for a few inputs, including
//! one the model never saw.
//!
//! Usage: `cargo run --release --example generate_events [checkpoint-path]`

use mixreason::backbone::BackboneConfig;
use mixreason::checkpoint::{load_checkpoint, Checkpoint};
use mixreason::kg::{synth_kg, RelationId};
use mixreason::pipeline::{generate, train_model};
use mixreason::trainer::TrainConfig;

fn model() -> mixreason::Result<Checkpoint> {
    if let Some(path) = std::env::args().nth(1) {
        return load_checkpoint(path);
    }
    let cfg = TrainConfig {
        epochs: 25,
        lr: 1e-2,
        ..TrainConfig::default()
    };
    Ok(train_model(&synth_kg(16, 2..=3, 1), &BackboneConfig::default(), &cfg, |_| {})?.0)
}

fn main() -> mixreason::Result<()> {
    let ck = model()?;
    let heads = synth_kg(20, 2..=3, 1).heads();
    for (text, r) in [
        (heads[0].as_str(), RelationId::XWant),
        (heads[1].as_str(), RelationId::XAttr),
        (heads[18].as_str(), RelationId::OReact),
    ] {
        println!("{text} | {r}");
        for g in generate(&ck, text, r, 5, 2)? {
            println!("  {:8.3}  latent {}  {}", g.log_prob, g.latent, g.event);
        }
    }
    Ok(())
}
