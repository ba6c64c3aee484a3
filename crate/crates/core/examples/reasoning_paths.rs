//! Multi-hop reasoning paths from a context.
//!
//! Usage: `cargo run --release --example reasoning_paths [checkpoint-path]`

use mixreason::backbone::BackboneConfig;
use mixreason::checkpoint::{load_checkpoint, Checkpoint};
use mixreason::kg::{synth_kg, RelationId};
use mixreason::pipeline::{reason_for, train_model};
use mixreason::reasoning::{reason, ReasonConfig};
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
    let heads = synth_kg(16, 2..=3, 1).heads();
    let context = heads[0].as_str();
    for hops in [0, 1, 2] {
        let cfg = reason_for(
            &ck,
            &ReasonConfig {
                hops,
                beam: 3,
                top_paths: 4,
                ..ReasonConfig::default()
            },
        );
        println!("{context} | xEffect, {hops} hop(s):");
        for p in reason(&ck.model, context, RelationId::XEffect, &cfg)? {
            println!("  {:8.3}  {}", p.total_log_prob, p.events.join(" -> "));
        }
    }
    Ok(())
}
