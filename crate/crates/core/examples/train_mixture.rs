//! Trains the mixture model on a small synthetic corpus in each mode and
//! writes the constrained model to a checkpoint.
//!
//! Usage: `cargo run --release --example train_mixture [checkpoint-path]`

use mixreason::backbone::BackboneConfig;
use mixreason::checkpoint::{load_checkpoint, save_checkpoint};
use mixreason::kg::synth_kg;
use mixreason::pipeline::train_model;
use mixreason::trainer::{TrainConfig, TrainMode};

fn main() -> mixreason::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| std::env::temp_dir().join("mixture.ckpt").display().to_string());
    let store = synth_kg(16, 2..=3, 1);
    let backbone = BackboneConfig::default();

    for mode in [TrainMode::ConstrainedEm, TrainMode::HardEm, TrainMode::NoLatent] {
        let cfg = TrainConfig {
            mode,
            epochs: 25,
            lr: 1e-2,
            ..TrainConfig::default()
        };
        let (ck, epochs) = train_model(&store, &backbone, &cfg, |_| {})?;
        let first = &epochs[0];
        let last = epochs.last().expect("at least one epoch");
        println!(
            "{:>14}: loss {:.3} -> {:.3}, distinct latents per set {:.2}, latent use {:?}",
            mode.name(),
            first.mean_loss,
            last.mean_loss,
            last.mean_distinct_latents, last.latent_histogram
        );
        if mode == TrainMode::ConstrainedEm {
            save_checkpoint(&path, &ck.model, &ck.provenance)?;
            let back = load_checkpoint(&path)?;
            println!("saved {path}; reload identical: {}", back.model == ck.model);
        }
    }
    Ok(())
}
