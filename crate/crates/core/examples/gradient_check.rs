//! Checks reverse-mode gradients of a sequence log-probability against
//! central finite differences on a tiny backbone.

use mixreason::backbone::{sequence_log_prob, BackboneConfig, BackboneModel};
use mixreason::kg::RelationId;
use mixreason::numerics::max_finite_difference_error;
use mixreason::text::Vocab;

fn main() -> mixreason::Result<()> {
    let vocab = Vocab::from_tokens(["eat", "food", "sleep", "x"].iter().map(|s| s.to_string()).collect(), 2)?;
    let cfg = BackboneConfig {
        embed_dim: 4,
        hidden_dim: 5,
        max_target_len: 6,
        seed: 3,
        ..BackboneConfig::default()
    };
    let model = BackboneModel::init(cfg.clone(), vocab.clone())?;
    let src = vocab.encode_source(&["x", "eat"], RelationId::XWant, 1)?;
    let tgt = vocab.encode_target(&["eat", "food"]);

    let (lp, grads) = model.log_prob_with_gradient(&src, &tgt)?;
    println!("log p = {lp:.6}, {} parameters, gradient norm {:.4}", model.params().num_values(), grads.global_norm());
    let worst = max_finite_difference_error(model.params(), &grads, 1e-6, |p| {
        let m = BackboneModel::from_params(cfg.clone(), vocab.clone(), p.clone()).expect("same layout");
        sequence_log_prob(&m, &src, &tgt).expect("valid target")
    });
    println!("max relative error vs central differences: {worst:.2e}");
    Ok(())
}
