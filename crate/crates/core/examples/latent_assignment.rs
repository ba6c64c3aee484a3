//! Compares the injective greedy assignment of targets to latent values
//! with the unconstrained per-row argmax.

use mixreason::trainer::{constrained_assign, hard_assign, AssignmentProblem};

fn main() -> mixreason::Result<()> {
    // Log-likelihoods of three targets under four latent values. Latent 0
    // explains every target best, so the argmax collapses onto it.
    let problem = AssignmentProblem::new(vec![
        vec![-1.0, -2.5, -4.0, -3.0],
        vec![-1.2, -1.4, -5.0, -2.0],
        vec![-1.1, -6.0, -1.9, -2.2],
    ])?;
    let hard = hard_assign(&problem);
    let constrained = constrained_assign(&problem)?;
    println!(
        "hard:        {:?} total {:.2}, {} distinct",
        hard.latents,
        hard.total(&problem),
        hard.distinct_latents()
    );
    println!(
        "constrained: {:?} total {:.2}, {} distinct",
        constrained.latents,
        constrained.total(&problem),
        constrained.distinct_latents()
    );

    let too_many = AssignmentProblem::new(vec![vec![-1.0], vec![-2.0]])?;
    println!("two targets, one latent: {}", constrained_assign(&too_many).unwrap_err());
    Ok(())
}
