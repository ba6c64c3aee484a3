//! Hard-EM training of the latent mixture.
//!
//! Each mini-batch holds whole output sets. The E-step scores every target
//! of a set under every latent value with the parameters frozen at batch
//! start and picks one latent per target; the M-step takes one Adam step on
//! the mean cross-entropy of the assigned (source, target) pairs.

mod assign;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use assign::{constrained_assign, hard_assign, score_matrix, Assignment, AssignmentProblem};

use crate::backbone::{Backbone, BackboneModel};
use crate::error::{Error, Result};
use crate::kg::{OutputSet, RelationId, TripleStore};
use crate::numerics::{adam_step, AdamConfig, AdamState, Gradients};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// One-to-one greedy assignment within each output set.
    #[default]
    ConstrainedEm,
    /// Per-target argmax; latents may collapse.
    HardEm,
    /// Every source uses latent 0.
    NoLatent,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            TrainMode::ConstrainedEm => "constrained_em",
            TrainMode::HardEm => "hard_em",
            TrainMode::NoLatent => "no_latent",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.replace('-', "_").as_str() {
            "constrained_em" => Ok(TrainMode::ConstrainedEm),
            "hard_em" => Ok(TrainMode::HardEm),
            "no_latent" => Ok(TrainMode::NoLatent),
            _ => Err(format!("unknown training mode `{s}` (constrained_em, hard_em, no_latent)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Linear warmup to the peak rate, then decay with `1/sqrt(step)`.
    InverseSqrt { warmup_steps: u64 },
}

impl LrSchedule {
    /// Learning rate for the 1-based optimizer `step`.
    pub fn rate(&self, peak: f64, step: u64) -> f64 {
        match *self {
            LrSchedule::Constant => peak,
            LrSchedule::InverseSqrt { warmup_steps } => {
                let w = warmup_steps.max(1) as f64;
                let s = step.max(1) as f64;
                if s < w {
                    peak * s / w
                } else {
                    peak * (w / s).sqrt()
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub epochs: usize,
    /// Output sets per mini-batch.
    pub batch_sets: usize,
    /// Peak learning rate.
    pub lr: f64,
    pub schedule: LrSchedule,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub num_latents: usize,
    pub seed: u64,
    /// Fail on an output set larger than K; otherwise skip it.
    pub strict: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::ConstrainedEm,
            epochs: 30,
            batch_sets: 8,
            lr: 3e-3,
            schedule: LrSchedule::Constant,
            clip_norm: Some(5.0),
            num_latents: 5,
            seed: 0,
            strict: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_sets == 0 {
            return Err(Error::BadTrainConfig("batch_sets must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::BadTrainConfig(format!("learning rate must be positive, got {}", self.lr)));
        }
        if self.num_latents == 0 {
            return Err(Error::BadTrainConfig("need at least one latent value".into()));
        }
        if let Some(c) = self.clip_norm {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::BadTrainConfig(format!("clip_norm must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

/// One line of the training metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMetrics {
    pub epoch: usize,
    pub batch: usize,
    /// Mean per-pair negative log-likelihood before the update.
    pub loss: f64,
    /// Mean number of distinct latents per output set in the batch.
    pub distinct_latents_used: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_loss: f64,
    pub mean_distinct_latents: f64,
    /// Number of targets assigned to each latent value.
    pub latent_histogram: Vec<usize>,
    pub sets: usize,
    pub pairs: usize,
    pub skipped_sets: usize,
}

/// Shuffles set indices with `seed` and cuts them into consecutive batches
/// of at most `max_sets_per_batch`.
pub fn batch_indices(n: usize, max_sets_per_batch: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.chunks(max_sets_per_batch.max(1)).map(<[usize]>::to_vec).collect()
}

/// Groups whole output sets into shuffled mini-batches.
pub fn bucket_batches(sets: &[OutputSet], max_sets_per_batch: usize, seed: u64) -> Vec<Vec<OutputSet>> {
    batch_indices(sets.len(), max_sets_per_batch, seed)
        .into_iter()
        .map(|b| b.into_iter().map(|i| sets[i].clone()).collect())
        .collect()
}

/// E-step for one output set.
pub fn assign_set<B: Backbone, S: AsRef<str>>(
    model: &B,
    x: &[S],
    r: RelationId,
    targets: &[Vec<usize>],
    mode: TrainMode,
) -> Result<Assignment> {
    match mode {
        TrainMode::NoLatent => Ok(Assignment {
            latents: vec![0; targets.len()],
        }),
        TrainMode::HardEm => Ok(hard_assign(&assign::score_ids(model, x, r, targets)?)),
        TrainMode::ConstrainedEm => constrained_assign(&assign::score_ids(model, x, r, targets)?),
    }
}

#[derive(Debug, Clone)]
struct PreparedSet {
    x: Vec<String>,
    relation: RelationId,
    targets: Vec<Vec<usize>>,
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Holds optimizer state across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    adam: AdamConfig,
    state: AdamState,
    grads: Gradients,
    sets: Vec<PreparedSet>,
    skipped_sets: usize,
    epoch: usize,
}

impl Trainer {
    /// Tokenizes the store once. Targets longer than the model's length cap
    /// are truncated before EOS.
    pub fn new(model: &BackboneModel, store: &TripleStore, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let vocab = model.vocab();
        if vocab.num_latents() != config.num_latents {
            return Err(Error::BadTrainConfig(format!(
                "config has K = {} but the vocabulary has {} latent symbols",
                config.num_latents,
                vocab.num_latents()
            )));
        }
        if store.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let cap = model.max_target_len() - 2;
        let mut sets = Vec::new();
        let mut skipped_sets = 0;
        for set in store.output_sets() {
            if config.mode != TrainMode::NoLatent && set.tails.len() > config.num_latents {
                if config.strict {
                    return Err(Error::InfeasibleK {
                        set: set.label(),
                        targets: set.tails.len(),
                        num_latents: config.num_latents,
                    });
                }
                skipped_sets += 1;
                continue;
            }
            let targets = set
                .tails
                .iter()
                .map(|t| {
                    let mut toks = tokenize(t);
                    toks.truncate(cap);
                    vocab.encode_target(&toks)
                })
                .collect();
            sets.push(PreparedSet {
                x: tokenize(&set.head),
                relation: set.relation,
                targets,
            });
        }
        Ok(Trainer {
            adam: AdamConfig {
                lr: config.lr,
                ..AdamConfig::default()
            },
            state: AdamState::new(model.params()),
            grads: Gradients::zeros_like(model.params()),
            config,
            sets,
            skipped_sets,
            epoch: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Optimizer steps taken so far.
    pub fn steps(&self) -> u64 {
        self.state.step
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    /// Runs one epoch, reporting each batch to `on_batch`. Parameters are
    /// rounded to checkpoint precision after every update.
    pub fn train_epoch<F: FnMut(&BatchMetrics)>(
        &mut self,
        model: &mut BackboneModel,
        mut on_batch: F,
    ) -> Result<EpochMetrics> {
        let k_total = self.config.num_latents;
        let epoch = self.epoch;
        let batches = batch_indices(self.sets.len(), self.config.batch_sets, epoch_seed(self.config.seed, epoch));
        let mut histogram = vec![0usize; k_total];
        let (mut loss_total, mut pairs_total, mut distinct_total) = (0.0, 0usize, 0usize);

        for (b, batch) in batches.iter().enumerate() {
            let mut pairs: Vec<(Vec<usize>, &[usize])> = Vec::new();
            let mut distinct = 0;
            for &i in batch {
                let set = &self.sets[i];
                let a = assign_set(&*model, &set.x, set.relation, &set.targets, self.config.mode)?;
                distinct += a.distinct_latents();
                for (tgt, &k) in set.targets.iter().zip(&a.latents) {
                    histogram[k] += 1;
                    pairs.push((model.vocab().encode_source(&set.x, set.relation, k)?, tgt));
                }
            }
            self.grads.reset();
            let scale = 1.0 / pairs.len() as f64;
            let mut loss = 0.0;
            for (src, tgt) in &pairs {
                loss += model.accumulate_loss_gradient(src, tgt, scale, &mut self.grads)?;
            }
            if let Some(c) = self.config.clip_norm {
                self.grads.clip_global_norm(c);
            }
            let lr = self.config.schedule.rate(self.config.lr, self.state.step + 1);
            adam_step(model.params_mut(), &self.grads, &mut self.state, &self.adam, lr)?;
            model.round_to_storage_precision();

            on_batch(&BatchMetrics {
                epoch,
                batch: b,
                loss: loss / pairs.len() as f64,
                distinct_latents_used: distinct as f64 / batch.len() as f64,
            });
            loss_total += loss;
            pairs_total += pairs.len();
            distinct_total += distinct;
        }
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch,
            mean_loss: loss_total / pairs_total.max(1) as f64,
            mean_distinct_latents: distinct_total as f64 / self.sets.len().max(1) as f64,
            latent_histogram: histogram,
            sets: self.sets.len(),
            pairs: pairs_total,
            skipped_sets: self.skipped_sets,
        })
    }
}

/// Trains for `config.epochs` epochs and returns per-epoch metrics.
pub fn train<F: FnMut(&BatchMetrics)>(
    model: &mut BackboneModel,
    store: &TripleStore,
    config: &TrainConfig,
    mut on_batch: F,
) -> Result<Vec<EpochMetrics>> {
    let mut trainer = Trainer::new(model, store, config.clone())?;
    (0..config.epochs)
        .map(|_| trainer.train_epoch(model, &mut on_batch))
        .collect()
}
