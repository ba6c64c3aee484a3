//! Reference backbone: recurrent encoder and decoder with additive attention.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Eager, Graph, Val};
use super::Backbone;
use crate::error::{Error, Result};
use crate::numerics::{log_softmax, Gradients, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::text::Vocab;

pub const INIT_RANGE: f32 = 0.08;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    /// Longest target including BOS and EOS.
    pub max_target_len: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            embed_dim: 24,
            hidden_dim: 32,
            encoder_layers: 1,
            decoder_layers: 1,
            max_target_len: 10,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 || self.hidden_dim < 2 {
            return Err(Error::BadConfig("embed_dim and hidden_dim must be at least 2".into()));
        }
        if self.encoder_layers < 1 || self.decoder_layers < 1 {
            return Err(Error::BadConfig("need at least one encoder and one decoder layer".into()));
        }
        if self.max_target_len < 2 {
            return Err(Error::BadConfig("max_target_len must be at least 2".into()));
        }
        Ok(())
    }

    /// Parameter names and shapes in canonical order.
    pub fn layout(&self, vocab_size: usize) -> Vec<(String, Vec<usize>)> {
        let (e, h) = (self.embed_dim, self.hidden_dim);
        let mut out = vec![("embedding".to_string(), vec![vocab_size, e])];
        for l in 0..self.encoder_layers {
            let input = if l == 0 { e } else { h };
            out.push((format!("encoder.{l}.w_in"), vec![input, h]));
            out.push((format!("encoder.{l}.w_rec"), vec![h, h]));
            out.push((format!("encoder.{l}.bias"), vec![1, h]));
        }
        out.push(("attention.w_query".into(), vec![h, h]));
        out.push(("attention.w_key".into(), vec![h, h]));
        out.push(("attention.v".into(), vec![1, h]));
        for l in 0..self.decoder_layers {
            let input = if l == 0 { e } else { h };
            out.push((format!("decoder.{l}.w_in"), vec![input, h]));
            if l == 0 {
                out.push(("decoder.0.w_ctx".into(), vec![h, h]));
            }
            out.push((format!("decoder.{l}.w_rec"), vec![h, h]));
            out.push((format!("decoder.{l}.bias"), vec![1, h]));
        }
        out.push(("output.weight".into(), vec![vocab_size, 2 * h]));
        out.push(("output.bias".into(), vec![1, vocab_size]));
        out
    }
}

#[derive(Debug, Clone)]
struct RecurrentIds {
    w_in: ParamId,
    w_ctx: Option<ParamId>,
    w_rec: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
struct WeightIds {
    embedding: ParamId,
    encoder: Vec<RecurrentIds>,
    att_query: ParamId,
    att_key: ParamId,
    att_v: ParamId,
    decoder: Vec<RecurrentIds>,
    out_w: ParamId,
    out_b: ParamId,
}

impl WeightIds {
    fn resolve(cfg: &BackboneConfig, params: &ParamStore) -> Result<Self> {
        let get = |name: &str| {
            params
                .find(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
        };
        let layer = |prefix: &str, l: usize, ctx: bool| -> Result<RecurrentIds> {
            Ok(RecurrentIds {
                w_in: get(&format!("{prefix}.{l}.w_in"))?,
                w_ctx: if ctx { Some(get(&format!("{prefix}.{l}.w_ctx"))?) } else { None },
                w_rec: get(&format!("{prefix}.{l}.w_rec"))?,
                bias: get(&format!("{prefix}.{l}.bias"))?,
            })
        };
        Ok(WeightIds {
            embedding: get("embedding")?,
            encoder: (0..cfg.encoder_layers)
                .map(|l| layer("encoder", l, false))
                .collect::<Result<_>>()?,
            att_query: get("attention.w_query")?,
            att_key: get("attention.w_key")?,
            att_v: get("attention.v")?,
            decoder: (0..cfg.decoder_layers)
                .map(|l| layer("decoder", l, l == 0))
                .collect::<Result<_>>()?,
            out_w: get("output.weight")?,
            out_b: get("output.bias")?,
        })
    }
}

/// Encoder output shared by every decoding state of one source.
#[derive(Debug)]
pub struct EncoderCache {
    states: Tensor,
    keys: Tensor,
}

/// Decoder state after consuming a target prefix.
#[derive(Debug, Clone)]
pub struct RnnState {
    enc: Arc<EncoderCache>,
    hidden: Vec<Tensor>,
    log_probs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BackboneModel {
    config: BackboneConfig,
    vocab: Vocab,
    params: ParamStore,
    ids: WeightIds,
}

impl PartialEq for BackboneModel {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.vocab == other.vocab && self.params == other.params
    }
}

/// Runs the encoder; returns (all top-layer states `[n, h]`, attention keys, final top state).
fn encode<G: Graph>(g: &mut G, w: &WeightIds, src: &[usize]) -> Result<(G::V, G::V, G::V)> {
    if src.is_empty() {
        return Err(Error::BadTarget("empty source sequence".into()));
    }
    let table = g.param(w.embedding);
    let mut inputs = Vec::with_capacity(src.len());
    for &id in src {
        inputs.push(g.embed(&table, &[id])?);
    }
    for layer in &w.encoder {
        let w_in = g.param(layer.w_in);
        let w_rec = g.param(layer.w_rec);
        let bias = g.param(layer.bias);
        let mut outputs: Vec<G::V> = Vec::with_capacity(inputs.len());
        for x in &inputs {
            let mut pre = g.matmul(x, &w_in)?;
            if let Some(prev) = outputs.last() {
                let rec = g.matmul(prev, &w_rec)?;
                pre = g.add(&pre, &rec)?;
            }
            let pre = g.add(&pre, &bias)?;
            outputs.push(g.tanh(&pre));
        }
        inputs = outputs;
    }
    let refs: Vec<&G::V> = inputs.iter().collect();
    let states = g.concat(&refs, 0)?;
    let w_key = g.param(w.att_key);
    let keys = g.matmul(&states, &w_key)?;
    let last = inputs.pop().expect("non-empty source");
    Ok((states, keys, last))
}

/// One decoder step: feeds `token`, returns new per-layer states and logits `[1, V]`.
fn decode_step<G: Graph>(
    g: &mut G,
    w: &WeightIds,
    states: &G::V,
    keys: &G::V,
    prev: &[&G::V],
    token: usize,
) -> Result<(Vec<G::V>, G::V)> {
    let top_prev = prev[prev.len() - 1];
    let w_query = g.param(w.att_query);
    let q = g.matmul(top_prev, &w_query)?;
    let e = g.add(keys, &q)?;
    let e = g.tanh(&e);
    let v = g.param(w.att_v);
    let scores = g.matmul_bt(&e, &v)?;
    let n = g.rows(&scores);
    let scores = g.reshape(&scores, &[1, n])?;
    let alpha = g.row_softmax(&scores);
    let ctx = g.matmul(&alpha, states)?;

    let table = g.param(w.embedding);
    let x = g.embed(&table, &[token])?;
    let mut next: Vec<G::V> = Vec::with_capacity(prev.len());
    for (l, layer) in w.decoder.iter().enumerate() {
        let input = if l == 0 { &x } else { &next[l - 1] };
        let w_in = g.param(layer.w_in);
        let mut pre = g.matmul(input, &w_in)?;
        if let Some(w_ctx) = layer.w_ctx {
            let w_ctx = g.param(w_ctx);
            let c = g.matmul(&ctx, &w_ctx)?;
            pre = g.add(&pre, &c)?;
        }
        let w_rec = g.param(layer.w_rec);
        let rec = g.matmul(prev[l], &w_rec)?;
        let pre = g.add(&pre, &rec)?;
        let bias = g.param(layer.bias);
        let pre = g.add(&pre, &bias)?;
        let s = g.tanh(&pre);
        next.push(s);
    }
    let top = next.last().expect("at least one decoder layer");
    let feat = g.concat(&[top, &ctx], 1)?;
    let out_w = g.param(w.out_w);
    let logits = g.matmul_bt(&feat, &out_w)?;
    let out_b = g.param(w.out_b);
    let logits = g.add(&logits, &out_b)?;
    Ok((next, logits))
}

fn check_target(vocab: &Vocab, max_len: usize, tgt: &[usize]) -> Result<()> {
    if tgt.len() < 2 || tgt[0] != vocab.bos() || tgt[tgt.len() - 1] != vocab.eos() {
        return Err(Error::BadTarget("target must start with BOS and end with EOS".into()));
    }
    if tgt.len() > max_len {
        return Err(Error::BadTarget(format!(
            "target length {} exceeds max_target_len {max_len}",
            tgt.len()
        )));
    }
    if let Some(&bad) = tgt.iter().find(|&&t| t >= vocab.len()) {
        return Err(Error::BadTarget(format!("token id {bad} outside vocabulary")));
    }
    Ok(())
}

impl BackboneModel {
    /// Seeded uniform init in `[-0.08, 0.08]`; the output bias starts at zero.
    /// Values are drawn in `f32` so a fresh model survives checkpointing exactly.
    pub fn init(config: BackboneConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.layout(vocab.len()) {
            let n: usize = shape.iter().product();
            let data = if name == "output.bias" {
                vec![0.0; n]
            } else {
                (0..n)
                    .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE) as f64)
                    .collect()
            };
            params.add(name, Tensor::new(shape, data)?);
        }
        Self::from_params(config, vocab, params)
    }

    /// Wraps existing parameters, checking names and shapes against the layout.
    pub fn from_params(config: BackboneConfig, vocab: Vocab, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let layout = config.layout(vocab.len());
        if layout.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                params.len()
            )));
        }
        for ((name, shape), (pname, t)) in layout.iter().zip(params.iter()) {
            if name != pname || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {pname} {:?} does not match expected {name} {shape:?}",
                    t.shape()
                )));
            }
            if !t.is_finite() {
                return Err(Error::Checkpoint(format!("parameter {pname} has non-finite values")));
            }
        }
        let ids = WeightIds::resolve(&config, &params)?;
        Ok(BackboneModel {
            config,
            vocab,
            params,
            ids,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint precision.
    pub fn round_to_storage_precision(&mut self) {
        let ids: Vec<_> = self.params.ids().collect();
        for id in ids {
            for v in self.params.get_mut(id).data_mut() {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Sets output weights and bias to zero, making every next-token
    /// distribution uniform.
    pub fn zero_output_projection(&mut self) {
        self.params.get_mut(self.ids.out_w).fill(0.0);
        self.params.get_mut(self.ids.out_b).fill(0.0);
    }

    pub fn embedding_row(&self, id: usize) -> &[f64] {
        self.params.get(self.ids.embedding).row_slice(id)
    }

    fn eager_encode(&self, src: &[usize]) -> Result<(Arc<EncoderCache>, Tensor)> {
        let mut g = Eager { params: &self.params };
        let (states, keys, last) = encode(&mut g, &self.ids, src)?;
        Ok((
            Arc::new(EncoderCache {
                states: states.into_tensor(),
                keys: keys.into_tensor(),
            }),
            last.into_tensor(),
        ))
    }

    fn eager_step(&self, enc: &Arc<EncoderCache>, hidden: &[Tensor], token: usize) -> Result<RnnState> {
        let mut g = Eager { params: &self.params };
        let states = Val::Ref(&enc.states);
        let keys = Val::Ref(&enc.keys);
        let prev: Vec<Val> = hidden.iter().map(Val::Ref).collect();
        let prev_refs: Vec<&Val> = prev.iter().collect();
        let (next, logits) = decode_step(&mut g, &self.ids, &states, &keys, &prev_refs, token)?;
        Ok(RnnState {
            enc: Arc::clone(enc),
            hidden: next.into_iter().map(Val::into_tensor).collect(),
            log_probs: log_softmax(logits.get().data()),
        })
    }

    /// Records the teacher-forced negative log-likelihood of `tgt` on `tape`.
    pub fn record_loss(&self, tape: &mut Tape, src: &[usize], tgt: &[usize]) -> Result<NodeId> {
        check_target(&self.vocab, self.config.max_target_len, tgt)?;
        let (states, keys, last) = encode(tape, &self.ids, src)?;
        let mut hidden = vec![last; self.config.decoder_layers];
        let mut losses = Vec::with_capacity(tgt.len() - 1);
        for t in 0..tgt.len() - 1 {
            let prev: Vec<&NodeId> = hidden.iter().collect();
            let (next, logits) = decode_step(tape, &self.ids, &states, &keys, &prev, tgt[t])?;
            losses.push(tape.cross_entropy(logits, tgt[t + 1])?);
            hidden = next;
        }
        let stacked = tape.concat(&losses, 0)?;
        Ok(tape.sum(stacked))
    }

    /// Accumulates `scale * d(-log p)/dθ` into `grads`; returns `-log p`.
    pub fn accumulate_loss_gradient(
        &self,
        src: &[usize],
        tgt: &[usize],
        scale: f64,
        grads: &mut Gradients,
    ) -> Result<f64> {
        let mut tape = Tape::new(&self.params);
        let loss = self.record_loss(&mut tape, src, tgt)?;
        tape.backward_into(loss, scale, grads)?;
        Ok(tape.value(loss).item())
    }

    /// `log p(tgt | src)` and its gradient with respect to every parameter.
    pub fn log_prob_with_gradient(&self, src: &[usize], tgt: &[usize]) -> Result<(f64, Gradients)> {
        let mut grads = Gradients::zeros_like(&self.params);
        let loss = self.accumulate_loss_gradient(src, tgt, -1.0, &mut grads)?;
        Ok((-loss, grads))
    }
}

impl Backbone for BackboneModel {
    type State = RnnState;

    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn max_target_len(&self) -> usize {
        self.config.max_target_len
    }

    fn start(&self, src: &[usize]) -> Result<RnnState> {
        let (enc, last) = self.eager_encode(src)?;
        let hidden = vec![last; self.config.decoder_layers];
        self.eager_step(&enc, &hidden, self.vocab.bos())
    }

    fn log_probs<'s>(&self, state: &'s RnnState) -> &'s [f64] {
        &state.log_probs
    }

    fn advance(&self, state: &RnnState, token: usize) -> Result<RnnState> {
        self.eager_step(&state.enc, &state.hidden, token)
    }

    fn embed_text<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptyText);
        }
        let d = self.config.embed_dim;
        let mut acc = vec![0.0; d];
        for t in tokens {
            let row = self.embedding_row(self.vocab.id(t.as_ref()));
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
        }
        let n = tokens.len() as f64;
        Ok(acc.into_iter().map(|a| a / n).collect())
    }
}
