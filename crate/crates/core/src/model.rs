//! Time2Vec-embedded transformer encoder for next-step return regression.
//!
//! Forward path: concat(features, time2vec(time_index)) per step → input
//! projection to `d_model` → `n_encoders` post-norm encoder blocks → mean over
//! the sequence positions (global average pooling) → dense `d_model → 1`.
//!
//! Heads use their own `d_head` independent of `d_model`; the concatenated
//! width `n_heads·d_head` is projected back to `d_model`, so no divisibility
//! between the two is required. Attention scales scores by `1/√d_head`. The
//! periodic Time2Vec activation is sine, and the time index counts rows of the
//! whole per-enterprise series, not offsets within a window.

use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FedError, NumericsError};
use crate::parallel;
use crate::params::{ParamManifest, ParamStore, PARAM_FORMAT};
use crate::tape::{Gradients, NodeId, Tape};
use crate::tensor::Tensor;

/// Epsilon inside every layer-norm denominator.
pub const LN_EPS: f64 = 1e-5;

/// Samples per gradient chunk. Chunks are accumulated sequentially inside and
/// combined in chunk order, so batch gradients are byte-identical for any
/// worker count.
pub const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub n_features: usize,
    /// Periodic Time2Vec channels; the embedding has `t2v_k + 1` channels total.
    pub t2v_k: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub n_encoders: usize,
    pub d_ff: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            seq_len: 16,
            n_features: 5,
            t2v_k: 1,
            d_model: 256,
            n_heads: 12,
            d_head: 64,
            n_encoders: 3,
            d_ff: 4 * 256,
        }
    }
}

impl ModelConfig {
    /// Reduced layout used by the gradient-fidelity gate.
    pub fn tiny() -> Self {
        Self {
            seq_len: 4,
            n_features: 5,
            t2v_k: 1,
            d_model: 8,
            n_heads: 2,
            d_head: 4,
            n_encoders: 1,
            d_ff: 32,
        }
    }

    pub fn validate(&self) -> Result<(), NumericsError> {
        let dims = [
            ("seq_len", self.seq_len),
            ("n_features", self.n_features),
            ("t2v_k", self.t2v_k),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("n_encoders", self.n_encoders),
            ("d_ff", self.d_ff),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NumericsError::InvalidArgument(format!(
                    "model dimension {name} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// Width after concatenating features with the time embedding.
    pub fn input_width(&self) -> usize {
        self.n_features + self.t2v_k + 1
    }

    /// Width of the concatenated head outputs.
    pub fn concat_width(&self) -> usize {
        self.n_heads * self.d_head
    }

    /// Scalar parameter count implied by the layout; init must match this.
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let hd = self.concat_width();
        let f = self.d_ff;
        let kp1 = self.t2v_k + 1;
        let t2v = 2 * kp1;
        let input = self.input_width() * d + d;
        let qkv = 3 * (d * hd + hd);
        let attn_out = hd * d + d;
        let norms = 2 * (2 * d);
        let ff = (d * f + f) + (f * d + d);
        let head = d + 1;
        t2v + input + self.n_encoders * (qkv + attn_out + norms + ff) + head
    }
}

/// Initialization scale for the linear Time2Vec channel's ω.
///
/// τ is a calendar-scale day index (thousands of days for a multi-year
/// series) and the linear channel ω₀τ + φ₀ enters the encoder unbounded, so
/// ω₀ must start near 1/τ for first-block activations to be O(1). A plain
/// uniform (0,1) draw puts the channel in the hundreds, which drowns the
/// return features and stalls training. The periodic channels pass through
/// sin and stay bounded for any ω, so they keep the plain uniform draw.
pub const T2V_LINEAR_OMEGA_SCALE: f64 = 1e-3;

/// Initial output-head bias.
///
/// Targets are min-max normalized over the training split, so they live in
/// [0, 1] with a mean near the midpoint. Together with zero head weights this
/// starts every model as the exact midpoint predictor: the first optimizer
/// steps see pure target-correlation gradients at the head instead of a huge
/// mean-error transient. A transient would do lasting damage two ways — it
/// inflates Adam's second moments for ~1/(1−β₂) steps, and it rewards
/// collapsing the prediction spread, which teaches the encoder to ignore its
/// inputs. Zero head weights also freeze the encoder (its gradient flows
/// through the head) until the head has found signal in the initial random
/// representation, after which encoder updates refine a fit rather than
/// fight one.
pub const HEAD_BIAS_INIT: f64 = 0.5;

enum InitKind {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
    T2vOmega,
    Constant(f64),
}

/// Registration-ordered parameter layout; the single source of truth for
/// names, shapes and initialization.
fn layout(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, InitKind)> {
    let d = cfg.d_model;
    let hd = cfg.concat_width();
    let f = cfg.d_ff;
    let kp1 = cfg.t2v_k + 1;
    let glorot = |fan_in, fan_out| InitKind::Glorot { fan_in, fan_out };
    let mut out = vec![
        ("t2v.omega".to_string(), vec![1, kp1], InitKind::T2vOmega),
        ("t2v.phi".to_string(), vec![1, kp1], InitKind::Zeros),
        ("input.w".to_string(), vec![cfg.input_width(), d], glorot(cfg.input_width(), d)),
        ("input.b".to_string(), vec![1, d], InitKind::Zeros),
    ];
    for e in 0..cfg.n_encoders {
        for proj in ["q", "k", "v"] {
            out.push((format!("enc{e}.{proj}.w"), vec![d, hd], glorot(d, hd)));
            out.push((format!("enc{e}.{proj}.b"), vec![1, hd], InitKind::Zeros));
        }
        out.push((format!("enc{e}.attn_out.w"), vec![hd, d], glorot(hd, d)));
        out.push((format!("enc{e}.attn_out.b"), vec![1, d], InitKind::Zeros));
        out.push((format!("enc{e}.ln1.gain"), vec![1, d], InitKind::Ones));
        out.push((format!("enc{e}.ln1.bias"), vec![1, d], InitKind::Zeros));
        out.push((format!("enc{e}.ff1.w"), vec![d, f], glorot(d, f)));
        out.push((format!("enc{e}.ff1.b"), vec![1, f], InitKind::Zeros));
        out.push((format!("enc{e}.ff2.w"), vec![f, d], glorot(f, d)));
        out.push((format!("enc{e}.ff2.b"), vec![1, d], InitKind::Zeros));
        out.push((format!("enc{e}.ln2.gain"), vec![1, d], InitKind::Ones));
        out.push((format!("enc{e}.ln2.bias"), vec![1, d], InitKind::Zeros));
    }
    // Zero head weights + midpoint bias: see HEAD_BIAS_INIT.
    out.push(("head.w".to_string(), vec![d, 1], InitKind::Zeros));
    out.push(("head.b".to_string(), vec![1, 1], InitKind::Constant(HEAD_BIAS_INIT)));
    out
}

/// Seeded initialization: weight matrices uniform in ±√(6/(fan_in+fan_out)),
/// Time2Vec ω uniform in [0, 1) — with the linear channel scaled by
/// [`T2V_LINEAR_OMEGA_SCALE`] for calendar-scale day indices — biases and φ
/// zero, layer-norm gains one. The output head starts at zero weights with a
/// [`HEAD_BIAS_INIT`] bias, making the untrained model the midpoint
/// predictor.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamStore, NumericsError> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape, kind) in layout(cfg) {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = match kind {
            InitKind::Zeros => vec![0.0; n],
            InitKind::Ones => vec![1.0; n],
            InitKind::Constant(c) => vec![c; n],
            InitKind::T2vOmega => {
                let mut data: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                data[0] *= T2V_LINEAR_OMEGA_SCALE;
                data
            }
            InitKind::Glorot { fan_in, fan_out } => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                (0..n).map(|_| rng.gen::<f64>() * 2.0 * limit - limit).collect()
            }
        };
        store.register(&name, Tensor::new(shape, data)?);
    }
    Ok(store)
}

/// All-zero parameter store with the layout of `cfg`; used when loading
/// checkpoints.
pub fn empty_params(cfg: &ModelConfig) -> Result<ParamStore, NumericsError> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    for (name, shape, _) in layout(cfg) {
        store.register(&name, Tensor::zeros(&shape));
    }
    Ok(store)
}

fn tau_tensor(time_index: &[i64]) -> Tensor {
    Tensor::new(vec![time_index.len(), 1], time_index.iter().map(|&t| t as f64).collect())
        .expect("non-empty time index")
}

fn t2v_nodes(
    t: &mut Tape,
    tau: NodeId,
    omega: NodeId,
    phi: NodeId,
    k: usize,
) -> Result<NodeId, NumericsError> {
    let prod = t.matmul(tau, omega)?;
    let raw = t.add_row(prod, phi)?;
    let linear = t.slice_cols(raw, 0, 1)?;
    let periodic = t.slice_cols(raw, 1, k)?;
    let periodic = t.sin(periodic);
    t.concat_cols(&[linear, periodic])
}

fn attention_nodes(
    t: &mut Tape,
    q: NodeId,
    k: NodeId,
    v: NodeId,
) -> Result<(NodeId, NodeId), NumericsError> {
    let d_head = t.value(q).shape()[1];
    let kt = t.transpose(k)?;
    let scores = t.matmul(q, kt)?;
    let scaled = t.scale(scores, 1.0 / (d_head as f64).sqrt());
    let weights = t.softmax(scaled)?;
    let out = t.matmul(weights, v)?;
    Ok((out, weights))
}

fn dense(t: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
    let y = t.matmul(x, w)?;
    t.add_row(y, b)
}

struct MhsaNodes {
    qw: NodeId,
    qb: NodeId,
    kw: NodeId,
    kb: NodeId,
    vw: NodeId,
    vb: NodeId,
    ow: NodeId,
    ob: NodeId,
}

fn mhsa_nodes(
    t: &mut Tape,
    x: NodeId,
    m: &MhsaNodes,
    n_heads: usize,
    d_head: usize,
) -> Result<NodeId, NumericsError> {
    let q_all = dense(t, x, m.qw, m.qb)?;
    let k_all = dense(t, x, m.kw, m.kb)?;
    let v_all = dense(t, x, m.vw, m.vb)?;
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let q = t.slice_cols(q_all, h * d_head, d_head)?;
        let k = t.slice_cols(k_all, h * d_head, d_head)?;
        let v = t.slice_cols(v_all, h * d_head, d_head)?;
        let (out, _) = attention_nodes(t, q, k, v)?;
        heads.push(out);
    }
    let cat = t.concat_cols(&heads)?;
    dense(t, cat, m.ow, m.ob)
}

struct EncNodes {
    mhsa: MhsaNodes,
    ln1_gain: NodeId,
    ln1_bias: NodeId,
    ff1_w: NodeId,
    ff1_b: NodeId,
    ff2_w: NodeId,
    ff2_b: NodeId,
    ln2_gain: NodeId,
    ln2_bias: NodeId,
}

fn encoder_nodes(
    t: &mut Tape,
    x: NodeId,
    e: &EncNodes,
    n_heads: usize,
    d_head: usize,
) -> Result<NodeId, NumericsError> {
    let attn = mhsa_nodes(t, x, &e.mhsa, n_heads, d_head)?;
    let res1 = t.add(x, attn)?;
    let y1 = t.layer_norm(res1, e.ln1_gain, e.ln1_bias, LN_EPS)?;
    let hidden = dense(t, y1, e.ff1_w, e.ff1_b)?;
    let hidden = t.relu(hidden);
    let ff = dense(t, hidden, e.ff2_w, e.ff2_b)?;
    let res2 = t.add(y1, ff)?;
    t.layer_norm(res2, e.ln2_gain, e.ln2_bias, LN_EPS)
}

struct NetNodes {
    omega: NodeId,
    phi: NodeId,
    input_w: NodeId,
    input_b: NodeId,
    encoders: Vec<EncNodes>,
    head_w: NodeId,
    head_b: NodeId,
}

fn declare_params(t: &mut Tape, cfg: &ModelConfig) -> Result<NetNodes, NumericsError> {
    let mut enc = Vec::with_capacity(cfg.n_encoders);
    let omega = t.param_named("t2v.omega")?;
    let phi = t.param_named("t2v.phi")?;
    let input_w = t.param_named("input.w")?;
    let input_b = t.param_named("input.b")?;
    for e in 0..cfg.n_encoders {
        let p = |t: &mut Tape, s: &str| t.param_named(&format!("enc{e}.{s}"));
        enc.push(EncNodes {
            mhsa: MhsaNodes {
                qw: p(t, "q.w")?,
                qb: p(t, "q.b")?,
                kw: p(t, "k.w")?,
                kb: p(t, "k.b")?,
                vw: p(t, "v.w")?,
                vb: p(t, "v.b")?,
                ow: p(t, "attn_out.w")?,
                ob: p(t, "attn_out.b")?,
            },
            ln1_gain: p(t, "ln1.gain")?,
            ln1_bias: p(t, "ln1.bias")?,
            ff1_w: p(t, "ff1.w")?,
            ff1_b: p(t, "ff1.b")?,
            ff2_w: p(t, "ff2.w")?,
            ff2_b: p(t, "ff2.b")?,
            ln2_gain: p(t, "ln2.gain")?,
            ln2_bias: p(t, "ln2.bias")?,
        });
    }
    let head_w = t.param_named("head.w")?;
    let head_b = t.param_named("head.b")?;
    Ok(NetNodes { omega, phi, input_w, input_b, encoders: enc, head_w, head_b })
}

fn check_window(cfg: &ModelConfig, features: &Tensor, time_index: &[i64]) -> Result<(), NumericsError> {
    if features.shape() != [cfg.seq_len, cfg.n_features] {
        return Err(NumericsError::InvalidArgument(format!(
            "window shape {:?} does not match configured {}×{}",
            features.shape(),
            cfg.seq_len,
            cfg.n_features
        )));
    }
    if time_index.len() != cfg.seq_len {
        return Err(NumericsError::InvalidArgument(format!(
            "time index length {} does not match seq_len {}",
            time_index.len(),
            cfg.seq_len
        )));
    }
    Ok(())
}

/// Record the full forward pass for one window; returns the 1×1 prediction
/// node.
pub fn build_prediction(
    t: &mut Tape,
    cfg: &ModelConfig,
    features: &Tensor,
    time_index: &[i64],
) -> Result<NodeId, NumericsError> {
    check_window(cfg, features, time_index)?;
    let net = declare_params(t, cfg)?;
    let feats = t.input(features.clone());
    let tau = t.input(tau_tensor(time_index));
    let t2v = t2v_nodes(t, tau, net.omega, net.phi, cfg.t2v_k)?;
    let joined = t.concat_cols(&[feats, t2v])?;
    let mut x = dense(t, joined, net.input_w, net.input_b)?;
    for e in &net.encoders {
        x = encoder_nodes(t, x, e, cfg.n_heads, cfg.d_head)?;
    }
    let pooled = t.mean_rows(x)?;
    dense(t, pooled, net.head_w, net.head_b)
}

/// Forward plus squared-error loss against a scalar target.
pub fn build_loss(
    t: &mut Tape,
    cfg: &ModelConfig,
    features: &Tensor,
    time_index: &[i64],
    target: f64,
) -> Result<NodeId, NumericsError> {
    let pred = build_prediction(t, cfg, features, time_index)?;
    let tgt = t.input(Tensor::new(vec![1, 1], vec![target])?);
    t.mse(pred, tgt)
}

/// One training example: a feature window, its global day indices and the
/// next-step target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub features: &'a Tensor,
    pub time_index: &'a [i64],
    pub target: f64,
}

/// Mean loss and mean flat gradient over a batch.
///
/// Samples are processed in [`GRAD_CHUNK`]-sized chunks; each chunk
/// accumulates sequentially and chunk sums combine in chunk order, making the
/// result independent of thread count.
pub fn batch_gradient(
    params: &ParamStore,
    cfg: &ModelConfig,
    samples: &[Sample],
) -> Result<(f64, Vec<f64>), NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::InvalidArgument("empty gradient batch".into()));
    }
    let total = params.param_count();
    let chunks = parallel::map_chunks(samples, GRAD_CHUNK, |chunk| {
        let mut grad_sum = vec![0.0; total];
        let mut loss_sum = 0.0;
        for s in chunk {
            let mut tape = Tape::new(params);
            let loss = build_loss(&mut tape, cfg, s.features, s.time_index, s.target)?;
            loss_sum += tape.value(loss).item()?;
            let grads: Gradients = tape.backward(loss)?;
            grads.add_into_flat(params, &mut grad_sum);
        }
        Ok::<(f64, Vec<f64>), NumericsError>((loss_sum, grad_sum))
    });
    let mut grad = vec![0.0; total];
    let mut loss = 0.0;
    for chunk in chunks {
        let (l, g) = chunk?;
        loss += l;
        for (d, s) in grad.iter_mut().zip(&g) {
            *d += s;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    loss *= inv;
    for g in &mut grad {
        *g *= inv;
    }
    Ok((loss, grad))
}

/// Mean squared error between prediction and target vectors (the training
/// objective).
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<f64, NumericsError> {
    if predictions.is_empty() {
        return Err(NumericsError::InvalidArgument("mse_loss over empty input".into()));
    }
    if predictions.len() != targets.len() {
        return Err(NumericsError::InvalidArgument(format!(
            "mse_loss length mismatch: {} vs {}",
            predictions.len(),
            targets.len()
        )));
    }
    let n = predictions.len() as f64;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// Time2Vec embedding of integer time indices: channel 0 is `ω₀τ+φ₀`,
/// channels `1..=k` are `sin(ω_iτ+φ_i)`.
pub fn time2vec(time_index: &[i64], omega: &Tensor, phi: &Tensor) -> Result<Tensor, NumericsError> {
    if time_index.is_empty() {
        return Err(NumericsError::InvalidArgument("empty time index".into()));
    }
    let kp1 = omega.len();
    if omega.shape() != [1, kp1] || phi.shape() != [1, kp1] || kp1 < 2 {
        return Err(NumericsError::InvalidArgument(format!(
            "time2vec weights must be 1×(k+1) with k ≥ 1, got ω {:?} / φ {:?}",
            omega.shape(),
            phi.shape()
        )));
    }
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let tau = t.input(tau_tensor(time_index));
    let om = t.input(omega.clone());
    let ph = t.input(phi.clone());
    let out = t2v_nodes(&mut t, tau, om, ph, kp1 - 1)?;
    Ok(t.value(out).clone())
}

/// Scaled dot-product attention `softmax(QKᵀ/√d_head)·V` for one head.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor, NumericsError> {
    Ok(attention_with_weights(q, k, v)?.0)
}

/// Attention output together with the L×L weight matrix.
pub fn attention_with_weights(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
) -> Result<(Tensor, Tensor), NumericsError> {
    for (name, t) in [("k", k), ("v", v)] {
        if t.shape() != q.shape() {
            return Err(NumericsError::ShapeMismatch {
                op: if name == "k" { "attention q/k" } else { "attention q/v" },
                lhs: q.shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
    }
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let qn = t.input(q.clone());
    let kn = t.input(k.clone());
    let vn = t.input(v.clone());
    let (out, weights) = attention_nodes(&mut t, qn, kn, vn)?;
    Ok((t.value(out).clone(), t.value(weights).clone()))
}

/// Projection weights for one multi-head self-attention layer.
#[derive(Debug, Clone, Copy)]
pub struct MhsaWeights<'a> {
    pub qw: &'a Tensor,
    pub qb: &'a Tensor,
    pub kw: &'a Tensor,
    pub kb: &'a Tensor,
    pub vw: &'a Tensor,
    pub vb: &'a Tensor,
    pub ow: &'a Tensor,
    pub ob: &'a Tensor,
}

/// Multi-head self-attention: per-head Q/K/V projections, concat of the head
/// outputs, then a linear projection back to the model width.
pub fn mhsa(
    x: &Tensor,
    w: &MhsaWeights,
    n_heads: usize,
    d_head: usize,
) -> Result<Tensor, NumericsError> {
    if n_heads == 0 || d_head == 0 {
        return Err(NumericsError::InvalidArgument("mhsa needs n_heads, d_head ≥ 1".into()));
    }
    let store = ParamStore::new();
    let mut t = Tape::new(&store);
    let xn = t.input(x.clone());
    let nodes = MhsaNodes {
        qw: t.input(w.qw.clone()),
        qb: t.input(w.qb.clone()),
        kw: t.input(w.kw.clone()),
        kb: t.input(w.kb.clone()),
        vw: t.input(w.vw.clone()),
        vb: t.input(w.vb.clone()),
        ow: t.input(w.ow.clone()),
        ob: t.input(w.ob.clone()),
    };
    let out = mhsa_nodes(&mut t, xn, &nodes, n_heads, d_head)?;
    Ok(t.value(out).clone())
}

#[derive(Debug, Clone)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl ForecastModel {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, NumericsError> {
        let params = init_params(&config, seed)?;
        Ok(Self { config, params })
    }

    /// Model with the layout of `config` and all parameters zero.
    pub fn zeroed(config: ModelConfig) -> Result<Self, NumericsError> {
        let params = empty_params(&config)?;
        Ok(Self { config, params })
    }

    pub fn predict(&self, features: &Tensor, time_index: &[i64]) -> Result<f64, NumericsError> {
        let mut tape = Tape::new(&self.params);
        let out = build_prediction(&mut tape, &self.config, features, time_index)?;
        tape.value(out).item()
    }

    /// Predictions for many windows; order matches the input order.
    pub fn predict_batch(&self, samples: &[Sample]) -> Result<Vec<f64>, NumericsError> {
        let results = parallel::map_items(samples, |s| self.predict(s.features, s.time_index));
        results.into_iter().collect()
    }

    /// Run one encoder block (by index) on an L×d_model input.
    pub fn encoder_block(&self, index: usize, x: &Tensor) -> Result<Tensor, NumericsError> {
        if index >= self.config.n_encoders {
            return Err(NumericsError::InvalidArgument(format!(
                "encoder index {index} out of range ({} blocks)",
                self.config.n_encoders
            )));
        }
        let mut t = Tape::new(&self.params);
        let net = declare_params(&mut t, &self.config)?;
        let xn = t.input(x.clone());
        let out = encoder_nodes(&mut t, xn, &net.encoders[index], self.config.n_heads, self.config.d_head)?;
        Ok(t.value(out).clone())
    }
}

pub const CHECKPOINT_FORMAT: &str = "fedseries-checkpoint-v1";

/// Sidecar metadata stored with the flat parameter vector of a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub config: ModelConfig,
    pub seed: u64,
    /// Human-readable origin, e.g. the strategy and round count that produced
    /// the parameters.
    pub provenance: String,
    pub params: ParamManifest,
}

/// Write `params.bin` (flat little-endian f64) and `checkpoint.json` into
/// `dir`.
pub fn save_checkpoint(
    dir: &Path,
    model: &ForecastModel,
    seed: u64,
    provenance: &str,
) -> Result<(), FedError> {
    std::fs::create_dir_all(dir).map_err(|e| FedError::Io { path: dir.to_path_buf(), source: e })?;
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        config: model.config.clone(),
        seed,
        provenance: provenance.to_string(),
        params: ParamManifest {
            format: PARAM_FORMAT.to_string(),
            total_len: model.params.param_count(),
            entries: model.params.manifest_entries(),
        },
    };
    let bin = dir.join("params.bin");
    std::fs::write(&bin, model.params.to_le_bytes())
        .map_err(|e| FedError::Io { path: bin, source: e })?;
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| FedError::Checkpoint(format!("manifest serialization: {e}")))?;
    let path = dir.join("checkpoint.json");
    std::fs::write(&path, json + "\n").map_err(|e| FedError::Io { path, source: e })
}

pub fn load_checkpoint(dir: &Path) -> Result<(ForecastModel, CheckpointManifest), FedError> {
    let manifest_path = dir.join("checkpoint.json");
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| FedError::Io { path: manifest_path.clone(), source: e })?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| FedError::Checkpoint(format!("{}: {e}", manifest_path.display())))?;
    if manifest.format != CHECKPOINT_FORMAT {
        return Err(FedError::Checkpoint(format!(
            "unsupported checkpoint format {:?}",
            manifest.format
        )));
    }
    let mut model = ForecastModel::zeroed(manifest.config.clone())?;
    let expected = ParamManifest {
        format: PARAM_FORMAT.to_string(),
        total_len: model.params.param_count(),
        entries: model.params.manifest_entries(),
    };
    if manifest.params != expected {
        return Err(FedError::Checkpoint(
            "parameter table does not match the checkpoint config".into(),
        ));
    }
    let bin_path = dir.join("params.bin");
    let bytes =
        std::fs::read(&bin_path).map_err(|e| FedError::Io { path: bin_path, source: e })?;
    model.params.fill_from_le_bytes(&bytes)?;
    Ok((model, manifest))
}
