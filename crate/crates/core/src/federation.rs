//! In-process federated training: SOLO, FedAvg and FedAtt.
//!
//! Each client owns a private dataset, a parameter store and an optimizer.
//! A round broadcasts the global parameters, trains every client locally,
//! then aggregates. Only parameter stores, sample counts and validation
//! losses cross the client boundary; windows never leave their client.
//!
//! Clients train concurrently; results are independent of worker scheduling
//! because every client derives its own shuffle stream from
//! (seed, client id, cumulative epoch) and aggregation follows list order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::FedError;
use crate::ingest::{Split, WindowedDataset};
use crate::model::{batch_gradient, build_loss, ModelConfig, Sample};
use crate::optimizer::AdamState;
use crate::parallel;
use crate::params::ParamStore;
use crate::tape::Tape;

/// Training scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Solo,
    FedAvg,
    FedAtt,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Solo, Strategy::FedAvg, Strategy::FedAtt];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Solo => "solo",
            Strategy::FedAvg => "fedavg",
            Strategy::FedAtt => "fedatt",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = FedError;

    fn from_str(s: &str) -> Result<Self, FedError> {
        match s.to_ascii_lowercase().as_str() {
            "solo" => Ok(Strategy::Solo),
            "fedavg" => Ok(Strategy::FedAvg),
            "fedatt" => Ok(Strategy::FedAtt),
            other => Err(FedError::InvalidConfig(format!(
                "unknown strategy {other:?}; expected solo, fedavg or fedatt"
            ))),
        }
    }
}

/// Federated training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FedConfig {
    pub strategy: Strategy,
    pub rounds: usize,
    pub local_epochs: usize,
    pub solo_epochs: usize,
    pub batch_size: usize,
    /// FedAtt global step size.
    pub epsilon: f64,
    pub learning_rate: f64,
    pub seed: u64,
    /// Softmax FedAtt scores as negated distances instead of raw ones.
    pub negate_scores: bool,
    /// Clear Adam moments at every broadcast instead of letting each client
    /// keep warm state across rounds.
    pub reset_optimizer_each_round: bool,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::FedAtt,
            rounds: 10,
            local_epochs: 1,
            solo_epochs: 10,
            batch_size: 32,
            epsilon: 1.0,
            learning_rate: 1e-3,
            seed: 0,
            negate_scores: false,
            reset_optimizer_each_round: false,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<(), FedError> {
        if self.rounds == 0 {
            return Err(FedError::InvalidConfig("rounds must be ≥ 1".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 2.0) {
            return Err(FedError::InvalidConfig(format!(
                "epsilon must lie in (0, 2), got {}",
                self.epsilon
            )));
        }
        if self.batch_size == 0 {
            return Err(FedError::InvalidConfig("batch_size must be ≥ 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(FedError::InvalidConfig(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One enterprise's private training state.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub client_id: String,
    pub dataset: WindowedDataset,
    pub params: ParamStore,
    pub optimizer: AdamState,
    pub n_train: usize,
}

impl ClientState {
    /// Stand up a client around its private dataset. Parameters start at the
    /// shared seeded initialization, so every client (and the server) agrees
    /// on the starting point.
    pub fn new(
        client_id: impl Into<String>,
        dataset: WindowedDataset,
        cfg: &ModelConfig,
        fed: &FedConfig,
    ) -> Result<Self, FedError> {
        let client_id = client_id.into();
        let n_train = dataset.split_counts()[0];
        if n_train == 0 {
            return Err(FedError::EmptyTrainingSplit);
        }
        let params = crate::model::init_params(cfg, fed.seed)?;
        let optimizer = AdamState::with_lr(params.param_count(), fed.learning_rate);
        Ok(Self { client_id, dataset, params, optimizer, n_train })
    }
}

/// Everything a client is allowed to send to the server. Raw windows stay
/// behind; this type is the privacy boundary.
#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: String,
    pub params: ParamStore,
    pub n_train: usize,
    pub val_loss: Option<f64>,
}

fn check_layout(a: &ParamStore, b: &ParamStore) -> Result<(), FedError> {
    if a.same_layout(b) {
        Ok(())
    } else {
        Err(FedError::InvalidConfig(
            "client parameter stores disagree on shapes or names".into(),
        ))
    }
}

/// Shuffle seed for one client's epoch, independent of worker scheduling.
fn shuffle_seed(global_seed: u64, client_id: &str, epoch: usize) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(client_id.as_bytes());
    hasher.update((epoch as u64).to_le_bytes());
    hasher.finalize().into()
}

/// Train one client for `epochs` epochs of seeded-shuffle minibatches.
///
/// `global` is assigned first when present (broadcast); `epoch_base` is the
/// client's cumulative epoch count, which keeps shuffle streams aligned
/// between a continuous run and the same epochs split across rounds.
pub fn local_train(
    client: &mut ClientState,
    cfg: &ModelConfig,
    fed: &FedConfig,
    global: Option<&ParamStore>,
    epochs: usize,
    epoch_base: usize,
) -> Result<(), FedError> {
    if let Some(g) = global {
        client.params.assign_from(g)?;
        if fed.reset_optimizer_each_round {
            client.optimizer.reset();
        }
    }
    let train: Vec<usize> = (0..client.dataset.windows.len())
        .filter(|&i| client.dataset.windows[i].split == Split::Train)
        .collect();
    if train.is_empty() {
        return Err(FedError::EmptyTrainingSplit);
    }

    for e in 0..epochs {
        let epoch = epoch_base + e;
        // Each epoch's order is a pure function of (seed, client, epoch), so
        // the same cumulative epoch shuffles identically whether it runs in a
        // continuous call or split across federated rounds.
        let mut order = train.clone();
        let mut rng = ChaCha20Rng::from_seed(shuffle_seed(fed.seed, &client.client_id, epoch));
        order.shuffle(&mut rng);
        for (batch_no, batch) in order.chunks(fed.batch_size).enumerate() {
            let samples: Vec<Sample> = batch
                .iter()
                .map(|&i| {
                    let w = &client.dataset.windows[i];
                    Sample { features: &w.features, time_index: &w.time_index, target: w.target }
                })
                .collect();
            let (loss, grad) = batch_gradient(&client.params, cfg, &samples)?;
            if !loss.is_finite() {
                return Err(FedError::Diverged { epoch, batch: batch_no });
            }
            let mut flat = client.params.flatten();
            client.optimizer.step_flat(&mut flat, &grad)?;
            client.params.unflatten(&flat)?;
        }
    }
    Ok(())
}

/// Mean squared error of the forward pass over one split; `None` when the
/// split holds no windows.
pub fn split_loss(
    params: &ParamStore,
    cfg: &ModelConfig,
    dataset: &WindowedDataset,
    split: Split,
) -> Result<Option<f64>, FedError> {
    let windows: Vec<_> = dataset.windows_of(split).collect();
    if windows.is_empty() {
        return Ok(None);
    }
    let losses = parallel::map_chunks(&windows, crate::model::GRAD_CHUNK, |chunk| {
        let mut sum = 0.0;
        for w in chunk {
            let mut tape = Tape::new(params);
            let loss = build_loss(&mut tape, cfg, &w.features, &w.time_index, w.target)?;
            sum += tape.value(loss).item()?;
        }
        Ok::<f64, crate::error::NumericsError>(sum)
    });
    let mut total = 0.0;
    for l in losses {
        total += l?;
    }
    Ok(Some(total / windows.len() as f64))
}

/// Sample-count weighted mean of client parameters.
pub fn fedavg_aggregate(updates: &[ClientUpdate]) -> Result<ParamStore, FedError> {
    let first = updates.first().ok_or(FedError::NoClients)?;
    let total: usize = updates.iter().map(|u| u.n_train).sum();
    if total == 0 {
        return Err(FedError::EmptyTrainingSplit);
    }
    let mut flat = vec![0.0; first.params.param_count()];
    for u in updates {
        check_layout(&u.params, &first.params)?;
        let weight = u.n_train as f64 / total as f64;
        for (acc, v) in flat.iter_mut().zip(u.params.flatten()) {
            *acc += weight * v;
        }
    }
    let mut out = first.params.clone();
    out.unflatten(&flat)?;
    Ok(out)
}

/// Per-layer Euclidean distances between the global parameters and each
/// client's, indexed `[layer][client]`.
pub fn fedatt_scores(
    global: &ParamStore,
    clients: &[&ParamStore],
) -> Result<Vec<Vec<f64>>, FedError> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    let mut scores = vec![Vec::with_capacity(clients.len()); global.len()];
    for c in clients {
        check_layout(c, global)?;
        for (layer, row) in scores.iter_mut().enumerate() {
            let g = global.value_by_index(layer);
            let v = c.value_by_index(layer);
            let dist: f64 = g
                .data()
                .iter()
                .zip(v.data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            row.push(dist);
        }
    }
    Ok(scores)
}

/// Softmax the per-layer scores over clients. Raw distances by default, so
/// farther clients pull harder; `negate` flips the convention.
pub fn fedatt_attention(scores: &[Vec<f64>], negate: bool) -> Vec<Vec<f64>> {
    scores
        .iter()
        .map(|row| {
            let signed: Vec<f64> =
                row.iter().map(|&s| if negate { -s } else { s }).collect();
            let max = signed.iter().cloned().fold(f64::MIN, f64::max);
            let exps: Vec<f64> = signed.iter().map(|s| (s - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            exps.into_iter().map(|e| e / sum).collect()
        })
        .collect()
}

/// Attention-weighted global step: per layer ℓ the new global parameters are
/// `(1 − ε)·gℓ + ε·Σ_k α_kℓ·c_kℓ`, the convex rearrangement of
/// `gℓ − ε·Σ_k α_kℓ (gℓ − c_kℓ)`; at ε = 1 a lone client replaces the global
/// layer exactly.
pub fn fedatt_update(
    global: &ParamStore,
    clients: &[&ParamStore],
    weights: &[Vec<f64>],
    epsilon: f64,
) -> Result<ParamStore, FedError> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    let mut out = global.clone();
    for layer in 0..global.len() {
        let g = global.value_by_index(layer);
        let mut new = vec![0.0; g.data().len()];
        for (k, c) in clients.iter().enumerate() {
            let alpha = weights[layer][k];
            for (acc, v) in new.iter_mut().zip(c.value_by_index(layer).data()) {
                *acc += alpha * v;
            }
        }
        let retain = 1.0 - epsilon;
        for (acc, gv) in new.iter_mut().zip(g.data()) {
            *acc = retain * gv + epsilon * *acc;
        }
        out.value_by_index_mut(layer).data_mut().copy_from_slice(&new);
    }
    Ok(out)
}

/// Aggregation weights recorded for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoundWeights {
    SampleCount { clients: Vec<String>, weights: Vec<f64> },
    PerLayerAttention {
        clients: Vec<String>,
        layers: Vec<String>,
        /// Indexed `[layer][client]`; every row sums to 1.
        weights: Vec<Vec<f64>>,
        negated: bool,
    },
}

/// One round of the aggregation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub strategy: Strategy,
    pub weights: RoundWeights,
    pub global_norm: f64,
    /// Per-client validation loss after local training, `None` where a client
    /// has no validation windows.
    pub val_losses: Vec<Option<f64>>,
}

fn train_round(
    clients: &mut [ClientState],
    cfg: &ModelConfig,
    fed: &FedConfig,
    global: Option<&ParamStore>,
    epochs: usize,
    epoch_base: usize,
) -> Result<Vec<ClientUpdate>, FedError> {
    let outcomes = parallel::map_items_mut(clients, |client| {
        local_train(client, cfg, fed, global, epochs, epoch_base)
            .and_then(|()| split_loss(&client.params, cfg, &client.dataset, Split::Validation))
            .map(|val_loss| ClientUpdate {
                client_id: client.client_id.clone(),
                params: client.params.clone(),
                n_train: client.n_train,
                val_loss,
            })
            .map_err(|e| (client.client_id.clone(), e))
    });
    outcomes
        .into_iter()
        .map(|r| r.map_err(|(client, e)| FedError::Client { client, source: Box::new(e) }))
        .collect()
}

/// Run `fed.rounds` rounds of broadcast → local train → aggregate, returning
/// the final global parameters and the per-round trace.
pub fn run_federation(
    clients: &mut [ClientState],
    cfg: &ModelConfig,
    fed: &FedConfig,
) -> Result<(ParamStore, Vec<RoundTrace>), FedError> {
    fed.validate()?;
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    for c in clients.iter() {
        check_layout(&c.params, &clients[0].params).map_err(|e| FedError::Client {
            client: c.client_id.clone(),
            source: Box::new(e),
        })?;
    }

    let mut global = crate::model::init_params(cfg, fed.seed)?;
    let mut trace = Vec::with_capacity(fed.rounds);
    let client_ids: Vec<String> = clients.iter().map(|c| c.client_id.clone()).collect();

    for round in 0..fed.rounds {
        let epoch_base = round * fed.local_epochs;
        let updates =
            train_round(clients, cfg, fed, Some(&global), fed.local_epochs, epoch_base)?;

        let weights = match fed.strategy {
            Strategy::FedAvg | Strategy::Solo => {
                let total: usize = updates.iter().map(|u| u.n_train).sum();
                global = fedavg_aggregate(&updates)?;
                RoundWeights::SampleCount {
                    clients: client_ids.clone(),
                    weights: updates
                        .iter()
                        .map(|u| u.n_train as f64 / total as f64)
                        .collect(),
                }
            }
            Strategy::FedAtt => {
                let stores: Vec<&ParamStore> = updates.iter().map(|u| &u.params).collect();
                let scores = fedatt_scores(&global, &stores)?;
                let attention = fedatt_attention(&scores, fed.negate_scores);
                global = fedatt_update(&global, &stores, &attention, fed.epsilon)?;
                RoundWeights::PerLayerAttention {
                    clients: client_ids.clone(),
                    layers: global.entries().iter().map(|e| e.name.clone()).collect(),
                    weights: attention,
                    negated: fed.negate_scores,
                }
            }
        };

        trace.push(RoundTrace {
            round,
            strategy: fed.strategy,
            weights,
            global_norm: global.norm(),
            val_losses: updates.iter().map(|u| u.val_loss).collect(),
        });
    }
    Ok((global, trace))
}

/// Train every client independently for `fed.solo_epochs`, no communication.
pub fn run_solo(
    clients: &mut [ClientState],
    cfg: &ModelConfig,
    fed: &FedConfig,
) -> Result<Vec<ClientUpdate>, FedError> {
    fed.validate()?;
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    train_round(clients, cfg, fed, None, fed.solo_epochs, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{build_dataset, PipelineConfig};
    use crate::synth::{noisy_sine_series, SineSpec};

    fn tiny_fed() -> (ModelConfig, FedConfig) {
        let cfg = ModelConfig::tiny();
        let fed = FedConfig {
            strategy: Strategy::FedAvg,
            rounds: 2,
            batch_size: 8,
            seed: 5,
            ..FedConfig::default()
        };
        (cfg, fed)
    }

    fn tiny_client(name: &str, seed: u64, cfg: &ModelConfig, fed: &FedConfig) -> ClientState {
        let spec = SineSpec { n: 70, seed, ..SineSpec::default() };
        let pipeline = PipelineConfig { seq_len: cfg.seq_len, ..PipelineConfig::default() };
        let ds = build_dataset(&noisy_sine_series(&spec), &pipeline).unwrap();
        ClientState::new(name, ds, cfg, fed).unwrap()
    }

    #[test]
    fn config_validation_bounds() {
        let ok = FedConfig::default();
        assert!(ok.validate().is_ok());
        assert!(FedConfig { rounds: 0, ..ok.clone() }.validate().is_err());
        assert!(FedConfig { epsilon: 0.0, ..ok.clone() }.validate().is_err());
        assert!(FedConfig { epsilon: 2.0, ..ok.clone() }.validate().is_err());
        assert!(FedConfig { batch_size: 0, ..ok.clone() }.validate().is_err());
        assert!(FedConfig { learning_rate: 0.0, ..ok }.validate().is_err());
    }

    #[test]
    fn strategy_parses_case_insensitively() {
        assert_eq!("FedAtt".parse::<Strategy>().unwrap(), Strategy::FedAtt);
        assert_eq!("solo".parse::<Strategy>().unwrap(), Strategy::Solo);
        assert!("sgd".parse::<Strategy>().is_err());
    }

    #[test]
    fn zero_epochs_keeps_broadcast_params() {
        let (cfg, fed) = tiny_fed();
        let mut client = tiny_client("a", 1, &cfg, &fed);
        let global = crate::model::init_params(&cfg, 999).unwrap();
        local_train(&mut client, &cfg, &fed, Some(&global), 0, 0).unwrap();
        assert_eq!(client.params.flatten(), global.flatten());
    }

    #[test]
    fn batch_count_matches_arithmetic() {
        let (cfg, mut fed) = tiny_fed();
        fed.batch_size = 8;
        let mut client = tiny_client("a", 1, &cfg, &fed);
        // 70 rows → T = 60 → train 48 → 44 windows at L = 4 → 6 batches.
        assert_eq!(client.n_train, 44);
        let before = client.optimizer.t;
        local_train(&mut client, &cfg, &fed, None, 1, 0).unwrap();
        assert_eq!(client.optimizer.t - before, 6, "ceil(44/8) optimizer steps");
    }

    #[test]
    fn local_training_is_deterministic() {
        let (cfg, fed) = tiny_fed();
        let mut a = tiny_client("a", 1, &cfg, &fed);
        let mut b = tiny_client("a", 1, &cfg, &fed);
        local_train(&mut a, &cfg, &fed, None, 2, 0).unwrap();
        local_train(&mut b, &cfg, &fed, None, 2, 0).unwrap();
        assert_eq!(a.params.flatten(), b.params.flatten());
    }

    #[test]
    fn fedavg_hand_examples() {
        let (cfg, fed) = tiny_fed();
        let client = tiny_client("a", 1, &cfg, &fed);
        let update = |params: ParamStore, n| ClientUpdate {
            client_id: "x".into(),
            params,
            n_train: n,
            val_loss: None,
        };

        // Identical params → themselves.
        let same = fedavg_aggregate(&[
            update(client.params.clone(), 3),
            update(client.params.clone(), 9),
        ])
        .unwrap();
        assert_eq!(same.flatten(), client.params.flatten());

        // Equal counts, params 0 and 2 → 1; counts 1:3, params 0 and 4 → 3.
        let mut zeros = client.params.clone();
        let n = zeros.param_count();
        zeros.unflatten(&vec![0.0; n]).unwrap();
        let mut twos = zeros.clone();
        twos.unflatten(&vec![2.0; n]).unwrap();
        let mid = fedavg_aggregate(&[update(zeros.clone(), 5), update(twos, 5)]).unwrap();
        assert!(mid.flatten().iter().all(|&v| v == 1.0));

        let mut fours = zeros.clone();
        fours.unflatten(&vec![4.0; n]).unwrap();
        let weighted = fedavg_aggregate(&[update(zeros, 1), update(fours, 3)]).unwrap();
        assert!(weighted.flatten().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn fedatt_score_hand_examples() {
        let (cfg, fed) = tiny_fed();
        let client = tiny_client("a", 1, &cfg, &fed);
        let global = client.params.clone();

        let zero = fedatt_scores(&global, &[&client.params]).unwrap();
        assert!(zero.iter().all(|row| row.iter().all(|&s| s == 0.0)));

        // Global all zeros, client 3s and 4s in two known layers.
        let mut g = global.clone();
        let n = g.param_count();
        g.unflatten(&vec![0.0; n]).unwrap();
        let mut c = g.clone();
        let mut flat = vec![0.0; n];
        // First layer (t2v omega, 2 values in the tiny config) set to [3, 4].
        flat[0] = 3.0;
        flat[1] = 4.0;
        c.unflatten(&flat).unwrap();
        let scores = fedatt_scores(&g, &[&c]).unwrap();
        assert!((scores[0][0] - 5.0).abs() < 1e-15, "hand norm of [3,4]");
    }

    #[test]
    fn attention_normalizes_and_matches_hand_softmax() {
        let uniform = fedatt_attention(&[vec![0.7, 0.7, 0.7]], false);
        for w in &uniform[0] {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }

        let single = fedatt_attention(&[vec![4.2]], false);
        assert_eq!(single[0][0], 1.0);

        let pair = fedatt_attention(&[vec![0.0, 3f64.ln()]], false);
        assert!((pair[0][0] - 0.25).abs() < 1e-12);
        assert!((pair[0][1] - 0.75).abs() < 1e-12);

        let negated = fedatt_attention(&[vec![0.0, 3f64.ln()]], true);
        assert!((negated[0][0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn fedatt_update_hand_examples() {
        let (cfg, fed) = tiny_fed();
        let client = tiny_client("a", 1, &cfg, &fed);
        let global = client.params.clone();
        let layers = global.len();

        // All clients at global → fixed point.
        let w = fedatt_attention(&fedatt_scores(&global, &[&client.params]).unwrap(), false);
        let same = fedatt_update(&global, &[&client.params], &w, 0.7).unwrap();
        for (a, b) in same.flatten().iter().zip(global.flatten()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Lone client, ε = 1 → exact replacement.
        let mut other = global.clone();
        let n = other.param_count();
        other.unflatten(&(0..n).map(|i| 0.01 * i as f64 - 1.0).collect::<Vec<_>>()).unwrap();
        let ones = vec![vec![1.0]; layers];
        let replaced = fedatt_update(&global, &[&other], &ones, 1.0).unwrap();
        assert_eq!(replaced.flatten(), other.flatten());
    }

    #[test]
    fn single_client_federation_equals_local_training() {
        let (cfg, mut fed) = tiny_fed();
        fed.rounds = 3;
        fed.local_epochs = 2;
        let mut lone = vec![tiny_client("a", 1, &cfg, &fed)];
        let (global, trace) = run_federation(&mut lone, &cfg, &fed).unwrap();
        assert_eq!(trace.len(), 3);

        // The reference is one continuous run of the same cumulative epochs,
        // not per-round calls, so it catches any leak of round structure into
        // the shuffle stream.
        let mut reference = tiny_client("a", 1, &cfg, &fed);
        reference.params.assign_from(&crate::model::init_params(&cfg, fed.seed).unwrap()).unwrap();
        local_train(&mut reference, &cfg, &fed, None, 3 * fed.local_epochs, 0).unwrap();
        for (a, b) in global.flatten().iter().zip(reference.params.flatten()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn client_order_does_not_change_the_aggregate() {
        for strategy in [Strategy::FedAvg, Strategy::FedAtt] {
            let (cfg, mut fed) = tiny_fed();
            fed.strategy = strategy;
            fed.rounds = 2;
            let make = |order: [u64; 3]| {
                let mut clients: Vec<ClientState> = order
                    .iter()
                    .map(|&s| tiny_client(&format!("c{s}"), s, &cfg, &fed))
                    .collect();
                run_federation(&mut clients, &cfg, &fed).unwrap().0
            };
            let forward = make([1, 2, 3]);
            let reversed = make([3, 2, 1]);
            for (a, b) in forward.flatten().iter().zip(reversed.flatten()) {
                assert!((a - b).abs() <= 1e-12, "{strategy:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn trace_weights_are_normalized() {
        let (cfg, mut fed) = tiny_fed();
        fed.strategy = Strategy::FedAtt;
        fed.rounds = 2;
        let mut clients = vec![
            tiny_client("a", 1, &cfg, &fed),
            tiny_client("b", 2, &cfg, &fed),
            tiny_client("c", 3, &cfg, &fed),
        ];
        let (_, trace) = run_federation(&mut clients, &cfg, &fed).unwrap();
        assert_eq!(trace.len(), 2);
        for t in &trace {
            match &t.weights {
                RoundWeights::PerLayerAttention { weights, layers, clients, .. } => {
                    assert_eq!(clients.len(), 3);
                    assert_eq!(layers.len(), weights.len());
                    for row in weights {
                        let sum: f64 = row.iter().sum();
                        assert!((sum - 1.0).abs() < 1e-9);
                        assert!(row.iter().all(|&w| w >= 0.0));
                    }
                }
                other => panic!("expected attention weights, got {other:?}"),
            }
            assert!(t.val_losses.iter().all(|l| l.map_or(true, |v| v.is_finite())));
            assert!(t.global_norm.is_finite());
        }
    }

    #[test]
    fn solo_clients_are_isolated() {
        let (cfg, mut fed) = tiny_fed();
        fed.strategy = Strategy::Solo;
        fed.solo_epochs = 2;

        let mut pair = vec![tiny_client("a", 1, &cfg, &fed), tiny_client("b", 2, &cfg, &fed)];
        let updates = run_solo(&mut pair, &cfg, &fed).unwrap();

        let mut alone = vec![tiny_client("a", 1, &cfg, &fed)];
        let alone_updates = run_solo(&mut alone, &cfg, &fed).unwrap();
        assert_eq!(updates[0].params.flatten(), alone_updates[0].params.flatten());
        assert_ne!(updates[0].params.flatten(), updates[1].params.flatten());
    }

    #[test]
    fn failing_client_is_identified() {
        let (cfg, fed) = tiny_fed();
        let good = tiny_client("good", 1, &cfg, &fed);
        let mut bad = tiny_client("bad", 2, &cfg, &fed);
        for w in &mut bad.dataset.windows {
            w.split = Split::Test;
        }
        let mut clients = vec![good, bad];
        match run_federation(&mut clients, &cfg, &fed) {
            Err(FedError::Client { client, .. }) => assert_eq!(client, "bad"),
            other => panic!("expected client failure, got {other:?}"),
        }
    }
}
