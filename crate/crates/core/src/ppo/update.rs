//! Clipped-surrogate updates.

use rand::seq::SliceRandom;
use rand::Rng;

use super::{PpoError, Rollout, TrainConfig};
use crate::greedy::{policy_on_tape, PolicyItem, PolicyLayout};
use crate::mpn::{encode_on_tape, value_on_tape, GraphBatch, MpnConfig};
use crate::nn::{AdamConfig, NnError, ParamStore, Tape, Tensor, Var};
use crate::par::par_map;

/// Transitions per tape when computing minibatch gradients.
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_frac: f64,
    pub mean_ratio: f64,
    pub grad_norm: f64,
}

/// Loss terms of a chunk, each already divided by the minibatch size.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ChunkLoss {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clipped: usize,
    pub ratio_sum: f64,
}

/// Records the PPO loss of `indices` (a chunk of a minibatch of
/// `minibatch_len` transitions) on `tape`.
#[allow(clippy::too_many_arguments)]
pub fn chunk_loss_on_tape(
    tape: &mut Tape,
    store: &ParamStore,
    mpn: &MpnConfig,
    layout: &PolicyLayout,
    rollout: &Rollout,
    indices: &[usize],
    minibatch_len: usize,
    cfg: &TrainConfig,
) -> Result<(Var, ChunkLoss), NnError> {
    let graphs: Vec<_> = indices.iter().map(|&i| &rollout.transitions[i].state).collect();
    let batch = GraphBatch::new(&graphs)?;
    let emb = encode_on_tape(tape, store, mpn, &batch)?;
    let items: Vec<PolicyItem<'_>> = indices
        .iter()
        .enumerate()
        .map(|(k, &i)| PolicyItem {
            node_offset: batch.node_offsets[k],
            layout,
            tables: &rollout.transitions[i].action,
        })
        .collect();
    let (log_prob, entropy) = policy_on_tape(tape, emb, &items, cfg.tau)?;
    let values = value_on_tape(tape, store, mpn, &batch)?;

    let old = Tensor::vector(indices.iter().map(|&i| rollout.transitions[i].log_prob).collect());
    let adv = Tensor::vector(indices.iter().map(|&i| rollout.advantages[i]).collect());
    let ret = indices.iter().map(|&i| rollout.returns[i]).collect::<Vec<_>>();
    let ret = Tensor::matrix(indices.len(), 1, ret)?;
    let old = tape.leaf(old)?;
    let adv = tape.leaf(adv)?;
    let ret = tape.leaf(ret)?;

    let diff = tape.sub(log_prob, old)?;
    let ratio = tape.exp(diff)?;
    let s1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)?;
    let s2 = tape.mul(clipped, adv)?;
    let surrogate = tape.minimum(s1, s2)?;
    let surrogate = tape.sum(surrogate)?;
    let m = minibatch_len as f64;
    let policy = tape.scale(surrogate, -1.0 / m)?;

    let err = tape.sub(values, ret)?;
    let sq = tape.square(err)?;
    let sq = tape.sum(sq)?;
    let value = tape.scale(sq, cfg.value_coef / m)?;

    let ent = tape.sum(entropy)?;
    let ent_term = tape.scale(ent, -cfg.entropy_coef / m)?;

    let pv = tape.add(policy, value)?;
    let total = tape.add(pv, ent_term)?;

    let ratios = tape.value(ratio).data();
    let stats = ChunkLoss {
        total: tape.value(total).item(),
        policy: tape.value(policy).item(),
        value: tape.value(sq).item() / m,
        entropy: tape.value(ent).item() / m,
        clipped: ratios.iter().filter(|r| (*r - 1.0).abs() > cfg.clip).count(),
        ratio_sum: ratios.iter().sum(),
    };
    Ok((total, stats))
}

/// Loss and gradients of one minibatch; gradients are accumulated into
/// `store` in chunk order.
pub fn minibatch_gradients(
    store: &mut ParamStore,
    mpn: &MpnConfig,
    layout: &PolicyLayout,
    rollout: &Rollout,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<ChunkLoss, PpoError> {
    let chunks: Vec<&[usize]> = indices.chunks(CHUNK).collect();
    let frozen = &*store;
    let results = par_map(&chunks, cfg.workers, |chunk| -> Result<_, NnError> {
        let mut tape = Tape::new();
        let (loss, stats) =
            chunk_loss_on_tape(&mut tape, frozen, mpn, layout, rollout, chunk, indices.len(), cfg)?;
        let mut grads = frozen.clone();
        grads.zero_grad();
        tape.backward(loss, &mut grads)?;
        Ok((grads, stats))
    });
    store.zero_grad();
    store.ensure_grads();
    let mut total = ChunkLoss::default();
    for r in results {
        let (grads, s) = r.map_err(|e| PpoError::NonFinite(format!("minibatch loss: {e}")))?;
        for id in grads.ids() {
            if let Some(g) = grads.grad(id) {
                store.accumulate_grad(id, g);
            }
        }
        total.total += s.total;
        total.policy += s.policy;
        total.value += s.value;
        total.entropy += s.entropy;
        total.clipped += s.clipped;
        total.ratio_sum += s.ratio_sum;
    }
    if !total.total.is_finite() {
        return Err(PpoError::NonFinite(format!("minibatch loss {total:?}")));
    }
    Ok(total)
}

/// Runs `cfg.epochs` passes over the rollout in shuffled minibatches of
/// `cfg.minibatch_episodes` episodes, one Adam step per minibatch.
pub fn ppo_update(
    store: &mut ParamStore,
    mpn: &MpnConfig,
    layout: &PolicyLayout,
    rollout: &Rollout,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<UpdateStats, PpoError> {
    if rollout.transitions.is_empty() {
        return Err(PpoError::EmptyRollout);
    }
    let adam = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    let mut stats = UpdateStats::default();
    let mut batches = 0usize;
    let mut samples = 0usize;
    let mut order: Vec<usize> = (0..rollout.episodes.len()).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for group in order.chunks(cfg.minibatch_episodes) {
            let indices: Vec<usize> =
                group.iter().flat_map(|&e| rollout.episodes[e].clone()).collect();
            let loss = minibatch_gradients(store, mpn, layout, rollout, &indices, cfg)?;
            stats.grad_norm += match cfg.max_grad_norm {
                Some(max) => store.clip_grad_norm(max),
                None => store.grad_norm(),
            };
            store.adam_step(&adam).map_err(|e| PpoError::NonFinite(e.to_string()))?;
            stats.policy_loss += loss.policy;
            stats.value_loss += loss.value;
            stats.entropy += loss.entropy;
            stats.clip_frac += loss.clipped as f64;
            stats.mean_ratio += loss.ratio_sum;
            batches += 1;
            samples += indices.len();
        }
    }
    let b = batches as f64;
    stats.policy_loss /= b;
    stats.value_loss /= b;
    stats.entropy /= b;
    stats.grad_norm /= b;
    stats.clip_frac /= samples as f64;
    stats.mean_ratio /= samples as f64;
    Ok(stats)
}
