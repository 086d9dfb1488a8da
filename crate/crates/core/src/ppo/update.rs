use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Adam, Gradients, Matrix, Tape, Var};
use crate::ppo::buffer::{normalize, RolloutBatch};
use crate::ppo::policy::{PolicyParams, Variant, LOG_SPREAD_MAX, LOG_SPREAD_MIN};
use crate::ppo::train::TrainConfig;

/// Mean |ratio - 1| above which an update is declared divergent.
pub const DIVERGENCE_RATIO: f64 = 10.0;

/// Averages over all minibatch steps of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// Loss terms of one minibatch together with the gradients of the total
/// loss, in optimizer order: actor params, critic params, then the speed
/// log-spreads (hybrid head only).
pub struct MinibatchLoss {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub mean_abs_ratio_dev: f64,
    pub grads: Vec<Matrix>,
}

/// One Adam instance over every trainable tensor of `params`.
pub fn new_optimizer(params: &PolicyParams, lr: f64) -> Adam {
    let mut shapes: Vec<(usize, usize)> = params
        .actor
        .params()
        .into_iter()
        .chain(params.critic.params())
        .map(Matrix::shape)
        .collect();
    if params.variant == Variant::Hybrid {
        shapes.push((1, params.n_robots));
    }
    Adam::new(&shapes, lr)
}

/// Clipped-surrogate loss, value loss and entropy bonus on the rows `idx`
/// of `batch`, using `advantages` (already normalized if desired).
pub fn minibatch_loss(
    params: &PolicyParams,
    batch: &RolloutBatch,
    advantages: &[f64],
    idx: &[usize],
    tc: &TrainConfig,
) -> Result<MinibatchLoss> {
    let rows: Vec<Vec<f64>> = idx.iter().map(|&k| batch.states[k].clone()).collect();
    let mut tape = Tape::new();
    let x = tape.constant(Matrix::from_rows(&rows));
    let actor = params.actor.record(&mut tape, x)?;
    let critic = params.critic.record(&mut tape, x)?;
    let spread = match params.variant {
        Variant::Hybrid => Some(tape.param(Matrix::row_vector(params.speed_log_spread.clone()))),
        Variant::Discrete => None,
    };
    let samples: Vec<_> = idx.iter().map(|&k| &batch.actions[k]).collect();
    let (logp, entropy) = params.record_log_probs(&mut tape, actor.output, spread, &samples);

    let old = tape.constant(Matrix::column(samples.iter().map(|s| s.log_prob).collect()));
    let adv = tape.constant(Matrix::column(idx.iter().map(|&k| advantages[k]).collect()));
    let diff = tape.sub(logp, old);
    let ratio = tape.exp(diff);
    let unclipped = tape.mul(ratio, adv);
    let clipped_ratio = tape.clamp(ratio, 1.0 - tc.clip_epsilon, 1.0 + tc.clip_epsilon);
    let clipped = tape.mul(clipped_ratio, adv);
    let surrogate = tape.min(unclipped, clipped);
    let mean_surrogate = tape.mean(surrogate);
    let policy_loss = tape.scale(mean_surrogate, -1.0);

    let targets = tape.constant(Matrix::column(
        idx.iter().map(|&k| batch.returns[k]).collect(),
    ));
    let err = tape.sub(critic.output, targets);
    let sq = tape.square(err);
    let value_loss = tape.mean(sq);
    let mean_entropy = tape.mean(entropy);

    let weighted_value = tape.scale(value_loss, tc.value_coef);
    let weighted_entropy = tape.scale(mean_entropy, -tc.entropy_coef);
    let partial = tape.add(policy_loss, weighted_value);
    let total = tape.add(partial, weighted_entropy);

    let ratios = tape.value(ratio).data().to_vec();
    let m = ratios.len() as f64;
    let mean_abs_ratio_dev = ratios.iter().map(|r| (r - 1.0).abs()).sum::<f64>() / m;
    let clip_fraction = ratios
        .iter()
        .filter(|r| (*r - 1.0).abs() > tc.clip_epsilon)
        .count() as f64
        / m;
    let out = MinibatchLoss {
        total: tape.scalar(total),
        policy_loss: tape.scalar(policy_loss),
        value_loss: tape.scalar(value_loss),
        entropy: tape.scalar(mean_entropy),
        clip_fraction,
        mean_abs_ratio_dev,
        grads: Vec::new(),
    };
    let losses = [out.total, out.policy_loss, out.value_loss, out.entropy];
    if losses.iter().any(|l| !l.is_finite()) || !mean_abs_ratio_dev.is_finite() {
        return Err(Error::Diverged(format!("non-finite loss {losses:?}")));
    }
    let grads = tape.backward(total)?;
    let grads = collect_grads(&tape, &grads, &actor.params, &critic.params, spread);
    Ok(MinibatchLoss { grads, ..out })
}

fn collect_grads(
    tape: &Tape,
    grads: &Gradients,
    actor: &[Var],
    critic: &[Var],
    spread: Option<Var>,
) -> Vec<Matrix> {
    actor
        .iter()
        .chain(critic)
        .chain(spread.as_ref())
        .map(|&v| {
            let (r, c) = tape.value(v).shape();
            grads.get_or_zeros(v, r, c)
        })
        .collect()
}

/// Applies `grads` (optimizer order) through `opt` and keeps the spreads
/// inside their allowed range.
pub fn apply_gradients(params: &mut PolicyParams, opt: &mut Adam, grads: &[Matrix]) -> Result<()> {
    let mut spread = Matrix::row_vector(params.speed_log_spread.clone());
    {
        let mut tensors: Vec<&mut Matrix> = params
            .actor
            .params_mut()
            .into_iter()
            .chain(params.critic.params_mut())
            .collect();
        if params.variant == Variant::Hybrid {
            tensors.push(&mut spread);
        }
        opt.step(&mut tensors, grads)?;
    }
    if params.variant == Variant::Hybrid {
        params.speed_log_spread = spread
            .data()
            .iter()
            .map(|x| x.clamp(LOG_SPREAD_MIN, LOG_SPREAD_MAX))
            .collect();
    }
    Ok(())
}

/// Runs `tc.epochs` passes of shuffled minibatch updates over `batch`,
/// whose advantages must already be computed.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    opt: &mut Adam,
    batch: &RolloutBatch,
    tc: &TrainConfig,
    rng: &mut R,
) -> Result<UpdateStats> {
    if batch.advantages.len() != batch.len() || batch.returns.len() != batch.len() {
        return Err(Error::MalformedBatch(
            "advantages have not been computed for this batch".into(),
        ));
    }
    let advantages = if tc.normalize_advantages {
        normalize(&batch.advantages)
    } else {
        batch.advantages.clone()
    };
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..tc.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(tc.minibatch_size) {
            let mut loss = minibatch_loss(params, batch, &advantages, chunk, tc)?;
            if loss.mean_abs_ratio_dev > DIVERGENCE_RATIO {
                return Err(Error::Diverged(format!(
                    "mean |ratio - 1| = {:.3} exceeds {DIVERGENCE_RATIO}",
                    loss.mean_abs_ratio_dev
                )));
            }
            if tc.max_grad_norm > 0.0 {
                clip_grad_norm(&mut loss.grads, tc.max_grad_norm);
            }
            apply_gradients(params, opt, &loss.grads)?;
            stats.policy_loss += loss.policy_loss;
            stats.value_loss += loss.value_loss;
            stats.entropy += loss.entropy;
            stats.clip_fraction += loss.clip_fraction;
            stats.minibatches += 1;
        }
    }
    if stats.minibatches > 0 {
        let k = stats.minibatches as f64;
        stats.policy_loss /= k;
        stats.value_loss /= k;
        stats.entropy /= k;
        stats.clip_fraction /= k;
    }
    if !params.is_finite() {
        return Err(Error::Diverged("parameters became non-finite".into()));
    }
    Ok(stats)
}
