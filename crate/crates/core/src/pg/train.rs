//! Training loops: MLE pretraining and the rollout policy-gradient loop
//! (baseline pre-fit on a corpus subset, then per-example sampled
//! gradients with Adam updates of both the policy and the baseline).

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pg::{estimate_q, pg_gradient, AdamConfig, AdamState, BaselineNet, PgConfig};
use crate::policy::{forward_sample, mle_loss, mle_loss_and_grad, DecoderParams};
use crate::rewards::{RewardContext, RewardSpec};
use crate::runlog::{RunLog, StepRecord};
use crate::seqcore::EncodedExample;

#[derive(Debug, Clone)]
pub struct MleConfig {
    pub epochs: usize,
    pub lr: f64,
    pub adam: AdamConfig,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            epochs: 30,
            lr: 5e-3,
            adam: AdamConfig::default(),
        }
    }
}

/// Teacher-forced pretraining with per-example Adam updates.
pub fn train_mle(
    train: &[EncodedExample],
    val: Option<&[EncodedExample]>,
    mut params: DecoderParams,
    config: &MleConfig,
    seed: u64,
) -> Result<(DecoderParams, RunLog)> {
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if config.lr <= 0.0 {
        return Err(Error::InvalidConfig("learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = AdamState::new(params.param_count());
    let mut log = RunLog::new();
    let started = Instant::now();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for (i, &idx) in order.iter().enumerate() {
            let batch = std::slice::from_ref(&train[idx]);
            let (loss, grad) = mle_loss_and_grad(&params, batch)?;
            if !grad.is_finite() || !loss.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite MLE gradient at epoch {epoch}, step {step}"
                )));
            }
            let mut flat = params.to_flat();
            opt.step(&mut flat, &grad.to_flat(), config.lr, &config.adam);
            params.copy_from_flat(&flat);
            let val_loss = match (i + 1 == order.len(), val) {
                (true, Some(v)) if !v.is_empty() => Some(mle_loss(&params, v)?),
                _ => None,
            };
            log.push(StepRecord {
                step,
                epoch: epoch as u64,
                mean_reward: 0.0,
                mle_loss: Some(loss),
                baseline_loss: None,
                grad_norm_theta: grad.l2_norm(),
                grad_norm_phi: None,
                terminal_q: None,
                terminal_reward: None,
                val_loss,
                wallclock: started.elapsed().as_secs_f64(),
            })?;
            step += 1;
        }
    }
    Ok((params, log))
}

/// The full rollout policy-gradient procedure: pre-fit the baseline on
/// Monte-Carlo Q targets over a small corpus subset, then loop over
/// examples sampling a path, estimating per-action Q values with K
/// rollouts, subtracting the learned baseline, and applying Adam updates
/// to the policy and baseline.
///
/// `warm_start` declares that `params` came from MLE pretraining; without
/// it (and without `allow_cold_start`) training refuses to run.
#[allow(clippy::too_many_arguments)]
pub fn train_pg(
    train: &[EncodedExample],
    mut params: DecoderParams,
    mut phi: BaselineNet,
    config: &PgConfig,
    spec: &RewardSpec,
    ctx: &RewardContext,
    seed: u64,
    warm_start: bool,
) -> Result<(DecoderParams, BaselineNet, RunLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !warm_start && !config.allow_cold_start {
        return Err(Error::InvalidConfig(
            "policy-gradient training expects an MLE warm start; pass allow_cold_start to override"
                .into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = Instant::now();
    let mut log = RunLog::new();

    // Baseline pre-fit on a small subset, regressing on rollout Q targets.
    let mut opt_phi = AdamState::new(phi.param_count());
    let subset_n = ((config.baseline_subset_frac * train.len() as f64).ceil() as usize)
        .clamp(1, train.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng);
    let subset: Vec<usize> = order[..subset_n].to_vec();
    for fit_step in 0..config.baseline_pretrain_steps {
        let ex = &train[subset[fit_step % subset_n]];
        let (path, tape) = forward_sample(&params, ex, config.max_len, &mut rng)?;
        let mut grad = BaselineNet::zeros(phi.input_width(), phi.w2.len());
        for t in 0..path.len() {
            let q = estimate_q(
                &params,
                ex,
                &path.ids()[..t + 1],
                config.k_rollouts,
                config.max_len,
                spec,
                ctx,
                &mut rng,
            )?;
            let (_, g) = phi.value_and_sq_grad(tape.hidden(t), q.value)?;
            grad.scaled_add(1.0, &g);
        }
        if !grad.is_finite() {
            return Err(Error::NumericalFailure(format!(
                "non-finite baseline gradient during pre-fit step {fit_step}"
            )));
        }
        let mut flat = phi.to_flat();
        opt_phi.step(&mut flat, &grad.to_flat(), config.lr_phi, &config.adam);
        phi.copy_from_flat(&flat);
    }

    // Main loop: per-example policy and baseline updates.
    let mut opt_theta = AdamState::new(params.param_count());
    let mut step = 0u64;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &idx in &order {
            let ex = &train[idx];
            let pg = pg_gradient(&params, Some(&phi), ex, config, spec, ctx, &mut rng)?;
            if !pg.grad_theta.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite policy gradient at epoch {epoch}, step {step}"
                )));
            }
            let grad_phi = pg.grad_phi.as_ref().expect("baseline is always present here");
            if !grad_phi.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite baseline gradient at epoch {epoch}, step {step}"
                )));
            }
            // ascent on expected reward: Adam minimizes, so negate
            let descent: Vec<f64> = pg.grad_theta.to_flat().iter().map(|g| -g).collect();
            let mut flat = params.to_flat();
            opt_theta.step(&mut flat, &descent, config.lr_theta, &config.adam);
            params.copy_from_flat(&flat);
            let mut flat_phi = phi.to_flat();
            opt_phi.step(&mut flat_phi, &grad_phi.to_flat(), config.lr_phi, &config.adam);
            phi.copy_from_flat(&flat_phi);
            log.push(StepRecord {
                step,
                epoch: epoch as u64,
                mean_reward: pg.telemetry.path_reward,
                mle_loss: None,
                baseline_loss: pg.telemetry.baseline_loss,
                grad_norm_theta: pg.grad_theta.l2_norm(),
                grad_norm_phi: Some(grad_phi.l2_norm()),
                terminal_q: Some(pg.telemetry.terminal_q),
                terminal_reward: Some(pg.telemetry.terminal_reward),
                val_loss: None,
                wallclock: started.elapsed().as_secs_f64(),
            })?;
            step += 1;
        }
    }
    Ok((params, phi, log))
}
