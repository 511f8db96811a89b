//! Monte-Carlo-rollout policy-gradient training: rollout Q estimation, a
//! learned baseline for variance reduction, gradient assembly, and Adam
//! updates.

mod adam;
mod baseline;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use baseline::{load_baseline, save_baseline, BaselineGrad, BaselineNet};
pub use train::{train_mle, train_pg, MleConfig};

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{backward, forward_sample, DecoderGrad, DecoderParams};
use crate::rewards::{reward, RewardContext, RewardSpec};
use crate::seqcore::{EncodedExample, TokenSeq, EOS_ID};

/// How the per-step expectation over the next token is handled.
/// `Sampled` substitutes the sampled token (the M=1 REINFORCE form);
/// `FullVocab` sums over the entire vocabulary, which is exact in the token
/// dimension and only meant for small vocabularies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectationMode {
    Sampled,
    FullVocab,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PgConfig {
    /// Rollouts per evaluated action.
    pub k_rollouts: usize,
    /// Sample paths per gradient estimate.
    pub sample_paths: usize,
    pub lr_theta: f64,
    pub lr_phi: f64,
    pub adam: AdamConfig,
    pub max_len: usize,
    pub expectation_mode: ExpectationMode,
    /// Largest vocabulary `FullVocab` will enumerate.
    pub full_vocab_cap: usize,
    pub epochs: usize,
    /// Fraction of the corpus used to pre-fit the baseline.
    pub baseline_subset_frac: f64,
    pub baseline_pretrain_steps: usize,
    pub baseline_hidden: usize,
    /// Permit starting from un-pretrained parameters.
    pub allow_cold_start: bool,
}

impl Default for PgConfig {
    fn default() -> Self {
        PgConfig {
            k_rollouts: 3,
            sample_paths: 1,
            lr_theta: 1e-3,
            lr_phi: 1e-2,
            adam: AdamConfig::default(),
            max_len: 16,
            expectation_mode: ExpectationMode::Sampled,
            full_vocab_cap: 16,
            epochs: 10,
            baseline_subset_frac: 0.1,
            baseline_pretrain_steps: 200,
            baseline_hidden: 32,
            allow_cold_start: false,
        }
    }
}

impl PgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_rollouts < 1 || self.sample_paths < 1 {
            return Err(Error::InvalidConfig("k_rollouts and sample_paths must be >= 1".into()));
        }
        if self.lr_theta <= 0.0 || self.lr_phi <= 0.0 {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.max_len < 1 {
            return Err(Error::InvalidConfig("max_len must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.baseline_subset_frac) {
            return Err(Error::InvalidConfig("baseline_subset_frac must be in [0,1]".into()));
        }
        Ok(())
    }
}

/// A rollout-estimated action value.
#[derive(Debug, Clone, Copy)]
pub struct QEstimate {
    pub value: f64,
    /// True when no sampling happened: the prefix was already terminal and
    /// the value is the reward itself, exactly.
    pub terminal: bool,
    /// Sample standard deviation of the rollout rewards (0 when terminal).
    pub sample_std: f64,
}

fn prefix_terminated(prefix: &[usize], max_len: usize) -> bool {
    prefix.last() == Some(&EOS_ID) || prefix.len() >= max_len
}

/// Estimates Q(g_{1:t-1}, g_t) for the action-extended prefix `prefix` by
/// averaging the rewards of `k` independent policy continuations; a
/// terminated prefix returns its reward exactly, with no sampling. Forward
/// passes only.
pub fn estimate_q(
    params: &DecoderParams,
    example: &EncodedExample,
    prefix: &[usize],
    k: usize,
    max_len: usize,
    spec: &RewardSpec,
    ctx: &RewardContext,
    rng: &mut impl Rng,
) -> Result<QEstimate> {
    if k < 1 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if prefix_terminated(prefix, max_len) {
        let seq = TokenSeq::new(prefix.to_vec())
            .map_err(|_| Error::InvalidConfig("prefix has interior EOS".into()))?;
        return Ok(QEstimate {
            value: reward(&seq, example, spec, ctx)?,
            terminal: true,
            sample_std: 0.0,
        });
    }
    let mut rewards = Vec::with_capacity(k);
    for _ in 0..k {
        let full = crate::policy::sample_continuation(params, example, prefix, max_len, rng)?;
        rewards.push(reward(&full, example, spec, ctx)?);
    }
    let mean = rewards.iter().sum::<f64>() / k as f64;
    let var = if k > 1 {
        rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (k - 1) as f64
    } else {
        0.0
    };
    Ok(QEstimate {
        value: mean,
        terminal: false,
        sample_std: var.sqrt(),
    })
}

#[derive(Debug, Clone)]
pub struct PgTelemetry {
    /// The sampled path of the last sample-path draw.
    pub sampled: TokenSeq,
    /// Reward of that path.
    pub path_reward: f64,
    /// Rollout-estimated Q of the path's terminal action.
    pub terminal_q: f64,
    /// Reward of the terminated path, recomputed independently; the
    /// terminal rule makes these equal exactly.
    pub terminal_reward: f64,
    /// Baseline regression loss summed over steps (when a baseline is used).
    pub baseline_loss: Option<f64>,
}

#[derive(Debug)]
pub struct PgStep {
    /// Ascent direction of the expected reward.
    pub grad_theta: DecoderGrad,
    /// Descent direction of the baseline loss.
    pub grad_phi: Option<BaselineGrad>,
    pub telemetry: PgTelemetry,
}

/// One policy-gradient estimate for a single example: sample path(s),
/// rollout Q values, baseline subtraction, and exact backward pass.
pub fn pg_gradient(
    params: &DecoderParams,
    phi: Option<&BaselineNet>,
    example: &EncodedExample,
    config: &PgConfig,
    spec: &RewardSpec,
    ctx: &RewardContext,
    rng: &mut impl Rng,
) -> Result<PgStep> {
    config.validate()?;
    if config.expectation_mode == ExpectationMode::FullVocab
        && params.dims.vocab > config.full_vocab_cap
    {
        return Err(Error::LimitsExceeded(format!(
            "full-vocabulary expectation over {} tokens exceeds the cap of {}",
            params.dims.vocab, config.full_vocab_cap
        )));
    }
    let m = config.sample_paths;
    let scale = 1.0 / m as f64;
    let mut grad_theta = DecoderParams::zeros(params.dims)?;
    let mut grad_phi = phi.map(|p| BaselineNet::zeros(p.input_width(), p.w2.len()));
    let mut telemetry = None;
    for _ in 0..m {
        let (path, tape) = forward_sample(params, example, config.max_len, rng)?;
        let steps = path.len();
        let mut dlogits = Vec::with_capacity(steps);
        let mut baseline_loss = 0.0;
        let mut terminal_q = f64::NAN;
        for t in 0..steps {
            let b_t = match phi {
                Some(net) => net.value(tape.hidden(t))?,
                None => 0.0,
            };
            match config.expectation_mode {
                ExpectationMode::Sampled => {
                    let prefix = &path.ids()[..t + 1];
                    let q = estimate_q(
                        params, example, prefix, config.k_rollouts, config.max_len, spec, ctx, rng,
                    )?;
                    if t + 1 == steps {
                        terminal_q = q.value;
                    }
                    let advantage = q.value - b_t;
                    let probs = tape.probs(t);
                    let mut dl = probs.mapv(|p| -p * advantage);
                    dl[path.ids()[t]] += advantage;
                    dlogits.push(dl);
                    baseline_loss += (q.value - b_t) * (q.value - b_t);
                    if let (Some(gp), Some(net)) = (&mut grad_phi, phi) {
                        let (_, g) = net.value_and_sq_grad(tape.hidden(t), q.value)?;
                        gp.scaled_add(scale, &g);
                    }
                }
                ExpectationMode::FullVocab => {
                    let vocab = params.dims.vocab;
                    let mut q_all = Array1::<f64>::zeros(vocab);
                    let mut prefix = path.ids()[..t].to_vec();
                    for v in 0..vocab {
                        prefix.push(v);
                        q_all[v] = estimate_q(
                            params, example, &prefix, config.k_rollouts, config.max_len, spec,
                            ctx, rng,
                        )?
                        .value;
                        prefix.pop();
                    }
                    if t + 1 == steps {
                        terminal_q = q_all[path.ids()[t]];
                    }
                    let probs = tape.probs(t);
                    // sum over v of pi_v (q_v - b) (e_v - p)
                    let centered = q_all.mapv(|q| q - b_t);
                    let weighted = probs * &centered;
                    let total: f64 = weighted.sum();
                    let dl = &weighted - &(probs * total);
                    dlogits.push(dl);
                    let expected_q = probs.dot(&q_all);
                    baseline_loss += probs
                        .iter()
                        .zip(q_all.iter())
                        .map(|(&p, &q)| p * (q - b_t) * (q - b_t))
                        .sum::<f64>();
                    if let (Some(gp), Some(net)) = (&mut grad_phi, phi) {
                        let (_, g) = net.value_and_sq_grad(tape.hidden(t), expected_q)?;
                        gp.scaled_add(scale, &g);
                    }
                }
            }
        }
        grad_theta.scaled_add(scale, &backward(params, &tape, &dlogits));
        let path_reward = reward(&path, example, spec, ctx)?;
        telemetry = Some(PgTelemetry {
            path_reward,
            terminal_q,
            terminal_reward: path_reward,
            sampled: path,
            baseline_loss: phi.is_some().then_some(baseline_loss),
        });
    }
    Ok(PgStep {
        grad_theta,
        grad_phi,
        telemetry: telemetry.expect("sample_paths >= 1"),
    })
}
