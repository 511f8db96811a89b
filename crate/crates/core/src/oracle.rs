//! Exact brute-force computation of expected reward, Q-values, and the true
//! policy gradient by enumerating all sequences on tiny instances. This is
//! the ground truth every estimator is tested against; it stays exact.
//!
//! The probability space matches the samplers: a path terminates at EOS or
//! at `max_t` tokens, and truncated paths keep their reward as-is, so the
//! oracle and the estimators share one distribution over sequences.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::policy::{backward, forward_teacher, initial_state, softmax, step, DecoderGrad, DecoderParams};
use crate::rewards::{reward, RewardContext, RewardSpec};
use crate::seqcore::{EncodedExample, TokenSeq, BOS_ID, EOS_ID};

/// Enumeration guard-rails: |V|^max_t paths must stay desk-scale.
#[derive(Debug, Clone, Copy)]
pub struct EnumLimits {
    pub max_vocab: usize,
    pub max_t: usize,
}

impl Default for EnumLimits {
    fn default() -> Self {
        EnumLimits {
            max_vocab: 6,
            max_t: 5,
        }
    }
}

impl EnumLimits {
    fn check(&self, params: &DecoderParams) -> Result<()> {
        let v = params.dims.vocab;
        if v > self.max_vocab {
            return Err(Error::LimitsExceeded(format!(
                "vocabulary {v} exceeds enumeration cap {}",
                self.max_vocab
            )));
        }
        let paths = (v as u64).checked_pow(self.max_t as u32);
        match paths {
            Some(p) if p <= 1_000_000 => Ok(()),
            _ => Err(Error::LimitsExceeded(format!(
                "{v}^{} paths exceed the 1e6 enumeration budget",
                self.max_t
            ))),
        }
    }
}

/// Central finite differences of a scalar function, h-symmetric per
/// coordinate.
pub fn central_difference<F: FnMut(&[f64]) -> f64>(x: &[f64], h: f64, mut f: F) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = f(&probe);
        probe[i] = x[i] - h;
        let minus = f(&probe);
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    grad
}

fn terminated(prefix: &[usize], max_t: usize) -> bool {
    prefix.last() == Some(&EOS_ID) || prefix.len() >= max_t
}

/// Depth-first walk over every terminated path, invoking the visitor with
/// (path, path probability).
fn walk_paths<F: FnMut(&[usize], f64) -> Result<()>>(
    params: &DecoderParams,
    example: &EncodedExample,
    max_t: usize,
    visit: &mut F,
) -> Result<()> {
    fn rec<F: FnMut(&[usize], f64) -> Result<()>>(
        params: &DecoderParams,
        example: &EncodedExample,
        max_t: usize,
        state: &crate::policy::HiddenState,
        input: usize,
        prefix: &mut Vec<usize>,
        prob: f64,
        visit: &mut F,
    ) -> Result<()> {
        let (logits, next) = step(params, state, input, example.tags.as_ref())?;
        let probs = softmax(&logits);
        for v in 0..params.dims.vocab {
            prefix.push(v);
            let p = prob * probs[v];
            if terminated(prefix, max_t) {
                visit(prefix, p)?;
            } else {
                rec(params, example, max_t, &next, v, prefix, p, visit)?;
            }
            prefix.pop();
        }
        Ok(())
    }
    let state = initial_state(params, &example.cond)?;
    let mut prefix = Vec::new();
    rec(params, example, max_t, &state, BOS_ID, &mut prefix, 1.0, visit)
}

/// Expected reward after `base`, following the policy to termination. For a
/// terminated `base` this is its reward exactly.
fn expected_reward_from<R: Fn(&[usize]) -> Result<f64>>(
    params: &DecoderParams,
    example: &EncodedExample,
    base: &[usize],
    max_t: usize,
    reward_fn: &R,
) -> Result<f64> {
    fn rec<R: Fn(&[usize]) -> Result<f64>>(
        params: &DecoderParams,
        example: &EncodedExample,
        max_t: usize,
        state: &crate::policy::HiddenState,
        input: usize,
        prefix: &mut Vec<usize>,
        reward_fn: &R,
    ) -> Result<f64> {
        let (logits, next) = step(params, state, input, example.tags.as_ref())?;
        let probs = softmax(&logits);
        let mut value = 0.0;
        for v in 0..params.dims.vocab {
            prefix.push(v);
            let q = if terminated(prefix, max_t) {
                reward_fn(prefix)?
            } else {
                rec(params, example, max_t, &next, v, prefix, reward_fn)?
            };
            value += probs[v] * q;
            prefix.pop();
        }
        Ok(value)
    }
    if terminated(base, max_t) {
        return reward_fn(base);
    }
    let (state, input) = crate::policy::replay_prefix(params, example, base)?;
    let mut prefix = base.to_vec();
    rec(params, example, max_t, &state, input, &mut prefix, reward_fn)
}

fn spec_reward_fn<'a>(
    example: &'a EncodedExample,
    spec: &'a RewardSpec,
    ctx: &'a RewardContext,
) -> impl Fn(&[usize]) -> Result<f64> + 'a {
    move |ids: &[usize]| {
        let seq = TokenSeq::new(ids.to_vec())
            .expect("enumerated paths keep EOS terminal");
        reward(&seq, example, spec, ctx)
    }
}

/// Exhaustive expected reward of the policy from the empty state.
pub fn exact_value(
    params: &DecoderParams,
    example: &EncodedExample,
    spec: &RewardSpec,
    ctx: &RewardContext,
    limits: &EnumLimits,
) -> Result<f64> {
    limits.check(params)?;
    exact_value_with(params, example, limits, &spec_reward_fn(example, spec, ctx))
}

pub fn exact_value_with<R: Fn(&[usize]) -> Result<f64>>(
    params: &DecoderParams,
    example: &EncodedExample,
    limits: &EnumLimits,
    reward_fn: &R,
) -> Result<f64> {
    limits.check(params)?;
    expected_reward_from(params, example, &[], limits.max_t, reward_fn)
}

/// Exact Q(prefix, action): expected terminal reward after taking `action`
/// and following the policy. A terminal action returns the reward exactly.
pub fn exact_q(
    params: &DecoderParams,
    example: &EncodedExample,
    prefix: &[usize],
    action: usize,
    spec: &RewardSpec,
    ctx: &RewardContext,
    limits: &EnumLimits,
) -> Result<f64> {
    exact_q_with(params, example, prefix, action, limits, &spec_reward_fn(example, spec, ctx))
}

pub fn exact_q_with<R: Fn(&[usize]) -> Result<f64>>(
    params: &DecoderParams,
    example: &EncodedExample,
    prefix: &[usize],
    action: usize,
    limits: &EnumLimits,
    reward_fn: &R,
) -> Result<f64> {
    limits.check(params)?;
    if terminated(prefix, limits.max_t) {
        return Err(Error::InvalidConfig(
            "Q is defined for a not-yet-terminated prefix".into(),
        ));
    }
    let mut base = prefix.to_vec();
    base.push(action);
    expected_reward_from(params, example, &base, limits.max_t, reward_fn)
}

/// Total probability mass of the enumerated path space; 1 up to rounding.
pub fn total_path_probability(
    params: &DecoderParams,
    example: &EncodedExample,
    limits: &EnumLimits,
) -> Result<f64> {
    limits.check(params)?;
    let mut mass = 0.0;
    walk_paths(params, example, limits.max_t, &mut |_, p| {
        mass += p;
        Ok(())
    })?;
    Ok(mass)
}

/// The true policy gradient computed two independent ways.
#[derive(Debug, Clone)]
pub struct ExactGradients {
    /// Direct form: sum over paths of pi(path) * grad log pi(path) * R(path).
    pub direct: DecoderGrad,
    /// Per-step form: at every reachable prefix, the expectation over the
    /// next token of grad log pi times the exact Q of that action.
    pub per_step_q: DecoderGrad,
    /// Exhaustive expected reward, produced by the same recursion.
    pub value: f64,
}

impl ExactGradients {
    /// Largest absolute disagreement between the two routes.
    pub fn max_abs_diff(&self) -> f64 {
        self.direct
            .to_flat()
            .iter()
            .zip(self.per_step_q.to_flat())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn exact_gradient(
    params: &DecoderParams,
    example: &EncodedExample,
    spec: &RewardSpec,
    ctx: &RewardContext,
    limits: &EnumLimits,
) -> Result<ExactGradients> {
    exact_gradient_with(params, example, limits, &spec_reward_fn(example, spec, ctx))
}

pub fn exact_gradient_with<R: Fn(&[usize]) -> Result<f64>>(
    params: &DecoderParams,
    example: &EncodedExample,
    limits: &EnumLimits,
    reward_fn: &R,
) -> Result<ExactGradients> {
    limits.check(params)?;
    let max_t = limits.max_t;

    // Route (i): direct enumeration of pi * grad log pi * R.
    let mut direct = DecoderParams::zeros(params.dims)?;
    walk_paths(params, example, max_t, &mut |path, prob| {
        let r = reward_fn(path)?;
        if prob == 0.0 || r == 0.0 {
            // the scaled gradient contributes nothing
            return Ok(());
        }
        let tape = forward_teacher(params, example, path)?;
        let mut dlogits = Vec::with_capacity(path.len());
        for (t, &g) in path.iter().enumerate() {
            let mut dl = -tape.probs(t).clone();
            dl[g] += 1.0;
            dlogits.push(dl);
        }
        let g = backward(params, &tape, &dlogits);
        direct.scaled_add(prob * r, &g);
        Ok(())
    })?;

    // Route (ii): per-step Q form. A post-order recursion computes each
    // node's value while seeding one backward pass per reachable prefix.
    let mut per_step = DecoderParams::zeros(params.dims)?;
    let value = per_step_recursion(
        params,
        example,
        max_t,
        reward_fn,
        &mut per_step,
    )?;

    Ok(ExactGradients {
        direct,
        per_step_q: per_step,
        value,
    })
}

fn per_step_recursion<R: Fn(&[usize]) -> Result<f64>>(
    params: &DecoderParams,
    example: &EncodedExample,
    max_t: usize,
    reward_fn: &R,
    grad: &mut DecoderGrad,
) -> Result<f64> {
    fn rec<R: Fn(&[usize]) -> Result<f64>>(
        params: &DecoderParams,
        example: &EncodedExample,
        max_t: usize,
        state: &crate::policy::HiddenState,
        input: usize,
        prefix: &mut Vec<usize>,
        prob: f64,
        reward_fn: &R,
        grad: &mut DecoderGrad,
    ) -> Result<f64> {
        let (logits, next) = step(params, state, input, example.tags.as_ref())?;
        let probs = softmax(&logits);
        let vocab = params.dims.vocab;
        let mut q = Array1::<f64>::zeros(vocab);
        for v in 0..vocab {
            prefix.push(v);
            q[v] = if terminated(prefix, max_t) {
                reward_fn(prefix)?
            } else {
                rec(params, example, max_t, &next, v, prefix, prob * probs[v], reward_fn, grad)?
            };
            prefix.pop();
        }
        // sum over v of pi_v * Q_v * (e_v - p), the gradient of this node's
        // expectation with respect to its logits
        let expected_q = probs.dot(&q);
        let dlogits_node = &probs * &q - &(probs.clone() * expected_q);
        // one backward pass over the prefix, seeded only at this node; the
        // dummy target extends the tape to include this node's step
        let mut target = prefix.clone();
        target.push(0);
        let tape = forward_teacher(params, example, &target)?;
        let mut dlogits: Vec<Array1<f64>> = (0..tape.len() - 1)
            .map(|_| Array1::zeros(vocab))
            .collect();
        dlogits.push(dlogits_node);
        let node_grad = backward(params, &tape, &dlogits);
        grad.scaled_add(prob, &node_grad);
        Ok(expected_q)
    }
    let state = initial_state(params, &example.cond)?;
    let mut prefix = Vec::new();
    rec(
        params,
        example,
        max_t,
        &state,
        BOS_ID,
        &mut prefix,
        1.0,
        reward_fn,
        grad,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::DecoderDims;
    use crate::rewards::MetricKind;
    use crate::seqcore::Vocabulary;

    fn dims(vocab: usize) -> DecoderDims {
        DecoderDims {
            hidden: 4,
            embed: 4,
            vocab,
            cond: 2,
            tags: 0,
        }
    }

    fn example(refs: Vec<Vec<usize>>) -> EncodedExample {
        EncodedExample {
            cond: Array1::from_vec(vec![0.7, -0.3]),
            tags: None,
            refs: refs
                .into_iter()
                .map(|r| TokenSeq::new(r).unwrap())
                .collect(),
            tuples: None,
        }
    }

    fn scaled_params(seed: u64, vocab: usize, scale: f64) -> DecoderParams {
        let d = dims(vocab);
        let base = DecoderParams::init(seed, d).unwrap();
        let flat: Vec<f64> = base.to_flat().iter().map(|x| x * scale / 0.08).collect();
        DecoderParams::from_flat(d, &flat).unwrap()
    }

    #[test]
    fn hand_enumerated_two_token_value() {
        // Uniform policy over {a, EOS}-style behavior is modeled with zero
        // params over |V|=4 (uniform over 4 tokens). Instead, force a
        // genuinely 2-way uniform split: logits equal for token 3 and EOS,
        // -inf-ish for the rest, max_t = 2, reward 1 iff the path is
        // exactly [3, EOS] or [3, <truncated 3>]? The hand example wants
        // R = 1 iff content is exactly "a". Paths: [EOS] p=.5 R=0;
        // [3,EOS] p=.25 R=1; [3,3] truncated p=.25 R=0 -> V = 0.25.
        let d = dims(4);
        let mut p = DecoderParams::zeros(d).unwrap();
        p.out_b[EOS_ID] = 30.0;
        p.out_b[3] = 30.0; // tokens 0 and 2 are ~e^-30 relative mass
        let ex = example(vec![vec![3]]);
        let limits = EnumLimits {
            max_vocab: 4,
            max_t: 2,
        };
        let reward_fn = |ids: &[usize]| -> Result<f64> {
            let seq = TokenSeq::new(ids.to_vec()).unwrap();
            Ok(if seq.content() == [3] { 1.0 } else { 0.0 })
        };
        let v = exact_value_with(&p, &ex, &limits, &reward_fn).unwrap();
        assert!((v - 0.25).abs() < 1e-9, "{v}");
        // Q(empty, a) = 0.5: continuations EOS (R=1) and a (truncated, R=0)
        let q = exact_q_with(&p, &ex, &[], 3, &limits, &reward_fn).unwrap();
        assert!((q - 0.5).abs() < 1e-9, "{q}");
        // terminal action: Q(empty, EOS) = R([EOS]) = 0 exactly
        let q_eos = exact_q_with(&p, &ex, &[], EOS_ID, &limits, &reward_fn).unwrap();
        assert_eq!(q_eos, 0.0);
    }

    #[test]
    fn constant_reward_value_and_zero_gradient() {
        let p = scaled_params(4, 4, 0.5);
        let ex = example(vec![vec![3]]);
        let limits = EnumLimits {
            max_vocab: 4,
            max_t: 3,
        };
        let c = 2.75;
        let reward_fn = |_: &[usize]| Ok(c);
        let v = exact_value_with(&p, &ex, &limits, &reward_fn).unwrap();
        assert!((v - c).abs() < 1e-12);
        let grads = exact_gradient_with(&p, &ex, &limits, &reward_fn).unwrap();
        for g in grads.direct.to_flat() {
            assert!(g.abs() < 1e-10, "direct grad entry {g}");
        }
        for g in grads.per_step_q.to_flat() {
            assert!(g.abs() < 1e-10, "per-step grad entry {g}");
        }
    }

    #[test]
    fn deterministic_policy_value_is_greedy_reward() {
        let d = dims(4);
        let mut p = DecoderParams::zeros(d).unwrap();
        p.out_b[3] = 40.0;
        p.out_b[EOS_ID] = 20.0; // token 3 dominates, then truncation ends it
        let ex = example(vec![vec![3, 3, 3]]);
        let limits = EnumLimits {
            max_vocab: 4,
            max_t: 3,
        };
        let reward_fn = |ids: &[usize]| -> Result<f64> {
            let seq = TokenSeq::new(ids.to_vec()).unwrap();
            Ok(seq.content().iter().filter(|&&t| t == 3).count() as f64)
        };
        let v = exact_value_with(&p, &ex, &limits, &reward_fn).unwrap();
        assert!((v - 3.0).abs() < 1e-6, "{v}");
    }

    #[test]
    fn path_probabilities_sum_to_one() {
        for seed in 0..5 {
            let p = scaled_params(seed, 5, 0.6);
            let ex = example(vec![vec![3, 4]]);
            let limits = EnumLimits {
                max_vocab: 5,
                max_t: 4,
            };
            let mass = total_path_probability(&p, &ex, &limits).unwrap();
            assert!((mass - 1.0).abs() < 1e-12, "seed {seed}: {mass}");
        }
    }

    #[test]
    fn limits_are_enforced() {
        let p = scaled_params(0, 5, 0.3);
        let ex = example(vec![vec![3]]);
        let tight = EnumLimits {
            max_vocab: 4,
            max_t: 3,
        };
        assert!(matches!(
            total_path_probability(&p, &ex, &tight),
            Err(Error::LimitsExceeded(_))
        ));
        let huge = EnumLimits {
            max_vocab: 40,
            max_t: 12,
        };
        assert!(total_path_probability(&p, &ex, &huge).is_err());
    }

    #[test]
    fn derivation_routes_agree_and_match_finite_differences() {
        let vocab = Vocabulary::with_content(&["a"]).unwrap();
        let limits = EnumLimits {
            max_vocab: 4,
            max_t: 3,
        };
        let spec = RewardSpec::single(MetricKind::Bleu1, 1.0);
        for seed in 0..20u64 {
            let p = scaled_params(seed, 4, 0.5);
            let ex = example(vec![vec![3, 3]]);
            let ctx = RewardContext::new(vocab.clone());
            let grads = exact_gradient(&p, &ex, &spec, &ctx, &limits).unwrap();
            assert!(
                grads.max_abs_diff() < 1e-9,
                "seed {seed}: routes disagree by {}",
                grads.max_abs_diff()
            );
            // both match central differences of the exact value
            let fd = central_difference(&p.to_flat(), 1e-4, |flat| {
                let q = DecoderParams::from_flat(p.dims, flat).unwrap();
                exact_value(&q, &ex, &spec, &ctx, &limits).unwrap()
            });
            let analytic = grads.direct.to_flat();
            let mut worst = 0.0f64;
            for (a, f) in analytic.iter().zip(&fd) {
                let rel = (a - f).abs() / (a.abs() + f.abs() + 1e-8);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-5, "seed {seed}: max rel err vs FD {worst}");
        }
    }

    #[test]
    fn prefix_reward_shift_cancels_in_per_step_form() {
        // adding a constant to the reward of every continuation leaves the
        // gradient unchanged, because sum_v grad pi(v|s) = 0
        let p = scaled_params(33, 4, 0.5);
        let ex = example(vec![vec![3, 3]]);
        let limits = EnumLimits {
            max_vocab: 4,
            max_t: 3,
        };
        let base = |ids: &[usize]| -> Result<f64> {
            Ok(ids.iter().filter(|&&t| t == 3).count() as f64)
        };
        let shifted = |ids: &[usize]| -> Result<f64> { Ok(base(ids)? + 11.0) };
        let g0 = exact_gradient_with(&p, &ex, &limits, &base).unwrap();
        let g1 = exact_gradient_with(&p, &ex, &limits, &shifted).unwrap();
        for (a, b) in g0.per_step_q.to_flat().iter().zip(g1.per_step_q.to_flat()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}
