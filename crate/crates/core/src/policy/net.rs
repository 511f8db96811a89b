//! Forward evaluation and exact reverse-mode gradients of the conditioned
//! decoder.
//!
//! The decoder follows the classic conditioned-LSTM shape: the conditioning
//! vector is projected linearly and used as the initial hidden state (cell
//! state starts at zero); each step's input is the previous token's
//! embedding, plus the projected tag vector when tags are enabled; a single
//! LSTM layer feeds a linear layer producing logits over the vocabulary.
//!
//! Every forward variant shares one step routine, and [`Tape`] records the
//! activations needed to replay it exactly, so backpropagation through time
//! is exact rather than approximate. Gradients returned here are ascent
//! directions of the quantity named by each function.

use ndarray::{s, Array1};
use rand::Rng;

use crate::error::{Error, Result};
use crate::policy::params::{DecoderGrad, DecoderParams};
use crate::seqcore::{EncodedExample, TokenSeq, BOS_ID, EOS_ID};

#[derive(Debug, Clone)]
pub struct HiddenState {
    pub h: Array1<f64>,
    pub c: Array1<f64>,
}

/// Numerically stable softmax; the result sums to 1 within 1e-12.
pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut p = logits.mapv(|z| (z - max).exp());
    let sum = p.sum();
    p /= sum;
    p
}

/// Activations of one decoder step, sufficient for exact replay.
#[derive(Debug, Clone)]
struct StepCache {
    input_token: usize,
    x: Array1<f64>,
    h_prev: Array1<f64>,
    c_prev: Array1<f64>,
    gate_i: Array1<f64>,
    gate_f: Array1<f64>,
    gate_g: Array1<f64>,
    gate_o: Array1<f64>,
    c: Array1<f64>,
    tanh_c: Array1<f64>,
    h: Array1<f64>,
    probs: Array1<f64>,
}

/// Recorded forward pass over one example.
#[derive(Debug, Clone)]
pub struct Tape {
    cond: Array1<f64>,
    tags: Option<Array1<f64>>,
    steps: Vec<StepCache>,
}

impl Tape {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Next-token distribution produced at step `t`.
    pub fn probs(&self, t: usize) -> &Array1<f64> {
        &self.steps[t].probs
    }

    /// The hidden state that produced step `t`'s distribution — a function
    /// of the prefix only, which makes it the baseline network's input.
    pub fn hidden(&self, t: usize) -> &Array1<f64> {
        &self.steps[t].h
    }
}

pub(crate) fn initial_state(params: &DecoderParams, cond: &Array1<f64>) -> Result<HiddenState> {
    if cond.len() != params.dims.cond {
        return Err(Error::DimMismatch(format!(
            "conditioning vector has {} entries, decoder expects {}",
            cond.len(),
            params.dims.cond
        )));
    }
    Ok(HiddenState {
        h: params.cond_proj.dot(cond),
        c: Array1::zeros(params.dims.hidden),
    })
}

/// Step input: previous-token embedding plus the projected tag vector.
pub(crate) fn decoder_input(
    params: &DecoderParams,
    token: usize,
    tags: Option<&Array1<f64>>,
) -> Array1<f64> {
    let mut x = params.embed.row(token).to_owned();
    if let Some(p) = tags {
        x += &params.tag_proj.dot(p);
    }
    x
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn run_step(
    params: &DecoderParams,
    state: &HiddenState,
    token: usize,
    tags: Option<&Array1<f64>>,
) -> (StepCache, Array1<f64>) {
    let d = params.dims.hidden;
    let dw = params.dims.embed;
    let x = decoder_input(params, token, tags);
    let mut xh = Array1::zeros(dw + d);
    xh.slice_mut(s![..dw]).assign(&x);
    xh.slice_mut(s![dw..]).assign(&state.h);
    let z = params.lstm_w.dot(&xh) + &params.lstm_b;
    let gate_i = z.slice(s![..d]).mapv(sigmoid);
    let gate_f = z.slice(s![d..2 * d]).mapv(sigmoid);
    let gate_g = z.slice(s![2 * d..3 * d]).mapv(f64::tanh);
    let gate_o = z.slice(s![3 * d..]).mapv(sigmoid);
    let c = &gate_f * &state.c + &gate_i * &gate_g;
    let tanh_c = c.mapv(f64::tanh);
    let h = &gate_o * &tanh_c;
    let logits = params.out_w.dot(&h) + &params.out_b;
    let cache = StepCache {
        input_token: token,
        x,
        h_prev: state.h.clone(),
        c_prev: state.c.clone(),
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        c,
        tanh_c,
        h,
        probs: softmax(&logits),
    };
    (cache, logits)
}

fn check_token(params: &DecoderParams, token: usize) -> Result<()> {
    if token >= params.dims.vocab {
        return Err(Error::TokenOutOfRange {
            id: token,
            vocab: params.dims.vocab,
        });
    }
    Ok(())
}

fn check_tags(params: &DecoderParams, tags: Option<&Array1<f64>>) -> Result<()> {
    let got = tags.map_or(0, Array1::len);
    if got != params.dims.tags {
        return Err(Error::DimMismatch(format!(
            "tag vector has {got} entries, decoder expects {}",
            params.dims.tags
        )));
    }
    Ok(())
}

/// One decoder step: logits over the next token and the updated state.
pub fn step(
    params: &DecoderParams,
    state: &HiddenState,
    prev_token: usize,
    tags: Option<&Array1<f64>>,
) -> Result<(Array1<f64>, HiddenState)> {
    check_token(params, prev_token)?;
    check_tags(params, tags)?;
    if state.h.len() != params.dims.hidden || state.c.len() != params.dims.hidden {
        return Err(Error::DimMismatch("hidden state width mismatch".into()));
    }
    let (cache, logits) = run_step(params, state, prev_token, tags);
    Ok((
        logits,
        HiddenState {
            h: cache.h,
            c: cache.c,
        },
    ))
}

/// Teacher-forced pass: step `t` consumes target[t-1] (BOS at t=0) and
/// produces the distribution over target[t].
pub fn forward_teacher(
    params: &DecoderParams,
    example: &EncodedExample,
    target: &[usize],
) -> Result<Tape> {
    check_tags(params, example.tags.as_ref())?;
    for &t in target {
        check_token(params, t)?;
    }
    let mut state = initial_state(params, &example.cond)?;
    let mut steps = Vec::with_capacity(target.len());
    let mut input = BOS_ID;
    for &next in target {
        let (cache, _) = run_step(params, &state, input, example.tags.as_ref());
        state = HiddenState {
            h: cache.h.clone(),
            c: cache.c.clone(),
        };
        steps.push(cache);
        input = next;
    }
    Ok(Tape {
        cond: example.cond.clone(),
        tags: example.tags.clone(),
        steps,
    })
}

fn sample_index(probs: &Array1<f64>, rng: &mut impl Rng) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Samples a sequence from the policy, recording the tape for a later
/// backward pass. Terminates at EOS or after `max_len` tokens.
pub fn forward_sample(
    params: &DecoderParams,
    example: &EncodedExample,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<(TokenSeq, Tape)> {
    check_tags(params, example.tags.as_ref())?;
    let mut state = initial_state(params, &example.cond)?;
    let mut steps = Vec::new();
    let mut ids = Vec::new();
    let mut input = BOS_ID;
    for _ in 0..max_len {
        let (cache, _) = run_step(params, &state, input, example.tags.as_ref());
        state = HiddenState {
            h: cache.h.clone(),
            c: cache.c.clone(),
        };
        let tok = sample_index(&cache.probs, rng);
        steps.push(cache);
        ids.push(tok);
        if tok == EOS_ID {
            break;
        }
        input = tok;
    }
    Ok((
        TokenSeq::new_unchecked(ids),
        Tape {
            cond: example.cond.clone(),
            tags: example.tags.clone(),
            steps,
        },
    ))
}

pub fn sample_sequence(
    params: &DecoderParams,
    example: &EncodedExample,
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<TokenSeq> {
    forward_sample(params, example, max_len, rng).map(|(seq, _)| seq)
}

/// Replays `prefix` without recording, returning the state ready to extend
/// it and the token to feed next.
pub(crate) fn replay_prefix(
    params: &DecoderParams,
    example: &EncodedExample,
    prefix: &[usize],
) -> Result<(HiddenState, usize)> {
    let mut state = initial_state(params, &example.cond)?;
    let mut input = BOS_ID;
    if let Some((&last, consumed)) = prefix.split_last() {
        for &t in consumed {
            check_token(params, t)?;
            let (cache, _) = run_step(params, &state, input, example.tags.as_ref());
            state = HiddenState {
                h: cache.h,
                c: cache.c,
            };
            input = t;
        }
        check_token(params, last)?;
        let (cache, _) = run_step(params, &state, input, example.tags.as_ref());
        state = HiddenState {
            h: cache.h,
            c: cache.c,
        };
        input = last;
    }
    Ok((state, input))
}

/// Samples a continuation of `prefix` to termination and returns the full
/// sequence (prefix included). A forward-only path: no tape is recorded.
pub fn sample_continuation(
    params: &DecoderParams,
    example: &EncodedExample,
    prefix: &[usize],
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<TokenSeq> {
    check_tags(params, example.tags.as_ref())?;
    let mut ids = prefix.to_vec();
    if prefix.last() == Some(&EOS_ID) || ids.len() >= max_len {
        return Ok(TokenSeq::new_unchecked(ids));
    }
    let (mut state, mut input) = replay_prefix(params, example, prefix)?;
    while ids.len() < max_len {
        let (cache, _) = run_step(params, &state, input, example.tags.as_ref());
        state = HiddenState {
            h: cache.h,
            c: cache.c,
        };
        let tok = sample_index(&cache.probs, rng);
        ids.push(tok);
        if tok == EOS_ID {
            break;
        }
        input = tok;
    }
    Ok(TokenSeq::new_unchecked(ids))
}

/// Hybrid pass: the first `forced` tokens are teacher-forced, then the
/// policy samples its own continuation until EOS or `max_len`. Returns the
/// realized sequence and its tape.
pub fn forward_mixed(
    params: &DecoderParams,
    example: &EncodedExample,
    forced: &[usize],
    max_len: usize,
    rng: &mut impl Rng,
) -> Result<(TokenSeq, Tape)> {
    check_tags(params, example.tags.as_ref())?;
    for &t in forced {
        check_token(params, t)?;
    }
    let mut state = initial_state(params, &example.cond)?;
    let mut steps = Vec::new();
    let mut ids: Vec<usize> = Vec::new();
    let mut input = BOS_ID;
    while ids.len() < max_len {
        let (cache, _) = run_step(params, &state, input, example.tags.as_ref());
        state = HiddenState {
            h: cache.h.clone(),
            c: cache.c.clone(),
        };
        let tok = match forced.get(ids.len()) {
            Some(&y) => y,
            None => sample_index(&cache.probs, rng),
        };
        steps.push(cache);
        ids.push(tok);
        if tok == EOS_ID {
            break;
        }
        input = tok;
    }
    Ok((
        TokenSeq::new_unchecked(ids),
        Tape {
            cond: example.cond.clone(),
            tags: example.tags.clone(),
            steps,
        },
    ))
}

/// Argmax decoding; ties break toward the lowest token id.
pub fn greedy_decode(
    params: &DecoderParams,
    example: &EncodedExample,
    max_len: usize,
) -> Result<TokenSeq> {
    check_tags(params, example.tags.as_ref())?;
    let mut state = initial_state(params, &example.cond)?;
    let mut ids = Vec::new();
    let mut input = BOS_ID;
    for _ in 0..max_len {
        let (cache, logits) = run_step(params, &state, input, example.tags.as_ref());
        state = HiddenState {
            h: cache.h,
            c: cache.c,
        };
        let mut best = 0;
        for (i, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = i;
            }
        }
        ids.push(best);
        if best == EOS_ID {
            break;
        }
        input = best;
    }
    Ok(TokenSeq::new_unchecked(ids))
}

/// Exact reverse-mode pass: given per-step gradients with respect to the
/// logits, accumulates the gradient with respect to every parameter tensor.
pub fn backward(params: &DecoderParams, tape: &Tape, dlogits: &[Array1<f64>]) -> DecoderGrad {
    assert_eq!(dlogits.len(), tape.steps.len());
    let d = params.dims.hidden;
    let dw = params.dims.embed;
    let mut grad = DecoderParams::zeros(params.dims).expect("dims already validated");
    let mut dh_next: Array1<f64> = Array1::zeros(d);
    let mut dc_next: Array1<f64> = Array1::zeros(d);
    for (step, dl) in tape.steps.iter().zip(dlogits).rev() {
        // output layer
        for (r, &g) in dl.iter().enumerate() {
            grad.out_w.row_mut(r).scaled_add(g, &step.h);
        }
        grad.out_b += dl;
        let dh = params.out_w.t().dot(dl) + &dh_next;
        // h = o * tanh(c)
        let dgate_o = &dh * &step.tanh_c;
        let dc = &dh * &step.gate_o * step.tanh_c.mapv(|t| 1.0 - t * t) + &dc_next;
        // c = f * c_prev + i * g
        let dgate_i = &dc * &step.gate_g;
        let dgate_g = &dc * &step.gate_i;
        let dgate_f = &dc * &step.c_prev;
        dc_next = &dc * &step.gate_f;
        // pre-activation gate gradients, gate order i,f,g,o
        let mut dz = Array1::zeros(4 * d);
        dz.slice_mut(s![..d])
            .assign(&(&dgate_i * &step.gate_i.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![d..2 * d])
            .assign(&(&dgate_f * &step.gate_f.mapv(|v| v * (1.0 - v))));
        dz.slice_mut(s![2 * d..3 * d])
            .assign(&(&dgate_g * &step.gate_g.mapv(|v| 1.0 - v * v)));
        dz.slice_mut(s![3 * d..])
            .assign(&(&dgate_o * &step.gate_o.mapv(|v| v * (1.0 - v))));
        let mut xh = Array1::zeros(dw + d);
        xh.slice_mut(s![..dw]).assign(&step.x);
        xh.slice_mut(s![dw..]).assign(&step.h_prev);
        for (r, &g) in dz.iter().enumerate() {
            grad.lstm_w.row_mut(r).scaled_add(g, &xh);
        }
        grad.lstm_b += &dz;
        let dxh = params.lstm_w.t().dot(&dz);
        let dx = dxh.slice(s![..dw]);
        dh_next = dxh.slice(s![dw..]).to_owned();
        // x = embed[token] + tag_proj . tags
        grad.embed.row_mut(step.input_token).scaled_add(1.0, &dx);
        if let Some(tags) = &tape.tags {
            for (r, &g) in dx.iter().enumerate() {
                grad.tag_proj.row_mut(r).scaled_add(g, tags);
            }
        }
    }
    // h_0 = cond_proj . cond (c_0 is constant zero)
    for (r, &g) in dh_next.iter().enumerate() {
        grad.cond_proj.row_mut(r).scaled_add(g, &tape.cond);
    }
    grad
}

/// Teacher-forced log-likelihood of `seq` (which must end with EOS) and its
/// exact gradient.
pub fn log_prob_and_grad(
    params: &DecoderParams,
    example: &EncodedExample,
    seq: &TokenSeq,
) -> Result<(f64, DecoderGrad)> {
    if seq.is_empty() || !seq.ends_with_eos() {
        return Err(Error::InvalidConfig(
            "log-probability target must be non-empty and end with EOS".into(),
        ));
    }
    let target = seq.ids();
    let tape = forward_teacher(params, example, target)?;
    let mut logp = 0.0;
    let mut dlogits = Vec::with_capacity(target.len());
    for (t, &y) in target.iter().enumerate() {
        let probs = tape.probs(t);
        logp += probs[y].ln();
        let mut dl = -probs.clone();
        dl[y] += 1.0;
        dlogits.push(dl);
    }
    let grad = backward(params, &tape, &dlogits);
    Ok((logp, grad))
}

/// Mean negative log-likelihood over every reference in the batch (teacher
/// forcing), with its gradient.
pub fn mle_loss_and_grad(
    params: &DecoderParams,
    batch: &[EncodedExample],
) -> Result<(f64, DecoderGrad)> {
    if batch.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n_refs: usize = batch.iter().map(|ex| ex.refs.len()).sum();
    let scale = -1.0 / n_refs as f64;
    let mut loss = 0.0;
    let mut grad = DecoderParams::zeros(params.dims)?;
    for ex in batch {
        for r in &ex.refs {
            let (logp, g) = log_prob_and_grad(params, ex, &r.with_eos())?;
            loss += scale * logp;
            grad.scaled_add(scale, &g);
        }
    }
    Ok((loss, grad))
}

/// Mean negative log-likelihood without gradients, for validation curves.
pub fn mle_loss(params: &DecoderParams, batch: &[EncodedExample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut loss = 0.0;
    let mut n_refs = 0usize;
    for ex in batch {
        for r in &ex.refs {
            let target = r.with_eos();
            let tape = forward_teacher(params, ex, target.ids())?;
            for (t, &y) in target.ids().iter().enumerate() {
                loss -= tape.probs(t)[y].ln();
            }
            n_refs += 1;
        }
    }
    Ok(loss / n_refs as f64)
}
