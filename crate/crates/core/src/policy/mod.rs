//! The conditioned decoder policy: forward sampling, greedy decoding,
//! teacher-forced log-likelihood, and exact reverse-mode gradients via
//! backpropagation through time.
//!
//! Forward and gradient operations are pure given (params, inputs, rng
//! state); parameters are immutable during evaluation.

mod net;
mod params;

pub use net::{
    backward, forward_mixed, forward_sample, forward_teacher, greedy_decode, log_prob_and_grad,
    mle_loss, mle_loss_and_grad, sample_continuation, sample_sequence, softmax, step, HiddenState,
    Tape,
};
pub(crate) use net::{initial_state, replay_prefix};
pub use params::{
    load_checkpoint, save_checkpoint, DecoderDims, DecoderGrad, DecoderParams, CHECKPOINT_VERSION,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::central_difference;
    use crate::seqcore::{EncodedExample, TokenSeq, EOS_ID};
    use ndarray::Array1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims(hidden: usize, vocab: usize, cond: usize, tags: usize) -> DecoderDims {
        DecoderDims {
            hidden,
            embed: hidden,
            vocab,
            cond,
            tags,
        }
    }

    fn example(cond: Vec<f64>, tags: Option<Vec<f64>>) -> EncodedExample {
        EncodedExample {
            cond: Array1::from_vec(cond),
            tags: tags.map(Array1::from_vec),
            refs: vec![TokenSeq::new(vec![3]).unwrap()],
            tuples: None,
        }
    }

    /// Larger-magnitude random parameters than `init` produces, so softmax
    /// outputs are far from uniform in tests.
    fn random_params(seed: u64, d: DecoderDims, scale: f64) -> DecoderParams {
        let base = DecoderParams::init(seed, d).unwrap();
        let flat: Vec<f64> = base.to_flat().iter().map(|x| x * scale / 0.08).collect();
        DecoderParams::from_flat(d, &flat).unwrap()
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let z = Array1::from_shape_fn(7, |_| rand::Rng::gen_range(&mut rng, -30.0..30.0));
            let p = softmax(&z);
            assert!((p.sum() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn zero_tags_match_untagged_model() {
        let d_tagged = dims(6, 5, 3, 4);
        let tagged = random_params(5, d_tagged, 0.3);
        let ex_zero_tags = example(vec![0.3, -0.2, 0.9], Some(vec![0.0; 4]));
        let state = net::initial_state(&tagged, &ex_zero_tags.cond).unwrap();
        let (logits_tagged, _) =
            step(&tagged, &state, 3, ex_zero_tags.tags.as_ref()).unwrap();

        // same weights with the tag projection dropped
        let d_plain = dims(6, 5, 3, 0);
        let mut plain = DecoderParams::zeros(d_plain).unwrap();
        plain.embed = tagged.embed.clone();
        plain.cond_proj = tagged.cond_proj.clone();
        plain.lstm_w = tagged.lstm_w.clone();
        plain.lstm_b = tagged.lstm_b.clone();
        plain.out_w = tagged.out_w.clone();
        plain.out_b = tagged.out_b.clone();
        let (logits_plain, _) = step(&plain, &state, 3, None).unwrap();
        for (a, b) in logits_tagged.iter().zip(logits_plain.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn step_rejects_bad_inputs() {
        let p = random_params(1, dims(4, 5, 2, 0), 0.1);
        let ex = example(vec![0.1, 0.2], None);
        let state = net::initial_state(&p, &ex.cond).unwrap();
        assert!(step(&p, &state, 99, None).is_err());
        let bad_tags = Array1::zeros(3);
        assert!(step(&p, &state, 1, Some(&bad_tags)).is_err());
    }

    #[test]
    fn tag_input_is_linear_in_tags() {
        // the step input is affine in the tag vector: superposition holds
        let d = dims(5, 4, 2, 3);
        let p = random_params(9, d, 0.4);
        let t1 = Array1::from_vec(vec![0.2, 0.1, 0.4]);
        let t2 = Array1::from_vec(vec![0.3, 0.5, 0.1]);
        let sum = &t1 + &t2;
        let base = net::decoder_input(&p, 3, None);
        let a = net::decoder_input(&p, 3, Some(&t1)) - &base;
        let b = net::decoder_input(&p, 3, Some(&t2)) - &base;
        let c = net::decoder_input(&p, 3, Some(&sum)) - &base;
        for ((x, y), z) in a.iter().zip(b.iter()).zip(c.iter()) {
            assert!((x + y - z).abs() < 1e-12);
        }
    }

    #[test]
    fn eos_dominant_policy_emits_empty_caption() {
        let d = dims(4, 5, 2, 0);
        let mut p = DecoderParams::zeros(d).unwrap();
        p.out_b[EOS_ID] = 50.0; // overwhelms every other logit
        let ex = example(vec![1.0, 0.0], None);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let seq = sample_sequence(&p, &ex, 10, &mut rng).unwrap();
        assert_eq!(seq.ids(), &[EOS_ID]);
        assert!(seq.content().is_empty());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let p = random_params(11, dims(6, 6, 3, 0), 0.4);
        let ex = example(vec![0.5, -0.3, 0.8], None);
        let a = sample_sequence(&p, &ex, 8, &mut ChaCha8Rng::seed_from_u64(103)).unwrap();
        let b = sample_sequence(&p, &ex, 8, &mut ChaCha8Rng::seed_from_u64(103)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_token_frequencies_match_softmax() {
        // chi-square test over 100k draws at the 0.001 level
        let d = dims(6, 5, 3, 0);
        let p = random_params(17, d, 0.5);
        let ex = example(vec![0.4, 0.2, -0.5], None);
        let state = net::initial_state(&p, &ex.cond).unwrap();
        let (logits, _) = step(&p, &state, crate::seqcore::BOS_ID, None).unwrap();
        let probs = softmax(&logits);
        let n = 100_000usize;
        let mut counts = vec![0usize; d.vocab];
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..n {
            let s = sample_sequence(&p, &ex, 2, &mut rng).unwrap();
            counts[s.ids()[0]] += 1;
        }
        let mut chi2 = 0.0;
        for (i, &c) in counts.iter().enumerate() {
            let expect = probs[i] * n as f64;
            chi2 += (c as f64 - expect).powi(2) / expect;
            // 3-sigma binomial bound per token
            let sigma = (n as f64 * probs[i] * (1.0 - probs[i])).sqrt();
            assert!(
                (c as f64 - expect).abs() < 4.0 * sigma + 1.0,
                "token {i}: count {c} vs expected {expect:.1} (sigma {sigma:.1})"
            );
        }
        // chi-square critical value at alpha=0.001 with 4 degrees of freedom
        assert!(chi2 < 18.467, "chi2 = {chi2}");
    }

    #[test]
    fn greedy_is_deterministic_and_picks_dominant_token() {
        let d = dims(4, 5, 2, 0);
        let mut p = DecoderParams::zeros(d).unwrap();
        p.out_b[3] = 10.0;
        let ex = example(vec![1.0, 0.0], None);
        let a = greedy_decode(&p, &ex, 4).unwrap();
        let b = greedy_decode(&p, &ex, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.ids(), &[3, 3, 3, 3]);
    }

    #[test]
    fn greedy_breaks_ties_toward_lowest_id() {
        let d = dims(4, 5, 2, 0);
        let p = DecoderParams::zeros(d).unwrap(); // all logits equal
        let ex = example(vec![1.0, 0.0], None);
        let seq = greedy_decode(&p, &ex, 6).unwrap();
        assert_eq!(seq.ids(), &[0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn uniform_model_logp_of_eos_only() {
        // |V|=2 is below the reserved minimum, so use zero params over
        // |V|=4: softmax is uniform, logp([EOS]) = ln(1/4)
        let d = dims(4, 4, 2, 0);
        let p = DecoderParams::zeros(d).unwrap();
        let ex = example(vec![1.0, 0.0], None);
        let seq = TokenSeq::new(vec![EOS_ID]).unwrap();
        let (logp, _) = log_prob_and_grad(&p, &ex, &seq).unwrap();
        assert!((logp - (0.25f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn logp_requires_terminal_eos_and_valid_ids() {
        let p = random_params(2, dims(4, 5, 2, 0), 0.1);
        let ex = example(vec![1.0, 0.0], None);
        let no_eos = TokenSeq::new(vec![3, 4]).unwrap();
        assert!(log_prob_and_grad(&p, &ex, &no_eos).is_err());
        let bad = TokenSeq::new(vec![9, EOS_ID]).unwrap();
        assert!(log_prob_and_grad(&p, &ex, &bad).is_err());
    }

    #[test]
    fn out_bias_shift_leaves_logp_unchanged() {
        let d = dims(5, 5, 2, 0);
        let p = random_params(21, d, 0.4);
        let ex = example(vec![0.2, 0.7], None);
        let seq = TokenSeq::new(vec![3, 4, EOS_ID]).unwrap();
        let (logp, _) = log_prob_and_grad(&p, &ex, &seq).unwrap();
        let mut shifted = p.clone();
        shifted.out_b += 3.7;
        let (logp2, _) = log_prob_and_grad(&shifted, &ex, &seq).unwrap();
        assert!((logp - logp2).abs() < 1e-12);
    }

    /// Central finite differences of the teacher-forced log-likelihood
    /// against the analytic gradient, across random seeds and with tags.
    #[test]
    fn logp_gradient_matches_finite_differences() {
        for seed in 0..20u64 {
            let with_tags = seed % 2 == 1;
            let d = dims(6, 5, 3, if with_tags { 2 } else { 0 });
            let p = random_params(seed, d, 0.4);
            let tags = with_tags.then(|| vec![0.7, 0.2]);
            let ex = example(vec![0.3, -0.4, 0.6], tags);
            let seq = TokenSeq::new(vec![3, 4, 2, EOS_ID]).unwrap();
            let (_, grad) = log_prob_and_grad(&p, &ex, &seq).unwrap();
            let analytic = grad.to_flat();
            let fd = central_difference(
                &p.to_flat(),
                1e-4,
                |flat| {
                    let q = DecoderParams::from_flat(d, flat).unwrap();
                    log_prob_and_grad(&q, &ex, &seq).unwrap().0
                },
            );
            let mut worst = 0.0f64;
            for (a, f) in analytic.iter().zip(&fd) {
                let rel = (a - f).abs() / (a.abs() + f.abs() + 1e-10);
                worst = worst.max(rel);
            }
            assert!(worst < 1e-4, "seed {seed}: max rel err {worst}");
        }
    }

    #[test]
    fn mle_single_example_consistent_with_logp() {
        let d = dims(5, 5, 2, 0);
        let p = random_params(3, d, 0.3);
        let mut ex = example(vec![0.5, 0.5], None);
        ex.refs = vec![TokenSeq::new(vec![3, 4]).unwrap()];
        let (loss, grad) = mle_loss_and_grad(&p, std::slice::from_ref(&ex)).unwrap();
        let (logp, logp_grad) = log_prob_and_grad(&p, &ex, &ex.refs[0].with_eos()).unwrap();
        assert!((loss + logp).abs() < 1e-12);
        for (a, b) in grad.to_flat().iter().zip(logp_grad.to_flat()) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_preserves_greedy_behavior() {
        let dir = tempfile::tempdir().unwrap();
        let d = dims(6, 6, 3, 0);
        let p = random_params(8, d, 0.4);
        let vocab = crate::seqcore::Vocabulary::with_content(&["a", "b", "c"]).unwrap();
        let path = dir.path().join("m.json");
        save_checkpoint(&path, &p, &vocab).unwrap();
        let (q, _) = load_checkpoint(&path).unwrap();
        let ex = example(vec![0.1, 0.2, 0.3], None);
        assert_eq!(
            greedy_decode(&p, &ex, 8).unwrap(),
            greedy_decode(&q, &ex, 8).unwrap()
        );
    }
}
