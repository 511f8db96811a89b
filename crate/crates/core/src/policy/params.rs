//! Learnable tensors of the conditioned LSTM decoder and their checkpoint
//! format.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seqcore::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;
const INIT_RANGE: f64 = 0.08;

/// Decoder dimensions: hidden/state size, word-embedding size, vocabulary,
/// conditioning-vector size, and tag-vector size (0 disables tags).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderDims {
    pub hidden: usize,
    pub embed: usize,
    pub vocab: usize,
    pub cond: usize,
    pub tags: usize,
}

impl DecoderDims {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.embed == 0 || self.cond == 0 {
            return Err(Error::InvalidConfig("decoder dimensions must be nonzero".into()));
        }
        if self.vocab < 3 {
            return Err(Error::InvalidConfig(
                "vocabulary must include the reserved BOS/EOS/UNK ids".into(),
            ));
        }
        if self.tags > 0 && self.embed != self.hidden {
            return Err(Error::DimMismatch(
                "tag projection adds into the embedding, so embed must equal hidden when tags are enabled"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.vocab * self.embed
            + self.hidden * self.cond
            + self.hidden * self.tags
            + 4 * self.hidden * (self.embed + self.hidden)
            + 4 * self.hidden
            + self.vocab * self.hidden
            + self.vocab
    }
}

/// All learnable decoder tensors. Also reused as the gradient container,
/// since gradients share every shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    pub dims: DecoderDims,
    /// Word embeddings, one row per token id: (vocab, embed).
    pub embed: Array2<f64>,
    /// Conditioning projection producing the initial hidden state: (hidden, cond).
    pub cond_proj: Array2<f64>,
    /// Tag projection added into every step's input: (hidden, tags).
    pub tag_proj: Array2<f64>,
    /// Gate weights over [input; hidden], gate order i,f,g,o: (4*hidden, embed+hidden).
    pub lstm_w: Array2<f64>,
    /// Gate biases: (4*hidden).
    pub lstm_b: Array1<f64>,
    /// Output projection to logits: (vocab, hidden).
    pub out_w: Array2<f64>,
    pub out_b: Array1<f64>,
}

pub type DecoderGrad = DecoderParams;

impl DecoderParams {
    /// Entries drawn i.i.d. uniform(-0.08, 0.08); identical seeds give
    /// identical parameters.
    pub fn init(seed: u64, dims: DecoderDims) -> Result<DecoderParams> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = DecoderParams::zeros(dims)?;
        for v in p.tensors_mut() {
            for x in v.iter_mut() {
                *x = rng.gen_range(-INIT_RANGE..INIT_RANGE);
            }
        }
        Ok(p)
    }

    pub fn zeros(dims: DecoderDims) -> Result<DecoderParams> {
        dims.validate()?;
        Ok(DecoderParams {
            dims,
            embed: Array2::zeros((dims.vocab, dims.embed)),
            cond_proj: Array2::zeros((dims.hidden, dims.cond)),
            tag_proj: Array2::zeros((dims.hidden, dims.tags)),
            lstm_w: Array2::zeros((4 * dims.hidden, dims.embed + dims.hidden)),
            lstm_b: Array1::zeros(4 * dims.hidden),
            out_w: Array2::zeros((dims.vocab, dims.hidden)),
            out_b: Array1::zeros(dims.vocab),
        })
    }

    fn tensors(&self) -> [&[f64]; 7] {
        [
            self.embed.as_slice().unwrap(),
            self.cond_proj.as_slice().unwrap(),
            self.tag_proj.as_slice().unwrap(),
            self.lstm_w.as_slice().unwrap(),
            self.lstm_b.as_slice().unwrap(),
            self.out_w.as_slice().unwrap(),
            self.out_b.as_slice().unwrap(),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 7] {
        [
            self.embed.as_slice_mut().unwrap(),
            self.cond_proj.as_slice_mut().unwrap(),
            self.tag_proj.as_slice_mut().unwrap(),
            self.lstm_w.as_slice_mut().unwrap(),
            self.lstm_b.as_slice_mut().unwrap(),
            self.out_w.as_slice_mut().unwrap(),
            self.out_b.as_slice_mut().unwrap(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.dims.param_count()
    }

    /// Concatenates all tensors in a fixed order: embed, cond_proj,
    /// tag_proj, lstm_w, lstm_b, out_w, out_b (row-major each).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn from_flat(dims: DecoderDims, flat: &[f64]) -> Result<DecoderParams> {
        if flat.len() != dims.param_count() {
            return Err(Error::DimMismatch(format!(
                "flat vector has {} entries, dims need {}",
                flat.len(),
                dims.param_count()
            )));
        }
        let mut p = DecoderParams::zeros(dims)?;
        let mut offset = 0;
        for t in p.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
        Ok(p)
    }

    pub fn copy_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.dims.param_count());
        let mut offset = 0;
        for t in self.tensors_mut() {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// Euclidean norm over all entries.
    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .map(|t| t.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &DecoderParams) {
        assert_eq!(self.dims, other.dims);
        let other_t = other.tensors();
        for (mine, theirs) in self.tensors_mut().into_iter().zip(other_t) {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += alpha * b;
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    version: u32,
    dims: DecoderDims,
    vocab: Vec<String>,
    tensors: Vec<Vec<f64>>,
}

/// Writes a versioned JSON checkpoint: dims, vocabulary, and flat f64
/// tensors in the fixed tensor order.
pub fn save_checkpoint(
    path: impl AsRef<Path>,
    params: &DecoderParams,
    vocab: &Vocabulary,
) -> Result<()> {
    let file = CheckpointFile {
        version: CHECKPOINT_VERSION,
        dims: params.dims,
        vocab: vocab.tokens().to_vec(),
        tensors: params.tensors().iter().map(|t| t.to_vec()).collect(),
    };
    let w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer(w, &file).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(DecoderParams, Vocabulary)> {
    let r = BufReader::new(File::open(path.as_ref())?);
    let file: CheckpointFile =
        serde_json::from_reader(r).map_err(|e| Error::BadRecord {
            line: 0,
            msg: format!("invalid checkpoint: {e}"),
        })?;
    if file.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported checkpoint version {}",
            file.version
        )));
    }
    if file.vocab.len() != file.dims.vocab {
        return Err(Error::DimMismatch(format!(
            "checkpoint vocabulary has {} tokens, dims say {}",
            file.vocab.len(),
            file.dims.vocab
        )));
    }
    let flat: Vec<f64> = file.tensors.concat();
    let params = DecoderParams::from_flat(file.dims, &flat)?;
    if file.vocab.len() < 3
        || file.vocab[0] != crate::seqcore::BOS_TOKEN
        || file.vocab[1] != crate::seqcore::EOS_TOKEN
        || file.vocab[2] != crate::seqcore::UNK_TOKEN
    {
        return Err(Error::InvalidConfig(
            "checkpoint vocabulary lacks the reserved token prefix".into(),
        ));
    }
    let vocab = Vocabulary::with_content(&file.vocab[3..])?;
    Ok((params, vocab))
}
