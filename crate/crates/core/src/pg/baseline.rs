//! The learned baseline: a small MLP from the decoder hidden state to a
//! scalar expected-reward estimate. Its gradients touch only its own
//! parameters; nothing propagates back into the decoder state.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One hidden layer with tanh activation, scalar output.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineNet {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
}

pub type BaselineGrad = BaselineNet;

impl BaselineNet {
    pub fn init(seed: u64, input: usize, hidden: usize) -> Result<BaselineNet> {
        if input == 0 || hidden == 0 {
            return Err(Error::InvalidConfig("baseline dimensions must be nonzero".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.gen_range(-0.08..0.08)).collect()
        };
        Ok(BaselineNet {
            w1: Array2::from_shape_vec((hidden, input), draw(hidden * input)).unwrap(),
            b1: Array1::from_vec(draw(hidden)),
            w2: Array1::from_vec(draw(hidden)),
            b2: draw(1)[0],
        })
    }

    pub fn zeros(input: usize, hidden: usize) -> BaselineNet {
        BaselineNet {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.ncols()
    }

    fn check_input(&self, state: &Array1<f64>) -> Result<()> {
        if state.len() != self.input_width() {
            return Err(Error::DimMismatch(format!(
                "baseline expects inputs of width {}, got {}",
                self.input_width(),
                state.len()
            )));
        }
        Ok(())
    }

    /// Estimated expected reward at a decoder hidden state.
    pub fn value(&self, state: &Array1<f64>) -> Result<f64> {
        self.check_input(state)?;
        let a = (self.w1.dot(state) + &self.b1).mapv(f64::tanh);
        Ok(self.w2.dot(&a) + self.b2)
    }

    /// Value plus the gradient of (value - target)^2 with respect to this
    /// network's parameters only; the state is treated as a constant.
    pub fn value_and_sq_grad(
        &self,
        state: &Array1<f64>,
        target: f64,
    ) -> Result<(f64, BaselineGrad)> {
        self.check_input(state)?;
        let a = (self.w1.dot(state) + &self.b1).mapv(f64::tanh);
        let value = self.w2.dot(&a) + self.b2;
        let dv = 2.0 * (value - target);
        let da = self.w2.mapv(|w| w * dv);
        let dz = &da * &a.mapv(|t| 1.0 - t * t);
        let mut grad = BaselineNet::zeros(self.input_width(), self.w2.len());
        for (r, &g) in dz.iter().enumerate() {
            grad.w1.row_mut(r).scaled_add(g, state);
        }
        grad.b1 = dz;
        grad.w2 = a.mapv(|x| x * dv);
        grad.b2 = dv;
        Ok((value, grad))
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.w1.as_slice().unwrap());
        out.extend_from_slice(self.b1.as_slice().unwrap());
        out.extend_from_slice(self.w2.as_slice().unwrap());
        out.push(self.b2);
        out
    }

    pub fn copy_from_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let (n1, n2, n3) = (self.w1.len(), self.b1.len(), self.w2.len());
        self.w1
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&flat[..n1]);
        self.b1
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&flat[n1..n1 + n2]);
        self.w2
            .as_slice_mut()
            .unwrap()
            .copy_from_slice(&flat[n1 + n2..n1 + n2 + n3]);
        self.b2 = flat[n1 + n2 + n3];
    }

    pub fn from_flat(input: usize, hidden: usize, flat: &[f64]) -> BaselineNet {
        let mut net = BaselineNet::zeros(input, hidden);
        net.copy_from_flat(flat);
        net
    }

    pub fn is_finite(&self) -> bool {
        self.to_flat().iter().all(|x| x.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.to_flat().iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scaled_add(&mut self, alpha: f64, other: &BaselineNet) {
        self.w1.scaled_add(alpha, &other.w1);
        self.b1.scaled_add(alpha, &other.b1);
        self.w2.scaled_add(alpha, &other.w2);
        self.b2 += alpha * other.b2;
    }
}

#[derive(Serialize, Deserialize)]
struct BaselineFile {
    version: u32,
    input: usize,
    hidden: usize,
    flat: Vec<f64>,
}

pub fn save_baseline(path: impl AsRef<Path>, net: &BaselineNet) -> Result<()> {
    let file = BaselineFile {
        version: 1,
        input: net.input_width(),
        hidden: net.w2.len(),
        flat: net.to_flat(),
    };
    let w = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer(w, &file).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn load_baseline(path: impl AsRef<Path>) -> Result<BaselineNet> {
    let r = BufReader::new(File::open(path.as_ref())?);
    let file: BaselineFile = serde_json::from_reader(r).map_err(|e| Error::BadRecord {
        line: 0,
        msg: format!("invalid baseline file: {e}"),
    })?;
    let expected = file.hidden * file.input + 2 * file.hidden + 1;
    if file.version != 1 || file.flat.len() != expected {
        return Err(Error::DimMismatch("baseline file is inconsistent".into()));
    }
    Ok(BaselineNet::from_flat(file.input, file.hidden, &file.flat))
}
