use rand::Rng;
use rand_distr::StandardNormal;

use super::matrix::Matrix;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Tanh => 1,
            Activation::Identity => 0,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Fully connected layer; `weight` is `in x out`, `bias` is `1 x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

/// Parameter handles of one network recorded on a tape, in
/// `[w0, b0, w1, b1, ...]` order.
#[derive(Debug, Clone)]
pub struct RecordedNet {
    pub output: Var,
    pub params: Vec<Var>,
}

impl DenseNet {
    /// Tanh hidden layers and an identity output layer, orthogonally
    /// initialised with gain sqrt(2) on hidden layers and `output_gain` on
    /// the last one. Biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output_gain: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "network needs input and output sizes");
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (gain, activation) = if i == last {
                    (output_gain, Activation::Identity)
                } else {
                    (std::f64::consts::SQRT_2, Activation::Tanh)
                };
                Dense {
                    weight: orthogonal(w[0], w[1], gain, rng),
                    bias: Matrix::zeros(1, w[1]),
                    activation,
                }
            })
            .collect();
        DenseNet { layers }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network without layers".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(Error::DimensionMismatch {
                    expected: pair[0].weight.cols(),
                    actual: pair[1].weight.rows(),
                    context: if i == 0 {
                        "layer chain"
                    } else {
                        "layer chain (deep)"
                    },
                });
            }
        }
        for l in &layers {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(Error::DimensionMismatch {
                    expected: l.weight.cols(),
                    actual: l.bias.len(),
                    context: "bias width",
                });
            }
        }
        Ok(DenseNet { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.cols()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.is_finite())
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
                context: "network input",
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut out = layer.bias.row(0).to_vec();
            for (k, &a) in h.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, w) in out.iter_mut().zip(layer.weight.row(k)) {
                    *o += a * w;
                }
            }
            for o in &mut out {
                *o = layer.activation.apply(*o);
            }
            h = out;
        }
        Ok(h)
    }

    /// Batched forward pass recorded on `tape`; `x` is `batch x input_dim`.
    pub fn record(&self, tape: &mut Tape, x: Var) -> Result<RecordedNet> {
        let cols = tape.value(x).cols();
        if cols != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: cols,
                context: "network input",
            });
        }
        let mut params = Vec::with_capacity(2 * self.layers.len());
        let mut h = x;
        for layer in &self.layers {
            let w = tape.param(layer.weight.clone());
            let b = tape.param(layer.bias.clone());
            params.push(w);
            params.push(b);
            let z = tape.matmul(h, w);
            let z = tape.add_row(z, b);
            h = match layer.activation {
                Activation::Tanh => tape.tanh(z),
                Activation::Identity => z,
            };
        }
        Ok(RecordedNet { output: h, params })
    }
}

/// Random matrix with orthonormal columns (or rows, whichever is fewer),
/// scaled by `gain`.
fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Matrix {
    let (n, k) = if rows >= cols {
        (rows, cols)
    } else {
        (cols, rows)
    };
    // k orthonormal vectors of length n via modified Gram-Schmidt
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k);
    while basis.len() < k {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= dot * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = Matrix::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for (i, &x) in b.iter().enumerate() {
            if rows >= cols {
                m.set(i, j, gain * x);
            } else {
                m.set(j, i, gain * x);
            }
        }
    }
    m
}
