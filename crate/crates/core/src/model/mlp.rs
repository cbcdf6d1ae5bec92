use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{relu, sigmoid, Matrix, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Sigmoid,
}

impl Activation {
    fn apply(self, m: Matrix) -> Matrix {
        match self {
            Activation::None => m,
            Activation::Relu => m.map(relu),
            Activation::Sigmoid => m.map(sigmoid),
        }
    }

    fn apply_on(self, tape: &mut Tape, v: Var) -> Var {
        match self {
            Activation::None => v,
            Activation::Relu => tape.relu(v),
            Activation::Sigmoid => tape.sigmoid(v),
        }
    }
}

/// Layer widths including the input width, e.g. `[60, 256, 16]` is a
/// two-layer network. Hidden layers use ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub output: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, output: Activation) -> Self {
        MlpSpec { widths, output }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Contract(format!("{name}: needs at least one layer")));
        }
        if self.widths.contains(&0) {
            return Err(Error::Contract(format!("{name}: widths must be positive")));
        }
        Ok(())
    }

    pub fn input(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// in × out
    pub weight: Matrix,
    /// 1 × out
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// He-scaled uniform weights in ±sqrt(6/fan_in), zero biases.
    pub fn init<R: Rng>(spec: &MlpSpec, rng: &mut R) -> Mlp {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Dense {
                    weight: Matrix::from_vec(fan_in, fan_out, data).unwrap(),
                    bias: Matrix::zeros(1, fan_out),
                }
            })
            .collect();
        Mlp {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn zeros(spec: &MlpSpec) -> Mlp {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Dense {
                weight: Matrix::zeros(w[0], w[1]),
                bias: Matrix::zeros(1, w[1]),
            })
            .collect();
        Mlp {
            spec: spec.clone(),
            layers,
        }
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let pre = h.matmul(&layer.weight)?.add_row(&layer.bias)?;
            let act = if i == last {
                self.spec.output
            } else {
                Activation::Relu
            };
            h = act.apply(pre);
        }
        Ok(h)
    }

    pub fn params(&self) -> impl Iterator<Item = &Matrix> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Matrix> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundMlp {
        let layers = self
            .layers
            .iter()
            .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
            .collect();
        BoundMlp {
            layers,
            output: self.spec.output,
        }
    }
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    output: Activation,
}

impl BoundMlp {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let lin = tape.matmul(h, w)?;
            let pre = tape.add_bias(lin, b)?;
            let act = if i == last {
                self.output
            } else {
                Activation::Relu
            };
            h = act.apply_on(tape, pre);
        }
        Ok(h)
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}
