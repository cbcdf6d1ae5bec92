//! The five networks: shared encoder and decoder, importance-aware weight
//! generator, domain discriminator and response predictor.
//!
//! The free functions here are pure forward passes over plain matrices and
//! are used at inference time. Training binds the same parameters onto a
//! [`Tape`] through [`BoundModel`]; both paths share the matrix kernels and
//! produce bitwise-identical values.

mod mlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

pub use mlp::{Activation, BoundMlp, Dense, Mlp, MlpSpec};

/// Architecture of all five components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub encoder: MlpSpec,
    pub decoder: MlpSpec,
    pub generator: MlpSpec,
    pub discriminator: MlpSpec,
    pub predictor: MlpSpec,
}

impl ArchSpec {
    /// Default layout: encoder G→256→d, decoder d→256→G, generator d→d→d
    /// (ReLU output), discriminator and predictor d→64→1 (sigmoid output).
    pub fn new(genes: usize, latent: usize) -> Self {
        Self::with_hidden(genes, latent, 256, 64)
    }

    pub fn with_hidden(genes: usize, latent: usize, ae_hidden: usize, head_hidden: usize) -> Self {
        ArchSpec {
            encoder: MlpSpec::new(vec![genes, ae_hidden, latent], Activation::None),
            decoder: MlpSpec::new(vec![latent, ae_hidden, genes], Activation::None),
            generator: MlpSpec::new(vec![latent, latent, latent], Activation::Relu),
            discriminator: MlpSpec::new(vec![latent, head_hidden, 1], Activation::Sigmoid),
            predictor: MlpSpec::new(vec![latent, head_hidden, 1], Activation::Sigmoid),
        }
    }

    pub fn genes(&self) -> usize {
        self.encoder.input()
    }

    pub fn latent(&self) -> usize {
        self.encoder.output_width()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate("encoder")?;
        self.decoder.validate("decoder")?;
        self.generator.validate("generator")?;
        self.discriminator.validate("discriminator")?;
        self.predictor.validate("predictor")?;
        let d = self.latent();
        let checks = [
            ("decoder input", self.decoder.input(), d),
            ("generator input", self.generator.input(), d),
            ("generator output", self.generator.output_width(), d),
            ("discriminator input", self.discriminator.input(), d),
            ("predictor input", self.predictor.input(), d),
            ("decoder output", self.decoder.output_width(), self.genes()),
            ("discriminator output", self.discriminator.output_width(), 1),
            ("predictor output", self.predictor.output_width(), 1),
        ];
        for (what, got, want) in checks {
            if got != want {
                return Err(Error::Contract(format!(
                    "{what} width {got}, expected {want}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub generator: Mlp,
    pub discriminator: Mlp,
    pub predictor: Mlp,
    /// Whether the weight generator is on the prediction path.
    pub weighting: bool,
}

impl ModelBundle {
    pub fn init(spec: &ArchSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(ModelBundle {
            encoder: Mlp::init(&spec.encoder, &mut rng),
            decoder: Mlp::init(&spec.decoder, &mut rng),
            generator: Mlp::init(&spec.generator, &mut rng),
            discriminator: Mlp::init(&spec.discriminator, &mut rng),
            predictor: Mlp::init(&spec.predictor, &mut rng),
            weighting: true,
        })
    }

    pub fn zeros(spec: &ArchSpec) -> Result<Self> {
        spec.validate()?;
        Ok(ModelBundle {
            encoder: Mlp::zeros(&spec.encoder),
            decoder: Mlp::zeros(&spec.decoder),
            generator: Mlp::zeros(&spec.generator),
            discriminator: Mlp::zeros(&spec.discriminator),
            predictor: Mlp::zeros(&spec.predictor),
            weighting: true,
        })
    }

    pub fn spec(&self) -> ArchSpec {
        ArchSpec {
            encoder: self.encoder.spec.clone(),
            decoder: self.decoder.spec.clone(),
            generator: self.generator.spec.clone(),
            discriminator: self.discriminator.spec.clone(),
            predictor: self.predictor.spec.clone(),
        }
    }

    pub fn genes(&self) -> usize {
        self.encoder.spec.input()
    }

    pub fn latent(&self) -> usize {
        self.encoder.spec.output_width()
    }

    fn components(&self) -> [&Mlp; 5] {
        [
            &self.encoder,
            &self.decoder,
            &self.generator,
            &self.discriminator,
            &self.predictor,
        ]
    }

    /// All parameter blocks in declared order: encoder, decoder, generator,
    /// discriminator, predictor; weight then bias per layer.
    pub fn params(&self) -> Vec<&Matrix> {
        self.components()
            .into_iter()
            .flat_map(Mlp::params)
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let ModelBundle {
            encoder,
            decoder,
            generator,
            discriminator,
            predictor,
            ..
        } = self;
        encoder
            .params_mut()
            .chain(decoder.params_mut())
            .chain(generator.params_mut())
            .chain(discriminator.params_mut())
            .chain(predictor.params_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.as_slice().len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        BoundModel {
            encoder: self.encoder.bind(tape),
            decoder: self.decoder.bind(tape),
            generator: self.generator.bind(tape),
            discriminator: self.discriminator.bind(tape),
            predictor: self.predictor.bind(tape),
        }
    }
}

fn check_width(op: &'static str, x: &Matrix, want: usize) -> Result<()> {
    if x.cols() != want {
        return Err(Error::shape(op, x.shape(), (x.rows(), want)));
    }
    Ok(())
}

/// h = E(x)
pub fn encode(model: &ModelBundle, x: &Matrix) -> Result<Matrix> {
    check_width("encode", x, model.genes())?;
    model.encoder.forward(x)
}

/// Reconstruction from a (weighted) embedding.
pub fn decode(model: &ModelBundle, z: &Matrix) -> Result<Matrix> {
    check_width("decode", z, model.latent())?;
    model.decoder.forward(z)
}

/// w = F(|h_T − h_S|), one weight row per paired row.
pub fn gen_weights(model: &ModelBundle, h_target: &Matrix, h_source: &Matrix) -> Result<Matrix> {
    let diff = h_target.zip_map(h_source, "gen_weights", |a, b| (a - b).abs())?;
    check_width("gen_weights", &diff, model.latent())?;
    model.generator.forward(&diff)
}

/// z = h ⊙ w
pub fn apply_weights(h: &Matrix, w: &Matrix) -> Result<Matrix> {
    h.zip_map(w, "apply_weights", |a, b| a * b)
}

/// Elementwise mean of K per-domain weight matrices.
pub fn mean_target_weight(weights: &[Matrix]) -> Result<Matrix> {
    let first = weights
        .first()
        .ok_or_else(|| Error::Contract("mean_target_weight needs at least one matrix".into()))?;
    let mut acc = first.clone();
    for w in &weights[1..] {
        w.same_shape(first, "mean_target_weight")?;
        acc.add_assign(w);
    }
    let k = weights.len() as f64;
    Ok(acc.map(|v| v / k))
}

/// Probability that each row came from a source domain.
pub fn discriminate(model: &ModelBundle, z: &Matrix) -> Result<Matrix> {
    check_width("discriminate", z, model.latent())?;
    model.discriminator.forward(z)
}

/// Probability of drug sensitivity for each row.
pub fn predict(model: &ModelBundle, z: &Matrix) -> Result<Matrix> {
    check_width("predict", z, model.latent())?;
    model.predictor.forward(z)
}

/// Model parameters registered on a tape for one training step.
#[derive(Clone, Debug)]
pub struct BoundModel {
    pub encoder: BoundMlp,
    pub decoder: BoundMlp,
    pub generator: BoundMlp,
    pub discriminator: BoundMlp,
    pub predictor: BoundMlp,
}

impl BoundModel {
    /// Parameter handles in the same order as [`ModelBundle::params`].
    pub fn vars(&self) -> Vec<Var> {
        self.encoder
            .vars()
            .chain(self.decoder.vars())
            .chain(self.generator.vars())
            .chain(self.discriminator.vars())
            .chain(self.predictor.vars())
            .collect()
    }

    pub fn grads(&self, tape: &Tape) -> Vec<Matrix> {
        self.vars().into_iter().map(|v| tape.grad(v)).collect()
    }

    pub fn gen_weights(&self, tape: &mut Tape, h_target: Var, h_source: Var) -> Result<Var> {
        let diff = tape.sub(h_target, h_source)?;
        let abs = tape.abs(diff);
        self.generator.forward(tape, abs)
    }

    pub fn mean_weights(&self, tape: &mut Tape, weights: &[Var]) -> Result<Var> {
        let (&first, rest) = weights
            .split_first()
            .ok_or_else(|| Error::Contract("mean_weights needs at least one matrix".into()))?;
        let mut acc = first;
        for &w in rest {
            acc = tape.add(acc, w)?;
        }
        Ok(tape.scale(acc, 1.0 / weights.len() as f64))
    }
}
