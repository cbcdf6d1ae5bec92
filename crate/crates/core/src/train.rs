//! Joint optimization of reconstruction, weight independence, adversarial
//! alignment and classification, with the ablation switches.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    smote_upsample, weight_upsample, BatchPlan, DomainBundle, LabeledDomain, TupleBatch, Upsampler,
};
use crate::error::{Error, Result};
use crate::eval;
use crate::losses::{self, LossParts, LossVars};
use crate::model::{self, Activation, ArchSpec, BoundModel, ModelBundle};
use crate::numerics::{Matrix, Tape, Var};
use crate::optim::{Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub ae_hidden: usize,
    pub head_hidden: usize,
    /// Output activation of the weight generator.
    pub generator_output: Activation,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Gradient-reversal coefficient after warm-up.
    pub grl_lambda: f64,
    /// Fraction of all steps over which the reversal coefficient ramps
    /// linearly from 0; 0 keeps it constant.
    pub grl_warmup: f64,
    pub sampler: Upsampler,
    pub smote_k: usize,
    /// Adversarial alignment with the target domain.
    pub mda: bool,
    /// Weight-independence penalty.
    pub ind: bool,
    /// Importance-aware weight generator.
    pub awg: bool,
    /// Fraction of each labeled source held out for monitoring.
    pub holdout: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            latent_dim: 128,
            ae_hidden: 256,
            head_hidden: 64,
            generator_output: Activation::Relu,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            batch_size: 64,
            epochs: 200,
            grl_lambda: 1.0,
            grl_warmup: 0.1,
            sampler: Upsampler::Weight,
            smote_k: 5,
            mda: true,
            ind: true,
            awg: true,
            holdout: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn arch(&self, genes: usize) -> ArchSpec {
        let mut arch =
            ArchSpec::with_hidden(genes, self.latent_dim, self.ae_hidden, self.head_hidden);
        arch.generator.output = self.generator_output;
        arch
    }

    /// The generator needs target pairs, so it is only active with alignment on.
    pub fn weighting(&self) -> bool {
        self.awg && self.mda
    }

    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> std::result::Result<(), (&'static str, String)> {
        let fail = |field: &'static str, msg: &str| Err((field, msg.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate", "must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return fail("beta1", "must lie in [0, 1)");
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return fail("beta2", "must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("epsilon", "must be positive");
        }
        if self.latent_dim == 0 {
            return fail("latent_dim", "must be positive");
        }
        if self.ae_hidden == 0 {
            return fail("ae_hidden", "must be positive");
        }
        if self.head_hidden == 0 {
            return fail("head_hidden", "must be positive");
        }
        if self.batch_size == 0 {
            return fail("batch_size", "must be at least 1");
        }
        if self.epochs == 0 {
            return fail("epochs", "must be at least 1");
        }
        if !(self.grl_lambda >= 0.0) {
            return fail("grl_lambda", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.grl_warmup) {
            return fail("grl_warmup", "must lie in [0, 1]");
        }
        if self.smote_k == 0 {
            return fail("smote_k", "must be at least 1");
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return fail("holdout", "must lie in [0, 1)");
        }
        Ok(())
    }

    fn check(&self) -> Result<()> {
        self.validate().map_err(|(field, msg)| Error::Config {
            pointer: format!("/{field}"),
            msg,
        })
    }

    /// Reversal coefficient at `step` (0-based) of `total` steps.
    pub fn grl_at(&self, step: u64, total: u64) -> f64 {
        if self.grl_warmup <= 0.0 || total == 0 {
            return self.grl_lambda;
        }
        let ramp = self.grl_warmup * total as f64;
        self.grl_lambda * (step as f64 / ramp).min(1.0)
    }
}

/// The ablation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    /// Single source domain, no weight generator, alignment on.
    #[serde(rename = "baseline")]
    Baseline,
    #[serde(rename = "w/o MDA")]
    NoMda,
    #[serde(rename = "w/o IND")]
    NoInd,
    #[serde(rename = "w/o AWG")]
    NoAwg,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::Baseline,
        Variant::NoMda,
        Variant::NoInd,
        Variant::NoAwg,
    ];

    /// Table order used by `ablate`.
    pub const ABLATION: [Variant; 4] = [
        Variant::NoMda,
        Variant::NoInd,
        Variant::NoAwg,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Baseline => "baseline",
            Variant::NoMda => "w/o MDA",
            Variant::NoInd => "w/o IND",
            Variant::NoAwg => "w/o AWG",
        }
    }

    pub fn configure(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let (mda, ind, awg) = match self {
            Variant::Full => (true, true, true),
            Variant::Baseline => (true, false, false),
            Variant::NoMda => (false, false, false),
            Variant::NoInd => (true, false, true),
            Variant::NoAwg => (true, false, false),
        };
        cfg.mda = mda;
        cfg.ind = ind;
        cfg.awg = awg;
        cfg
    }

    /// Restricts the bundle to the sources this variant trains on.
    pub fn sources(self, bundle: &DomainBundle) -> Result<DomainBundle> {
        match self {
            Variant::Baseline => bundle.take_sources(1),
            _ => Ok(bundle.clone()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Ok(match norm.as_str() {
            "full" => Variant::Full,
            "baseline" | "single" | "singlesource" => Variant::Baseline,
            "womda" | "nomda" => Variant::NoMda,
            "woind" | "noind" => Variant::NoInd,
            "woawg" | "noawg" => Variant::NoAwg,
            _ => return Err(Error::data(format!("unknown variant {s:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u64,
    pub parts: LossParts,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub epoch_seconds: Vec<f64>,
    /// Per-epoch AUROC on the held-out source rows, when a holdout is set
    /// and both classes are present in it.
    pub holdout_auroc: Vec<f64>,
    pub final_step: u64,
}

impl TrainHistory {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::data::csv_error)?;
        w.write_record(["step", "reco", "ind", "adv", "cls", "total"])
            .map_err(crate::data::csv_error)?;
        for r in &self.steps {
            let p = r.parts;
            w.write_record(&[
                r.step.to_string(),
                format!("{:?}", p.reco),
                format!("{:?}", p.ind),
                format!("{:?}", p.adv),
                format!("{:?}", p.cls),
                format!("{:?}", p.total),
            ])
            .map_err(crate::data::csv_error)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How the discriminator is attached to the weighted embeddings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling {
    /// Through a gradient-reversal layer with this coefficient.
    Reversed(f64),
    /// Plain connection; used to inspect the unreversed gradient.
    Direct,
}

/// Which terms a step builds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossSwitches {
    pub mda: bool,
    pub ind: bool,
    pub awg: bool,
}

impl LossSwitches {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        LossSwitches {
            mda: cfg.mda,
            ind: cfg.ind && cfg.weighting(),
            awg: cfg.weighting(),
        }
    }
}

/// Intermediate nodes of one forward pass.
#[derive(Clone, Debug)]
pub struct StepGraph {
    pub bound: BoundModel,
    pub h_sources: Vec<Var>,
    pub h_target: Option<Var>,
    pub weights: Vec<Var>,
    pub z_sources: Vec<Var>,
    pub z_target: Option<Var>,
    pub losses: LossVars,
    pub total: Var,
}

/// Builds the full loss graph for one tuple batch on `tape`.
pub fn build_step(
    tape: &mut Tape,
    model: &ModelBundle,
    batch: &TupleBatch,
    switches: LossSwitches,
    coupling: Coupling,
) -> Result<StepGraph> {
    let bound = model.bind(tape);
    let x_sources: Vec<Var> = batch
        .x_sources
        .iter()
        .map(|x| tape.constant(x.clone()))
        .collect();
    let y_sources: Vec<Var> = batch
        .y_sources
        .iter()
        .map(|y| tape.constant(y.clone()))
        .collect();
    let h_sources = x_sources
        .iter()
        .map(|&x| bound.encoder.forward(tape, x))
        .collect::<Result<Vec<_>>>()?;

    let (x_target, h_target) = if switches.mda {
        let x = tape.constant(batch.x_target.clone());
        let h = bound.encoder.forward(tape, x)?;
        (Some(x), Some(h))
    } else {
        (None, None)
    };

    let (weights, z_sources, z_target) = match (switches.awg, h_target) {
        (true, Some(ht)) => {
            let mut weights = Vec::with_capacity(h_sources.len());
            let mut z = Vec::with_capacity(h_sources.len());
            for &hs in &h_sources {
                let w = bound.gen_weights(tape, ht, hs)?;
                z.push(tape.ewmul(hs, w)?);
                weights.push(w);
            }
            let w_bar = bound.mean_weights(tape, &weights)?;
            let zt = tape.ewmul(ht, w_bar)?;
            (weights, z, Some(zt))
        }
        _ => (Vec::new(), h_sources.clone(), h_target),
    };

    let mut reco_pairs = Vec::with_capacity(z_sources.len());
    for (&z, &x) in z_sources.iter().zip(&x_sources) {
        reco_pairs.push((bound.decoder.forward(tape, z)?, x));
    }
    let reco_target = match (z_target, x_target) {
        (Some(z), Some(x)) => Some((bound.decoder.forward(tape, z)?, x)),
        _ => None,
    };
    let reco = losses::reco_loss(tape, &reco_pairs, reco_target)?;

    let ind = if switches.ind && !weights.is_empty() {
        Some(losses::ind_loss(tape, &weights)?)
    } else {
        None
    };

    let adv = match z_target {
        Some(zt) if switches.mda => {
            let couple = |tape: &mut Tape, z: Var| match coupling {
                Coupling::Reversed(lambda) => tape.grad_reverse(z, lambda),
                Coupling::Direct => z,
            };
            let mut d_sources = Vec::with_capacity(z_sources.len());
            for &z in &z_sources {
                let zr = couple(tape, z);
                d_sources.push(bound.discriminator.forward(tape, zr)?);
            }
            let zr = couple(tape, zt);
            let d_target = bound.discriminator.forward(tape, zr)?;
            Some(losses::adv_loss(tape, &d_sources, Some(d_target))?)
        }
        _ => None,
    };

    let probs = z_sources
        .iter()
        .map(|&z| bound.predictor.forward(tape, z))
        .collect::<Result<Vec<_>>>()?;
    let cls = losses::cls_loss(tape, &probs, &y_sources)?;

    let loss_vars = LossVars {
        reco,
        ind,
        adv,
        cls,
    };
    let total = losses::total_loss(tape, &loss_vars)?;
    Ok(StepGraph {
        bound,
        h_sources,
        h_target,
        weights,
        z_sources,
        z_target,
        losses: loss_vars,
        total,
    })
}

pub(crate) fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut x = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Splits a stratified fraction of each class off for monitoring.
fn split_holdout(domain: &LabeledDomain, frac: f64, seed: u64) -> (LabeledDomain, LabeledDomain) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..domain.n_samples())
            .filter(|&i| domain.labels[i] == class)
            .collect();
        idx.shuffle(&mut rng);
        let n_held = (idx.len() as f64 * frac).floor() as usize;
        held.extend_from_slice(&idx[..n_held]);
        train.extend_from_slice(&idx[n_held..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    (domain.select_samples(&train), domain.select_samples(&held))
}

/// Applies the configured upsampler to one source domain.
pub fn upsample(domain: &LabeledDomain, cfg: &TrainConfig, seed: u64) -> Result<LabeledDomain> {
    let out = match cfg.sampler {
        Upsampler::None => domain.clone(),
        Upsampler::Weight => {
            let (neg, pos) = domain.class_counts();
            weight_upsample(domain, 2 * neg.max(pos), seed)?
        }
        Upsampler::Smote => smote_upsample(domain, cfg.smote_k, seed)?.domain,
    };
    let (neg, pos) = out.class_counts();
    if neg == 0 || pos == 0 {
        return Err(Error::data(
            "a source domain is single-class after sampling",
        ));
    }
    Ok(out)
}

/// Sources after holdout and upsampling, plus the held-out rows.
pub fn prepare_sources(
    bundle: &DomainBundle,
    cfg: &TrainConfig,
) -> Result<(DomainBundle, Vec<LabeledDomain>)> {
    let mut held = Vec::new();
    let mut k = 0u64;
    let prepared = bundle.map_sources(|s| {
        let (train, hold) = if cfg.holdout > 0.0 {
            split_holdout(s, cfg.holdout, derive_seed(cfg.seed, 100 + k))
        } else {
            (s.clone(), s.select_samples(&[]))
        };
        held.push(hold);
        let out = upsample(&train, cfg, derive_seed(cfg.seed, 200 + k));
        k += 1;
        out
    })?;
    Ok((prepared, held))
}

/// Trains a fresh model.
pub fn train(bundle: &DomainBundle, cfg: &TrainConfig) -> Result<(ModelBundle, TrainHistory)> {
    cfg.check()?;
    let mut model = ModelBundle::init(&cfg.arch(bundle.genes().len()), cfg.seed)?;
    model.weighting = cfg.weighting();
    let history = fit(bundle, cfg, &mut model, 0, cfg.epochs)?;
    Ok((model, history))
}

/// Runs `epochs` epochs on `model`, numbering steps from `start_step`.
/// Optimizer moments start from zero.
pub fn fit(
    bundle: &DomainBundle,
    cfg: &TrainConfig,
    model: &mut ModelBundle,
    start_step: u64,
    epochs: usize,
) -> Result<TrainHistory> {
    cfg.check()?;
    if bundle.genes().len() != model.genes() {
        return Err(Error::shape(
            "train",
            (bundle.target().n_samples(), bundle.genes().len()),
            (bundle.target().n_samples(), model.genes()),
        ));
    }
    let (data, held) = prepare_sources(bundle, cfg)?;
    let switches = LossSwitches::from_config(cfg);
    let sizes: Vec<usize> = data
        .sources()
        .iter()
        .map(LabeledDomain::n_samples)
        .collect();
    let per_epoch = BatchPlan::new(
        &sizes,
        data.target().n_samples(),
        cfg.batch_size,
        cfg.seed,
        0,
    )?
    .len();
    let total_steps = (cfg.epochs * per_epoch) as u64;

    let mut adam = Adam::new(cfg.adam(), model.params().iter().map(|m| m.shape()));
    let mut history = TrainHistory {
        final_step: start_step,
        ..Default::default()
    };
    let start_epoch = start_step / per_epoch as u64;
    let mut step = start_step;
    for epoch in 0..epochs {
        let started = Instant::now();
        let plan = BatchPlan::new(
            &sizes,
            data.target().n_samples(),
            cfg.batch_size,
            cfg.seed,
            start_epoch + epoch as u64,
        )?;
        for idx in &plan.batches {
            let batch = data.tuple_batch(idx);
            let lambda = cfg.grl_at(step, total_steps);
            let mut tape = Tape::new();
            let graph = build_step(
                &mut tape,
                model,
                &batch,
                switches,
                Coupling::Reversed(lambda),
            )?;
            let parts = graph.losses.values(&tape, graph.total);
            if !parts.total.is_finite() {
                return Err(Error::Data(format!(
                    "loss became non-finite at step {step}"
                )));
            }
            tape.backward(graph.total)?;
            let grads = graph.bound.grads(&tape);
            adam.step(&mut model.params_mut(), &grads);
            history.steps.push(StepRecord { step, parts });
            step += 1;
        }
        history.epoch_seconds.push(started.elapsed().as_secs_f64());
        if let Some(auc) = holdout_auroc(model, &data, &held) {
            history.holdout_auroc.push(auc);
        }
    }
    history.final_step = step;
    Ok(history)
}

fn holdout_auroc(model: &ModelBundle, data: &DomainBundle, held: &[LabeledDomain]) -> Option<f64> {
    if held.iter().all(|h| h.n_samples() == 0) {
        return None;
    }
    let refs: Vec<Matrix> = data
        .sources()
        .iter()
        .map(|s| s.expr.values().clone())
        .collect();
    let reference = eval::Reference {
        sources: &refs,
        per_domain: eval::DEFAULT_REF_PER_DOMAIN,
        seed: 0,
    };
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for h in held.iter().filter(|h| h.n_samples() > 0) {
        scores.extend(eval::predict_target(model, h.expr.values(), Some(&reference)).ok()?);
        labels.extend_from_slice(&h.labels);
    }
    eval::auroc(&scores, &labels).ok()
}

/// Weighted embeddings of a tuple batch as formed during training:
/// (sources, target).
pub fn batch_features(model: &ModelBundle, batch: &TupleBatch) -> Result<(Vec<Matrix>, Matrix)> {
    let h_sources = batch
        .x_sources
        .iter()
        .map(|x| model::encode(model, x))
        .collect::<Result<Vec<_>>>()?;
    let h_target = model::encode(model, &batch.x_target)?;
    if !model.weighting {
        return Ok((h_sources, h_target));
    }
    let weights = h_sources
        .iter()
        .map(|h| model::gen_weights(model, &h_target, h))
        .collect::<Result<Vec<_>>>()?;
    let z_sources = h_sources
        .iter()
        .zip(&weights)
        .map(|(h, w)| model::apply_weights(h, w))
        .collect::<Result<Vec<_>>>()?;
    let z_target = model::apply_weights(&h_target, &model::mean_target_weight(&weights)?)?;
    Ok((z_sources, z_target))
}

/// Balanced accuracy of the discriminator on a mixed batch: the mean of its
/// accuracy on source rows (label 1) and on target rows (label 0), at
/// threshold 0.5. Chance level is 0.5.
pub fn discriminator_accuracy(model: &ModelBundle, batch: &TupleBatch) -> Result<f64> {
    let (z_sources, z_target) = batch_features(model, batch)?;
    let mut hits = 0usize;
    let mut rows = 0usize;
    for z in &z_sources {
        let d = model::discriminate(model, z)?;
        hits += d.as_slice().iter().filter(|&&p| p > 0.5).count();
        rows += d.rows();
    }
    let source_acc = hits as f64 / rows as f64;
    let d = model::discriminate(model, &z_target)?;
    let target_acc = d.as_slice().iter().filter(|&&p| p <= 0.5).count() as f64 / d.rows() as f64;
    Ok(0.5 * (source_acc + target_acc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("wo-mda".parse::<Variant>().unwrap(), Variant::NoMda);
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn variant_flags() {
        let base = TrainConfig::default();
        let full = Variant::Full.configure(&base);
        assert!(full.mda && full.ind && full.awg);
        let no_mda = Variant::NoMda.configure(&base);
        assert!(!no_mda.mda && !no_mda.ind);
        let no_ind = Variant::NoInd.configure(&base);
        assert!(no_ind.mda && !no_ind.ind && no_ind.awg);
        let no_awg = Variant::NoAwg.configure(&base);
        assert!(no_awg.mda && !no_awg.awg);
    }

    #[test]
    fn grl_schedule() {
        let cfg = TrainConfig {
            grl_warmup: 0.1,
            grl_lambda: 1.0,
            ..Default::default()
        };
        assert_eq!(cfg.grl_at(0, 100), 0.0);
        assert_eq!(cfg.grl_at(5, 100), 0.5);
        assert_eq!(cfg.grl_at(10, 100), 1.0);
        assert_eq!(cfg.grl_at(90, 100), 1.0);
        let constant = TrainConfig {
            grl_warmup: 0.0,
            grl_lambda: 0.7,
            ..Default::default()
        };
        assert_eq!(constant.grl_at(0, 100), 0.7);
    }

    #[test]
    fn validation_names_field() {
        let cfg = TrainConfig {
            learning_rate: -1.0,
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().0, "learning_rate");
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert_eq!(cfg.validate().unwrap_err().0, "epochs");
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }
}
