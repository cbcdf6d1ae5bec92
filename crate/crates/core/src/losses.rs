//! Reconstruction, weight-independence, adversarial and classification
//! losses, and their unweighted sum.
//!
//! Every loss is a mini-batch estimate: per-domain sums over samples become
//! means over the batch rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Tape, Var};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub reco: f64,
    pub ind: f64,
    pub adv: f64,
    pub cls: f64,
    pub total: f64,
}

/// Loss nodes of one batch. Disabled terms are `None`.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub reco: Var,
    pub ind: Option<Var>,
    pub adv: Option<Var>,
    pub cls: Var,
}

impl LossVars {
    pub fn values(&self, tape: &Tape, total: Var) -> LossParts {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        LossParts {
            reco: tape.value(self.reco).item(),
            ind: get(self.ind),
            adv: get(self.adv),
            cls: tape.value(self.cls).item(),
            total: tape.value(total).item(),
        }
    }
}

fn batch_sq_error(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let rows = tape.value(pred).rows();
    let diff = tape.sub(pred, target)?;
    let sq = tape.ewmul(diff, diff)?;
    let total = tape.sum_all(sq);
    Ok(tape.scale(total, 1.0 / rows as f64))
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    let (&first, rest) = vars
        .split_first()
        .ok_or_else(|| Error::Contract("empty loss sum".into()))?;
    rest.iter().try_fold(first, |acc, &v| tape.add(acc, v))
}

/// Σ_k mean_i ‖x̂_i^{S_k} − x_i^{S_k}‖² + mean_i ‖x̂_i^T − x_i^T‖².
///
/// The target term is omitted when `target` is `None`.
pub fn reco_loss(
    tape: &mut Tape,
    sources: &[(Var, Var)],
    target: Option<(Var, Var)>,
) -> Result<Var> {
    let mut terms = Vec::with_capacity(sources.len() + 1);
    for &(decoded, x) in sources.iter().chain(target.as_ref()) {
        terms.push(batch_sq_error(tape, decoded, x)?);
    }
    sum_vars(tape, &terms)
}

/// Mean over the batch of ½‖W Wᵀ − I_K‖_F², where row i of every input
/// contributes one row of the K×d matrix W for tuple i.
pub fn ind_loss(tape: &mut Tape, weights: &[Var]) -> Result<Var> {
    let k = weights.len();
    if k == 0 {
        return Err(Error::Contract(
            "ind_loss needs at least one weight matrix".into(),
        ));
    }
    let mut terms = Vec::with_capacity(k * (k + 1) / 2);
    for a in 0..k {
        for b in a..k {
            let prod = tape.ewmul(weights[a], weights[b])?;
            let dot = tape.sum_rows(prod);
            let entry = if a == b {
                tape.add_scalar(dot, -1.0)
            } else {
                dot
            };
            let sq = tape.ewmul(entry, entry)?;
            // off-diagonal entries appear twice in the symmetric K×K matrix
            terms.push(if a == b { sq } else { tape.scale(sq, 2.0) });
        }
    }
    let per_tuple = sum_vars(tape, &terms)?;
    let mean = tape.mean_all(per_tuple);
    Ok(tape.scale(mean, 0.5))
}

/// Binary cross-entropy of the discriminator, averaged over all
/// (K + 1)·B items; source rows carry domain label 1, target rows 0.
pub fn adv_loss(tape: &mut Tape, d_sources: &[Var], d_target: Option<Var>) -> Result<Var> {
    let mut sums = Vec::with_capacity(d_sources.len() + 1);
    let mut count = 0usize;
    for &p in d_sources {
        count += tape.value(p).as_slice().len();
        let c = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
        let l = tape.ln(c);
        sums.push(tape.sum_all(l));
    }
    if let Some(p) = d_target {
        count += tape.value(p).as_slice().len();
        let c = tape.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
        let neg = tape.scale(c, -1.0);
        let q = tape.add_scalar(neg, 1.0);
        let l = tape.ln(q);
        sums.push(tape.sum_all(l));
    }
    if count == 0 {
        return Err(Error::Contract("adv_loss needs at least one item".into()));
    }
    let total = sum_vars(tape, &sums)?;
    Ok(tape.scale(total, -1.0 / count as f64))
}

/// Σ_k mean_i (y_i^{S_k} − P(z_i^{S_k}))².
pub fn cls_loss(tape: &mut Tape, probs: &[Var], labels: &[Var]) -> Result<Var> {
    if probs.len() != labels.len() {
        return Err(Error::Contract(format!(
            "cls_loss: {} prediction columns but {} label columns",
            probs.len(),
            labels.len()
        )));
    }
    let terms = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| batch_sq_error(tape, p, y))
        .collect::<Result<Vec<_>>>()?;
    sum_vars(tape, &terms)
}

/// reco + ind + adv + cls. Removed terms enter as an exact 0.
pub fn total_loss(tape: &mut Tape, parts: &LossVars) -> Result<Var> {
    let zero = tape.constant(Matrix::scalar(0.0));
    let a = tape.add(parts.reco, parts.ind.unwrap_or(zero))?;
    let b = tape.add(a, parts.adv.unwrap_or(zero))?;
    tape.add(b, parts.cls)
}
