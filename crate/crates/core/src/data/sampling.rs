//! Minority-class upsampling for labeled source domains.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{ExpressionMatrix, LabeledDomain};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Upsampler {
    #[default]
    Weight,
    Smote,
    None,
}

fn class_members(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        out[usize::from(l)].push(i);
    }
    out
}

fn require_both_classes(domain: &LabeledDomain) -> Result<[Vec<usize>; 2]> {
    let members = class_members(&domain.labels);
    if members.iter().any(Vec::is_empty) {
        return Err(Error::data(
            "upsampling needs both classes present; the domain is single-class",
        ));
    }
    Ok(members)
}

/// Per-sample draw probabilities giving each class total mass 1/2, split
/// uniformly within the class.
pub fn class_balanced_probabilities(labels: &[u8]) -> Result<Vec<f64>> {
    let members = class_members(labels);
    if members.iter().any(Vec::is_empty) {
        return Err(Error::data("class-balanced weights need both classes"));
    }
    let share = [0.5 / members[0].len() as f64, 0.5 / members[1].len() as f64];
    Ok(labels.iter().map(|&l| share[usize::from(l)]).collect())
}

/// `n` independent draws with replacement from `probs`.
pub fn weighted_draws<R: Rng>(probs: &[f64], n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(probs).map_err(|e| Error::data(e.to_string()))?;
    Ok((0..n).map(|_| dist.sample(rng)).collect())
}

/// Class-balanced resampling with replacement.
///
/// Every output row is drawn with the class-balanced probabilities of
/// [`class_balanced_probabilities`]; the class of each draw is stratified so
/// the output holds exactly `ceil(out_n / 2)` rows of each class. Repeated
/// draws get `~{draw}` appended to their sample id.
pub fn weight_upsample(domain: &LabeledDomain, out_n: usize, seed: u64) -> Result<LabeledDomain> {
    let members = require_both_classes(domain)?;
    let per_class = out_n.div_ceil(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = Vec::with_capacity(2 * per_class);
    for class in &members {
        for _ in 0..per_class {
            picks.push(class[rng.random_range(0..class.len())]);
        }
    }
    picks.shuffle(&mut rng);

    let src = &domain.expr;
    let ids = picks
        .iter()
        .enumerate()
        .map(|(draw, &i)| format!("{}~{draw}", src.sample_ids()[i]))
        .collect();
    let expr = ExpressionMatrix::new(ids, src.genes().to_vec(), src.values().select_rows(&picks))?;
    let labels = picks.iter().map(|&i| domain.labels[i]).collect();
    LabeledDomain::new(expr, labels)
}

/// Provenance of one SMOTE row: `parent + lambda * (neighbor - parent)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticRow {
    pub parent: usize,
    pub neighbor: usize,
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoteOutput {
    /// Original rows followed by the synthetic minority rows.
    pub domain: LabeledDomain,
    pub synthetic: Vec<SyntheticRow>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn interpolate<'a>(a: &'a [f64], b: &'a [f64], lambda: f64) -> impl Iterator<Item = f64> + 'a {
    a.iter().zip(b).map(move |(&x, &y)| x + lambda * (y - x))
}

/// SMOTE: adds interpolated minority rows until both classes are equal.
pub fn smote_upsample(domain: &LabeledDomain, k: usize, seed: u64) -> Result<SmoteOutput> {
    let members = require_both_classes(domain)?;
    let (minority_label, majority_label) = if members[1].len() < members[0].len() {
        (1u8, 0u8)
    } else {
        (0u8, 1u8)
    };
    let minority = &members[usize::from(minority_label)];
    let needed = members[usize::from(majority_label)].len() - minority.len();
    if needed == 0 {
        return Ok(SmoteOutput {
            domain: domain.clone(),
            synthetic: Vec::new(),
        });
    }
    if minority.len() < 2 {
        return Err(Error::data(
            "SMOTE needs at least two minority samples; use the weight sampler instead",
        ));
    }
    let k = k.clamp(1, minority.len() - 1);
    let x = domain.expr.values();

    // k nearest minority neighbours of each minority sample, ties by index
    let neighbours: Vec<Vec<usize>> = minority
        .iter()
        .map(|&i| {
            let mut d: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (sq_dist(x.row(i), x.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut synthetic = Vec::with_capacity(needed);
    let mut rows = Vec::with_capacity(needed * x.cols());
    for _ in 0..needed {
        let m = rng.random_range(0..minority.len());
        let parent = minority[m];
        let neighbor = neighbours[m][rng.random_range(0..k)];
        let lambda: f64 = rng.random();
        rows.extend(interpolate(x.row(parent), x.row(neighbor), lambda));
        synthetic.push(SyntheticRow {
            parent,
            neighbor,
            lambda,
        });
    }

    let extra = Matrix::from_vec(needed, x.cols(), rows)?;
    let values = Matrix::vstack(&[x, &extra])?;
    let mut ids = domain.expr.sample_ids().to_vec();
    ids.extend((0..needed).map(|j| format!("smote~{j}")));
    let mut labels = domain.labels.clone();
    labels.extend(std::iter::repeat_n(minority_label, needed));
    let expr = ExpressionMatrix::new(ids, domain.expr.genes().to_vec(), values)?;
    Ok(SmoteOutput {
        domain: LabeledDomain::new(expr, labels)?,
        synthetic,
    })
}
