//! Target-domain scoring, ranking metrics and CSV/JSON exports.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::model::{self, ModelBundle};
use crate::numerics::Matrix;

/// Default number of reference samples drawn per source domain.
pub const DEFAULT_REF_PER_DOMAIN: usize = 128;

fn class_counts(labels: &[u8]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    (pos, labels.len() - pos)
}

fn check_lengths(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::data(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::data("scores contain NaN"));
    }
    Ok(())
}

/// Area under the ROC curve as the Mann–Whitney statistic; tied
/// positive/negative pairs count ½.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::data("AUROC needs both classes"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of positive ranks with ties given their average rank (1-based)
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Step-wise area under the precision–recall curve (average precision),
/// sweeping thresholds in descending score order with ties as one step.
pub fn aupr(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores, labels)?;
    let (n_pos, _) = class_counts(labels);
    if n_pos == 0 {
        return Err(Error::data("AUPR needs at least one positive"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / n_pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(area)
}

/// Reference source samples used to form target weights at inference.
#[derive(Clone, Copy, Debug)]
pub struct Reference<'a> {
    pub sources: &'a [Matrix],
    /// Samples drawn per source domain; capped at the domain size.
    pub per_domain: usize,
    pub seed: u64,
}

fn reference_embeddings(model: &ModelBundle, refs: &Reference<'_>) -> Result<Matrix> {
    if refs.sources.is_empty() {
        return Err(Error::data(
            "weighted inference needs at least one source reference",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(refs.seed);
    let mut parts = Vec::with_capacity(refs.sources.len());
    for src in refs.sources {
        let mut idx: Vec<usize> = (0..src.rows()).collect();
        idx.shuffle(&mut rng);
        idx.truncate(refs.per_domain.max(1));
        idx.sort_unstable();
        parts.push(model::encode(model, &src.select_rows(&idx))?);
    }
    Matrix::vstack(&parts.iter().collect::<Vec<_>>())
}

/// Embeddings used for prediction: h_T ⊙ w̄ where w̄ averages the generator
/// weights against every reference sample, or h_T itself when the model
/// does not use the weight generator.
pub fn target_features(
    model: &ModelBundle,
    target: &Matrix,
    refs: Option<&Reference<'_>>,
) -> Result<Matrix> {
    let h = model::encode(model, target)?;
    let refs = match (model.weighting, refs) {
        (false, _) => return Ok(h),
        (true, Some(r)) => r,
        (true, None) => {
            return Err(Error::data(
                "this model weights embeddings; source references are required",
            ))
        }
    };
    let h_ref = reference_embeddings(model, refs)?;
    let d = h.cols();
    let mut z = Matrix::zeros(h.rows(), d);
    let mut diff = Matrix::zeros(h_ref.rows(), d);
    for i in 0..h.rows() {
        let hi = h.row(i);
        for (r, out) in diff.as_mut_slice().chunks_mut(d).enumerate() {
            for ((o, &a), &b) in out.iter_mut().zip(hi).zip(h_ref.row(r)) {
                *o = (a - b).abs();
            }
        }
        let w_bar = model.generator.forward(&diff)?.col_means();
        for (j, (&hv, &wv)) in hi.iter().zip(w_bar.as_slice()).enumerate() {
            z.set(i, j, hv * wv);
        }
    }
    Ok(z)
}

/// Sensitivity probability for every target row.
pub fn predict_target(
    model: &ModelBundle,
    target: &Matrix,
    refs: Option<&Reference<'_>>,
) -> Result<Vec<f64>> {
    let z = target_features(model, target, refs)?;
    Ok(model::predict(model, &z)?.into_vec())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auroc: f64,
    pub aupr: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    #[serde(skip)]
    pub scores: Vec<f64>,
}

impl MetricsReport {
    pub fn compute(scores: &[f64], labels: &[u8]) -> Result<Self> {
        let (n_pos, n_neg) = class_counts(labels);
        Ok(MetricsReport {
            auroc: auroc(scores, labels)?,
            aupr: aupr(scores, labels)?,
            n_pos,
            n_neg,
            scores: scores.to_vec(),
        })
    }
}

/// Hex SHA-256 prefix identifying a serialized configuration.
pub fn config_hash(config_json: &str) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize, Deserialize)]
struct MetricsJson<'a> {
    auroc: f64,
    aupr: f64,
    n_pos: usize,
    n_neg: usize,
    config_hash: &'a str,
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport, config_hash: &str) -> Result<()> {
    let doc = MetricsJson {
        auroc: report.auroc,
        aupr: report.aupr,
        n_pos: report.n_pos,
        n_neg: report.n_neg,
        config_hash,
    };
    std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(())
}

pub fn write_scores(
    path: &Path,
    ids: &[String],
    scores: &[f64],
    labels: Option<&[u8]>,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(crate::data::csv_error)?;
    if labels.is_some() {
        w.write_record(["sample_id", "score", "label"])
    } else {
        w.write_record(["sample_id", "score"])
    }
    .map_err(crate::data::csv_error)?;
    for (i, (id, s)) in ids.iter().zip(scores).enumerate() {
        let s = format!("{s:?}");
        match labels {
            Some(l) => w.write_record([id.as_str(), &s, &l[i].to_string()]),
            None => w.write_record([id.as_str(), &s]),
        }
        .map_err(crate::data::csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Sample ids, scores and the optional label column of a scores CSV.
pub type ScoresTable = (Vec<String>, Vec<f64>, Option<Vec<u8>>);

/// Reads a scores CSV; the label column is returned when present.
pub fn read_scores(path: &Path) -> Result<ScoresTable> {
    let mut rdr = csv::Reader::from_path(path).map_err(crate::data::csv_error)?;
    let has_label = rdr
        .headers()
        .map_err(crate::data::csv_error)?
        .iter()
        .any(|h| h == "label");
    let (mut ids, mut scores, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(crate::data::csv_error)?;
        let bad = |msg: String| Error::Parse {
            path: path.display().to_string(),
            line: n + 2,
            msg,
        };
        ids.push(rec.get(0).unwrap_or_default().to_string());
        let s = rec.get(1).unwrap_or_default();
        scores.push(s.parse().map_err(|_| bad(format!("bad score {s:?}")))?);
        if has_label {
            let l = rec.get(2).unwrap_or_default();
            labels.push(l.parse().map_err(|_| bad(format!("bad label {l:?}")))?);
        }
    }
    Ok((ids, scores, has_label.then_some(labels)))
}

/// Writes `sample_id, e0..e{d-1}`: the encoder embedding, or the weighted
/// embedding used by the predictor when `weighted` is set.
pub fn export_embeddings(
    model: &ModelBundle,
    expr: &ExpressionMatrix,
    weighted: bool,
    refs: Option<&Reference<'_>>,
    path: &Path,
) -> Result<Matrix> {
    let emb = if weighted {
        target_features(model, expr.values(), refs)?
    } else {
        model::encode(model, expr.values())?
    };
    let mut w = csv::Writer::from_path(path).map_err(crate::data::csv_error)?;
    let mut header = vec!["sample_id".to_string()];
    header.extend((0..emb.cols()).map(|j| format!("e{j}")));
    w.write_record(&header).map_err(crate::data::csv_error)?;
    for (i, id) in expr.sample_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(emb.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(crate::data::csv_error)?;
    }
    w.flush()?;
    Ok(emb)
}
