use std::collections::{HashMap, HashSet};

use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::ExpressionMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionMethod {
    Hvg,
    Deg,
    FileList,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneSelection {
    pub method: SelectionMethod,
    pub genes: Vec<String>,
    pub params: Vec<(String, f64)>,
}

/// Restricts every matrix to the genes present in all of them, ordered as
/// in the first matrix.
pub fn align_genes(matrices: &[ExpressionMatrix]) -> Result<Vec<ExpressionMatrix>> {
    let Some(first) = matrices.first() else {
        return Err(Error::data("align_genes needs at least one matrix"));
    };
    let rest: Vec<HashSet<&str>> = matrices[1..]
        .iter()
        .map(|m| m.genes().iter().map(String::as_str).collect())
        .collect();
    let common: Vec<String> = first
        .genes()
        .iter()
        .filter(|g| rest.iter().all(|s| s.contains(g.as_str())))
        .cloned()
        .collect();
    if common.is_empty() {
        return Err(Error::data("no genes shared by all matrices"));
    }
    matrices
        .iter()
        .map(|m| restrict_genes(m, &common))
        .collect()
}

/// Columns of `expr` for `genes`, in that order.
pub fn restrict_genes(expr: &ExpressionMatrix, genes: &[String]) -> Result<ExpressionMatrix> {
    if genes.is_empty() {
        return Err(Error::data("gene selection is empty"));
    }
    let pos: HashMap<&str, usize> = expr
        .genes()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();
    let cols = genes
        .iter()
        .map(|g| {
            pos.get(g.as_str())
                .copied()
                .ok_or_else(|| Error::data(format!("gene {g:?} not present")))
        })
        .collect::<Result<Vec<_>>>()?;
    ExpressionMatrix::new(
        expr.sample_ids().to_vec(),
        genes.to_vec(),
        expr.values().select_cols(&cols),
    )
}

fn column_stats(m: &Matrix) -> Vec<(f64, f64)> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| {
            let mean = (0..m.rows()).map(|i| m.get(i, j)).sum::<f64>() / n;
            let var = if m.rows() > 1 {
                (0..m.rows())
                    .map(|i| (m.get(i, j) - mean).powi(2))
                    .sum::<f64>()
                    / (n - 1.0)
            } else {
                0.0
            };
            (mean, var)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HvgParams {
    pub n_top: usize,
    pub bins: usize,
}

impl HvgParams {
    pub fn top(n_top: usize) -> Self {
        HvgParams { n_top, bins: 20 }
    }
}

/// Highly variable genes by binned normalized dispersion.
///
/// Dispersion is variance / mean over samples. Genes with zero mean or zero
/// variance are never eligible. Eligible genes are split into equal-frequency
/// bins by mean, dispersions are z-scored within each bin, and the top
/// `n_top` z-scores win (ties by gene name).
pub fn select_hvg(expr: &ExpressionMatrix, params: HvgParams) -> GeneSelection {
    let stats = column_stats(expr.values());
    let genes = expr.genes();
    let mut eligible: Vec<(usize, f64, f64)> = stats
        .iter()
        .enumerate()
        .filter(|(_, &(mean, var))| mean != 0.0 && var > 0.0)
        .map(|(j, &(mean, var))| (j, mean, var / mean))
        .collect();
    eligible.sort_by(|a, b| {
        a.1.total_cmp(&b.1)
            .then_with(|| genes[a.0].cmp(&genes[b.0]))
    });

    let n = eligible.len();
    let bins = params.bins.max(1);
    let mut z = vec![0.0; n];
    let bin_of = |rank: usize| rank * bins / n.max(1);
    let mut start = 0;
    while start < n {
        let b = bin_of(start);
        let mut end = start;
        while end < n && bin_of(end) == b {
            end += 1;
        }
        let disp: Vec<f64> = eligible[start..end].iter().map(|e| e.2).collect();
        let mu = disp.iter().sum::<f64>() / disp.len() as f64;
        let sd = (disp.iter().map(|d| (d - mu).powi(2)).sum::<f64>() / disp.len() as f64).sqrt();
        for (k, d) in disp.iter().enumerate() {
            z[start + k] = if sd > 0.0 { (d - mu) / sd } else { 0.0 };
        }
        start = end;
    }

    let mut ranked: Vec<(usize, f64)> = eligible.iter().zip(&z).map(|(e, &z)| (e.0, z)).collect();
    ranked.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| genes[a.0].cmp(&genes[b.0]))
    });
    ranked.truncate(params.n_top);
    GeneSelection {
        method: SelectionMethod::Hvg,
        genes: ranked.into_iter().map(|(j, _)| genes[j].clone()).collect(),
        params: vec![
            ("n_top".into(), params.n_top as f64),
            ("bins".into(), bins as f64),
        ],
    }
}

const DEG_EPS: f64 = 1e-9;

/// Per-gene Welch t-test p-value and log2 fold change of `a` over `b`.
pub(crate) fn welch(a: &Matrix, b: &Matrix) -> Vec<(f64, f64)> {
    let sa = column_stats(a);
    let sb = column_stats(b);
    let (na, nb) = (a.rows() as f64, b.rows() as f64);
    sa.iter()
        .zip(&sb)
        .map(|(&(ma, va), &(mb, vb))| {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = (qa + qb).max(DEG_EPS);
            let t = (ma - mb) / se2.sqrt();
            let denom = qa * qa / (na - 1.0) + qb * qb / (nb - 1.0);
            let df = if denom > 0.0 {
                (qa + qb).powi(2) / denom
            } else {
                na + nb - 2.0
            };
            let p = if t == 0.0 {
                1.0
            } else {
                let dist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("valid t distribution");
                (2.0 * dist.sf(t.abs())).min(1.0)
            };
            let lfc = ((ma + DEG_EPS) / (mb + DEG_EPS)).log2();
            (p, lfc)
        })
        .collect()
}

/// Genes with |log2 fold change| > `lfc_min` and Welch p < `p_max`.
/// Genes whose fold change is undefined (non-positive mean ratio) are skipped.
pub fn select_deg(
    group_a: &ExpressionMatrix,
    group_b: &ExpressionMatrix,
    lfc_min: f64,
    p_max: f64,
) -> Result<GeneSelection> {
    if group_a.genes() != group_b.genes() {
        return Err(Error::data("DEG groups must share an aligned gene list"));
    }
    if group_a.n_samples() < 2 || group_b.n_samples() < 2 {
        return Err(Error::data("DEG groups need at least two samples each"));
    }
    let stats = welch(group_a.values(), group_b.values());
    let genes = group_a
        .genes()
        .iter()
        .zip(&stats)
        .filter(|(_, &(p, lfc))| lfc.is_finite() && lfc.abs() > lfc_min && p < p_max)
        .map(|(g, _)| g.clone())
        .collect();
    Ok(GeneSelection {
        method: SelectionMethod::Deg,
        genes,
        params: vec![("lfc_min".into(), lfc_min), ("p_max".into(), p_max)],
    })
}

/// Drops genes whose fraction of exact zeros, pooled over all matrices,
/// exceeds `max_zero_frac`.
pub fn filter_zero_inflated(
    matrices: &[ExpressionMatrix],
    max_zero_frac: f64,
) -> Result<Vec<ExpressionMatrix>> {
    let Some(first) = matrices.first() else {
        return Ok(Vec::new());
    };
    let total: usize = matrices.iter().map(ExpressionMatrix::n_samples).sum();
    let keep: Vec<String> = first
        .genes()
        .iter()
        .enumerate()
        .filter(|&(j, _)| {
            let zeros: usize = matrices
                .iter()
                .map(|m| {
                    (0..m.n_samples())
                        .filter(|&i| m.values().get(i, j) == 0.0)
                        .count()
                })
                .sum();
            (zeros as f64) <= max_zero_frac * total as f64
        })
        .map(|(_, g)| g.clone())
        .collect();
    matrices.iter().map(|m| restrict_genes(m, &keep)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathwayActivity {
    pub matrix: ExpressionMatrix,
    /// Names of sets that shared no gene with the input.
    pub dropped: Vec<String>,
}

/// Per-gene z-scores across samples, averaged over each set's member genes.
pub fn pathway_activity(
    expr: &ExpressionMatrix,
    gene_sets: &[(String, Vec<String>)],
) -> Result<PathwayActivity> {
    let stats = column_stats(expr.values());
    let n = expr.n_samples() as f64;
    let pos: HashMap<&str, usize> = expr
        .genes()
        .iter()
        .enumerate()
        .map(|(i, g)| (g.as_str(), i))
        .collect();

    let mut names = Vec::new();
    let mut members = Vec::new();
    let mut dropped = Vec::new();
    for (name, genes) in gene_sets {
        let mut cols: Vec<usize> = genes
            .iter()
            .filter_map(|g| pos.get(g.as_str()).copied())
            .collect();
        cols.sort_unstable();
        cols.dedup();
        if cols.is_empty() {
            log::warn!("gene set {name:?} shares no genes with the expression matrix; dropped");
            dropped.push(name.clone());
        } else {
            names.push(name.clone());
            members.push(cols);
        }
    }

    let values = expr.values();
    let mut out = Matrix::zeros(expr.n_samples(), names.len());
    for (p, cols) in members.iter().enumerate() {
        for i in 0..expr.n_samples() {
            let mut acc = 0.0;
            for &j in cols {
                let (mean, var) = stats[j];
                // population sd
                let sd = (var * (n - 1.0) / n).sqrt();
                if sd > 0.0 {
                    acc += (values.get(i, j) - mean) / sd;
                }
            }
            out.set(i, p, acc / cols.len() as f64);
        }
    }
    Ok(PathwayActivity {
        matrix: ExpressionMatrix::new(expr.sample_ids().to_vec(), names, out)?,
        dropped,
    })
}
