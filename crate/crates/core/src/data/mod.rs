//! Expression data: ingestion, labeling, gene selection, class rebalancing
//! and tuple batching.

mod batches;
mod genes;
mod io;
mod labels;
mod sampling;

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use batches::{BatchPlan, TupleBatch, TupleIndices};
pub use genes::{
    align_genes, filter_zero_inflated, pathway_activity, restrict_genes, select_deg, select_hvg,
    GeneSelection, HvgParams, PathwayActivity, SelectionMethod,
};
pub(crate) use io::csv_io as csv_error;
pub use io::{
    load_expression, load_gene_list, load_gene_sets, load_labels, write_expression, write_labels,
    Format, LabelColumn, LabelTable,
};
pub use labels::binarize_ic50;
pub use sampling::{
    class_balanced_probabilities, smote_upsample, weight_upsample, weighted_draws, SmoteOutput,
    SyntheticRow, Upsampler,
};

/// Samples × genes expression values with identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpressionMatrix {
    sample_ids: Vec<String>,
    genes: Vec<String>,
    values: Matrix,
}

fn ensure_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(names.len());
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(Error::data(format!("duplicate {what} {n:?}")));
        }
    }
    Ok(())
}

impl ExpressionMatrix {
    pub fn new(sample_ids: Vec<String>, genes: Vec<String>, values: Matrix) -> Result<Self> {
        if values.shape() != (sample_ids.len(), genes.len()) {
            return Err(Error::shape(
                "expression matrix",
                values.shape(),
                (sample_ids.len(), genes.len()),
            ));
        }
        ensure_unique(&sample_ids, "sample id")?;
        ensure_unique(&genes, "gene name")?;
        Ok(ExpressionMatrix {
            sample_ids,
            genes,
            values,
        })
    }

    /// Matrix with generated ids `{prefix}{i}` and genes `g{j}`.
    pub fn with_generated_ids(prefix: &str, values: Matrix) -> Self {
        let sample_ids = (0..values.rows()).map(|i| format!("{prefix}{i}")).collect();
        let genes = (0..values.cols()).map(|j| format!("g{j}")).collect();
        ExpressionMatrix {
            sample_ids,
            genes,
            values,
        }
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn genes(&self) -> &[String] {
        &self.genes
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_samples(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn n_genes(&self) -> usize {
        self.genes.len()
    }

    pub fn select_samples(&self, idx: &[usize]) -> ExpressionMatrix {
        ExpressionMatrix {
            sample_ids: idx.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            genes: self.genes.clone(),
            values: self.values.select_rows(idx),
        }
    }
}

/// 1 = sensitive, 0 = resistant.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDomain {
    pub expr: ExpressionMatrix,
    pub labels: Vec<u8>,
}

impl LabeledDomain {
    pub fn new(expr: ExpressionMatrix, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != expr.n_samples() {
            return Err(Error::data(format!(
                "{} labels for {} samples",
                labels.len(),
                expr.n_samples()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::data(format!("label {bad} is not binary")));
        }
        Ok(LabeledDomain { expr, labels })
    }

    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    /// (resistant, sensitive) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn select_samples(&self, idx: &[usize]) -> LabeledDomain {
        LabeledDomain {
            expr: self.expr.select_samples(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// K labeled sources and one unlabeled target over one shared gene list.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBundle {
    sources: Vec<LabeledDomain>,
    target: ExpressionMatrix,
}

impl DomainBundle {
    pub fn new(sources: Vec<LabeledDomain>, target: ExpressionMatrix) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::data("at least one source domain is required"));
        }
        for (k, s) in sources.iter().enumerate() {
            if s.expr.genes() != target.genes() {
                return Err(Error::data(format!(
                    "source {k} gene list differs from the target; align genes first"
                )));
            }
            if s.n_samples() == 0 {
                return Err(Error::data(format!("source {k} is empty")));
            }
        }
        if target.n_samples() == 0 {
            return Err(Error::data("target domain is empty"));
        }
        Ok(DomainBundle { sources, target })
    }

    pub fn sources(&self) -> &[LabeledDomain] {
        &self.sources
    }

    pub fn target(&self) -> &ExpressionMatrix {
        &self.target
    }

    pub fn genes(&self) -> &[String] {
        self.target.genes()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    /// Bundle restricted to the first `k` sources.
    pub fn take_sources(&self, k: usize) -> Result<DomainBundle> {
        if k == 0 || k > self.sources.len() {
            return Err(Error::data(format!(
                "requested {k} sources, bundle has {}",
                self.sources.len()
            )));
        }
        DomainBundle::new(self.sources[..k].to_vec(), self.target.clone())
    }

    pub fn map_sources(
        &self,
        f: impl FnMut(&LabeledDomain) -> Result<LabeledDomain>,
    ) -> Result<DomainBundle> {
        let sources = self.sources.iter().map(f).collect::<Result<Vec<_>>>()?;
        DomainBundle::new(sources, self.target.clone())
    }

    pub fn tuple_batch(&self, idx: &TupleIndices) -> TupleBatch {
        let x_sources = self
            .sources
            .iter()
            .zip(&idx.sources)
            .map(|(s, i)| s.expr.values().select_rows(i))
            .collect();
        let y_sources = self
            .sources
            .iter()
            .zip(&idx.sources)
            .map(|(s, i)| {
                let y: Vec<f64> = i.iter().map(|&j| f64::from(s.labels[j])).collect();
                Matrix::column(&y)
            })
            .collect();
        TupleBatch {
            x_sources,
            y_sources,
            x_target: self.target.values().select_rows(&idx.target),
        }
    }
}
