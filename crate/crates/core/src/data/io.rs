use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

use super::{binarize_ic50, ExpressionMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Tsv,
}

impl Format {
    /// `.tsv` and `.txt` are tab separated, anything else is CSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("tsv") || e.eq_ignore_ascii_case("txt") => {
                Format::Tsv
            }
            _ => Format::Csv,
        }
    }

    fn delimiter(self) -> u8 {
        match self {
            Format::Csv => b',',
            Format::Tsv => b'\t',
        }
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn reader(path: &Path, format: Format) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(format.delimiter())
        .from_reader(file))
}

fn record_line(rec: &csv::StringRecord, fallback: usize) -> usize {
    rec.position().map_or(fallback, |p| p.line() as usize)
}

/// Reads a samples × genes table. The first header cell is blank or
/// `sample`; each following row is a sample id then one value per gene.
pub fn load_expression(path: &Path, format: Format) -> Result<ExpressionMatrix> {
    let mut rdr = reader(path, format)?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(path, 1, e.to_string()))?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    let first = header.get(0).unwrap_or("").trim();
    if !(first.is_empty()
        || first.eq_ignore_ascii_case("sample")
        || first.eq_ignore_ascii_case("sample_id"))
    {
        return Err(parse_err(
            path,
            1,
            format!("first header cell must be blank or \"sample\", found {first:?}"),
        ));
    }
    let genes: Vec<String> = header
        .iter()
        .skip(1)
        .map(|g| g.trim().to_string())
        .collect();
    if genes.is_empty() {
        return Err(parse_err(path, 1, "no gene columns"));
    }

    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashMap::new();
    for (n, rec) in records.enumerate() {
        let rec = rec.map_err(|e| parse_err(path, n + 2, e.to_string()))?;
        let line = record_line(&rec, n + 2);
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != genes.len() + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} cells, found {}", genes.len() + 1, rec.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if let Some(prev) = seen.insert(id.clone(), line) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate sample id {id:?} (first seen on line {prev})"),
            ));
        }
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(parse_err(
                    path,
                    line,
                    format!("empty cell for gene {}", genes[j]),
                ));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric value {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value {cell:?}")));
            }
            values.push(v);
        }
        ids.push(id);
    }
    let rows = ids.len();
    let m = Matrix::from_vec(rows, genes.len(), values)?;
    ExpressionMatrix::new(ids, genes, m).map_err(|e| parse_err(path, 1, e.to_string()))
}

pub fn write_expression(path: &Path, expr: &ExpressionMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(Format::from_path(path).delimiter())
        .from_path(path)
        .map_err(csv_io)?;
    let mut header = vec!["sample".to_string()];
    header.extend(expr.genes().iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    for (i, id) in expr.sample_ids().iter().enumerate() {
        let mut row = vec![id.clone()];
        row.extend(expr.values().row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::data(format!("{other:?}")),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Label,
    Ic50,
}

/// Contents of a `sample_id,label` or `sample_id,ic50` file.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelTable {
    pub column: LabelColumn,
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl LabelTable {
    /// Binary labels in the row order of `expr`. IC50 tables are
    /// binarized against the mean over every row of the table.
    pub fn labels_for(&self, expr: &ExpressionMatrix) -> Result<Vec<u8>> {
        let binary: Vec<u8> = match self.column {
            LabelColumn::Label => self.values.iter().map(|&v| v as u8).collect(),
            LabelColumn::Ic50 => binarize_ic50(&self.values)?,
        };
        let by_id: HashMap<&str, u8> = self
            .ids
            .iter()
            .map(String::as_str)
            .zip(binary.iter().copied())
            .collect();
        expr.sample_ids()
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::data(format!("no label for sample {id:?}")))
            })
            .collect()
    }
}

pub fn load_labels(path: &Path) -> Result<LabelTable> {
    let mut rdr = reader(path, Format::from_path(path))?;
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(path, 1, e.to_string()))?,
        None => return Err(parse_err(path, 1, "empty file")),
    };
    if header.len() != 2 {
        return Err(parse_err(
            path,
            1,
            "expected two columns: sample_id and label or ic50",
        ));
    }
    let column = match header[1].trim().to_ascii_lowercase().as_str() {
        "label" => LabelColumn::Label,
        "ic50" => LabelColumn::Ic50,
        other => {
            return Err(parse_err(
                path,
                1,
                format!("second column must be \"label\" or \"ic50\", found {other:?}"),
            ))
        }
    };
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut seen = HashMap::new();
    for (n, rec) in records.enumerate() {
        let rec = rec.map_err(|e| parse_err(path, n + 2, e.to_string()))?;
        let line = record_line(&rec, n + 2);
        if rec.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 cells, found {}", rec.len()),
            ));
        }
        let id = rec[0].trim().to_string();
        if seen.insert(id.clone(), line).is_some() {
            return Err(parse_err(path, line, format!("duplicate sample id {id:?}")));
        }
        let cell = rec[1].trim();
        let v: f64 = cell
            .parse()
            .map_err(|_| parse_err(path, line, format!("non-numeric value {cell:?}")))?;
        if column == LabelColumn::Label && v != 0.0 && v != 1.0 {
            return Err(parse_err(
                path,
                line,
                format!("label must be 0 or 1, found {cell}"),
            ));
        }
        ids.push(id);
        values.push(v);
    }
    Ok(LabelTable {
        column,
        ids,
        values,
    })
}

pub fn write_labels(path: &Path, ids: &[String], labels: &[u8]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["sample_id", "label"]).map_err(csv_io)?;
    for (id, l) in ids.iter().zip(labels) {
        w.write_record([id.as_str(), &l.to_string()])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

/// One gene per line; blank lines and `#` comments ignored.
pub fn load_gene_list(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

/// `name<TAB>gene1,gene2,...` per line.
pub fn load_gene_sets(path: &Path) -> Result<Vec<(String, Vec<String>)>> {
    let text = fs::read_to_string(path)?;
    let mut sets = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (name, genes) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(path, n + 1, "expected name<TAB>genes"))?;
        let genes: Vec<String> = genes
            .split(',')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(String::from)
            .collect();
        sets.push((name.trim().to_string(), genes));
    }
    Ok(sets)
}
