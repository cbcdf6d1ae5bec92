//! Command-line driver: prep, train, predict, evaluate, ablate, synth-bench.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{
    align_genes, binarize_ic50, filter_zero_inflated, load_expression, load_gene_list,
    load_gene_sets, load_labels, pathway_activity, restrict_genes, select_deg, select_hvg,
    write_expression, write_labels, DomainBundle, ExpressionMatrix, Format, HvgParams, LabelColumn,
    LabeledDomain, Upsampler,
};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport, Reference};
use crate::numerics::Matrix;
use crate::synth::{self, SynthConfig};
use crate::train::{self, TrainConfig, Variant};

pub const CONFIG_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceFiles {
    pub expression: PathBuf,
    /// `sample_id,label` or `sample_id,ic50`.
    pub labels: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunPaths {
    pub sources: Vec<SourceFiles>,
    pub target: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gene_list: Option<PathBuf>,
    /// Gene sets; when given, inputs are converted to pathway activities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gene_sets: Option<PathBuf>,
    pub output_dir: PathBuf,
}

const PATH_KEYS: [&str; 6] = [
    "sources",
    "target",
    "target_labels",
    "gene_list",
    "gene_sets",
    "output_dir",
];

/// A run: input files plus training settings, stored as one flat JSON object.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub paths: RunPaths,
    pub train: TrainConfig,
}

fn config_err(pointer: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        pointer: pointer.into(),
        msg: msg.into(),
    }
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

fn deserialize_at<T: serde::de::DeserializeOwned>(value: Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = format!("{prefix}{}", pointer_of(e.path()));
        config_err(pointer, e.into_inner().to_string())
    })
}

fn train_keys() -> BTreeSet<String> {
    match serde_json::to_value(TrainConfig::default()) {
        Ok(Value::Object(m)) => m.into_iter().map(|(k, _)| k).collect(),
        _ => unreachable!("train config serializes to an object"),
    }
}

impl RunConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(map) = value else {
            return Err(config_err("", "expected a JSON object"));
        };
        match map.get("format_version") {
            None => return Err(config_err("/format_version", "required field is missing")),
            Some(v) if v.as_u64() == Some(u64::from(CONFIG_VERSION)) => {}
            Some(v) => {
                return Err(config_err(
                    "/format_version",
                    format!("unsupported version {v}; expected {CONFIG_VERSION}"),
                ))
            }
        }
        let train_keys = train_keys();
        let mut paths = Map::new();
        let mut train = Map::new();
        for (k, v) in map {
            if k == "format_version" {
                continue;
            } else if PATH_KEYS.contains(&k.as_str()) {
                paths.insert(k, v);
            } else if train_keys.contains(&k) {
                train.insert(k, v);
            } else {
                return Err(config_err(format!("/{k}"), format!("unknown key {k:?}")));
            }
        }
        let paths: RunPaths = deserialize_at(Value::Object(paths), "")?;
        let train: TrainConfig = deserialize_at(Value::Object(train), "")?;
        let cfg = RunConfig { paths, train };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths.sources.is_empty() {
            return Err(config_err(
                "/sources",
                "at least one source domain is required",
            ));
        }
        self.train
            .validate()
            .map_err(|(field, msg)| config_err(format!("/{field}"), msg))
    }

    /// Flat JSON form; reloads to an equal config.
    pub fn to_value(&self) -> Value {
        let mut out = Map::new();
        out.insert("format_version".into(), Value::from(CONFIG_VERSION));
        for part in [
            serde_json::to_value(&self.paths).expect("paths serialize"),
            serde_json::to_value(&self.train).expect("train config serializes"),
        ] {
            if let Value::Object(m) = part {
                out.extend(m);
            }
        }
        Value::Object(out)
    }

    /// Hash of everything that affects results (the output directory excluded).
    pub fn hash(&self) -> String {
        let mut v = self.to_value();
        if let Value::Object(m) = &mut v {
            m.remove("output_dir");
        }
        eval::config_hash(&v.to_string())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| config_err("", format!("malformed JSON: {e}")))?;
    RunConfig::from_value(value)
}

pub fn write_config_echo(cfg: &RunConfig, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&cfg.to_value())? + "\n")?;
    Ok(())
}

/// Training settings from a JSON file holding only train keys (used by
/// `synth-bench`); `format_version` is optional here.
pub fn load_train_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| config_err("", format!("malformed JSON: {e}")))?;
    if let Value::Object(m) = &mut value {
        m.remove("format_version");
    }
    let cfg: TrainConfig = deserialize_at(value, "")?;
    cfg.validate()
        .map_err(|(field, msg)| config_err(format!("/{field}"), msg))?;
    Ok(cfg)
}

/// Loaded, aligned inputs of a run.
pub struct RunData {
    pub bundle: DomainBundle,
    pub target_labels: Option<Vec<u8>>,
}

fn load_any(path: &Path) -> Result<ExpressionMatrix> {
    load_expression(path, Format::from_path(path))
}

pub fn load_run_data(paths: &RunPaths) -> Result<RunData> {
    let mut matrices = Vec::with_capacity(paths.sources.len() + 1);
    for s in &paths.sources {
        matrices.push(load_any(&s.expression)?);
    }
    matrices.push(load_any(&paths.target)?);
    let mut matrices = align_genes(&matrices)?;
    if let Some(list) = &paths.gene_list {
        let wanted = load_gene_list(list)?;
        let present: BTreeSet<&str> = matrices[0].genes().iter().map(String::as_str).collect();
        let keep: Vec<String> = wanted
            .iter()
            .filter(|g| present.contains(g.as_str()))
            .cloned()
            .collect();
        if keep.len() < wanted.len() {
            log::warn!(
                "{} listed genes are absent from the inputs",
                wanted.len() - keep.len()
            );
        }
        matrices = matrices
            .iter()
            .map(|m| restrict_genes(m, &keep))
            .collect::<Result<_>>()?;
    }
    if let Some(sets) = &paths.gene_sets {
        let sets = load_gene_sets(sets)?;
        matrices = matrices
            .iter()
            .map(|m| pathway_activity(m, &sets).map(|p| p.matrix))
            .collect::<Result<_>>()?;
    }
    let target = matrices.pop().expect("target matrix");
    let mut sources = Vec::with_capacity(matrices.len());
    for (m, files) in matrices.into_iter().zip(&paths.sources) {
        let labels = load_labels(&files.labels)?.labels_for(&m)?;
        sources.push(LabeledDomain::new(m, labels)?);
    }
    let target_labels = match &paths.target_labels {
        Some(p) => Some(load_labels(p)?.labels_for(&target)?),
        None => None,
    };
    Ok(RunData {
        bundle: DomainBundle::new(sources, target)?,
        target_labels,
    })
}

#[derive(Parser, Debug)]
#[command(
    name = "adadrug",
    version,
    about = "Multi-source adversarial domain adaptation for drug response"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Align genes, select features and binarize labels.
    Prep(PrepArgs),
    /// Train a model from a run config.
    Train(TrainArgs),
    /// Score target samples with a checkpoint.
    Predict(PredictArgs),
    /// Compute AUROC/AUPR for a scores file.
    Evaluate(EvaluateArgs),
    /// Run the ablation variants on a run config.
    Ablate(AblateArgs),
    /// Benchmark variants on synthetic domains.
    SynthBench(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PrepMethod {
    Hvg,
    Deg,
    File,
    None,
}

#[derive(Args, Debug)]
pub struct PrepArgs {
    /// Expression matrices (CSV/TSV); repeat for each domain.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "hvg")]
    pub method: PrepMethod,
    #[arg(long, default_value_t = 4000)]
    pub n_top: usize,
    /// Gene list for `--method file`.
    #[arg(long)]
    pub gene_list: Option<PathBuf>,
    /// Labels of the first input; DEG compares its classes.
    #[arg(long)]
    pub deg_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub lfc_min: f64,
    #[arg(long, default_value_t = 0.05)]
    pub p_max: f64,
    /// Drop genes whose pooled zero fraction exceeds this.
    #[arg(long)]
    pub max_zero_frac: Option<f64>,
    /// Label files (label or ic50 column) to rewrite as binary labels.
    #[arg(long = "labels")]
    pub labels: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Default, Clone)]
pub struct TrainOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, value_parser = parse_sampler)]
    pub sampler: Option<Upsampler>,
    #[arg(long)]
    pub holdout: Option<f64>,
}

fn parse_sampler(s: &str) -> std::result::Result<Upsampler, String> {
    match s.to_ascii_lowercase().as_str() {
        "weight" => Ok(Upsampler::Weight),
        "smote" => Ok(Upsampler::Smote),
        "none" => Ok(Upsampler::None),
        _ => Err(format!("unknown sampler {s:?} (weight, smote, none)")),
    }
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.latent_dim {
            cfg.latent_dim = v;
        }
        if let Some(v) = self.sampler {
            cfg.sampler = v;
        }
        if let Some(v) = self.holdout {
            cfg.holdout = v;
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Train one ablation variant instead of the full model.
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    /// Source expression files used as references for the weight generator.
    #[arg(long = "reference")]
    pub references: Vec<PathBuf>,
    /// Gene order of the checkpoint; defaults to genes.txt beside it.
    #[arg(long)]
    pub genes: Option<PathBuf>,
    #[arg(long, default_value_t = eval::DEFAULT_REF_PER_DOMAIN)]
    pub ref_per_domain: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the embeddings used by the predictor.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// Label file; otherwise the scores file must carry a label column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Run config whose hash is recorded in the metrics.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Single seed; combined with --seeds when both are given.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub variants: Vec<Variant>,
    /// JSON file of training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "synth_bench")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_per_domain: Option<usize>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long)]
    pub genes: Option<usize>,
    #[arg(long)]
    pub sigma_shift: Option<f64>,
    #[arg(long)]
    pub sigma_noise: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse { .. }
        | Error::Data(_)
        | Error::Config { .. }
        | Error::Shape { .. }
        | Error::Checkpoint { .. }
        | Error::Json(_) => EXIT_DATA,
        Error::Io(e) if e.kind() == std::io::ErrorKind::NotFound => EXIT_DATA,
        Error::Io(_) | Error::Contract(_) => EXIT_RUNTIME,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prep(a) => prep(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Predict(a) => predict(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Ablate(a) => ablate(&a),
        Command::SynthBench(a) => synth_bench(&a),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".into())
}

fn prep(a: &PrepArgs) -> Result<()> {
    fs::create_dir_all(&a.out_dir)?;
    let loaded = a
        .inputs
        .iter()
        .map(|p| load_any(p))
        .collect::<Result<Vec<_>>>()?;
    let mut aligned = align_genes(&loaded)?;
    if let Some(frac) = a.max_zero_frac {
        aligned = filter_zero_inflated(&aligned, frac)?;
    }
    let selected: Vec<String> = match a.method {
        PrepMethod::None => aligned[0].genes().to_vec(),
        PrepMethod::File => {
            let path = a
                .gene_list
                .as_ref()
                .ok_or_else(|| Error::data("--method file needs --gene-list"))?;
            load_gene_list(path)?
        }
        PrepMethod::Hvg => {
            let parts: Vec<&Matrix> = aligned.iter().map(ExpressionMatrix::values).collect();
            let pooled = ExpressionMatrix::new(
                (0..parts.iter().map(|m| m.rows()).sum::<usize>())
                    .map(|i| format!("r{i}"))
                    .collect(),
                aligned[0].genes().to_vec(),
                Matrix::vstack(&parts)?,
            )?;
            select_hvg(&pooled, HvgParams::top(a.n_top)).genes
        }
        PrepMethod::Deg => {
            let path = a
                .deg_labels
                .as_ref()
                .ok_or_else(|| Error::data("--method deg needs --deg-labels"))?;
            let first = &aligned[0];
            let labels = load_labels(path)?.labels_for(first)?;
            let idx =
                |c: u8| -> Vec<usize> { (0..labels.len()).filter(|&i| labels[i] == c).collect() };
            let sel = select_deg(
                &first.select_samples(&idx(1)),
                &first.select_samples(&idx(0)),
                a.lfc_min,
                a.p_max,
            )?;
            sel.genes
        }
    };
    if selected.is_empty() {
        return Err(Error::data("gene selection is empty"));
    }
    let mut gene_text = selected.join("\n");
    gene_text.push('\n');
    fs::write(a.out_dir.join("genes.txt"), gene_text)?;
    for (m, path) in aligned.iter().zip(&a.inputs) {
        let out = restrict_genes(m, &selected)?;
        write_expression(&a.out_dir.join(format!("{}.csv", file_stem(path))), &out)?;
    }
    for path in &a.labels {
        let table = load_labels(path)?;
        let labels = match table.column {
            LabelColumn::Ic50 => binarize_ic50(&table.values)?,
            LabelColumn::Label => table.values.iter().map(|&v| v as u8).collect(),
        };
        write_labels(
            &a.out_dir.join(format!("{}_labels.csv", file_stem(path))),
            &table.ids,
            &labels,
        )?;
    }
    log::info!("prep kept {} genes", selected.len());
    Ok(())
}

fn source_refs(bundle: &DomainBundle) -> Vec<Matrix> {
    bundle
        .sources()
        .iter()
        .map(|s| s.expr.values().clone())
        .collect()
}

/// Trains per `cfg` into `cfg.paths.output_dir`: config.json, history.csv,
/// model.ckpt, genes.txt, scores.csv and metrics.json.
pub fn run_training(cfg: &RunConfig, variant: Variant) -> Result<()> {
    let out = &cfg.paths.output_dir;
    fs::create_dir_all(out)?;
    write_config_echo(cfg, &out.join("config.json"))?;
    let data = load_run_data(&cfg.paths)?;
    let bundle = variant.sources(&data.bundle)?;
    let tcfg = variant.configure(&cfg.train);
    let (model, history) = train::train(&bundle, &tcfg)?;
    history.write_csv(&out.join("history.csv"))?;
    save_checkpoint(&model, &tcfg, history.final_step, &out.join("model.ckpt"))?;
    fs::write(out.join("genes.txt"), bundle.genes().join("\n") + "\n")?;

    let refs = source_refs(&bundle);
    let reference = Reference {
        sources: &refs,
        per_domain: eval::DEFAULT_REF_PER_DOMAIN,
        seed: tcfg.seed,
    };
    let target = data.bundle.target();
    let scores = eval::predict_target(&model, target.values(), Some(&reference))?;
    let labels = data.target_labels.as_deref();
    eval::write_scores(
        &out.join("scores.csv"),
        target.sample_ids(),
        &scores,
        labels,
    )?;
    let hash = cfg.hash();
    match labels {
        Some(l) => {
            let report = MetricsReport::compute(&scores, l)?;
            eval::write_metrics_json(&out.join("metrics.json"), &report, &hash)?;
            log::info!("target AUROC {:.4} AUPR {:.4}", report.auroc, report.aupr);
        }
        None => {
            let doc = serde_json::json!({
                "auroc": null,
                "aupr": null,
                "n_target": scores.len(),
                "config_hash": hash,
            });
            fs::write(
                out.join("metrics.json"),
                serde_json::to_string_pretty(&doc)? + "\n",
            )?;
        }
    }
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    a.overrides.apply(&mut cfg.train);
    if let Some(dir) = &a.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    cfg.validate()?;
    run_training(&cfg, a.variant.unwrap_or(Variant::Full))
}

fn predict(a: &PredictArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let genes_path = a.genes.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("genes.txt")
    });
    let genes = if genes_path.exists() {
        Some(load_gene_list(&genes_path)?)
    } else {
        None
    };
    let conform = |m: ExpressionMatrix| -> Result<ExpressionMatrix> {
        match &genes {
            Some(g) => restrict_genes(&m, g),
            None => Ok(m),
        }
    };
    let target = conform(load_any(&a.target)?)?;
    let refs: Vec<Matrix> = a
        .references
        .iter()
        .map(|p| conform(load_any(p)?).map(|m| m.values().clone()))
        .collect::<Result<_>>()?;
    let reference = Reference {
        sources: &refs,
        per_domain: a.ref_per_domain,
        seed: a.seed,
    };
    let refs_opt = (!refs.is_empty()).then_some(&reference);
    let scores = eval::predict_target(&ckpt.model, target.values(), refs_opt)?;
    eval::write_scores(&a.out, target.sample_ids(), &scores, None)?;
    if let Some(path) = &a.embeddings {
        eval::export_embeddings(&ckpt.model, &target, ckpt.model.weighting, refs_opt, path)?;
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let (ids, scores, inline) = eval::read_scores(&a.scores)?;
    let labels = match (&a.labels, inline) {
        (Some(path), _) => {
            let table = load_labels(path)?;
            let expr = ExpressionMatrix::new(ids.clone(), vec![], Matrix::zeros(ids.len(), 0))?;
            table.labels_for(&expr)?
        }
        (None, Some(l)) => l,
        (None, None) => {
            return Err(Error::data(
                "no labels: pass --labels or a scores file with a label column",
            ))
        }
    };
    let hash = match &a.config {
        Some(p) => load_config(p)?.hash(),
        None => String::new(),
    };
    let report = MetricsReport::compute(&scores, &labels)?;
    eval::write_metrics_json(&a.out, &report, &hash)?;
    println!("auroc={:.6} aupr={:.6}", report.auroc, report.aupr);
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let mut cfg = load_config(&a.config)?;
    a.overrides.apply(&mut cfg.train);
    if let Some(dir) = &a.output_dir {
        cfg.paths.output_dir = dir.clone();
    }
    cfg.validate()?;
    let data = load_run_data(&cfg.paths)?;
    let labels = data
        .target_labels
        .as_deref()
        .ok_or_else(|| Error::data("ablate needs target_labels in the config"))?;
    let seeds: Vec<u64> = a.seeds.clone();
    let report = synth::run_grid(
        &[(&data.bundle, labels)],
        &Variant::ABLATION,
        &seeds,
        &cfg.train,
    )?;
    let out = &cfg.paths.output_dir;
    fs::create_dir_all(out)?;
    write_config_echo(&cfg, &out.join("config.json"))?;
    report.write_csv(&out.join("ablation.csv"))?;
    report.write_json(&out.join("ablation.json"))?;
    print_table(&report);
    Ok(())
}

fn print_table(report: &synth::BenchmarkReport) {
    println!(
        "{:<10} {:>6} {:>16} {:>16}",
        "variant", "seeds", "AUROC", "AUPR"
    );
    for r in &report.rows {
        println!(
            "{:<10} {:>6} {:>8.4}±{:<7.4} {:>8.4}±{:<7.4}",
            r.variant, r.n_seeds, r.auroc_mean, r.auroc_sd, r.aupr_mean, r.aupr_sd
        );
    }
}

fn synth_bench(a: &SynthArgs) -> Result<()> {
    let mut seeds: Vec<u64> = a.seed.into_iter().collect();
    seeds.extend(&a.seeds);
    if seeds.is_empty() {
        seeds.push(0);
    }
    let variants = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.clone()
    };

    let mut synth = SynthConfig::default();
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { synth.$field = v; } )* };
    }
    set!(
        k,
        n_per_domain,
        n_target,
        genes,
        sigma_shift,
        sigma_noise,
        rho
    );
    synth.validate()?;

    let mut cfg = match &a.config {
        Some(p) => load_train_config(p)?,
        None => synth::bench_train_config(),
    };
    let overrides = TrainOverrides {
        epochs: a.epochs,
        learning_rate: a.learning_rate,
        latent_dim: a.latent_dim,
        batch_size: a.batch_size,
        ..Default::default()
    };
    overrides.apply(&mut cfg);
    cfg.validate()
        .map_err(|(field, msg)| config_err(format!("/{field}"), msg))?;

    let report = synth::run_benchmark(&synth, &variants, &seeds, &cfg)?;
    fs::create_dir_all(&a.out_dir)?;
    report.write_csv(&a.out_dir.join("synth_bench.csv"))?;
    report.write_json(&a.out_dir.join("synth_bench.json"))?;
    print_table(&report);
    Ok(())
}
