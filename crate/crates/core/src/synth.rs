//! Synthetic multi-domain data with a known labeling rule, and the
//! seed × variant benchmark built on it.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{DomainBundle, ExpressionMatrix, LabeledDomain};
use crate::error::{Error, Result};
use crate::eval::{self, MetricsReport, Reference};
use crate::model::Activation;
use crate::numerics::Matrix;
use crate::train::{self, derive_seed, TrainConfig, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Number of source domains.
    pub k: usize,
    pub n_per_domain: usize,
    pub n_target: usize,
    pub genes: usize,
    /// Latent signal dimension.
    pub signal_dim: usize,
    pub sigma_shift: f64,
    pub sigma_noise: f64,
    /// Target positive fraction.
    pub rho: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            k: 3,
            n_per_domain: 400,
            n_target: 400,
            genes: 60,
            signal_dim: 8,
            sigma_shift: 1.0,
            sigma_noise: 0.3,
            rho: 0.35,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("synth config: {m}")));
        if self.k == 0 || self.n_per_domain == 0 || self.n_target == 0 {
            return bad("counts must be positive");
        }
        if self.genes == 0 || self.signal_dim == 0 {
            return bad("dimensions must be positive");
        }
        if !(self.sigma_shift >= 0.0 && self.sigma_noise >= 0.0) {
            return bad("noise and shift scales must be non-negative");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Training settings sized for the synthetic benchmark: a narrow model,
/// a larger step size, and a sigmoid weight generator.
pub fn bench_train_config() -> TrainConfig {
    TrainConfig {
        latent_dim: 16,
        ae_hidden: 64,
        head_hidden: 32,
        generator_output: Activation::Sigmoid,
        learning_rate: 1e-3,
        batch_size: 64,
        epochs: 120,
        ..TrainConfig::default()
    }
}

/// Generated domains plus the target labels, which only evaluation sees.
#[derive(Clone, Debug)]
pub struct SynthBundle {
    pub bundle: DomainBundle,
    hidden: Vec<u8>,
    /// Per-domain latent codes, sources first, then the target.
    latent: Vec<Matrix>,
}

impl SynthBundle {
    pub fn target_labels(&self) -> &[u8] {
        &self.hidden
    }

    pub fn latent_codes(&self) -> &[Matrix] {
        &self.latent
    }

    /// Scores target predictions against the hidden labels.
    pub fn evaluate(&self, scores: &[f64]) -> Result<MetricsReport> {
        MetricsReport::compute(scores, &self.hidden)
    }

    /// Trains `variant` and scores it on the hidden labels.
    pub fn run(&self, variant: Variant, cfg: &TrainConfig) -> Result<MetricsReport> {
        run_variant(&self.bundle, &self.hidden, variant, cfg)
    }
}

fn gaussian(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("sized buffer")
}

struct Domain {
    x: Matrix,
    u: Matrix,
    labels: Vec<u8>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthBundle> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (g, s) = (cfg.genes, cfg.signal_dim);
    let map_scale = 1.0 / (s as f64).sqrt();
    let base = gaussian(s, g, map_scale, &mut rng);
    let beta = gaussian(s, 1, 1.0, &mut rng);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let threshold = std_normal.inverse_cdf(1.0 - cfg.rho) * beta.norm();

    let make = |n: usize, rng: &mut ChaCha8Rng| -> Result<Domain> {
        let shift = gaussian(s, g, cfg.sigma_shift * map_scale, rng);
        let map = base.zip_map(&shift, "synth map", |a, b| a + b)?;
        let offset = gaussian(1, g, cfg.sigma_shift, rng);
        let u = gaussian(n, s, 1.0, rng);
        let noise = gaussian(n, g, cfg.sigma_noise, rng);
        let x = u
            .matmul(&map)?
            .add_row(&offset)?
            .zip_map(&noise, "synth noise", |a, b| a + b)?;
        let score = u.matmul(&beta)?;
        let labels = score
            .as_slice()
            .iter()
            .map(|&v| u8::from(v > threshold))
            .collect();
        Ok(Domain { x, u, labels })
    };

    let mut sources = Vec::with_capacity(cfg.k);
    let mut latent = Vec::with_capacity(cfg.k + 1);
    for k in 0..cfg.k {
        let d = make(cfg.n_per_domain, &mut rng)?;
        let expr = ExpressionMatrix::with_generated_ids(&format!("s{k}_"), d.x);
        sources.push(LabeledDomain::new(expr, d.labels)?);
        latent.push(d.u);
    }
    let t = make(cfg.n_target, &mut rng)?;
    latent.push(t.u);
    let target = ExpressionMatrix::with_generated_ids("t_", t.x);
    Ok(SynthBundle {
        bundle: DomainBundle::new(sources, target)?,
        hidden: t.labels,
        latent,
    })
}

/// One trained and scored run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub variant: String,
    pub seed: u64,
    pub auroc: f64,
    pub aupr: f64,
}

/// Trains `variant` on `bundle` with `cfg.seed` and scores the target
/// against `target_labels`.
pub fn run_variant(
    bundle: &DomainBundle,
    target_labels: &[u8],
    variant: Variant,
    cfg: &TrainConfig,
) -> Result<MetricsReport> {
    let train_on = variant.sources(bundle)?;
    let vcfg = variant.configure(cfg);
    let (model, _) = train::train(&train_on, &vcfg)?;
    let refs: Vec<Matrix> = train_on
        .sources()
        .iter()
        .map(|s| s.expr.values().clone())
        .collect();
    let reference = Reference {
        sources: &refs,
        per_domain: eval::DEFAULT_REF_PER_DOMAIN,
        seed: vcfg.seed,
    };
    let scores = eval::predict_target(&model, bundle.target().values(), Some(&reference))?;
    MetricsReport::compute(&scores, target_labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: String,
    pub n_seeds: usize,
    pub auroc_mean: f64,
    pub auroc_sd: f64,
    pub aupr_mean: f64,
    pub aupr_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunResult>,
}

impl BenchmarkReport {
    pub fn row(&self, variant: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(crate::data::csv_error)?;
        for r in &self.rows {
            w.serialize(r).map_err(crate::data::csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Sample mean and standard deviation (n − 1 denominator; 0 for one value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Worker thread count: `ADADRUG_THREADS` if set, else the available cores.
pub fn worker_threads() -> usize {
    std::env::var("ADADRUG_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Data seed for benchmark seed `seed`.
pub fn data_seed(cfg: &SynthConfig, seed: u64) -> u64 {
    derive_seed(cfg.seed, seed)
}

/// Maps `jobs` over worker threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(
    jobs: &[T],
    threads: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.clamp(1, jobs.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..jobs.len()).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let r = f(&jobs[i]);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Trains every variant on every seed. Seed `s` draws its data from
/// [`data_seed`] and initializes training with `s`.
pub fn run_benchmark(
    synth: &SynthConfig,
    variants: &[Variant],
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<BenchmarkReport> {
    let data: Vec<SynthBundle> = seeds
        .iter()
        .map(|&s| {
            generate(&SynthConfig {
                seed: data_seed(synth, s),
                ..synth.clone()
            })
        })
        .collect::<Result<_>>()?;
    let sets: Vec<(&DomainBundle, &[u8])> = data
        .iter()
        .map(|d| (&d.bundle, d.target_labels()))
        .collect();
    run_grid(&sets, variants, seeds, cfg)
}

/// Trains every variant for every seed; seed i uses `datasets[i]`, or
/// `datasets[0]` when a single dataset is shared.
pub fn run_grid(
    datasets: &[(&DomainBundle, &[u8])],
    variants: &[Variant],
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<BenchmarkReport> {
    if variants.is_empty() {
        return Err(Error::Contract("at least one variant is required".into()));
    }
    if seeds.is_empty() {
        return Err(Error::Contract("at least one seed is required".into()));
    }
    if datasets.len() != 1 && datasets.len() != seeds.len() {
        return Err(Error::Contract("need one dataset, or one per seed".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..seeds.len()).map(move |s| (v, s)))
        .collect();
    let outcomes = parallel_map(&jobs, worker_threads(), |&(v, s)| {
        let run_cfg = TrainConfig {
            seed: seeds[s],
            ..cfg.clone()
        };
        let (bundle, labels) = datasets[s.min(datasets.len() - 1)];
        log::info!("training {} with seed {}", variants[v], seeds[s]);
        run_variant(bundle, labels, variants[v], &run_cfg)
    });

    let mut runs = Vec::with_capacity(jobs.len());
    for (&(v, s), out) in jobs.iter().zip(outcomes) {
        let m = out?;
        runs.push(RunResult {
            variant: variants[v].name().to_string(),
            seed: seeds[s],
            auroc: m.auroc,
            aupr: m.aupr,
        });
    }
    Ok(summarize(variants, runs))
}

/// Mean ± sd per variant, in `variants` order.
pub fn summarize(variants: &[Variant], runs: Vec<RunResult>) -> BenchmarkReport {
    let rows = variants
        .iter()
        .map(|v| {
            let mine: Vec<&RunResult> = runs.iter().filter(|r| r.variant == v.name()).collect();
            let au: Vec<f64> = mine.iter().map(|r| r.auroc).collect();
            let ap: Vec<f64> = mine.iter().map(|r| r.aupr).collect();
            let (auroc_mean, auroc_sd) = mean_sd(&au);
            let (aupr_mean, aupr_sd) = mean_sd(&ap);
            SummaryRow {
                variant: v.name().to_string(),
                n_seeds: mine.len(),
                auroc_mean,
                auroc_sd,
                aupr_mean,
                aupr_sd,
            }
        })
        .collect();
    BenchmarkReport { rows, runs }
}
