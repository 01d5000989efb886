//! Command-line front end. Every run writes its artifacts under `--out`
//! together with `run.json`, which records the fully resolved arguments and
//! the SHA-256 of each artifact. `reproduce` replays such a manifest and
//! compares hashes.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error (including a
//! failed reproduction).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    centroid_distances, pca_project, pixel_heatmap, scatter_rgb, transfer_matrix, PointTag, SfiSet, Source,
    HEATMAP_THRESHOLD,
};
use crate::attack_de::{run_de, run_de_attempts, BaseColor, ConfidenceOracle, DEConfig, NetworkOracle};
use crate::attack_invert::{invert, InvertConfig, Solver};
use crate::certify::{
    certify_linear, greedy_kernel, greedy_onehidden, load_model, scaling_probe, CertModel, Family,
};
use crate::data::{
    ensure_parent, fmt_f64, load_cifar10_dir, load_mnist_dir, read_json, read_png, write_csv, write_json, write_png,
    Dataset,
};
use crate::defense::{run_defense_loop, DefenseConfig, PoolConfig};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, resolve_workers, save_checkpoint, train, Arch, Network, Optimizer, TrainConfig};
use crate::sfi::SparseImage;
use crate::tensor::Tensor;

const MANIFEST_FORMAT: &str = "sfi-lab-run/1";

#[derive(Debug, Parser)]
#[command(name = "sfi-lab", version, about = "Sparse fooling images: certify, attack, defend, analyze")]
struct Cli {
    /// Worker threads for batched inference (falls back to SFI_LAB_THREADS).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory (for attack-de, a path ending in .json names the report).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Train a classifier and save a checkpoint.
    Train(TrainArgs),
    /// Certify a binary model from JSON, or run a scaling probe.
    Certify(CertifyArgs),
    /// Black-box differential-evolution attack.
    AttackDe(AttackDeArgs),
    /// White-box feature-inversion attack.
    AttackInvert(InvertArgs),
    /// Outlier-class defense loop.
    Defend(DefendArgs),
    /// PCA, transferability and heatmap analyses.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Replay a run.json and compare artifact hashes.
    #[serde(skip)]
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetName {
    Mnist,
    Cifar10,
}

impl DatasetName {
    fn default_dir(self) -> PathBuf {
        match self {
            DatasetName::Mnist => "data/mnist-10k".into(),
            DatasetName::Cifar10 => "data/cifar10".into(),
        }
    }

    fn load(self, dir: Option<&Path>) -> Result<(Dataset, Dataset)> {
        let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| self.default_dir());
        match self {
            DatasetName::Mnist => load_mnist_dir(&dir),
            DatasetName::Cifar10 => load_cifar10_dir(&dir),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerName {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DataArgs {
    #[arg(long, value_enum, default_value = "mnist")]
    pub dataset: DatasetName,
    /// Dataset directory (default data/mnist-10k or data/cifar10).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "cnn-mp")]
    pub arch: Arch,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerName,
    /// Learning rate (default 0.001 for Adam, 0.01 for SGD).
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 0.85)]
    pub lr_decay: f64,
    /// Train on the first N training images only.
    #[arg(long)]
    pub limit: Option<usize>,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        let optimizer = match (self.optimizer, self.lr) {
            (OptimizerName::Adam, None) => Optimizer::adam(),
            (OptimizerName::Adam, Some(lr)) => Optimizer::Adam { lr },
            (OptimizerName::Sgd, lr) => {
                let Optimizer::Sgd { lr: d, momentum, weight_decay } = Optimizer::sgd() else { unreachable!() };
                Optimizer::Sgd { lr: lr.unwrap_or(d), momentum, weight_decay }
            }
        };
        let mut cfg = TrainConfig::new(optimizer, self.epochs, self.batch_size, self.seed);
        cfg.lr_decay = self.lr_decay;
        cfg
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CertifyArgs {
    /// Binary model JSON (`kind`: linear, one_hidden or kernel).
    #[arg(long, conflicts_with = "probe", required_unless_present = "probe")]
    pub model: Option<PathBuf>,
    /// Run a growth probe for this family instead.
    #[arg(long)]
    pub probe: Option<Family>,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Base intensity for linear certificates.
    #[arg(long, default_value_t = 0.0)]
    pub r: f64,
    /// Maximum intensity.
    #[arg(long, default_value_t = 1.0)]
    pub big_r: f64,
    /// Confidence threshold to test the certificate against.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Probe budgets, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AttackDeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub target: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub pop: usize,
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub scale: f64,
    #[arg(long, default_value = "black")]
    pub base: BaseColor,
    /// Stop once the target confidence reaches this value.
    #[arg(long)]
    pub early_stop: Option<f64>,
    /// Rerun with fresh seeds until the early-stop confidence is reached.
    #[arg(long, default_value_t = 1)]
    #[serde(default = "one")]
    pub attempts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InvertArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Layer to match (default: the second-to-last layer).
    #[arg(long)]
    pub layer: Option<usize>,
    /// A PNG path, or `<dataset>:<index>` into that dataset's test split.
    #[arg(long)]
    pub input: String,
    /// Dataset directory used by `<dataset>:<index>` inputs.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "black")]
    pub base: BaseColor,
    #[arg(long, default_value_t = 1e-5)]
    pub lambda: f64,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, value_enum, default_value = "adam")]
    #[serde(default)]
    pub solver: Solver,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DefendArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 2)]
    pub rounds: usize,
    #[arg(long, default_value_t = 60)]
    pub per_class: usize,
    #[arg(long, default_value_t = 1)]
    pub k_min: usize,
    #[arg(long, default_value_t = 100)]
    pub k_max: usize,
    #[arg(long, default_value_t = 40)]
    pub pop: usize,
    #[arg(long, default_value_t = 60)]
    pub iters: usize,
    #[arg(long, default_value = "black")]
    pub base: BaseColor,
    #[arg(long, default_value = "white")]
    pub reattack_base: BaseColor,
    #[arg(long, default_value_t = 2)]
    pub reattack_per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Retraining epochs per round.
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub lr: f64,
    /// Use the first N natural training images for retraining.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "kebab-case")]
pub enum AnalyzeCommand {
    /// Project natural images and SFIs onto two principal components.
    Pca(PcaArgs),
    /// Transferability of SFIs between models.
    Transfer(TransferArgs),
    /// Per-pixel alteration counts over a set of SFIs.
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PcaArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Feature layer (default: the second-to-last layer).
    #[arg(long)]
    pub layer: Option<usize>,
    /// Natural test images per class.
    #[arg(long, default_value_t = 20)]
    pub per_class: usize,
    /// JSON files holding SFIs (attack or inversion reports, or SparseImages).
    #[arg(long = "sfi")]
    pub sfis: Vec<PathBuf>,
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TransferArgs {
    /// Model checkpoints, in index order.
    #[arg(long = "model", required = true)]
    pub models: Vec<PathBuf>,
    /// `<model index>:<json>` SFIs generated against that model.
    #[arg(long = "sfi", required = true)]
    pub sfis: Vec<String>,
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct HeatmapArgs {
    #[arg(long = "sfi", required = true)]
    pub sfis: Vec<PathBuf>,
    #[arg(long, default_value_t = HEATMAP_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    /// A run.json written by an earlier run.
    pub manifest: PathBuf,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub config: Command,
    /// Artifact file name (relative to the output directory) to SHA-256.
    pub artifacts: BTreeMap<String, String>,
    /// Report file name when it differs from the default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_name: Option<String>,
}

/// Where a run writes: the directory, plus an optional report file name.
struct Output {
    dir: PathBuf,
    report: Option<String>,
}

impl Output {
    fn new(out: Option<PathBuf>, json_file_allowed: bool) -> Self {
        let out = out.unwrap_or_else(|| PathBuf::from("out"));
        if json_file_allowed && out.extension().is_some_and(|e| e == "json") {
            let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
            let report = out.file_name().map(|n| n.to_string_lossy().into_owned());
            Output { dir, report }
        } else {
            Output { dir: out, report: None }
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

fn load_net(path: &Path) -> Result<Network> {
    if !path.is_file() {
        return Err(Error::MissingInputs(vec![path.to_path_buf()]));
    }
    load_checkpoint(path)
}

fn base_values(color: BaseColor, net: &Network) -> Result<Vec<f64>> {
    color.values(net.input_shape()[0])
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Any JSON carrying SFIs: an attack or inversion report (`sfi`, optional
/// `target`), a bare SparseImage, or an array of any of these.
fn load_sfis(path: &Path) -> Result<Vec<(SparseImage, Option<usize>)>> {
    fn one(v: serde_json::Value, path: &Path) -> Result<Vec<(SparseImage, Option<usize>)>> {
        match v {
            serde_json::Value::Array(items) => {
                Ok(items.into_iter().map(|i| one(i, path)).collect::<Result<Vec<_>>>()?.concat())
            }
            serde_json::Value::Object(mut map) => {
                let target = map.get("target").and_then(|t| t.as_u64()).map(|t| t as usize);
                let sfi = match map.remove("sfi") {
                    Some(s) => s,
                    None => serde_json::Value::Object(map),
                };
                let sfi: SparseImage = serde_json::from_value(sfi)?;
                Ok(vec![(SparseImage::new(sfi.dims, sfi.base, sfi.alterations, sfi.range)?, target)])
            }
            _ => Err(Error::InvalidArgument(format!("{} holds no SFI", path.display()))),
        }
    }
    if !path.is_file() {
        return Err(Error::MissingInputs(vec![path.to_path_buf()]));
    }
    one(read_json(path)?, path)
}

fn run_train(a: &TrainArgs, out: &Output) -> Result<Vec<String>> {
    let (mut tr, te) = a.data.dataset.load(a.data.data.as_deref())?;
    if let Some(n) = a.limit {
        tr = tr.subset(&(0..n.min(tr.len())).collect::<Vec<_>>())?;
    }
    let net = Network::new(a.arch.spec(tr.image_shape(), tr.num_classes()), a.seed)?;
    let (net, metrics) = train(&net, &tr, Some(&te), &a.config())?;
    save_checkpoint(&net, &out.path("model.ckpt"))?;
    write_json(&out.path("metrics.json"), &metrics)?;
    if let Some(acc) = metrics.final_test_accuracy() {
        println!("test accuracy {acc:.4}");
    }
    Ok(vec!["model.ckpt".into(), "metrics.json".into()])
}

fn run_certify(a: &CertifyArgs, out: &Output) -> Result<Vec<String>> {
    if let Some(family) = a.probe {
        let table = scaling_probe(family, &a.ks, a.trials, a.seed)?;
        write_text(&out.path("growth.csv"), &table.to_csv()?)?;
        write_json(&out.path("growth.json"), &table)?;
        println!("{family:?}: slope {:.6} intercept {:.6} R^2 {:.6}", table.slope, table.intercept, table.r_squared);
        return Ok(vec!["growth.csv".into(), "growth.json".into()]);
    }
    let path = a.model.as_ref().ok_or_else(|| Error::InvalidArgument("--model or --probe is required".into()))?;
    if !path.is_file() {
        return Err(Error::MissingInputs(vec![path.clone()]));
    }
    let cert = match load_model(path)? {
        CertModel::Linear(m) => certify_linear(&m, a.k, a.r, a.big_r, a.threshold.unwrap_or(0.5))?,
        CertModel::OneHidden(m) => greedy_onehidden(&m, a.k, a.big_r)?,
        CertModel::Kernel(m) => greedy_kernel(&m, a.k, a.big_r)?,
    };
    let cert = match a.threshold {
        Some(t) => cert.with_threshold(t)?,
        None => cert,
    };
    write_json(&out.path("certificate.json"), &cert)?;
    println!("max log-odds {:.6}", cert.max_logodds);
    if let Some(met) = cert.threshold_met {
        println!("threshold met: {met}");
    }
    Ok(vec!["certificate.json".into()])
}

fn run_attack_de(a: &AttackDeArgs, out: &Output, workers: usize) -> Result<Vec<String>> {
    let net = load_net(&a.model)?;
    let cfg = DEConfig {
        population: a.pop,
        iterations: a.iters,
        scale: a.scale,
        k: a.k,
        intensity: (0.0, 1.0),
        base: base_values(a.base, &net)?,
        target: a.target,
        seed: a.seed,
        early_stop: a.early_stop,
    };
    let oracle = NetworkOracle::with_base(&net, &cfg.base, workers)?;
    let report = match a.early_stop {
        Some(t) if a.attempts > 1 => run_de_attempts(&oracle, &cfg, a.attempts, t)?,
        _ => run_de(&oracle, &cfg)?,
    };
    let name = out.report.clone().unwrap_or_else(|| "report.json".into());
    write_json(&out.path(&name), &report)?;
    write_png(&report.sfi.to_dense(), &out.path("sfi.png"))?;
    println!("target {} confidence {:.4} after {} iterations", report.target, report.confidence, report.iterations_used);
    Ok(vec![name, "sfi.png".into()])
}

fn load_input(spec: &str, data: Option<&Path>) -> Result<Tensor> {
    if let Some((name, index)) = spec.split_once(':') {
        if let Ok(ds) = DatasetName::from_str(name, true) {
            let index: usize =
                index.parse().map_err(|_| Error::InvalidArgument(format!("bad image index in '{spec}'")))?;
            let (_, test) = ds.load(data)?;
            if index >= test.len() {
                return Err(Error::InvalidArgument(format!("index {index} beyond {} test images", test.len())));
            }
            return Ok(test.image(index));
        }
    }
    let path = Path::new(spec);
    if !path.is_file() {
        return Err(Error::MissingInputs(vec![path.to_path_buf()]));
    }
    read_png(path)
}

fn run_invert(a: &InvertArgs, out: &Output) -> Result<Vec<String>> {
    let net = load_net(&a.model)?;
    let x0 = load_input(&a.input, a.data.as_deref())?;
    let cfg = InvertConfig {
        layer: a.layer.unwrap_or_else(|| net.penultimate_layer()),
        lambda_sparse: a.lambda,
        base: base_values(a.base, &net)?,
        steps: a.steps,
        step_size: a.step_size,
        seed: a.seed,
        solver: a.solver,
    };
    let report = invert(&net, &cfg, &x0)?;
    write_png(&report.sfi.to_dense(), &out.path("sfi.png"))?;
    let rows: Vec<Vec<String>> = report.trace.iter().enumerate().map(|(i, v)| vec![i.to_string(), fmt_f64(*v)]).collect();
    write_csv(&out.path("trace.csv"), &["step", "objective"], &rows)?;
    write_json(&out.path("report.json"), &report)?;
    println!("cosine {:.4}, {} pixels altered", report.cosine, report.altered);
    Ok(vec!["sfi.png".into(), "trace.csv".into(), "report.json".into()])
}

fn run_defend(a: &DefendArgs, out: &Output, workers: usize) -> Result<Vec<String>> {
    let net = load_net(&a.model)?;
    let (mut tr, te) = a.data.dataset.load(a.data.data.as_deref())?;
    if let Some(n) = a.limit {
        tr = tr.subset(&(0..n.min(tr.len())).collect::<Vec<_>>())?;
    }
    let mut retrain = TrainConfig::new(Optimizer::Adam { lr: a.lr }, a.epochs, 32, a.seed);
    retrain.lr_decay = 1.0;
    let cfg = DefenseConfig {
        rounds: a.rounds,
        pool: PoolConfig {
            per_class: a.per_class,
            k_range: (a.k_min, a.k_max),
            population: a.pop,
            iterations: a.iters,
            base: base_values(a.base, &net)?,
            early_stop: 0.9,
        },
        test_fraction: a.test_fraction,
        retrain,
        reattack_per_class: a.reattack_per_class,
        reattack_base: base_values(a.reattack_base, &net)?,
        seed: a.seed,
        workers,
    };
    let (model, report) = run_defense_loop(&net, &tr, &te, &cfg)?;
    let mut names = Vec::new();
    for r in &report.rounds {
        let name = format!("round_{}.json", r.round + 1);
        write_json(&out.path(&name), r)?;
        names.push(name);
    }
    write_text(&out.path("defense.csv"), &report.to_csv()?)?;
    write_json(&out.path("report.json"), &report)?;
    save_checkpoint(&model, &out.path("model.ckpt"))?;
    names.extend(["defense.csv".into(), "report.json".into(), "model.ckpt".into()]);
    print!("{}", report.to_csv()?);
    Ok(names)
}

fn run_pca(a: &PcaArgs, out: &Output) -> Result<Vec<String>> {
    let net = load_net(&a.model)?;
    let layer = a.layer.unwrap_or_else(|| net.penultimate_layer());
    let (_, te) = a.data.dataset.load(a.data.data.as_deref())?;
    let naturals = te.per_class(a.per_class)?;
    let mut images: Vec<Tensor> = (0..naturals.len()).map(|i| naturals.image(i)).collect();
    let mut tags: Vec<PointTag> = naturals
        .labels()
        .iter()
        .enumerate()
        .map(|(i, &c)| PointTag { source: Source::Natural, class: Some(c), name: format!("natural-{i}") })
        .collect();
    for path in &a.sfis {
        for (j, (sfi, target)) in load_sfis(path)?.into_iter().enumerate() {
            images.push(sfi.to_dense());
            tags.push(PointTag { source: Source::Sfi, class: target, name: format!("{}#{j}", path.display()) });
        }
    }
    let feats = net.features(&Tensor::stack(&images)?, layer)?;
    let result = pca_project(&feats, tags, a.standardize)?;
    let rows: Vec<Vec<String>> = result
        .points
        .iter()
        .zip(&result.tags)
        .map(|(p, t)| {
            let source = match t.source {
                Source::Natural => "natural",
                Source::Sfi => "sfi",
                Source::Base => "base",
            };
            let class = t.class.map(|c| c.to_string()).unwrap_or_default();
            vec![t.name.clone(), source.into(), class, fmt_f64(p[0]), fmt_f64(p[1])]
        })
        .collect();
    write_csv(&out.path("points.csv"), &["name", "source", "class", "pc1", "pc2"], &rows)?;
    write_json(&out.path("pca.json"), &result)?;
    let group: Vec<usize> = result.tags.iter().map(|t| t.class.unwrap_or(usize::MAX)).collect();
    let filled: Vec<bool> = result.tags.iter().map(|t| t.source == Source::Natural).collect();
    write_png(&scatter_rgb(&result.points, &group, &filled, 256), &out.path("scatter.png"))?;
    let (same, between) = centroid_distances(&result, te.num_classes());
    println!("same-class natural/SFI centroid distance {same:.4}; between-class natural {between:.4}");
    Ok(vec!["points.csv".into(), "pca.json".into(), "scatter.png".into()])
}

fn run_transfer(a: &TransferArgs, out: &Output, workers: usize) -> Result<Vec<String>> {
    let nets = a.models.iter().map(|p| load_net(p)).collect::<Result<Vec<_>>>()?;
    let mut sets: BTreeMap<usize, SfiSet> = BTreeMap::new();
    for spec in &a.sfis {
        let (idx, path) = spec
            .split_once(':')
            .and_then(|(i, p)| i.parse::<usize>().ok().map(|i| (i, p)))
            .ok_or_else(|| Error::InvalidArgument(format!("expected <model index>:<json>, got '{spec}'")))?;
        let set = sets.entry(idx).or_insert_with(|| SfiSet { source: idx, sfis: Vec::new(), targets: Vec::new() });
        for (sfi, target) in load_sfis(Path::new(path))? {
            let target = target.ok_or_else(|| Error::InvalidArgument(format!("{path} has an SFI without a target")))?;
            set.sfis.push(sfi);
            set.targets.push(target);
        }
    }
    let oracles = nets.iter().map(|n| NetworkOracle::new(n, workers)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn ConfidenceOracle> = oracles.iter().map(|o| o as &dyn ConfidenceOracle).collect();
    let sets: Vec<SfiSet> = sets.into_values().collect();
    let matrix = transfer_matrix(&refs, &sets, a.threshold)?;
    write_text(&out.path("transfer.csv"), &matrix.to_csv()?)?;
    write_json(&out.path("transfer.json"), &matrix)?;
    print!("{}", matrix.to_csv()?);
    Ok(vec!["transfer.csv".into(), "transfer.json".into()])
}

fn run_heatmap(a: &HeatmapArgs, out: &Output) -> Result<Vec<String>> {
    let mut sfis = Vec::new();
    for p in &a.sfis {
        sfis.extend(load_sfis(p)?.into_iter().map(|(s, _)| s));
    }
    let map = pixel_heatmap(&sfis, a.threshold, None)?;
    let rows: Vec<Vec<String>> =
        map.counts.chunks(map.width).map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
    let header: Vec<String> = (0..map.width).map(|x| format!("x{x}")).collect();
    write_csv(&out.path("heatmap.csv"), &header.iter().map(String::as_str).collect::<Vec<_>>(), &rows)?;
    write_png(&map.to_rgb(), &out.path("heatmap.png"))?;
    println!("{} altered pixels over {} SFIs", map.total(), sfis.len());
    Ok(vec!["heatmap.csv".into(), "heatmap.png".into()])
}

/// Execute one recorded command, writing artifacts and `run.json` into
/// `out`. Returns the manifest.
fn execute(config: &Command, out: &Output, workers: usize) -> Result<RunManifest> {
    std::fs::create_dir_all(&out.dir).map_err(|e| Error::io(&out.dir, e))?;
    let names = match config {
        Command::Train(a) => run_train(a, out)?,
        Command::Certify(a) => run_certify(a, out)?,
        Command::AttackDe(a) => run_attack_de(a, out, workers)?,
        Command::AttackInvert(a) => run_invert(a, out)?,
        Command::Defend(a) => run_defend(a, out, workers)?,
        Command::Analyze { what } => match what {
            AnalyzeCommand::Pca(a) => run_pca(a, out)?,
            AnalyzeCommand::Transfer(a) => run_transfer(a, out, workers)?,
            AnalyzeCommand::Heatmap(a) => run_heatmap(a, out)?,
        },
        Command::Reproduce(_) => return Err(Error::InvalidArgument("reproduce cannot be recorded".into())),
    };
    let artifacts = names
        .into_iter()
        .map(|n| sha256_file(&out.path(&n)).map(|h| (n, h)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let manifest =
        RunManifest { format: MANIFEST_FORMAT.into(), config: config.clone(), artifacts, report_name: out.report.clone() };
    write_json(&out.path("run.json"), &manifest)?;
    Ok(manifest)
}

/// Replay `manifest` into `out` and compare artifact hashes. Prints one
/// line per artifact and an overall PASS or FAIL; returns whether all
/// matched.
pub fn reproduce(manifest: &Path, out: Option<PathBuf>, workers: usize) -> Result<bool> {
    if !manifest.is_file() {
        return Err(Error::MissingInputs(vec![manifest.to_path_buf()]));
    }
    let recorded: RunManifest = read_json(manifest)?;
    if recorded.format != MANIFEST_FORMAT {
        return Err(Error::Format { offset: 0, message: format!("unknown manifest format '{}'", recorded.format) });
    }
    let dir = out.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("reproduce"));
    let replay = execute(&recorded.config, &Output { dir, report: recorded.report_name.clone() }, workers)?;
    let mut ok = replay.artifacts.len() == recorded.artifacts.len();
    for (name, hash) in &recorded.artifacts {
        let same = replay.artifacts.get(name) == Some(hash);
        ok &= same;
        println!("{} {name}", if same { "match" } else { "MISMATCH" });
    }
    println!("{}", if ok { "PASS" } else { "FAIL" });
    Ok(ok)
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let workers = resolve_workers(cli.threads);
    let result = match &cli.command {
        Command::Reproduce(a) => reproduce(&a.manifest, cli.out.clone(), workers).map(|ok| if ok { 0 } else { 2 }),
        Command::AttackDe(_) => execute(&cli.command, &Output::new(cli.out.clone(), true), workers).map(|_| 0),
        cmd => execute(cmd, &Output::new(cli.out.clone(), false), workers).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub fn main() -> i32 {
    dispatch(std::env::args_os())
}
