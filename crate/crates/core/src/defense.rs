//! Outlier-class defense: generate SFI pools against the current model,
//! retrain with one extra "outlier" class that absorbs them, and measure
//! how well the retrained model separates SFIs and how easily fresh SFIs
//! still get through.
//!
//! Every round reuses the same outlier class, so a defended model always
//! has `classes + 1` outputs. Retraining warm-starts from the previous
//! round's model.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::attack_de::{run_de, DEConfig, NetworkOracle};
use crate::data::{csv_string, fmt_f64, Dataset};
use crate::error::{Error, Result};
use crate::nn::{accuracy, predict, train, Network, TrainConfig, TrainMetrics};
use crate::seed;
use crate::sfi::SparseImage;
use crate::tensor::Tensor;

pub const OUTLIER_NAME: &str = "outlier";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub per_class: usize,
    /// Inclusive range the per-SFI pixel budget is drawn from.
    pub k_range: (usize, usize),
    pub population: usize,
    pub iterations: usize,
    pub base: Vec<f64>,
    pub early_stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub rounds: usize,
    pub pool: PoolConfig,
    /// Share of each pool held out for evaluation.
    pub test_fraction: f64,
    pub retrain: TrainConfig,
    /// Fresh attacks per non-outlier class when measuring reattack success.
    pub reattack_per_class: usize,
    /// Base color of those fresh attacks.
    pub reattack_base: Vec<f64>,
    pub seed: u64,
    pub workers: usize,
}

impl DefenseConfig {
    /// Desk-scale defaults: 60 SFIs per class, `k` in `[1, 100]`, DE with
    /// 40 candidates and 60 iterations, early stop at 0.9, 20% held out,
    /// white-base reattacks.
    pub fn desk(base: Vec<f64>, retrain: TrainConfig, seed: u64) -> Self {
        Self {
            reattack_base: vec![1.0; base.len()],
            rounds: 2,
            pool: PoolConfig { per_class: 60, k_range: (1, 100), population: 40, iterations: 60, base, early_stop: 0.9 },
            test_fraction: 0.2,
            retrain,
            reattack_per_class: 2,
            seed,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        let (lo, hi) = self.pool.k_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("invalid k range [{lo}, {hi}]")));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test fraction must lie in (0, 1)".into()));
        }
        if self.reattack_base.len() != self.pool.base.len() {
            return Err(Error::Config("reattack base needs one value per channel".into()));
        }
        if !(0.0..=1.0).contains(&self.pool.early_stop) {
            return Err(Error::Config("early stop must lie in [0, 1]".into()));
        }
        self.retrain.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub sfi: SparseImage,
    pub target: usize,
    pub k: usize,
    pub round: usize,
    pub confidence: f64,
    /// Whether the attack reached the early-stop confidence. Failed attacks
    /// stay in the pool.
    pub reached: bool,
}

/// SFIs used for retraining.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSplit(pub Vec<PoolEntry>);

/// SFIs never used for training; the only input to the defense metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldOutSplit(pub Vec<PoolEntry>);

fn de_config(pool: &PoolConfig, target: usize, k: usize, seed: u64) -> DEConfig {
    DEConfig {
        population: pool.population,
        iterations: pool.iterations,
        scale: 0.5,
        k,
        intensity: (0.0, 1.0),
        base: pool.base.clone(),
        target,
        seed,
        early_stop: Some(pool.early_stop),
    }
}

/// `per_class` SFIs for each of the first `classes` classes of `net`, with
/// `k` drawn uniformly from `pool.k_range` and early stopping.
pub fn generate_pool(
    net: &Network,
    pool: &PoolConfig,
    classes: usize,
    round: usize,
    run_seed: u64,
    workers: usize,
) -> Result<Vec<PoolEntry>> {
    let oracle = NetworkOracle::with_base(net, &pool.base, workers)?;
    let mut out = Vec::with_capacity(classes * pool.per_class);
    for target in 0..classes {
        for j in 0..pool.per_class {
            let idx = ((round * classes + target) * pool.per_class + j) as u64;
            let mut rng = seed::rng(run_seed, seed::POOL, idx);
            let k = rng.gen_range(pool.k_range.0..=pool.k_range.1);
            let cfg = de_config(pool, target, k, rng.gen());
            let rep = run_de(&oracle, &cfg)?;
            out.push(PoolEntry {
                reached: rep.confidence >= pool.early_stop,
                confidence: rep.confidence,
                sfi: rep.sfi,
                target,
                k,
                round,
            });
        }
    }
    Ok(out)
}

/// Shuffle and split a pool into disjoint train and held-out parts.
pub fn split_pool(mut pool: Vec<PoolEntry>, test_fraction: f64, run_seed: u64, round: usize) -> (TrainSplit, HeldOutSplit) {
    pool.shuffle(&mut seed::rng(run_seed, seed::SPLIT, round as u64));
    let n_test = ((pool.len() as f64) * test_fraction).round() as usize;
    let train = pool.split_off(n_test);
    (TrainSplit(train), HeldOutSplit(pool))
}

fn sfi_images(entries: &[PoolEntry]) -> Result<Tensor> {
    Tensor::stack(&entries.iter().map(|e| e.sfi.to_dense()).collect::<Vec<_>>())
}

/// Widen `net` by an outlier class if it does not have one yet, then train
/// on the natural data plus every training split labeled as outlier.
pub fn retrain_outlier(
    net: &Network,
    natural: &Dataset,
    splits: &[&TrainSplit],
    cfg: &TrainConfig,
    test: Option<&Dataset>,
) -> Result<(Network, TrainMetrics)> {
    let classes = natural.num_classes();
    let model = if net.num_classes() == classes {
        net.widen_output(1, seed::derive(cfg.seed, "outlier", 0))?
    } else if net.num_classes() == classes + 1 {
        net.clone()
    } else {
        return Err(Error::Shape(format!("model has {} outputs for {classes} natural classes", net.num_classes())));
    };
    let mut names = natural.class_names().to_vec();
    names.push(OUTLIER_NAME.into());
    let mut data = natural.clone().with_class_names(names.clone())?;
    let entries: Vec<PoolEntry> = splits.iter().flat_map(|s| s.0.iter().cloned()).collect();
    if !entries.is_empty() {
        let sfis = Dataset::new(sfi_images(&entries)?, vec![classes; entries.len()], names.clone())?;
        data = data.concat(&sfis)?;
    }
    let test = test.map(|t| t.clone().with_class_names(names)).transpose()?;
    train(&model, &data, test.as_ref(), cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// Accuracy over natural test images and held-out SFIs together.
    pub combined: f64,
    pub natural: f64,
    /// Share of held-out SFIs assigned to the outlier class.
    pub defense: f64,
    /// Share of fresh attacks reaching the confidence threshold on a
    /// natural class.
    pub reattack: f64,
    pub natural_count: usize,
    pub sfi_count: usize,
}

/// Fresh attacks against `net`, `per_class` per natural class; returns the
/// success share and the reports' confidences.
pub fn reattack(
    net: &Network,
    pool: &PoolConfig,
    classes: usize,
    per_class: usize,
    run_seed: u64,
    workers: usize,
) -> Result<(f64, Vec<f64>)> {
    let p = PoolConfig { per_class, ..pool.clone() };
    let entries = generate_pool(net, &p, classes, 0, run_seed, workers)?;
    if entries.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let conf: Vec<f64> = entries.iter().map(|e| e.confidence).collect();
    let hits = entries.iter().filter(|e| e.reached).count();
    Ok((hits as f64 / entries.len() as f64, conf))
}

pub fn evaluate_round(
    net: &Network,
    natural_test: &Dataset,
    held_out: &[&HeldOutSplit],
    pool: &PoolConfig,
    reattack_per_class: usize,
    run_seed: u64,
    workers: usize,
) -> Result<RoundMetrics> {
    let classes = natural_test.num_classes();
    if net.num_classes() != classes + 1 {
        return Err(Error::Shape("evaluation needs a model with an outlier class".into()));
    }
    let natural = accuracy(net, natural_test, workers)?;
    let entries: Vec<PoolEntry> = held_out.iter().flat_map(|s| s.0.iter().cloned()).collect();
    let defended = if entries.is_empty() {
        0
    } else {
        predict(net, &sfi_images(&entries)?, workers)?.iter().filter(|&&p| p == classes).count()
    };
    let n_nat = natural_test.len();
    let n_sfi = entries.len();
    let defense = if n_sfi == 0 { 0.0 } else { defended as f64 / n_sfi as f64 };
    let combined = (natural * n_nat as f64 + defended as f64) / (n_nat + n_sfi) as f64;
    let (reattack, _) = if reattack_per_class > 0 {
        reattack(net, pool, classes, reattack_per_class, run_seed, workers)?
    } else {
        (0.0, Vec::new())
    };
    Ok(RoundMetrics { combined, natural, defense, reattack, natural_count: n_nat, sfi_count: n_sfi })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseRound {
    pub round: usize,
    pub pool_size: usize,
    pub pool_reached: usize,
    pub train_sfis: usize,
    pub held_out_sfis: usize,
    pub metrics: RoundMetrics,
    pub train: TrainMetrics,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseReport {
    /// Natural accuracy of the undefended model.
    pub baseline_natural: f64,
    /// Share of the first pool that reached the early-stop confidence.
    pub baseline_attack_success: f64,
    pub rounds: Vec<DefenseRound>,
    pub config: DefenseConfig,
}

impl DefenseReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut rows = vec![vec![
            "M0".to_string(),
            String::new(),
            fmt_f64(self.baseline_natural),
            String::new(),
            fmt_f64(self.baseline_attack_success),
        ]];
        for r in &self.rounds {
            rows.push(vec![
                format!("M{}", r.round + 1),
                fmt_f64(r.metrics.combined),
                fmt_f64(r.metrics.natural),
                fmt_f64(r.metrics.defense),
                fmt_f64(r.metrics.reattack),
            ]);
        }
        csv_string(&["model", "combined", "natural", "defense", "reattack"], &rows)
    }
}

/// The full loop: for each round, attack the current model, split the pool,
/// retrain on all training splits so far, evaluate on all held-out splits.
/// Returns the final model alongside the report.
pub fn run_defense_loop(
    net: &Network,
    natural_train: &Dataset,
    natural_test: &Dataset,
    cfg: &DefenseConfig,
) -> Result<(Network, DefenseReport)> {
    cfg.validate()?;
    let classes = natural_train.num_classes();
    let baseline_natural = accuracy(net, natural_test, cfg.workers)?;
    let mut model = net.clone();
    let mut train_splits: Vec<TrainSplit> = Vec::new();
    let mut held_out: Vec<HeldOutSplit> = Vec::new();
    let mut rounds = Vec::new();
    let mut baseline_attack_success = 0.0;
    for round in 0..cfg.rounds {
        let round_seed = seed::derive(cfg.seed, "round", round as u64);
        let pool = generate_pool(&model, &cfg.pool, classes, round, round_seed, cfg.workers)?;
        let reached = pool.iter().filter(|e| e.reached).count();
        if round == 0 {
            baseline_attack_success = reached as f64 / pool.len().max(1) as f64;
        }
        let pool_size = pool.len();
        let (tr, te) = split_pool(pool, cfg.test_fraction, round_seed, round);
        let (n_tr, n_te) = (tr.0.len(), te.0.len());
        train_splits.push(tr);
        held_out.push(te);
        let mut tcfg = cfg.retrain.clone();
        tcfg.seed = seed::derive(round_seed, "retrain", 0);
        let (m, metrics) = retrain_outlier(&model, natural_train, &train_splits.iter().collect::<Vec<_>>(), &tcfg, None)?;
        model = m;
        let eval_seed = seed::derive(round_seed, "reattack", 0);
        let reattack_pool = PoolConfig { base: cfg.reattack_base.clone(), ..cfg.pool.clone() };
        let rm = evaluate_round(
            &model,
            natural_test,
            &held_out.iter().collect::<Vec<_>>(),
            &reattack_pool,
            cfg.reattack_per_class,
            eval_seed,
            cfg.workers,
        )?;
        rounds.push(DefenseRound {
            round,
            pool_size,
            pool_reached: reached,
            train_sfis: n_tr,
            held_out_sfis: n_te,
            metrics: rm,
            train: metrics,
            seed: round_seed,
        });
    }
    Ok((model, DefenseReport { baseline_natural, baseline_attack_success, rounds, config: cfg.clone() }))
}
