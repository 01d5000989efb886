//! Class-targeted sparse fooling images by differential evolution.
//!
//! A candidate is `k` rows of `(x, y, c_1..c_C)`. Each iteration builds one
//! mutant per candidate as `x_r1 + F (x_r2 - x_r3)` with three mutually
//! distinct random indices, repairs it (positions rounded then clamped to
//! the image, intensities clamped to `[m, n]`) and keeps it only if its
//! target confidence is strictly higher. There is no crossover.

mod oracle;

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use oracle::{ConfidenceOracle, FnOracle, NetworkOracle};

use crate::error::{Error, Result};
use crate::seed;
use crate::sfi::{Alteration, ImageDims, SparseImage};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseColor {
    Black,
    Gray,
    White,
    Red,
    Green,
    Blue,
}

impl BaseColor {
    pub const ALL: [BaseColor; 6] =
        [BaseColor::Black, BaseColor::Gray, BaseColor::White, BaseColor::Red, BaseColor::Green, BaseColor::Blue];

    /// Per-channel intensities in `[0, 1]`.
    pub fn values(self, channels: usize) -> Result<Vec<f64>> {
        let rgb = match self {
            BaseColor::Black => [0.0; 3],
            BaseColor::Gray => [0.5; 3],
            BaseColor::White => [1.0; 3],
            BaseColor::Red => [1.0, 0.0, 0.0],
            BaseColor::Green => [0.0, 1.0, 0.0],
            BaseColor::Blue => [0.0, 0.0, 1.0],
        };
        match channels {
            3 => Ok(rgb.to_vec()),
            1 if rgb[0] == rgb[1] && rgb[1] == rgb[2] => Ok(vec![rgb[0]]),
            _ => Err(Error::InvalidArgument(format!("base color {self} is not available for {channels}-channel images"))),
        }
    }
}

impl fmt::Display for BaseColor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit enum");
        f.write_str(s.as_str().expect("string"))
    }
}

impl FromStr for BaseColor {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::InvalidArgument(format!("unknown base color '{s}' (black, gray, white, red, green, blue)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DEConfig {
    pub population: usize,
    pub iterations: usize,
    pub scale: f64,
    pub k: usize,
    /// Intensity range `[m, n]` for altered pixels.
    pub intensity: (f64, f64),
    /// Base intensity per channel.
    pub base: Vec<f64>,
    pub target: usize,
    pub seed: u64,
    /// Stop as soon as any candidate reaches this confidence.
    pub early_stop: Option<f64>,
}

impl DEConfig {
    /// `s = 500`, `T = 1000`, `F = 0.5`, `k = 5`, intensities in `[0, 1]`.
    pub fn new(target: usize, base: Vec<f64>, seed: u64) -> Self {
        Self { population: 500, iterations: 1000, scale: 0.5, k: 5, intensity: (0.0, 1.0), base, target, seed, early_stop: None }
    }

    pub fn validate(&self, dims: ImageDims) -> Result<()> {
        if self.population < 4 {
            return Err(Error::Config("population must be at least 4 to draw three distinct partners".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        let (m, n) = self.intensity;
        if !(m < n) || !m.is_finite() || !n.is_finite() {
            return Err(Error::Config(format!("intensity range [{m}, {n}] needs m < n")));
        }
        if !self.scale.is_finite() {
            return Err(Error::Config("scale factor must be finite".into()));
        }
        if self.base.len() != dims.channels {
            return Err(Error::Config(format!("{} base values for {} channels", self.base.len(), dims.channels)));
        }
        if self.base.iter().any(|b| !(m..=n).contains(b)) {
            return Err(Error::Config("base intensity outside the intensity range".into()));
        }
        if let Some(e) = self.early_stop {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config("early-stop confidence must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }

    /// Sampling distribution of initial intensities, `N((m+n)/2, ((n-m)/2)^2)`.
    pub fn intensity_distribution(&self) -> Normal<f64> {
        let (m, n) = self.intensity;
        Normal::new((m + n) / 2.0, (n - m) / 2.0).expect("positive spread")
    }
}

/// A genome of `k` rows `(x, y, c_1..c_C)` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub genes: Vec<f64>,
    pub fitness: f64,
}

impl Candidate {
    pub fn rows(&self, channels: usize) -> impl Iterator<Item = &[f64]> {
        self.genes.chunks_exact(2 + channels)
    }
}

/// `s` random candidates: positions uniform over the image, intensities from
/// [`DEConfig::intensity_distribution`] clamped into `[m, n]`. Fitness is
/// left at negative infinity.
pub fn init_population(cfg: &DEConfig, dims: ImageDims, rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    let normal = cfg.intensity_distribution();
    let (m, n) = cfg.intensity;
    (0..cfg.population)
        .map(|_| {
            let mut genes = Vec::with_capacity(cfg.k * (2 + dims.channels));
            for _ in 0..cfg.k {
                genes.push(rng.gen_range(0..dims.width) as f64);
                genes.push(rng.gen_range(0..dims.height) as f64);
                for _ in 0..dims.channels {
                    genes.push(normal.sample(rng).clamp(m, n));
                }
            }
            Candidate { genes, fitness: f64::NEG_INFINITY }
        })
        .collect()
}

/// Round and clamp positions, clamp intensities.
pub fn repair(genes: &mut [f64], cfg: &DEConfig, dims: ImageDims) {
    let (m, n) = cfg.intensity;
    for row in genes.chunks_exact_mut(2 + dims.channels) {
        row[0] = row[0].round().clamp(0.0, (dims.width - 1) as f64);
        row[1] = row[1].round().clamp(0.0, (dims.height - 1) as f64);
        for c in &mut row[2..] {
            *c = c.clamp(m, n);
        }
    }
}

/// `a + scale (b - c)` entrywise, before repair.
pub fn mutate_with(a: &[f64], b: &[f64], c: &[f64], scale: f64) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((a, b), c)| a + scale * (b - c)).collect()
}

/// Repaired mutant for slot `i` from three mutually distinct random members.
/// The slot itself may be drawn; only the three partners must differ.
pub fn mutate(pop: &[Candidate], _i: usize, cfg: &DEConfig, dims: ImageDims, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if pop.len() < 4 {
        return Err(Error::Config("population must be at least 4 to draw three distinct partners".into()));
    }
    let r = sample(rng, pop.len(), 3);
    let mut v = mutate_with(&pop[r.index(0)].genes, &pop[r.index(1)].genes, &pop[r.index(2)].genes, cfg.scale);
    repair(&mut v, cfg, dims);
    Ok(v)
}

/// Apply candidate rows to a base image; later rows overwrite earlier ones
/// at the same position and pixels equal to the base are not recorded.
pub fn render_sfi(genes: &[f64], base: &[f64], dims: ImageDims, range: (f64, f64)) -> Result<SparseImage> {
    let c = dims.channels;
    let mut by_pixel: Vec<(usize, Vec<f64>)> = Vec::new();
    for row in genes.chunks_exact(2 + c) {
        let p = row[1] as usize * dims.width + row[0] as usize;
        match by_pixel.iter_mut().find(|(q, _)| *q == p) {
            Some(slot) => slot.1 = row[2..].to_vec(),
            None => by_pixel.push((p, row[2..].to_vec())),
        }
    }
    let alts = by_pixel
        .into_iter()
        .filter(|(_, v)| v.as_slice() != base)
        .map(|(pixel, values)| Alteration { pixel, values })
        .collect();
    SparseImage::new(dims, base.to_vec(), alts, range)
}

fn render_dense_into(genes: &[f64], base: &[f64], dims: ImageDims, out: &mut [f64]) {
    let plane = dims.pixels();
    for (c, &b) in base.iter().enumerate() {
        out[c * plane..(c + 1) * plane].fill(b);
    }
    for row in genes.chunks_exact(2 + dims.channels) {
        let p = row[1] as usize * dims.width + row[0] as usize;
        for (c, &v) in row[2..].iter().enumerate() {
            out[c * plane + p] = v;
        }
    }
}

fn render_batch(genomes: &[&[f64]], base: &[f64], dims: ImageDims) -> Tensor {
    let len = dims.channels * dims.pixels();
    let mut data = vec![0.0; genomes.len() * len];
    for (g, out) in genomes.iter().zip(data.chunks_exact_mut(len)) {
        render_dense_into(g, base, dims, out);
    }
    let mut shape = vec![genomes.len()];
    shape.extend(dims.shape());
    Tensor::new(shape, data).expect("batch shape")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub sfi: SparseImage,
    /// Target confidence of `sfi` from a fresh query.
    pub confidence: f64,
    pub target: usize,
    /// Best fitness after initialization, then after every iteration run.
    pub trajectory: Vec<f64>,
    pub config: DEConfig,
    pub iterations_used: usize,
    pub evaluations: usize,
    pub genes: Vec<f64>,
}

impl AttackReport {
    pub fn succeeded(&self, threshold: f64) -> bool {
        self.confidence >= threshold
    }
}

fn best_index(pop: &[Candidate]) -> usize {
    let mut b = 0;
    for (i, c) in pop.iter().enumerate() {
        if c.fitness > pop[b].fitness {
            b = i;
        }
    }
    b
}

/// Run the attack against `oracle`, querying only target confidences.
pub fn run_de(oracle: &dyn ConfidenceOracle, cfg: &DEConfig) -> Result<AttackReport> {
    let dims = oracle.image_dims();
    cfg.validate(dims)?;
    if cfg.target >= oracle.num_classes() {
        return Err(Error::LabelOutOfRange { label: cfg.target, classes: oracle.num_classes() });
    }
    let mut rng = seed::rng(cfg.seed, seed::DE, 0);
    let mut pop = init_population(cfg, dims, &mut rng);
    let genomes: Vec<&[f64]> = pop.iter().map(|c| c.genes.as_slice()).collect();
    let fit = oracle.confidences(&render_batch(&genomes, &cfg.base, dims), cfg.target)?;
    for (c, f) in pop.iter_mut().zip(fit) {
        c.fitness = f;
    }
    let mut evaluations = pop.len();
    let mut best = pop[best_index(&pop)].fitness;
    let mut trajectory = vec![best];
    let mut used = 0;
    for _ in 0..cfg.iterations {
        if cfg.early_stop.is_some_and(|e| best >= e) {
            break;
        }
        let mutants = (0..pop.len()).map(|i| mutate(&pop, i, cfg, dims, &mut rng)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&[f64]> = mutants.iter().map(Vec::as_slice).collect();
        let fit = oracle.confidences(&render_batch(&refs, &cfg.base, dims), cfg.target)?;
        evaluations += mutants.len();
        for ((c, v), f) in pop.iter_mut().zip(mutants).zip(fit) {
            if c.fitness < f {
                *c = Candidate { genes: v, fitness: f };
            }
        }
        best = pop[best_index(&pop)].fitness;
        trajectory.push(best);
        used += 1;
    }
    let winner = &pop[best_index(&pop)];
    let sfi = render_sfi(&winner.genes, &cfg.base, dims, cfg.intensity)?;
    let mut shape = vec![1];
    shape.extend(dims.shape());
    let dense = sfi.to_dense().reshape(shape)?;
    let confidence = oracle.confidences(&dense, cfg.target)?[0];
    Ok(AttackReport {
        sfi,
        confidence,
        target: cfg.target,
        trajectory,
        config: cfg.clone(),
        iterations_used: used,
        evaluations: evaluations + 1,
        genes: winner.genes.clone(),
    })
}

/// Repeat the attack with fresh seeds until one run reaches `threshold`,
/// at most `attempts` runs; returns the most confident run. The first
/// attempt uses `cfg.seed` unchanged.
pub fn run_de_attempts(oracle: &dyn ConfidenceOracle, cfg: &DEConfig, attempts: usize, threshold: f64) -> Result<AttackReport> {
    let mut best: Option<AttackReport> = None;
    for a in 0..attempts.max(1) {
        let mut c = cfg.clone();
        if a > 0 {
            c.seed = seed::derive(cfg.seed, "de-attempt", a as u64);
        }
        let r = run_de(oracle, &c)?;
        let done = r.succeeded(threshold);
        if best.as_ref().is_none_or(|b| r.confidence > b.confidence) {
            best = Some(r);
        }
        if done {
            break;
        }
    }
    Ok(best.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg() -> DEConfig {
        let mut c = DEConfig::new(0, vec![0.0], 3);
        c.population = 8;
        c.iterations = 5;
        c
    }

    #[test]
    fn vanishing_difference_copies_first_parent() {
        let a = [3.0, 4.0, 0.2];
        let b = [1.0, 1.0, 0.9];
        assert_eq!(mutate_with(&a, &b, &b, 0.5), a.to_vec());
        assert_eq!(mutate_with(&[4.0], &[2.0], &[0.0], 0.5), vec![5.0]);
    }

    #[test]
    fn render_last_row_wins_and_base_rows_vanish() {
        let dims = ImageDims::new(1, 3, 3);
        let s = render_sfi(&[1.0, 1.0, 0.2, 1.0, 1.0, 0.9, 0.0, 2.0, 0.0], &[0.0], dims, (0.0, 1.0)).unwrap();
        assert_eq!(s.alterations, vec![Alteration { pixel: 4, values: vec![0.9] }]);
    }

    #[test]
    fn constant_oracle_keeps_fitness() {
        let dims = ImageDims::new(1, 4, 4);
        let o = FnOracle::new(dims, 2, |_| vec![0.7, 0.3]);
        let r = run_de(&o, &cfg()).unwrap();
        assert!(r.trajectory.iter().all(|&f| (f - 0.7).abs() < 1e-15));
        assert_eq!(r.iterations_used, 5);
    }

    #[test]
    fn small_population_rejected() {
        let mut c = cfg();
        c.population = 3;
        assert!(c.validate(ImageDims::new(1, 4, 4)).is_err());
        let pop = vec![Candidate { genes: vec![], fitness: 0.0 }; 3];
        assert!(mutate(&pop, 0, &c, ImageDims::new(1, 4, 4), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn base_colors() {
        assert_eq!(BaseColor::Gray.values(1).unwrap(), vec![0.5]);
        assert!(BaseColor::Red.values(1).is_err());
        assert_eq!("white".parse::<BaseColor>().unwrap(), BaseColor::White);
        assert_eq!(BaseColor::Blue.to_string(), "blue");
    }
}
