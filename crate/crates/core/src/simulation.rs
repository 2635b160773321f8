//! Seeded Monte Carlo studies of boundary-stopped walks.
//!
//! Path `i` of a study draws from a ChaCha8 generator seeded with the study
//! seed and switched to stream `i`. Streams are independent and the mapping
//! from `(seed, i)` to uniforms is fixed by the ChaCha8 specification, so a
//! study's output depends only on its configuration, never on the number of
//! worker threads. Summaries are reduced sequentially in path order with
//! compensated summation.

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{ml_estimate, unbiased_estimate, ClosedForm, StopObservation};
use crate::lattice::{LatticePoint, OutcomeModel, Region, RegionRule};
use crate::paths::{count_paths_with, PathCountTable, Retention};
use crate::scalar::{rational_to_f64, Rational};

pub const DEFAULT_MAX_STEPS: usize = 1_000_000;
pub const DEFAULT_FAILURE_LIMIT: f64 = 0.001;

/// How unbiased estimates are computed for each absorbed path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimatorSource {
    /// Closed form for a matching linear-rule walk.
    ClosedForm(ClosedForm),
    /// Ratios from a path-count table built to the given horizon.
    PathCounts { horizon: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Ml,
    Unbiased,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ml => "ml",
            Family::Unbiased => "unbiased",
        }
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub model: OutcomeModel<f64>,
    pub region: Region,
    pub source: EstimatorSource,
    pub families: Vec<Family>,
    pub paths: usize,
    pub seed: u64,
    pub max_steps: usize,
    /// Largest tolerated fraction of paths that never reach the boundary.
    pub failure_limit: f64,
    /// Worker threads; `None` uses the global pool. Never affects results.
    pub threads: Option<usize>,
}

impl StudyConfig {
    pub fn new(model: OutcomeModel<f64>, region: Region, source: EstimatorSource) -> Self {
        Self {
            model,
            region,
            source,
            families: vec![Family::Ml, Family::Unbiased],
            paths: 10_000,
            seed: 0,
            max_steps: DEFAULT_MAX_STEPS,
            failure_limit: DEFAULT_FAILURE_LIMIT,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PathOutcome {
    Absorbed(StopObservation),
    NonAbsorbed { steps: usize },
}

/// The ChaCha8 stream used for path `index` of a study seeded with `seed`.
pub fn path_stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Cumulative distribution used by inverse-CDF sampling.
struct Sampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl Sampler {
    fn new(model: &OutcomeModel<f64>) -> Self {
        let mut acc = 0.0;
        let cdf = model.p().iter().map(|p| {
            acc += p;
            acc
        });
        let cdf: Vec<f64> = cdf.collect();
        let last_positive = model.p().iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self { cdf, last_positive }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        // Rounding can leave the final cumulative value just under one.
        self.cdf.iter().position(|&c| u < c).unwrap_or(self.last_positive)
    }
}

pub fn sample_path<R: Rng>(
    model: &OutcomeModel<f64>,
    region: &Region,
    rng: &mut R,
    max_steps: usize,
) -> Result<PathOutcome> {
    model.check_dim(region.dim())?;
    let sampler = Sampler::new(model);
    Ok(walk(&sampler, region, rng, max_steps))
}

fn walk<R: Rng>(sampler: &Sampler, region: &Region, rng: &mut R, max_steps: usize) -> PathOutcome {
    let dim = region.dim();
    let mut x = LatticePoint::origin(dim);
    // Linear rules track the level incrementally instead of re-evaluating.
    if let RegionRule::Linear { coeffs, target } = region.rule() {
        let mut level = 0i64;
        if level >= *target {
            return PathOutcome::NonAbsorbed { steps: 0 };
        }
        let mut counts = vec![0u32; dim];
        for _ in 0..max_steps {
            let i = sampler.draw(rng);
            counts[i] += 1;
            level += coeffs[i];
            if level >= *target {
                let y = LatticePoint::new(counts);
                return PathOutcome::Absorbed(StopObservation::new(y).expect("order >= 1"));
            }
        }
        return PathOutcome::NonAbsorbed { steps: max_steps };
    }
    if !region.declares(&x) {
        return PathOutcome::NonAbsorbed { steps: 0 };
    }
    for _ in 0..max_steps {
        x = x.step(sampler.draw(rng));
        if !region.declares(&x) {
            return PathOutcome::Absorbed(StopObservation::new(x).expect("order >= 1"));
        }
    }
    PathOutcome::NonAbsorbed { steps: max_steps }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathRecord {
    pub index: usize,
    pub outcome: PathOutcome,
    pub ml: Option<Vec<Rational>>,
    pub unbiased: Option<Vec<Rational>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats<F> {
    pub mean: F,
    pub sd: F,
    pub mse: F,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CategorySummary {
    pub category: usize,
    pub label: String,
    pub family: Family,
    pub stats: Stats<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationSummary {
    pub rows: Vec<CategorySummary>,
    pub n_absorbed: usize,
    pub n_failed: usize,
    pub seed: u64,
}

impl SimulationSummary {
    pub fn get(&self, family: Family, category: usize) -> Option<&Stats<f64>> {
        self.rows
            .iter()
            .find(|r| r.family == family && r.category == category)
            .map(|r| &r.stats)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Study {
    pub summary: SimulationSummary,
    pub records: Vec<PathRecord>,
}

/// Neumaier-compensated sum in iteration order.
fn compensated_sum<F: Float>(values: impl Iterator<Item = F>) -> F {
    let mut sum = F::zero();
    let mut comp = F::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

/// Per-category mean, sample standard deviation (divisor `n - 1`, zero for a
/// single estimate) and mean squared error against `true_p`.
pub fn summarize<F: Float>(estimates: &[Vec<F>], true_p: &[F]) -> Result<Vec<Stats<F>>> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(bad) = estimates.iter().find(|e| e.len() != true_p.len()) {
        return Err(Error::DimensionMismatch { expected: true_p.len(), found: bad.len() });
    }
    let n = F::from(estimates.len()).expect("count fits in a float");
    Ok(true_p
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let mean = compensated_sum(estimates.iter().map(|e| e[i])) / n;
            let ss = compensated_sum(estimates.iter().map(|e| (e[i] - mean) * (e[i] - mean)));
            let sd = if estimates.len() > 1 { (ss / (n - F::one())).sqrt() } else { F::zero() };
            let mse = compensated_sum(estimates.iter().map(|e| (e[i] - p) * (e[i] - p))) / n;
            Stats { mean, sd, mse }
        })
        .collect())
}

enum Estimator {
    Closed(ClosedForm, u32),
    Table(PathCountTable),
}

impl Estimator {
    fn from_config(config: &StudyConfig) -> Result<Self> {
        match config.source {
            EstimatorSource::ClosedForm(form) => {
                let b = form.matches(&config.region).ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "closed form {} needs a linear region with coefficients {:?}",
                        form.name(),
                        form.coeffs()
                    ))
                })?;
                Ok(Estimator::Closed(form, b))
            }
            EstimatorSource::PathCounts { horizon } => {
                let region = config.region.clone().with_horizon(horizon.max(config.region.horizon()));
                Ok(Estimator::Table(count_paths_with(&region, horizon, Retention::BoundaryAndFrontier)?))
            }
        }
    }

    fn unbiased(&self, y: &LatticePoint) -> Result<Vec<Rational>> {
        match self {
            Estimator::Closed(form, b) => form.estimate(y, *b),
            Estimator::Table(table) => unbiased_estimate(table, y),
        }
    }
}

pub fn run_study(config: &StudyConfig) -> Result<Study> {
    if config.paths == 0 {
        return Err(Error::InvalidArgument("paths must be at least 1".into()));
    }
    if config.max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    config.model.check_dim(config.region.dim())?;
    let estimator = Estimator::from_config(config)?;
    let sampler = Sampler::new(&config.model);
    let want_ml = config.families.contains(&Family::Ml);
    let want_unbiased = config.families.contains(&Family::Unbiased);

    let simulate = |index: usize| -> Result<PathRecord> {
        let mut rng = path_stream(config.seed, index as u64);
        let outcome = walk(&sampler, &config.region, &mut rng, config.max_steps);
        let (ml, unbiased) = match &outcome {
            PathOutcome::Absorbed(obs) => (
                if want_ml { Some(ml_estimate(obs.point())?) } else { None },
                if want_unbiased { Some(estimator.unbiased(obs.point())?) } else { None },
            ),
            PathOutcome::NonAbsorbed { .. } => (None, None),
        };
        Ok(PathRecord { index, outcome, ml, unbiased })
    };
    let records: Vec<PathRecord> = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(|| (0..config.paths).into_par_iter().map(simulate).collect::<Result<_>>())?,
        None => (0..config.paths).into_par_iter().map(simulate).collect::<Result<_>>()?,
    };

    let n_failed = records
        .iter()
        .filter(|r| matches!(r.outcome, PathOutcome::NonAbsorbed { .. }))
        .count();
    let n_absorbed = records.len() - n_failed;
    if n_failed as f64 > config.failure_limit * config.paths as f64 {
        return Err(Error::TooManyNonAbsorbed {
            failed: n_failed,
            paths: config.paths,
            limit: config.failure_limit,
        });
    }
    if n_absorbed == 0 {
        return Err(Error::EmptyInput);
    }

    let true_p = config.model.p();
    let mut rows = Vec::new();
    for &family in &config.families {
        let estimates: Vec<Vec<f64>> = records
            .iter()
            .filter_map(|r| match family {
                Family::Ml => r.ml.as_ref(),
                Family::Unbiased => r.unbiased.as_ref(),
            })
            .map(|v| v.iter().map(rational_to_f64).collect())
            .collect();
        for (category, stats) in summarize(&estimates, true_p)?.into_iter().enumerate() {
            rows.push(CategorySummary {
                category,
                label: config.model.labels()[category].clone(),
                family,
                stats,
            });
        }
    }
    Ok(Study {
        summary: SimulationSummary { rows, n_absorbed, n_failed, seed: config.seed },
        records,
    })
}
