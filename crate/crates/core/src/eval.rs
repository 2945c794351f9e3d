//! Ergodic averages, error metrics and hyperparameter search.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::galerkin::acoustic_energy_flat;
use crate::parallel;
use crate::series::TimeSeries;

/// Scalar function of a flat state.
pub type StateFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// A cost functional evaluated on full flat states.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    eval: Arc<StateFn>,
}

impl std::fmt::Debug for Observable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Observable").field("name", &self.name).finish()
    }
}

impl Observable {
    pub fn new(name: impl Into<String>, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
        }
    }

    /// Instantaneous acoustic energy `¼ Σ (η_j² + μ_j²)`.
    pub fn acoustic_energy() -> Self {
        Self::new("acoustic_energy", acoustic_energy_flat)
    }

    pub fn eval(&self, state: &[f64]) -> f64 {
        (self.eval)(state)
    }
}

/// Mean of `observable` over samples with `t ≥ t0 + discard`.
pub fn time_average(series: &TimeSeries, observable: &Observable, discard: f64) -> Result<f64> {
    let first = if discard <= 0.0 {
        0
    } else {
        // tolerate rounding in t0 + k·dt
        (discard / series.dt - 1e-9).ceil() as usize
    };
    if first >= series.len() {
        return Err(Error::EmptyWindow);
    }
    let window = &series.states[first..];
    Ok(window.iter().map(|s| observable.eval(s)).sum::<f64>() / window.len() as f64)
}

/// Running mean of the observable from the first sample.
pub fn running_average(series: &TimeSeries, observable: &Observable) -> Vec<f64> {
    let mut acc = 0.0;
    series
        .states
        .iter()
        .enumerate()
        .map(|(k, s)| {
            acc += observable.eval(s);
            acc / (k + 1) as f64
        })
        .collect()
}

/// `|predicted − reference| / |reference|`.
pub fn relative_error(predicted: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((predicted - reference).abs() / reference.abs())
}

/// Median of finite values; `None` when there are none.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Outcome of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    /// Relative error, or the failure message.
    pub outcome: std::result::Result<f64, String>,
}

/// Ergodic-average evaluation over a set of seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub reference_average: f64,
    /// Median over valid seeds of the predicted average.
    pub predicted_average: f64,
    /// Median relative error over valid seeds.
    pub relative_error: f64,
    pub horizon: f64,
    pub n_prediction_steps: usize,
    pub per_seed: Vec<SeedResult>,
}

impl EvalReport {
    pub fn valid_errors(&self) -> Vec<f64> {
        self.per_seed.iter().filter_map(|s| s.outcome.as_ref().ok().copied()).collect()
    }

    /// False when fewer than half of the seeds produced a result.
    pub fn is_valid(&self) -> bool {
        2 * self.valid_errors().len() >= self.per_seed.len() && !self.per_seed.is_empty()
    }
}

/// One row of the ROM-size sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rom_modes: usize,
    pub per_seed: Vec<SeedResult>,
    pub median: Option<f64>,
    /// Median computed over at least half of the seeds.
    pub valid: bool,
}

impl SweepRow {
    pub fn from_results(rom_modes: usize, mut per_seed: Vec<SeedResult>) -> Self {
        per_seed.sort_by_key(|s| s.seed);
        let errors: Vec<f64> = per_seed.iter().filter_map(|s| s.outcome.as_ref().ok().copied()).collect();
        let valid = !per_seed.is_empty() && 2 * errors.len() >= per_seed.len();
        Self {
            rom_modes,
            median: median(&errors),
            valid,
            per_seed,
        }
    }
}

/// Runs `evaluate(rom_modes, seed)` for every combination and reduces each
/// ROM size to its median error. Tasks run through [`parallel::map`].
pub fn ng_sweep<F>(rom_ng_values: &[usize], seeds: &[u64], evaluate: F) -> Vec<SweepRow>
where
    F: Fn(usize, u64) -> Result<f64> + Sync + Send,
{
    let tasks: Vec<(usize, u64)> = rom_ng_values
        .iter()
        .flat_map(|&ng| seeds.iter().map(move |&s| (ng, s)))
        .collect();
    let results = parallel::map(&tasks, |&(ng, seed)| evaluate(ng, seed).map_err(|e| e.to_string()));
    rom_ng_values
        .iter()
        .map(|&ng| {
            let per_seed = tasks
                .iter()
                .zip(&results)
                .filter(|((n, _), _)| *n == ng)
                .map(|(&(_, seed), r)| SeedResult {
                    seed,
                    outcome: r.clone(),
                })
                .collect();
            SweepRow::from_results(ng, per_seed)
        })
        .collect()
}

/// Hyperparameter values to search.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub sigma_in: Vec<f64>,
    pub spectral_radius: Vec<f64>,
    pub gamma: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub sigma_in: f64,
    pub spectral_radius: f64,
    pub gamma: f64,
}

impl GridPoint {
    fn key_cmp(&self, other: &Self) -> Ordering {
        self.sigma_in
            .total_cmp(&other.sigma_in)
            .then(self.spectral_radius.total_cmp(&other.spectral_radius))
            .then(self.gamma.total_cmp(&other.gamma))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub point: GridPoint,
    /// Objective value; `+∞` when the evaluation failed.
    pub objective: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: GridCell,
    /// Every cell, in grid order (σ_in outermost, γ innermost).
    pub table: Vec<GridCell>,
}

impl Grid {
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::with_capacity(self.sigma_in.len() * self.spectral_radius.len() * self.gamma.len());
        for &sigma_in in &self.sigma_in {
            for &spectral_radius in &self.spectral_radius {
                for &gamma in &self.gamma {
                    out.push(GridPoint {
                        sigma_in,
                        spectral_radius,
                        gamma,
                    });
                }
            }
        }
        out
    }
}

/// Exhaustive search minimising `objective`. Failed or non-finite cells are
/// recorded with `+∞`. Ties go to the lexicographically smallest
/// `(σ_in, ρ, γ)`.
pub fn grid_search<F>(grid: &Grid, objective: F) -> Result<GridResult>
where
    F: Fn(&GridPoint) -> Result<f64> + Sync + Send,
{
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::InvalidArgument("grid has no cells".into()));
    }
    let values = parallel::map(&points, |p| objective(p));
    let table: Vec<GridCell> = points
        .into_iter()
        .zip(values)
        .map(|(point, v)| match v {
            Ok(x) if x.is_finite() => GridCell {
                point,
                objective: x,
                error: None,
            },
            Ok(x) => GridCell {
                point,
                objective: f64::INFINITY,
                error: Some(format!("non-finite objective {x}")),
            },
            Err(e) => GridCell {
                point,
                objective: f64::INFINITY,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let best = table
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective).then(a.point.key_cmp(&b.point)))
        .expect("non-empty")
        .clone();
    Ok(GridResult { best, table })
}
