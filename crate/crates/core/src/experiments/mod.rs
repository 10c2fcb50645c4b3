//! Monte-Carlo harness: conditioned excess-risk estimation over
//! (eta, T, n) grids, log-log rate fitting, and envelope comparison.
//!
//! Everything in the harness runs in f64. Per-replicate randomness comes
//! from a seed that is a pure function of (base_seed, eta, T, n, replicate),
//! so any cell can be reproduced in isolation, bit for bit, and cells and
//! replicates can execute in any order (they run on a thread pool here)
//! without changing the merged result.

mod conditioning;
mod output;

pub use conditioning::{
    condition_dataset, estimate_event_probability, event_holds, ConditioningMode, Event,
    EventStats, REJECTION_CAP,
};
pub use output::{render, to_json_string, write_results, OutputFormat, Results, CSV_COLUMNS};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytics::{nonrealizable_conditional_floor, twodim_floor, AnalyticsError, Regime};
use crate::instances::{
    build_instance, parse_instance, BuildContext, InstanceError, InstanceSpec, LossInstance,
};
use crate::optimizers::{run_gd, run_sgd_seeded, Algorithm, OptError, OptimizerConfig};
use crate::Real;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "conditioning failed: event {event} not observed in {attempts} attempts \
         (empirical hit rate {hit_rate:e})"
    )]
    ConditioningFailure {
        event: &'static str,
        attempts: usize,
        hit_rate: Real,
    },
    #[error("all {count} replicates diverged")]
    AllDivergent { count: usize },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Optimizer(#[from] OptError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("serialization failed: {0}")]
    Serialization(#[from] serde_json::Error),
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which excess risk a sweep records per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterateSel {
    /// Excess risk of the averaged iterate (the quantity the bounds govern).
    #[default]
    Averaged,
    /// Excess risk of the last iterate.
    Final,
}

/// A full experiment grid. `instance` is a constructor string rebuilt per
/// cell, so horizon-derived parameters (alpha, lambda) track each cell's
/// (eta, T, n).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub instance: String,
    pub algorithm: Algorithm,
    #[serde(rename = "eta")]
    pub etas: Vec<Real>,
    #[serde(rename = "T")]
    pub t_values: Vec<usize>,
    #[serde(rename = "n")]
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conditioning: Option<Event>,
    #[serde(default)]
    pub conditioning_mode: ConditioningMode,
    #[serde(default)]
    pub measure: IterateSel,
}

impl SweepGrid {
    pub fn new(
        instance: impl Into<String>,
        algorithm: Algorithm,
        etas: Vec<Real>,
        t_values: Vec<usize>,
        n_values: Vec<usize>,
        replicates: usize,
        base_seed: u64,
    ) -> Self {
        Self {
            instance: instance.into(),
            algorithm,
            etas,
            t_values,
            n_values,
            replicates,
            base_seed,
            conditioning: None,
            conditioning_mode: ConditioningMode::default(),
            measure: IterateSel::default(),
        }
    }

    fn conditioning_pair(&self) -> Option<(Event, ConditioningMode)> {
        self.conditioning.map(|e| (e, self.conditioning_mode))
    }
}

/// Aggregates for one (eta, T, n) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub mean_excess: Real,
    /// Sample standard deviation of the replicate values over sqrt(count).
    pub stderr: Real,
    /// Replicates requested (divergent ones included).
    pub replicates: usize,
    pub divergences: usize,
}

/// One evaluated cell of a sweep. Field names match the CSV columns; cells
/// that failed carry the error text and empty statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub instance: String,
    pub algorithm: Algorithm,
    pub eta: Real,
    #[serde(rename = "T")]
    pub t_iters: usize,
    pub n: usize,
    pub conditioning: Option<String>,
    pub replicates: usize,
    pub mean_excess: Option<Real>,
    pub stderr: Option<Real>,
    pub divergences: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// All cells of a grid in canonical order (eta-major, then T, then n).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub grid: SweepGrid,
    pub cells: Vec<SweepCell>,
    pub total_runtime_secs: Real,
}

/// Deterministic per-replicate seed: a splitmix-style hash of
/// (base_seed, eta bits, T, n, replicate). Stable across versions; golden
/// outputs depend on it.
pub fn replicate_seed(base_seed: u64, eta: Real, t_iters: usize, n: usize, replicate: usize) -> u64 {
    const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    let mut state = base_seed;
    for word in [eta.to_bits(), t_iters as u64, n as u64, replicate as u64] {
        state = mix(state.wrapping_add(GAMMA).wrapping_add(word));
    }
    state
}

enum ReplicateOutcome {
    Value { averaged: Real, last: Real },
    Diverged,
}

fn run_replicate(
    instance: &dyn LossInstance<Real>,
    eta: Real,
    t_iters: usize,
    n: usize,
    algorithm: Algorithm,
    conditioning: Option<(Event, ConditioningMode)>,
    seed: u64,
) -> Result<ReplicateOutcome, ExperimentError> {
    // Stream 0 of the seed draws the dataset; stream 1 belongs to the
    // algorithm, so conditioning attempts never perturb the index sequence.
    let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
    data_rng.set_stream(0);
    let mut data = match conditioning {
        Some((event, mode)) => condition_dataset(instance, n, event, mode, &mut data_rng)?,
        None => instance.draw_dataset(n, &mut data_rng)?,
    };
    data.seed = Some(seed);

    let config = OptimizerConfig::new(algorithm, eta, t_iters);
    let run = match algorithm {
        Algorithm::GD => run_gd(instance, &data, &config),
        Algorithm::SGD => run_sgd_seeded(instance, &data, &config, seed),
    };
    match run {
        Ok(result) => Ok(ReplicateOutcome::Value {
            averaged: result.excess_risk_avg,
            last: result.excess_risk_final,
        }),
        Err(OptError::Divergence { .. }) => Ok(ReplicateOutcome::Diverged),
        Err(e) => Err(e.into()),
    }
}

/// Mean and standard error of the exact excess risk of the averaged iterate
/// over independent replicates. Each replicate draws its own (possibly
/// conditioned) dataset from a seed derived via [`replicate_seed`], runs the
/// algorithm, and evaluates the closed-form excess. Divergent replicates are
/// excluded from the mean but counted.
#[allow(clippy::too_many_arguments)]
pub fn estimate_excess_risk(
    instance: &dyn LossInstance<Real>,
    eta: Real,
    t_iters: usize,
    n: usize,
    algorithm: Algorithm,
    replicates: usize,
    conditioning: Option<(Event, ConditioningMode)>,
    base_seed: u64,
) -> Result<CellStats, ExperimentError> {
    estimate_excess_risk_of(
        instance,
        eta,
        t_iters,
        n,
        algorithm,
        replicates,
        conditioning,
        base_seed,
        IterateSel::Averaged,
    )
}

/// [`estimate_excess_risk`] with an explicit choice of recorded iterate.
#[allow(clippy::too_many_arguments)]
pub fn estimate_excess_risk_of(
    instance: &dyn LossInstance<Real>,
    eta: Real,
    t_iters: usize,
    n: usize,
    algorithm: Algorithm,
    replicates: usize,
    conditioning: Option<(Event, ConditioningMode)>,
    base_seed: u64,
    measure: IterateSel,
) -> Result<CellStats, ExperimentError> {
    if replicates == 0 {
        return Err(ExperimentError::InvalidParameter(
            "replicates must be at least 1".to_string(),
        ));
    }
    let outcomes: Vec<Result<ReplicateOutcome, ExperimentError>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(base_seed, eta, t_iters, n, r);
            run_replicate(instance, eta, t_iters, n, algorithm, conditioning, seed)
        })
        .collect();

    // Welford in replicate order: deterministic regardless of which thread
    // finished first, and exactly zero spread on identical values.
    let mut count = 0usize;
    let mut mean = 0.0;
    let mut m2 = 0.0;
    let mut divergences = 0usize;
    for outcome in outcomes {
        match outcome? {
            ReplicateOutcome::Diverged => divergences += 1,
            ReplicateOutcome::Value { averaged, last } => {
                let v = match measure {
                    IterateSel::Averaged => averaged,
                    IterateSel::Final => last,
                };
                count += 1;
                let delta = v - mean;
                mean += delta / count as Real;
                m2 += delta * (v - mean);
            }
        }
    }
    if count == 0 {
        return Err(ExperimentError::AllDivergent { count: divergences });
    }
    let stderr = if count >= 2 {
        (m2 / (count as Real - 1.0)).sqrt() / (count as Real).sqrt()
    } else {
        0.0
    };
    Ok(CellStats {
        mean_excess: mean,
        stderr,
        replicates,
        divergences,
    })
}

fn error_cell(grid: &SweepGrid, eta: Real, t_iters: usize, n: usize, message: String) -> SweepCell {
    SweepCell {
        instance: grid.instance.clone(),
        algorithm: grid.algorithm,
        eta,
        t_iters,
        n,
        conditioning: grid.conditioning.map(|e| e.as_str().to_string()),
        replicates: grid.replicates,
        mean_excess: None,
        stderr: None,
        divergences: 0,
        seed: grid.base_seed,
        error: Some(message),
    }
}

fn run_cell(grid: &SweepGrid, eta: Real, t_iters: usize, n: usize) -> SweepCell {
    let spec = match parse_instance(&grid.instance) {
        Ok(spec) => spec,
        Err(e) => return error_cell(grid, eta, t_iters, n, e.to_string()),
    };
    let ctx = BuildContext::new(eta, t_iters, n);
    let instance = match build_instance(&spec, &ctx) {
        Ok(instance) => instance,
        Err(e) => return error_cell(grid, eta, t_iters, n, e.to_string()),
    };
    match estimate_excess_risk_of(
        instance.as_ref(),
        eta,
        t_iters,
        n,
        grid.algorithm,
        grid.replicates,
        grid.conditioning_pair(),
        grid.base_seed,
        grid.measure,
    ) {
        Ok(stats) => SweepCell {
            instance: instance.name(),
            algorithm: grid.algorithm,
            eta,
            t_iters,
            n,
            conditioning: grid.conditioning.map(|e| e.as_str().to_string()),
            replicates: stats.replicates,
            mean_excess: Some(stats.mean_excess),
            stderr: Some(stats.stderr),
            divergences: stats.divergences,
            seed: grid.base_seed,
            error: None,
        },
        Err(e) => {
            let mut cell = error_cell(grid, eta, t_iters, n, e.to_string());
            cell.instance = instance.name();
            if let ExperimentError::AllDivergent { count } = e {
                cell.divergences = count;
            }
            cell
        }
    }
}

/// Evaluates every cell of the grid. Cells run independently (in parallel)
/// and land in canonical order: eta-major, then T, then n, each axis sorted
/// ascending with duplicates removed. Per-cell failures are recorded in the
/// cell and never abort the sweep.
pub fn run_sweep(grid: &SweepGrid) -> Result<SweepResult, ExperimentError> {
    let started = Instant::now();
    if grid.etas.is_empty() || grid.t_values.is_empty() || grid.n_values.is_empty() {
        return Err(ExperimentError::InvalidParameter(
            "eta, T, and n lists must all be non-empty".to_string(),
        ));
    }
    if grid.replicates == 0 {
        return Err(ExperimentError::InvalidParameter(
            "replicates must be at least 1".to_string(),
        ));
    }
    for &eta in &grid.etas {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(ExperimentError::InvalidParameter(format!(
                "every eta must be positive and finite, got {eta}"
            )));
        }
    }
    if let Some(&t) = grid.t_values.iter().find(|&&t| t < 2) {
        return Err(ExperimentError::InvalidParameter(format!(
            "every T must be at least 2, got {t}"
        )));
    }
    if grid.n_values.contains(&0) {
        return Err(ExperimentError::InvalidParameter(
            "every n must be at least 1".to_string(),
        ));
    }
    parse_instance(&grid.instance)?;

    let mut etas = grid.etas.clone();
    etas.sort_by(|a, b| a.partial_cmp(b).expect("validated finite"));
    etas.dedup();
    let mut ts = grid.t_values.clone();
    ts.sort_unstable();
    ts.dedup();
    let mut ns = grid.n_values.clone();
    ns.sort_unstable();
    ns.dedup();

    let mut coords = Vec::with_capacity(etas.len() * ts.len() * ns.len());
    for &eta in &etas {
        for &t in &ts {
            for &n in &ns {
                coords.push((eta, t, n));
            }
        }
    }
    let cells: Vec<SweepCell> = coords
        .par_iter()
        .map(|&(eta, t, n)| run_cell(grid, eta, t, n))
        .collect();
    Ok(SweepResult {
        grid: grid.clone(),
        cells,
        total_runtime_secs: started.elapsed().as_secs_f64(),
    })
}

/// The grid axis a rate fit sweeps along.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweptVar {
    #[serde(rename = "eta")]
    Eta,
    T,
    #[serde(rename = "n")]
    N,
}

impl SweptVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweptVar::Eta => "eta",
            SweptVar::T => "T",
            SweptVar::N => "n",
        }
    }
}

impl core::fmt::Display for SweptVar {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for SweptVar {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "eta" => Ok(SweptVar::Eta),
            "T" => Ok(SweptVar::T),
            "n" => Ok(SweptVar::N),
            other => Err(ExperimentError::InvalidParameter(format!(
                "unknown swept variable {other:?}; known: eta, T, n"
            ))),
        }
    }
}

/// Restriction of a sweep to cells matching fixed axis values.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CellFilter {
    pub eta: Option<Real>,
    #[serde(rename = "T")]
    pub t_iters: Option<usize>,
    pub n: Option<usize>,
}

impl CellFilter {
    pub fn matches(&self, cell: &SweepCell) -> bool {
        self.eta.is_none_or(|eta| cell.eta == eta)
            && self.t_iters.is_none_or(|t| cell.t_iters == t)
            && self.n.is_none_or(|n| cell.n == n)
    }
}

/// Power-law fit of mean excess risk against one grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub swept: SweptVar,
    pub slope: Real,
    pub intercept: Real,
    /// Coefficient of determination, clamped to [0, 1].
    pub r_squared: Real,
    pub points_used: usize,
    /// Cells at exactly zero mean excess, excluded from the log-log fit.
    pub excluded_zero_cells: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Ordinary least squares on (ln swept-value, ln mean-excess) over the cells
/// matching `filter`. Needs at least 4 usable points; zero means are
/// excluded with a warning, negative means are an error, and failed cells
/// are skipped with a warning.
pub fn fit_rate(
    sweep: &SweepResult,
    swept: SweptVar,
    filter: &CellFilter,
) -> Result<RateFit, ExperimentError> {
    let mut warnings = Vec::new();
    let mut excluded_zero_cells = 0usize;
    let mut points = Vec::new();
    let mut used = Vec::new();
    for cell in sweep.cells.iter().filter(|c| filter.matches(c)) {
        let label = format!("(eta={}, T={}, n={})", cell.eta, cell.t_iters, cell.n);
        match cell.mean_excess {
            None => warnings.push(format!(
                "cell {label} skipped: {}",
                cell.error.as_deref().unwrap_or("no statistics")
            )),
            Some(mean) if mean < 0.0 => {
                return Err(ExperimentError::InvalidParameter(format!(
                    "cell {label} has negative mean excess {mean}; log-log fit undefined"
                )))
            }
            Some(mean) if mean > 0.0 => {
                let x = match swept {
                    SweptVar::Eta => cell.eta,
                    SweptVar::T => cell.t_iters as Real,
                    SweptVar::N => cell.n as Real,
                };
                points.push((x.ln(), mean.ln()));
                used.push(cell);
            }
            Some(_) => {
                excluded_zero_cells += 1;
                warnings.push(format!("cell {label} excluded: mean excess is exactly 0"));
            }
        }
    }
    if points.len() < 4 {
        return Err(ExperimentError::InvalidParameter(format!(
            "rate fit needs at least 4 cells with positive means, got {}",
            points.len()
        )));
    }
    for (axis, varies) in [
        (SweptVar::Eta, used.iter().any(|c| c.eta != used[0].eta)),
        (SweptVar::T, used.iter().any(|c| c.t_iters != used[0].t_iters)),
        (SweptVar::N, used.iter().any(|c| c.n != used[0].n)),
    ] {
        if axis != swept && varies {
            warnings.push(format!(
                "non-swept axis {axis} varies across the fitted cells; consider a filter"
            ));
        }
    }

    let k = points.len() as Real;
    let mean_x = points.iter().map(|p| p.0).sum::<Real>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<Real>() / k;
    let sxx: Real = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: Real = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(ExperimentError::InvalidParameter(format!(
            "swept variable {swept} takes a single value across the fitted cells"
        )));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: Real = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let ss_tot: Real = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(RateFit {
        swept,
        slope,
        intercept,
        r_squared,
        points_used: points.len(),
        excluded_zero_cells,
        warnings,
    })
}

/// One cell's standing against an envelope and (where one applies) a proof
/// floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCell {
    pub eta: Real,
    #[serde(rename = "T")]
    pub t_iters: usize,
    pub n: usize,
    pub mean_excess: Real,
    pub envelope: Real,
    /// mean_excess / envelope.
    pub ratio: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor: Option<Real>,
    pub floor_violated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub regime: Regime,
    pub instance: String,
    pub cells: Vec<EnvelopeCell>,
    /// Largest observed mean/envelope ratio (reported, never asserted).
    pub max_ratio: Real,
    pub floor_violations: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// The closed-form floor that binds a cell, if the sweep's instance family
/// carries one in its default (horizon-coupled) parameterization.
fn cell_floor(
    spec: &InstanceSpec,
    grid: &SweepGrid,
    eta: Real,
    t_iters: usize,
    n: usize,
) -> Result<Option<Real>, ExperimentError> {
    match spec.family.as_str() {
        // lambda = 1/(eta*T) has the 1/(288*eta*T) floor on averaged excess.
        "twodim" if !spec.params.contains_key("lambda") => {
            Ok(Some(twodim_floor::<Real>(eta, t_iters)?))
        }
        // Under the sign-sum event the averaged iterate sits above
        // eta*(T-1)/(16*sqrt(n)); through F(w) = w^2/(2*eta*T) that is a
        // floor of floor_w^2/(2*eta*T) on the recorded excess.
        "nonrealizable"
            if !spec.params.contains_key("eta_T")
                && grid.conditioning == Some(Event::AntiConcentration) =>
        {
            let floor_w = nonrealizable_conditional_floor::<Real>(n, eta, t_iters)?;
            Ok(Some(floor_w * floor_w / (2.0 * eta * t_iters as Real)))
        }
        _ => Ok(None),
    }
}

/// Ratio of every cell's mean excess to the regime envelope, with proof
/// floors flagged where the instance family defines one.
pub fn compare_to_envelope(
    sweep: &SweepResult,
    regime: Regime,
) -> Result<EnvelopeReport, ExperimentError> {
    let spec = parse_instance(&sweep.grid.instance)?;
    let mut cells = Vec::new();
    let mut warnings = Vec::new();
    let mut floor_violations = 0usize;
    let mut max_ratio: Real = 0.0;
    for cell in &sweep.cells {
        let Some(mean) = cell.mean_excess else {
            warnings.push(format!(
                "cell (eta={}, T={}, n={}) skipped: {}",
                cell.eta,
                cell.t_iters,
                cell.n,
                cell.error.as_deref().unwrap_or("no statistics")
            ));
            continue;
        };
        let env = crate::analytics::envelope::<Real>(regime, cell.eta, cell.t_iters, cell.n)?;
        let ratio = mean / env.value;
        max_ratio = max_ratio.max(ratio);
        let floor = cell_floor(&spec, &sweep.grid, cell.eta, cell.t_iters, cell.n)?;
        let floor_violated = floor.is_some_and(|f| mean < f);
        if floor_violated {
            floor_violations += 1;
        }
        cells.push(EnvelopeCell {
            eta: cell.eta,
            t_iters: cell.t_iters,
            n: cell.n,
            mean_excess: mean,
            envelope: env.value,
            ratio,
            floor,
            floor_violated,
        });
    }
    Ok(EnvelopeReport {
        regime,
        instance: sweep.grid.instance.clone(),
        cells,
        max_ratio,
        floor_violations,
        warnings,
    })
}
