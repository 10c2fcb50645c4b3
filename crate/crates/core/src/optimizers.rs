//! Full-batch GD and with-replacement SGD, both reporting the averaged
//! iterate as their output.
//!
//! A run performs exactly `T − 1` updates and averages the `T` visited
//! iterates `w_1..w_T`, so the last computed update is part of the average
//! and nothing is discarded. Divergence is not silently clamped: the first
//! non-finite coordinate aborts the run with the step index.

use rand::{Rng, RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instances::{Dataset, InstanceError, LossInstance};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(alias = "gd")]
    GD,
    #[serde(alias = "sgd")]
    SGD,
}

impl core::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Algorithm::GD => write!(f, "GD"),
            Algorithm::SGD => write!(f, "SGD"),
        }
    }
}

impl core::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Ok(Algorithm::GD),
            "sgd" => Ok(Algorithm::SGD),
            other => Err(format!("unknown algorithm `{other}` (expected gd or sgd)")),
        }
    }
}

/// Step size, horizon, starting point, and recording switches for one run.
#[derive(Clone, Debug)]
pub struct OptimizerConfig<F: Scalar> {
    pub algorithm: Algorithm,
    /// Step size η > 0.
    pub eta: F,
    /// Iterate count T ≥ 2; the run makes T − 1 updates.
    pub t_iters: usize,
    /// Starting point w₁; `None` uses the instance's canonical init.
    pub init: Option<Vec<F>>,
    /// Record (t, ‖w_t − w*‖, F(w_t)) for every visited iterate.
    pub record_trajectory: bool,
    /// Additionally keep every full iterate; memory grows as T·dim.
    pub record_iterates: bool,
}

impl<F: Scalar> OptimizerConfig<F> {
    pub fn new(algorithm: Algorithm, eta: F, t_iters: usize) -> Self {
        Self { algorithm, eta, t_iters, init: None, record_trajectory: false, record_iterates: false }
    }
}

/// Snapshot of one visited iterate: distance to the minimizer and risk.
#[derive(Clone, Debug, Serialize)]
pub struct StepRecord<F> {
    pub t: usize,
    pub dist_to_min: F,
    pub risk: F,
}

/// Everything a run produces. Serializes to the JSON record consumed by
/// the CLI and the sweep harness.
#[derive(Clone, Debug, Serialize)]
pub struct RunResult<F: Scalar> {
    pub averaged_iterate: Vec<F>,
    pub final_iterate: Vec<F>,
    pub excess_risk_avg: F,
    pub excess_risk_final: F,
    pub seed: u64,
    pub eta: F,
    #[serde(rename = "T")]
    pub t_iters: usize,
    pub algorithm: Algorithm,
    /// Canonical name of the instance the run was made on.
    pub instance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_step: Option<Vec<StepRecord<F>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<F>>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum OptError {
    #[error("iterate diverged: non-finite coordinate at step {step}")]
    Divergence { step: usize },
    #[error("optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Arithmetic mean of a trajectory, summed in index order.
pub fn average_iterates<F: Scalar>(iterates: &[Vec<F>]) -> Result<Vec<F>, OptError> {
    let Some(first) = iterates.first() else {
        return Err(OptError::InvalidConfig("cannot average an empty trajectory".to_string()));
    };
    let dim = first.len();
    let mut sum = vec![F::zero(); dim];
    for w in iterates {
        if w.len() != dim {
            return Err(OptError::Instance(InstanceError::DimensionMismatch {
                expected: dim,
                got: w.len(),
            }));
        }
        for (s, &x) in sum.iter_mut().zip(w) {
            *s += x;
        }
    }
    let inv = F::one() / F::of_usize(iterates.len());
    for s in sum.iter_mut() {
        *s *= inv;
    }
    Ok(sum)
}

/// Full-batch gradient descent: `w_{t+1} = w_t − η·∇F_S(w_t)`.
/// Deterministic given (instance, dataset, config).
pub fn run_gd<F: Scalar>(
    instance: &dyn LossInstance<F>,
    data: &Dataset,
    config: &OptimizerConfig<F>,
) -> Result<RunResult<F>, OptError> {
    if config.algorithm != Algorithm::GD {
        return Err(OptError::InvalidConfig(format!(
            "run_gd called with algorithm {}",
            config.algorithm
        )));
    }
    run_loop(instance, data, config, data.seed.unwrap_or(0), |inst, w, data, buf, _rng| {
        inst.empirical_grad_into(w, data, buf)
    }, &mut NoRng)
}

/// With-replacement SGD: at each step an index `i_t ~ Unif([n])` is drawn
/// from the caller's stream and `w_{t+1} = w_t − η·∇f(w_t, z_{i_t})`.
pub fn run_sgd<F: Scalar>(
    instance: &dyn LossInstance<F>,
    data: &Dataset,
    config: &OptimizerConfig<F>,
    rng: &mut dyn RngCore,
) -> Result<RunResult<F>, OptError> {
    if config.algorithm != Algorithm::SGD {
        return Err(OptError::InvalidConfig(format!(
            "run_sgd called with algorithm {}",
            config.algorithm
        )));
    }
    run_loop(instance, data, config, data.seed.unwrap_or(0), |inst, w, data, buf, rng| {
        for b in buf.iter_mut() {
            *b = F::zero();
        }
        let i = rng.random_range(0..data.len());
        inst.grad_accum(w, &data.samples[i], F::one(), buf)
    }, rng)
}

/// SGD on a stream derived from `seed`; the result records the seed.
///
/// The stream is the algorithm half (stream 1) of a two-stream ChaCha8
/// layout whose stream 0 belongs to dataset drawing, so a dataset drawn
/// from the same seed never shares randomness with the index sequence.
pub fn run_sgd_seeded<F: Scalar>(
    instance: &dyn LossInstance<F>,
    data: &Dataset,
    config: &OptimizerConfig<F>,
    seed: u64,
) -> Result<RunResult<F>, OptError> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut result = run_sgd(instance, data, config, &mut rng)?;
    result.seed = seed;
    Ok(result)
}

/// Stand-in stream for GD, which must not consume randomness.
struct NoRng;

impl RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("GD draws no randomness")
    }

    fn next_u64(&mut self) -> u64 {
        unreachable!("GD draws no randomness")
    }

    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("GD draws no randomness")
    }
}

fn run_loop<F: Scalar>(
    instance: &dyn LossInstance<F>,
    data: &Dataset,
    config: &OptimizerConfig<F>,
    seed: u64,
    mut step_grad: impl FnMut(
        &dyn LossInstance<F>,
        &[F],
        &Dataset,
        &mut [F],
        &mut dyn RngCore,
    ) -> Result<(), InstanceError>,
    rng: &mut dyn RngCore,
) -> Result<RunResult<F>, OptError> {
    if config.eta <= F::zero() || !config.eta.is_finite() {
        return Err(OptError::InvalidConfig(format!(
            "step size must be positive and finite, got {}",
            config.eta
        )));
    }
    if config.t_iters < 2 {
        return Err(OptError::InvalidConfig(format!(
            "T must be at least 2, got {}",
            config.t_iters
        )));
    }
    if data.is_empty() {
        return Err(OptError::Instance(InstanceError::EmptyDataset));
    }
    for z in &data.samples {
        if !instance.in_sample_space(z) {
            return Err(OptError::Instance(InstanceError::SampleDomain(format!(
                "dataset sample {z} is outside the sample space of {}",
                instance.name()
            ))));
        }
    }
    let dim = instance.dim();
    let mut w = match &config.init {
        Some(w) => {
            if w.len() != dim {
                return Err(OptError::Instance(InstanceError::DimensionMismatch {
                    expected: dim,
                    got: w.len(),
                }));
            }
            w.clone()
        }
        None => instance.default_init(),
    };
    if !w.iter().all(|x| x.is_finite()) {
        return Err(OptError::Divergence { step: 1 });
    }

    let mut warnings = Vec::new();
    let t_real = F::of_usize(config.t_iters);
    if config.eta * t_real < F::one() {
        warnings.push(format!(
            "step size {} is below 1/T = {}; the horizon condition 1/T <= eta is violated",
            config.eta,
            F::one() / t_real
        ));
    }
    if config.eta * instance.smoothness() > F::of(2.0) {
        warnings.push(format!(
            "step size {} exceeds 2/L = {} for this instance; iterates may diverge",
            config.eta,
            F::of(2.0) / instance.smoothness()
        ));
    }

    let w_star = instance.minimizer();
    let record = |t: usize, w: &[F], steps: &mut Vec<StepRecord<F>>| -> Result<(), OptError> {
        let mut dist_sq = F::zero();
        for (&a, &b) in w.iter().zip(&w_star) {
            let d = a - b;
            dist_sq += d * d;
        }
        steps.push(StepRecord { t, dist_to_min: dist_sq.sqrt(), risk: instance.population_risk(w)? });
        Ok(())
    };

    let mut steps = Vec::new();
    let mut iterates = Vec::new();
    if config.record_trajectory {
        steps.reserve(config.t_iters);
        record(1, &w, &mut steps)?;
    }
    if config.record_iterates {
        iterates.reserve(config.t_iters);
        iterates.push(w.clone());
    }

    // Running sum of visited iterates; dividing once at the end keeps the
    // summation order independent of T.
    let mut sum = w.clone();
    let mut grad = vec![F::zero(); dim];
    for t in 1..config.t_iters {
        step_grad(instance, &w, data, &mut grad, rng)?;
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= config.eta * *gi;
        }
        if !w.iter().all(|x| x.is_finite()) {
            return Err(OptError::Divergence { step: t + 1 });
        }
        for (s, &x) in sum.iter_mut().zip(&w) {
            *s += x;
        }
        if config.record_trajectory {
            record(t + 1, &w, &mut steps)?;
        }
        if config.record_iterates {
            iterates.push(w.clone());
        }
    }

    let inv_t = F::one() / t_real;
    let averaged: Vec<F> = sum.into_iter().map(|s| s * inv_t).collect();
    let excess_risk_avg = instance.excess_risk(&averaged)?;
    let excess_risk_final = instance.excess_risk(&w)?;
    Ok(RunResult {
        averaged_iterate: averaged,
        final_iterate: w,
        excess_risk_avg,
        excess_risk_final,
        seed,
        eta: config.eta,
        t_iters: config.t_iters,
        algorithm: config.algorithm,
        instance: instance.name(),
        per_step: config.record_trajectory.then_some(steps),
        iterates: config.record_iterates.then_some(iterates),
        warnings,
    })
}

/// Largest distance-ratio ‖w_{t+1} − w*‖ / ‖w_t − w*‖ over a recorded run;
/// at most 1 when every step contracts.
pub fn max_step_expansion<F: Scalar>(result: &RunResult<F>) -> Option<F> {
    let steps = result.per_step.as_ref()?;
    let mut worst: Option<F> = None;
    for pair in steps.windows(2) {
        if pair[0].dist_to_min > F::zero() {
            let r = pair[1].dist_to_min / pair[0].dist_to_min;
            worst = Some(match worst {
                Some(w) => w.max(r),
                None => r,
            });
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{
        CoupledRealizable, CurvatureLaw, NonRealizableScalar, Sample, ScalarRealizable,
        TwoDimQuadratic,
    };

    fn gd_cfg(eta: f64, t: usize) -> OptimizerConfig<f64> {
        OptimizerConfig::new(Algorithm::GD, eta, t)
    }

    fn sgd_cfg(eta: f64, t: usize) -> OptimizerConfig<f64> {
        OptimizerConfig::new(Algorithm::SGD, eta, t)
    }

    #[test]
    fn twodim_single_step_and_average() {
        // λ=1, η=0.5: w₂ = (0.5, 0.5), average of (1,1) and (0.5,0.5).
        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let r = run_gd(&inst, &data, &gd_cfg(0.5, 2)).unwrap();
        assert_eq!(r.final_iterate, vec![0.5, 0.5]);
        assert_eq!(r.averaged_iterate, vec![0.75, 0.75]);
    }

    #[test]
    fn cancelling_signs_keep_gd_at_zero() {
        let inst = NonRealizableScalar::new(8.0).unwrap();
        let data =
            Dataset::new(vec![Sample::Sign(1), Sample::Sign(-1)], inst.name()).unwrap();
        let mut cfg = gd_cfg(1.0, 8);
        cfg.init = Some(vec![0.0]);
        let r = run_gd(&inst, &data, &cfg).unwrap();
        assert_eq!(r.final_iterate, vec![0.0]);
        assert_eq!(r.averaged_iterate, vec![0.0]);
    }

    #[test]
    fn coupled_first_gd_step() {
        // α=0.25, η=1, S=(1,2): x₂ = (1−αη)·1 = 0.75, y₂ = (η√α/n)·1 = 0.25.
        let inst = CoupledRealizable::new(2, 0.25, 1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1), Sample::Index(2)], inst.name()).unwrap();
        let mut cfg = gd_cfg(1.0, 2);
        cfg.record_iterates = true;
        let r = run_gd(&inst, &data, &cfg).unwrap();
        assert_eq!(r.final_iterate, vec![0.75, 0.25, 0.25]);
        assert_eq!(r.iterates.unwrap()[0], vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn sgd_on_singleton_dataset_equals_gd() {
        let inst = ScalarRealizable::new(CurvatureLaw::Constant(0.5), 0.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let gd = run_gd(&inst, &data, &gd_cfg(0.25, 16)).unwrap();
        let sgd = run_sgd_seeded(&inst, &data, &sgd_cfg(0.25, 16), 42).unwrap();
        assert_eq!(gd.final_iterate, sgd.final_iterate);
        assert_eq!(gd.averaged_iterate, sgd.averaged_iterate);
    }

    #[test]
    fn unit_curvature_minimizes_in_one_step() {
        let inst = ScalarRealizable::new(CurvatureLaw::Constant(1.0), 0.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let mut cfg = sgd_cfg(1.0, 8);
        cfg.record_iterates = true;
        let r = run_sgd_seeded(&inst, &data, &cfg, 3).unwrap();
        let iters = r.iterates.unwrap();
        assert_eq!(iters[0], vec![1.0]);
        for w in &iters[1..] {
            assert_eq!(w, &vec![0.0]);
        }
        assert_eq!(r.excess_risk_final, 0.0);
        assert_eq!(r.averaged_iterate, vec![0.125]);
    }

    #[test]
    fn sgd_single_step_mean_tracks_expectation_at_two_step_sizes() {
        // One SGD step from (1, 0, 0) updates coordinate i with prob 1/2:
        // x₂ = 1 − αη exactly; E[y₂(i)] = η√α/2.
        let inst = CoupledRealizable::new(2, 0.25, 1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1), Sample::Index(2)], inst.name()).unwrap();
        for (eta, x2, ey2) in [(1.0, 0.75, 0.25), (0.5, 0.875, 0.125)] {
            let runs = 100_000;
            let mut sum_y = [0.0, 0.0];
            for seed in 0..runs {
                let r = run_sgd_seeded(&inst, &data, &sgd_cfg(eta, 2), seed).unwrap();
                assert_eq!(r.final_iterate[0], x2);
                sum_y[0] += r.final_iterate[1];
                sum_y[1] += r.final_iterate[2];
            }
            // Per-coordinate variance is p(1−p)·(η√α)² with p = 1/2.
            let se = (0.25 * (eta * 0.5) * (eta * 0.5) / runs as f64).sqrt();
            for s in sum_y {
                let mean = s / runs as f64;
                assert!((mean - ey2).abs() < 3.0 * se, "eta {eta}: mean {mean} vs {ey2}");
            }
        }
    }

    #[test]
    fn averaging_helper_matches_examples() {
        assert_eq!(average_iterates(&[vec![2.0, 4.0]]).unwrap(), vec![2.0, 4.0]);
        assert_eq!(average_iterates(&[vec![0.0], vec![0.5]]).unwrap(), vec![0.25]);
        assert!(average_iterates::<f64>(&[]).is_err());
        assert!(average_iterates(&[vec![0.0], vec![0.5, 1.0]]).is_err());

        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let mut cfg = gd_cfg(0.5, 2);
        cfg.record_iterates = true;
        let r = run_gd(&inst, &data, &cfg).unwrap();
        assert_eq!(average_iterates(&r.iterates.unwrap()).unwrap(), r.averaged_iterate);
    }

    #[test]
    fn gd_runs_are_bit_identical() {
        let inst = CoupledRealizable::new(4, 0.25, 1.0).unwrap();
        let samples = vec![Sample::Index(1), Sample::Index(3), Sample::Index(3), Sample::Index(2)];
        let data = Dataset::new(samples, inst.name()).unwrap();
        let a = run_gd(&inst, &data, &gd_cfg(0.5, 64)).unwrap();
        let b = run_gd(&inst, &data, &gd_cfg(0.5, 64)).unwrap();
        assert_eq!(a.final_iterate, b.final_iterate);
        assert_eq!(a.averaged_iterate, b.averaged_iterate);
        assert_eq!(a.excess_risk_avg, b.excess_risk_avg);
    }

    #[test]
    fn sgd_runs_reproduce_by_seed() {
        let inst = CoupledRealizable::new(4, 0.25, 1.0).unwrap();
        let data = {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
            inst.draw_dataset(4, &mut rng).unwrap()
        };
        let a = run_sgd_seeded(&inst, &data, &sgd_cfg(0.5, 128), 7).unwrap();
        let b = run_sgd_seeded(&inst, &data, &sgd_cfg(0.5, 128), 7).unwrap();
        let c = run_sgd_seeded(&inst, &data, &sgd_cfg(0.5, 128), 8).unwrap();
        assert_eq!(a.final_iterate, b.final_iterate);
        assert_eq!(a.seed, 7);
        assert_ne!(a.final_iterate, c.final_iterate);
    }

    #[test]
    fn divergence_reports_first_bad_step() {
        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let err = run_gd(&inst, &data, &gd_cfg(1e200, 8)).unwrap_err();
        match err {
            OptError::Divergence { step } => assert_eq!(step, 3),
            other => panic!("expected divergence, got {other}"),
        }
    }

    #[test]
    fn config_validation_and_warnings() {
        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        assert!(matches!(
            run_gd(&inst, &data, &gd_cfg(0.5, 1)),
            Err(OptError::InvalidConfig(_))
        ));
        assert!(matches!(
            run_gd(&inst, &data, &gd_cfg(-0.5, 4)),
            Err(OptError::InvalidConfig(_))
        ));
        assert!(matches!(
            run_gd(&inst, &data, &gd_cfg(f64::NAN, 4)),
            Err(OptError::InvalidConfig(_))
        ));
        let mut cfg = gd_cfg(0.5, 4);
        cfg.init = Some(vec![1.0]);
        assert!(matches!(
            run_gd(&inst, &data, &cfg),
            Err(OptError::Instance(InstanceError::DimensionMismatch { .. }))
        ));
        assert!(matches!(
            run_sgd_seeded(&inst, &data, &gd_cfg(0.5, 4), 0),
            Err(OptError::InvalidConfig(_))
        ));

        // η < 1/T warns but still runs.
        let r = run_gd(&inst, &data, &gd_cfg(0.01, 8)).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("below 1/T")));
        // η > 2/L warns before diverging territory.
        let r = run_gd(&inst, &data, &gd_cfg(2.5, 4)).unwrap();
        assert!(r.warnings.iter().any(|w| w.contains("exceeds 2/L")));
        let r = run_gd(&inst, &data, &gd_cfg(0.5, 8)).unwrap();
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn rejects_foreign_samples_in_dataset() {
        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(2)], inst.name()).unwrap();
        assert!(matches!(
            run_gd(&inst, &data, &gd_cfg(0.5, 4)),
            Err(OptError::Instance(InstanceError::SampleDomain(_)))
        ));
    }

    #[test]
    fn trajectory_records_distances_and_risks() {
        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let mut cfg = gd_cfg(0.5, 4);
        cfg.record_trajectory = true;
        let r = run_gd(&inst, &data, &cfg).unwrap();
        let steps = r.per_step.as_ref().unwrap();
        assert_eq!(steps.len(), 4);
        assert_eq!(steps[0].t, 1);
        assert_eq!(steps[0].dist_to_min, 2f64.sqrt());
        assert_eq!(steps[0].risk, 1.0);
        // λ = 1 and η = 0.5 halve the iterate every step.
        assert_eq!(steps[1].dist_to_min, 0.5 * 2f64.sqrt());
        assert!(max_step_expansion(&r).unwrap() <= 1.0);
    }

    #[test]
    fn json_field_names_are_pinned() {
        let inst = TwoDimQuadratic::new(1.0).unwrap();
        let data = Dataset::new(vec![Sample::Index(1)], inst.name()).unwrap();
        let r = run_gd(&inst, &data, &gd_cfg(0.5, 2)).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        let obj = v.as_object().unwrap();
        for key in [
            "averaged_iterate",
            "final_iterate",
            "excess_risk_avg",
            "excess_risk_final",
            "seed",
            "eta",
            "T",
            "algorithm",
            "instance",
        ] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        assert_eq!(obj["algorithm"], "GD");
        assert_eq!(obj["T"], 2);
        assert!(!obj.contains_key("per_step"));
        assert!(!obj.contains_key("warnings"));
    }
}
