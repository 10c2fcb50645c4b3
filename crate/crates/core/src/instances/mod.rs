//! Loss families behind one uniform oracle interface.
//!
//! Every family implements [`LossInstance`]: a loss `f(w, z)` with its
//! sampling distribution, per-sample gradients, an exact closed-form
//! population risk `F(w) = E_z[f(w, z)]`, a canonical minimizer `w*`, and a
//! declared smoothness constant. Losses of realizable families are rescaled
//! so that `f(w*, z) = 0` on the whole support.
//!
//! The families and what each one witnesses:
//!
//! * [`NonRealizableScalar`]: 1-D quadratic with a ±1 linear kick; under a
//!   conditioned sample-sum event the averaged iterate drifts, witnessing
//!   excess growth proportional to ηT/n.
//! * [`CoupledRealizable`]: an (n+1)-dimensional interpolation problem where
//!   a strong `x` coordinate pumps n weak `y` coordinates; witnesses the
//!   ηT/n² overfitting term and its large-horizon decay.
//! * [`MultiCopyRealizable`]: m independent copies of the coupled problem,
//!   used to amplify a per-copy sampling event to constant probability.
//! * [`CoordinateHiding`]: 2n coordinates, n samples; unobserved coordinates
//!   keep their initial mass, witnessing an excess floor of order 1/n.
//! * [`TwoDimQuadratic`]: a deterministic two-dimensional quadratic whose
//!   averaged iterate cannot beat an optimization-error floor of order 1/(ηT).
//! * [`ScalarRealizable`]: 1-D realizable quadratics with per-step
//!   contraction, witnessing long-horizon non-overfitting.
//! * [`NoiselessRegression`]: realizable least squares on a finite feature
//!   law, the interpolation-regime sanity family.
//!
//! Index-valued samples are 1-based: an instance with a size-n support
//! draws values in `{1..n}`, matching the constructions' index notation.

use rand::RngCore;
use thiserror::Error;

use crate::Scalar;

mod coupled;
mod hiding;
mod nonrealizable;
mod regression;
pub mod registry;
mod scalar_family;
mod twodim;

pub use coupled::{CoupledRealizable, MultiCopyRealizable};
pub use hiding::CoordinateHiding;
pub use nonrealizable::NonRealizableScalar;
pub use regression::NoiselessRegression;
pub use registry::{
    build_instance, families, instance_from_str, parse_instance, BuildContext, FamilyInfo,
    InstanceSpec,
};
pub use scalar_family::{CurvatureLaw, ScalarRealizable};
pub use twodim::TwoDimQuadratic;

/// One draw from an instance's sampling distribution.
///
/// Everything the families need reduces to a sign, an index into a finite
/// support, or a tuple of per-copy indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sample {
    /// ±1, stored as +1 or −1.
    Sign(i8),
    /// Index into a finite support (a coordinate, a feature atom, a level).
    Index(usize),
    /// One index per copy of a product instance.
    Tuple(Vec<usize>),
}

impl core::fmt::Display for Sample {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Sample::Sign(s) => write!(f, "{s:+}"),
            Sample::Index(i) => write!(f, "{i}"),
            Sample::Tuple(v) => {
                write!(f, "(")?;
                for (k, i) in v.iter().enumerate() {
                    if k > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{i}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// An ordered multiset of samples drawn from one instance's distribution.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    /// Canonical constructor string of the instance the samples came from.
    pub instance_name: String,
    /// Seed of the stream that produced the samples, when one was used.
    pub seed: Option<u64>,
    /// Name of a conditioning event this dataset is known to satisfy.
    pub conditioning: Option<String>,
}

impl Dataset {
    /// A dataset must hold at least one sample.
    pub fn new(samples: Vec<Sample>, instance_name: impl Into<String>) -> Result<Self, InstanceError> {
        if samples.is_empty() {
            return Err(InstanceError::EmptyDataset);
        }
        Ok(Self { samples, instance_name: instance_name.into(), seed: None, conditioning: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sample outside the instance's sample space: {0}")]
    SampleDomain(String),
    #[error("dataset must contain at least one sample")]
    EmptyDataset,
    #[error("invalid instance parameter: {0}")]
    InvalidParameter(String),
    #[error("instance would need {needed} scalars, over the {budget}-scalar budget")]
    MemoryBudget { needed: u128, budget: u128 },
}

/// A loss family `f(w, z)` with exact population-risk oracle.
///
/// Object-safe so the harness can hold instances behind `dyn`; the default
/// methods supply the dataset-level operations (empirical risk and gradient,
/// excess risk) in terms of the per-sample primitives. Implementations are
/// immutable after construction and safe to share across threads.
pub trait LossInstance<F: Scalar>: Send + Sync {
    /// Canonical constructor string, e.g. `coupled{C=1,alpha=0.25,n=2}`.
    /// Parameters are listed alphabetically so the name round-trips.
    fn name(&self) -> String;

    /// Family keyword (the part of the name before `{`).
    fn family(&self) -> &'static str;

    /// Parameter dimension of `w`.
    fn dim(&self) -> usize;

    /// Declared gradient-Lipschitz constant; an upper bound over the support.
    fn smoothness(&self) -> F;

    /// Whether one `w*` minimizes every per-sample loss on the support.
    fn realizable(&self) -> bool;

    /// Human-readable description of the distribution over samples.
    fn sample_space(&self) -> String;

    /// Canonical minimizer `w*` of the population risk.
    fn minimizer(&self) -> Vec<F>;

    /// Canonical starting point `w₁` for the optimizers.
    fn default_init(&self) -> Vec<F>;

    /// One draw from the sampling distribution.
    fn draw(&self, rng: &mut dyn RngCore) -> Sample;

    /// Membership test for the sample space.
    fn in_sample_space(&self, z: &Sample) -> bool;

    /// Per-sample loss `f(w, z)`.
    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError>;

    /// Adds `scale · ∇_w f(w, z)` into `acc`.
    ///
    /// The accumulate form lets the optimizers and the empirical average
    /// exploit gradient sparsity without per-step allocation.
    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError>;

    /// Exact population risk `F(w)`; no Monte Carlo.
    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError>;

    /// Per-sample gradient `∇_w f(w, z)` as a fresh vector.
    fn grad(&self, w: &[F], z: &Sample) -> Result<Vec<F>, InstanceError> {
        let mut g = vec![F::zero(); self.dim()];
        self.grad_accum(w, z, F::one(), &mut g)?;
        Ok(g)
    }

    /// `F(w) − F(w*)` with `w*` the canonical minimizer.
    fn excess_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        let base = self.population_risk(&self.minimizer())?;
        Ok(self.population_risk(w)? - base)
    }

    /// `n` independent draws; reproducible given the caller's stream.
    fn draw_dataset(&self, n: usize, rng: &mut dyn RngCore) -> Result<Dataset, InstanceError> {
        if n == 0 {
            return Err(InstanceError::EmptyDataset);
        }
        let samples = (0..n).map(|_| self.draw(rng)).collect();
        Dataset::new(samples, self.name())
    }

    /// `(1/n) Σ_i f(w, z_i)`, summed in index order then scaled once.
    fn empirical_risk(&self, w: &[F], data: &Dataset) -> Result<F, InstanceError> {
        if data.is_empty() {
            return Err(InstanceError::EmptyDataset);
        }
        let mut total = F::zero();
        for z in &data.samples {
            total += self.loss(w, z)?;
        }
        Ok(total / F::of_usize(data.len()))
    }

    /// Writes `(1/n) Σ_i ∇f(w, z_i)` into `out` (zeroing it first).
    ///
    /// Per-sample gradients accumulate in index order; the 1/n scaling is a
    /// single final pass, so the summation order is reproducible.
    fn empirical_grad_into(&self, w: &[F], data: &Dataset, out: &mut [F]) -> Result<(), InstanceError> {
        if data.is_empty() {
            return Err(InstanceError::EmptyDataset);
        }
        if out.len() != self.dim() {
            return Err(InstanceError::DimensionMismatch { expected: self.dim(), got: out.len() });
        }
        for g in out.iter_mut() {
            *g = F::zero();
        }
        for z in &data.samples {
            self.grad_accum(w, z, F::one(), out)?;
        }
        let inv_n = F::one() / F::of_usize(data.len());
        for g in out.iter_mut() {
            *g *= inv_n;
        }
        Ok(())
    }

    /// `(1/n) Σ_i ∇f(w, z_i)` as a fresh vector.
    fn empirical_grad(&self, w: &[F], data: &Dataset) -> Result<Vec<F>, InstanceError> {
        let mut g = vec![F::zero(); self.dim()];
        self.empirical_grad_into(w, data, &mut g)?;
        Ok(g)
    }
}

/// Rejects a `w` whose length does not match the instance dimension.
pub(crate) fn check_dim<F: Scalar>(inst: &dyn LossInstance<F>, w: &[F]) -> Result<(), InstanceError> {
    if w.len() != inst.dim() {
        return Err(InstanceError::DimensionMismatch { expected: inst.dim(), got: w.len() });
    }
    Ok(())
}
