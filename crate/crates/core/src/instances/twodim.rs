//! Deterministic two-dimensional quadratic with one slow coordinate.

use rand::RngCore;

use super::{check_dim, InstanceError, LossInstance, Sample};
use crate::Scalar;

/// `f(w) = (1/2)·w(1)² + (λ/2)·w(2)²`, independent of the sample.
///
/// The loss is the same for every z (the sample space is the single point
/// 1), so GD and SGD coincide and every run is deterministic. With
/// `λ = 1/(ηT)` the second coordinate barely moves over a T-step run and
/// the averaged iterate pays an optimization-error floor of order 1/(ηT).
///
/// The canonical construction uses `λ < 1`; larger curvatures are accepted
/// (the declared smoothness grows to `max(1, λ)`) so that step-size grids
/// can push `1/(ηT)` past 1 without refusing to build.
#[derive(Clone, Debug)]
pub struct TwoDimQuadratic<F: Scalar> {
    lambda: F,
}

impl<F: Scalar> TwoDimQuadratic<F> {
    pub fn new(lambda: F) -> Result<Self, InstanceError> {
        if lambda <= F::zero() || !lambda.is_finite() {
            return Err(InstanceError::InvalidParameter(format!(
                "twodim: lambda must be a positive finite number, got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    /// The canonical parameterization `λ = 1/(η·T)`.
    pub fn with_horizon(eta: F, t_iters: usize) -> Result<Self, InstanceError> {
        if eta <= F::zero() || !eta.is_finite() {
            return Err(InstanceError::InvalidParameter(format!(
                "twodim: eta must be a positive finite number, got {eta}"
            )));
        }
        if t_iters == 0 {
            return Err(InstanceError::InvalidParameter(
                "twodim: T must be at least 1".to_string(),
            ));
        }
        Self::new(F::one() / (eta * F::of_usize(t_iters)))
    }

    pub fn lambda(&self) -> F {
        self.lambda
    }
}

impl<F: Scalar> LossInstance<F> for TwoDimQuadratic<F> {
    fn name(&self) -> String {
        format!("twodim{{lambda={}}}", self.lambda)
    }

    fn family(&self) -> &'static str {
        "twodim"
    }

    fn dim(&self) -> usize {
        2
    }

    fn smoothness(&self) -> F {
        F::one().max(self.lambda)
    }

    fn realizable(&self) -> bool {
        true
    }

    fn sample_space(&self) -> String {
        "single point {1} (deterministic loss)".to_string()
    }

    fn minimizer(&self) -> Vec<F> {
        vec![F::zero(), F::zero()]
    }

    fn default_init(&self) -> Vec<F> {
        vec![F::one(), F::one()]
    }

    fn draw(&self, _rng: &mut dyn RngCore) -> Sample {
        Sample::Index(1)
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Index(1))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        if !self.in_sample_space(z) {
            return Err(InstanceError::SampleDomain(format!(
                "twodim has the single sample 1, got {z}"
            )));
        }
        let half = F::of(0.5);
        Ok(half * w[0] * w[0] + half * self.lambda * w[1] * w[1])
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != 2 {
            return Err(InstanceError::DimensionMismatch { expected: 2, got: acc.len() });
        }
        if !self.in_sample_space(z) {
            return Err(InstanceError::SampleDomain(format!(
                "twodim has the single sample 1, got {z}"
            )));
        }
        acc[0] += scale * w[0];
        acc[1] += scale * self.lambda * w[1];
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        self.loss(w, &Sample::Index(1))
    }
}
