//! 1-D non-realizable family: a fixed quadratic plus a ±1 linear kick.

use rand::{Rng, RngCore};

use super::{check_dim, InstanceError, LossInstance, Sample};
use crate::Scalar;

/// `f(w, z) = w²/(2·ηT) + z·w` with `z` uniform on {−1, +1}.
///
/// The curvature is pinned to `1/ηT` so that a single GD step contracts `w`
/// by exactly `(1 − 1/T)`. The linear kicks average out in the population
/// risk `F(w) = w²/(2·ηT)` but not on a finite sample: when the sample sum
/// is pushed below `−√n/2` the iterates drift away from the minimizer at a
/// rate of `η/√n` per step, which is the overfitting mechanism this family
/// exists to exhibit. Not realizable: no single `w` minimizes both `z = +1`
/// and `z = −1` losses.
#[derive(Clone, Debug)]
pub struct NonRealizableScalar<F: Scalar> {
    eta_t: F,
}

impl<F: Scalar> NonRealizableScalar<F> {
    /// `eta_t` is the product ηT > 0 fixing the curvature `1/eta_t`.
    pub fn new(eta_t: F) -> Result<Self, InstanceError> {
        if eta_t <= F::zero() || !eta_t.is_finite() {
            return Err(InstanceError::InvalidParameter(format!(
                "nonrealizable: eta_T must be a positive finite number, got {eta_t}"
            )));
        }
        Ok(Self { eta_t })
    }

    pub fn eta_t(&self) -> F {
        self.eta_t
    }

    fn sign_value(z: &Sample) -> Result<F, InstanceError> {
        match z {
            Sample::Sign(1) => Ok(F::one()),
            Sample::Sign(-1) => Ok(-F::one()),
            other => Err(InstanceError::SampleDomain(format!(
                "nonrealizable expects a ±1 sign sample, got {other}"
            ))),
        }
    }
}

impl<F: Scalar> LossInstance<F> for NonRealizableScalar<F> {
    fn name(&self) -> String {
        format!("nonrealizable{{eta_T={}}}", self.eta_t)
    }

    fn family(&self) -> &'static str {
        "nonrealizable"
    }

    fn dim(&self) -> usize {
        1
    }

    fn smoothness(&self) -> F {
        F::one() / self.eta_t
    }

    fn realizable(&self) -> bool {
        false
    }

    fn sample_space(&self) -> String {
        "z uniform on {-1, +1}".to_string()
    }

    fn minimizer(&self) -> Vec<F> {
        vec![F::zero()]
    }

    fn default_init(&self) -> Vec<F> {
        vec![F::zero()]
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::Sign(if rng.random::<bool>() { 1 } else { -1 })
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Sign(1) | Sample::Sign(-1))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let s = Self::sign_value(z)?;
        let x = w[0];
        Ok(x * x / (F::of(2.0) * self.eta_t) + s * x)
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != 1 {
            return Err(InstanceError::DimensionMismatch { expected: 1, got: acc.len() });
        }
        let s = Self::sign_value(z)?;
        acc[0] += scale * (w[0] / self.eta_t + s);
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        Ok(w[0] * w[0] / (F::of(2.0) * self.eta_t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::Dataset;

    fn inst() -> NonRealizableScalar<f64> {
        NonRealizableScalar::new(4.0).unwrap()
    }

    #[test]
    fn loss_closed_form() {
        // At w = 0 both terms vanish; at w = 2, z = −1: 4/8 − 2 = −1.5.
        assert_eq!(inst().loss(&[0.0], &Sample::Sign(1)).unwrap(), 0.0);
        assert_eq!(inst().loss(&[2.0], &Sample::Sign(-1)).unwrap(), -1.5);
    }

    #[test]
    fn gradient_reduces_to_sign_at_origin() {
        assert_eq!(inst().grad(&[0.0], &Sample::Sign(1)).unwrap(), vec![1.0]);
        assert_eq!(inst().grad(&[0.0], &Sample::Sign(-1)).unwrap(), vec![-1.0]);
    }

    #[test]
    fn population_risk_is_pure_quadratic() {
        // 2²/(2·4) = 0.5
        assert_eq!(inst().population_risk(&[2.0]).unwrap(), 0.5);
        assert_eq!(inst().excess_risk(&[2.0]).unwrap(), 0.5);
    }

    #[test]
    fn empirical_average_cancels_opposite_signs() {
        // S = {+1, −1} at w = 1: risk = mean(1/8 + 1, 1/8 − 1) = 1/8,
        // grad = mean(1/4 + 1, 1/4 − 1) = 1/4.
        let data = Dataset::new(vec![Sample::Sign(1), Sample::Sign(-1)], "t").unwrap();
        let i = inst();
        assert_eq!(i.empirical_risk(&[1.0], &data).unwrap(), 0.125);
        assert_eq!(i.empirical_grad(&[1.0], &data).unwrap(), vec![0.25]);
    }

    #[test]
    fn rejects_bad_samples_and_dims() {
        let i = inst();
        assert!(matches!(
            i.loss(&[0.0], &Sample::Index(0)),
            Err(InstanceError::SampleDomain(_))
        ));
        assert!(matches!(
            i.loss(&[0.0, 1.0], &Sample::Sign(1)),
            Err(InstanceError::DimensionMismatch { expected: 1, got: 2 })
        ));
        assert!(NonRealizableScalar::<f64>::new(0.0).is_err());
        assert!(NonRealizableScalar::<f64>::new(f64::NAN).is_err());
    }

    #[test]
    fn draws_stay_on_support() {
        use rand::SeedableRng;
        let i = inst();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let z = i.draw(&mut rng);
            assert!(i.in_sample_space(&z));
        }
    }
}
