//! 1-D realizable quadratics `f(w, z) = (a(z)/2)(w − w*)²` with curvature
//! drawn from a finite law.

use rand::{Rng, RngCore};

use super::{check_dim, InstanceError, LossInstance, Sample};
use crate::Scalar;

/// The curvature law `z ↦ a(z)` of a [`ScalarRealizable`] instance.
#[derive(Clone, Debug, PartialEq)]
pub enum CurvatureLaw<F: Scalar> {
    /// Every sample carries the same curvature `a ∈ [0, 1]`.
    Constant(F),
    /// `k` equally likely levels `{1/k, 2/k, .., k/k}`; level `i` has
    /// curvature `i/k`, so the law mixes weak and full curvature.
    Levels(usize),
}

impl<F: Scalar> CurvatureLaw<F> {
    fn validate(&self) -> Result<(), InstanceError> {
        match self {
            CurvatureLaw::Constant(a) => {
                if !(*a >= F::zero() && *a <= F::one()) {
                    return Err(InstanceError::InvalidParameter(format!(
                        "scalar: curvature a must lie in [0, 1], got {a}"
                    )));
                }
            }
            CurvatureLaw::Levels(k) => {
                if *k == 0 {
                    return Err(InstanceError::InvalidParameter(
                        "scalar: levels must be at least 1".to_string(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn support_size(&self) -> usize {
        match self {
            CurvatureLaw::Constant(_) => 1,
            CurvatureLaw::Levels(k) => *k,
        }
    }

    fn curvature(&self, i: usize) -> F {
        match self {
            CurvatureLaw::Constant(a) => *a,
            CurvatureLaw::Levels(k) => F::of_usize(i) / F::of_usize(*k),
        }
    }

    fn mean(&self) -> F {
        match self {
            CurvatureLaw::Constant(a) => *a,
            // (1/k)·Σ_{i=1..k} i/k = (k+1)/(2k)
            CurvatureLaw::Levels(k) => F::of_usize(k + 1) / (F::of(2.0) * F::of_usize(*k)),
        }
    }

    fn max(&self) -> F {
        match self {
            CurvatureLaw::Constant(a) => *a,
            CurvatureLaw::Levels(_) => F::one(),
        }
    }
}

/// 1-D realizable family: every sample's loss is a quadratic centered at
/// the shared minimizer `w*`, differing only in curvature.
///
/// Gradient steps contract the distance to `w*` whenever `η·a(z) ≤ 2`, so
/// long training cannot overfit here; the family is the witness that 1-D
/// realizable problems admit horizon-independent risk.
#[derive(Clone, Debug)]
pub struct ScalarRealizable<F: Scalar> {
    law: CurvatureLaw<F>,
    w_star: F,
}

impl<F: Scalar> ScalarRealizable<F> {
    pub fn new(law: CurvatureLaw<F>, w_star: F) -> Result<Self, InstanceError> {
        law.validate()?;
        if !w_star.is_finite() {
            return Err(InstanceError::InvalidParameter(format!(
                "scalar: w* must be finite, got {w_star}"
            )));
        }
        Ok(Self { law, w_star })
    }

    pub fn law(&self) -> &CurvatureLaw<F> {
        &self.law
    }

    pub fn w_star(&self) -> F {
        self.w_star
    }

    fn level_of(&self, z: &Sample) -> Result<usize, InstanceError> {
        let k = self.law.support_size();
        match z {
            Sample::Index(i) if (1..=k).contains(i) => Ok(*i),
            other => Err(InstanceError::SampleDomain(format!(
                "scalar expects a level index in 1..={k}, got {other}"
            ))),
        }
    }
}

impl<F: Scalar> LossInstance<F> for ScalarRealizable<F> {
    fn name(&self) -> String {
        match &self.law {
            CurvatureLaw::Constant(a) => format!("scalar{{a={},wstar={}}}", a, self.w_star),
            CurvatureLaw::Levels(k) => format!("scalar{{levels={},wstar={}}}", k, self.w_star),
        }
    }

    fn family(&self) -> &'static str {
        "scalar"
    }

    fn dim(&self) -> usize {
        1
    }

    fn smoothness(&self) -> F {
        self.law.max()
    }

    fn realizable(&self) -> bool {
        true
    }

    fn sample_space(&self) -> String {
        match &self.law {
            CurvatureLaw::Constant(a) => format!("single point {{1}} with curvature {a}"),
            CurvatureLaw::Levels(k) => format!("level index uniform on {{1..{k}}}, curvature i/{k}"),
        }
    }

    fn minimizer(&self) -> Vec<F> {
        vec![self.w_star]
    }

    fn default_init(&self) -> Vec<F> {
        vec![F::one()]
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::Index(rng.random_range(1..=self.law.support_size()))
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Index(i) if (1..=self.law.support_size()).contains(i))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let a = self.law.curvature(self.level_of(z)?);
        let v = w[0] - self.w_star;
        Ok(F::of(0.5) * a * v * v)
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != 1 {
            return Err(InstanceError::DimensionMismatch { expected: 1, got: acc.len() });
        }
        let a = self.law.curvature(self.level_of(z)?);
        acc[0] += scale * a * (w[0] - self.w_star);
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let v = w[0] - self.w_star;
        Ok(F::of(0.5) * self.law.mean() * v * v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_law_closed_forms() {
        let i = ScalarRealizable::new(CurvatureLaw::Constant(0.5), 0.0).unwrap();
        assert_eq!(i.loss(&[2.0], &Sample::Index(1)).unwrap(), 1.0);
        assert_eq!(i.grad(&[2.0], &Sample::Index(1)).unwrap(), vec![1.0]);
        assert_eq!(i.population_risk(&[2.0]).unwrap(), 1.0);
        assert_eq!(i.smoothness(), 0.5);
        assert_eq!(i.name(), "scalar{a=0.5,wstar=0}");
    }

    #[test]
    fn level_law_mixes_curvatures() {
        let i = ScalarRealizable::new(CurvatureLaw::Levels(4), 0.0).unwrap();
        // a(i) = i/4; E[a] = 10/16.
        assert_eq!(i.loss(&[2.0], &Sample::Index(1)).unwrap(), 0.5);
        assert_eq!(i.loss(&[2.0], &Sample::Index(4)).unwrap(), 2.0);
        assert_eq!(i.population_risk(&[2.0]).unwrap(), 1.25);
        assert_eq!(i.smoothness(), 1.0);
        assert_eq!(i.name(), "scalar{levels=4,wstar=0}");
    }

    #[test]
    fn shared_minimizer_is_flat_for_every_level() {
        let i = ScalarRealizable::new(CurvatureLaw::Levels(3), 1.5).unwrap();
        for lvl in 1..=3 {
            assert_eq!(i.loss(&[1.5], &Sample::Index(lvl)).unwrap(), 0.0);
            assert_eq!(i.grad(&[1.5], &Sample::Index(lvl)).unwrap(), vec![0.0]);
        }
        assert_eq!(i.minimizer(), vec![1.5]);
    }

    #[test]
    fn weak_growth_is_tight_at_full_curvature() {
        // ‖∇f‖² = a²v² and 2Lf = L·a·v²; equal whenever a = L.
        let i = ScalarRealizable::<f64>::new(CurvatureLaw::Constant(1.0), 0.0).unwrap();
        let g = i.grad(&[3.0], &Sample::Index(1)).unwrap()[0];
        let f = i.loss(&[3.0], &Sample::Index(1)).unwrap();
        assert!((g * g - 2.0 * i.smoothness() * f).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters_and_levels() {
        assert!(ScalarRealizable::<f64>::new(CurvatureLaw::Constant(1.5), 0.0).is_err());
        assert!(ScalarRealizable::<f64>::new(CurvatureLaw::Constant(-0.1), 0.0).is_err());
        assert!(ScalarRealizable::<f64>::new(CurvatureLaw::Levels(0), 0.0).is_err());
        assert!(ScalarRealizable::<f64>::new(CurvatureLaw::Constant(0.5), f64::NAN).is_err());
        let i = ScalarRealizable::new(CurvatureLaw::Levels(2), 0.0).unwrap();
        assert!(matches!(i.loss(&[0.0], &Sample::Index(3)), Err(InstanceError::SampleDomain(_))));
        assert!(matches!(i.loss(&[0.0], &Sample::Index(0)), Err(InstanceError::SampleDomain(_))));
    }

    #[test]
    fn draws_cover_levels() {
        use rand::SeedableRng;
        let i = ScalarRealizable::<f64>::new(CurvatureLaw::Levels(3), 0.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut seen = [false; 4];
        for _ in 0..200 {
            match i.draw(&mut rng) {
                Sample::Index(k) => seen[k] = true,
                other => panic!("unexpected sample {other}"),
            }
        }
        assert!(seen[1..].iter().all(|&s| s));
    }
}
