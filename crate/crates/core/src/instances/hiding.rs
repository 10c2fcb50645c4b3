//! Coordinate-hiding family: 2n coordinates, n samples, so around a 1/e
//! fraction of coordinates is never observed and keeps its initial mass.

use rand::{Rng, RngCore};

use super::{check_dim, InstanceError, LossInstance, Sample};
use crate::Scalar;

/// `f(w, z=i) = (1/2)·w(i)²` with `i` uniform on {1..2n}, dimension 2n.
///
/// GD on an n-sample dataset only ever shrinks the coordinates that occur
/// in the dataset; with dimension 2n some coordinates escape and the
/// population risk `F(w) = ‖w‖²/(4n)` retains their contribution. The
/// canonical initialization spreads unit mass evenly: `w₁ = (1/√(2n))·𝟏`.
#[derive(Clone, Debug)]
pub struct CoordinateHiding<F: Scalar> {
    n: usize,
    _marker: core::marker::PhantomData<F>,
}

impl<F: Scalar> CoordinateHiding<F> {
    /// `n ≥ 1` is the dataset size the construction is tuned for; the
    /// parameter dimension is `2n`.
    pub fn new(n: usize) -> Result<Self, InstanceError> {
        if n == 0 {
            return Err(InstanceError::InvalidParameter(
                "hiding: n must be at least 1".to_string(),
            ));
        }
        Ok(Self { n, _marker: core::marker::PhantomData })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn index_of(&self, z: &Sample) -> Result<usize, InstanceError> {
        match z {
            Sample::Index(i) if (1..=2 * self.n).contains(i) => Ok(*i),
            other => Err(InstanceError::SampleDomain(format!(
                "hiding expects an index in 1..={}, got {other}",
                2 * self.n
            ))),
        }
    }
}

impl<F: Scalar> LossInstance<F> for CoordinateHiding<F> {
    fn name(&self) -> String {
        format!("hiding{{n={}}}", self.n)
    }

    fn family(&self) -> &'static str {
        "hiding"
    }

    fn dim(&self) -> usize {
        2 * self.n
    }

    fn smoothness(&self) -> F {
        F::one()
    }

    fn realizable(&self) -> bool {
        true
    }

    fn sample_space(&self) -> String {
        format!("index uniform on {{1..{}}}", 2 * self.n)
    }

    fn minimizer(&self) -> Vec<F> {
        vec![F::zero(); 2 * self.n]
    }

    fn default_init(&self) -> Vec<F> {
        let v = F::one() / F::of_usize(2 * self.n).sqrt();
        vec![v; 2 * self.n]
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::Index(rng.random_range(1..=2 * self.n))
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Index(i) if (1..=2 * self.n).contains(i))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let i = self.index_of(z)?;
        let v = w[i - 1];
        Ok(F::of(0.5) * v * v)
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != self.dim() {
            return Err(InstanceError::DimensionMismatch { expected: self.dim(), got: acc.len() });
        }
        let i = self.index_of(z)?;
        acc[i - 1] += scale * w[i - 1];
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let mut sum = F::zero();
        for &v in w {
            sum += v * v;
        }
        Ok(sum / (F::of(4.0) * F::of_usize(self.n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::Dataset;

    #[test]
    fn population_risk_normalizes_by_4n() {
        let i = CoordinateHiding::<f64>::new(1).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((i.population_risk(&[r, r]).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn loss_and_grad_touch_one_coordinate() {
        let i = CoordinateHiding::<f64>::new(2).unwrap();
        let w = [0.5, 2.0, -1.0, 0.0];
        assert_eq!(i.loss(&w, &Sample::Index(2)).unwrap(), 2.0);
        assert_eq!(i.grad(&w, &Sample::Index(2)).unwrap(), vec![0.0, 2.0, 0.0, 0.0]);
        assert_eq!(i.grad(&w, &Sample::Index(3)).unwrap(), vec![0.0, 0.0, -1.0, 0.0]);
    }

    #[test]
    fn default_init_has_unit_norm() {
        let i = CoordinateHiding::<f64>::new(8).unwrap();
        let w = i.default_init();
        let sq: f64 = w.iter().map(|v| v * v).sum();
        assert!((sq - 1.0).abs() < 1e-15);
        assert!((i.population_risk(&w).unwrap() - 1.0 / 32.0).abs() < 1e-16);
    }

    #[test]
    fn empirical_average_over_repeated_index() {
        let i = CoordinateHiding::<f64>::new(2).unwrap();
        let data = Dataset::new(vec![Sample::Index(1), Sample::Index(1)], "t").unwrap();
        let w = [3.0, 0.0, 0.0, 0.0];
        assert_eq!(i.empirical_risk(&w, &data).unwrap(), 4.5);
        assert_eq!(i.empirical_grad(&w, &data).unwrap(), vec![3.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(CoordinateHiding::<f64>::new(0).is_err());
        let i = CoordinateHiding::<f64>::new(2).unwrap();
        let w = [0.0; 4];
        assert!(matches!(i.loss(&w, &Sample::Index(0)), Err(InstanceError::SampleDomain(_))));
        assert!(matches!(i.loss(&w, &Sample::Index(5)), Err(InstanceError::SampleDomain(_))));
        assert!(matches!(i.loss(&[0.0; 3], &Sample::Index(1)), Err(InstanceError::DimensionMismatch { .. })));
    }

    #[test]
    fn draws_stay_in_range() {
        use rand::SeedableRng;
        let i = CoordinateHiding::<f64>::new(4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let z = i.draw(&mut rng);
            assert!(i.in_sample_space(&z));
        }
    }
}
