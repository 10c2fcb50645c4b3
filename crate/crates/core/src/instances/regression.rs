//! Noiseless linear regression on a finite feature law: the
//! interpolation-regime sanity family.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{check_dim, InstanceError, LossInstance, Sample};
use crate::Scalar;

/// `f(w, z=(x, y)) = (y − xᵀw)²` with labels `y = xᵀw*`, features uniform
/// on a fixed set of `4d` unit-norm atoms.
///
/// The atoms are standard-normal directions normalized to unit length,
/// generated once at construction from a dedicated stream, so the feature
/// law has finite support and the population risk is the exact average
/// `(w − w*)ᵀ Σ (w − w*)` with `Σ = (1/4d)·Σ_k x_k x_kᵀ`. Labels carry no
/// noise, hence `w*` interpolates every sample and long training cannot
/// hurt. The per-sample Hessian is `2·x xᵀ`, so the smoothness constant
/// is 2.
#[derive(Clone, Debug)]
pub struct NoiselessRegression<F: Scalar> {
    d: usize,
    seed: u64,
    w_star: Vec<F>,
    /// Row-major `4d × d` feature atoms, each of unit Euclidean norm.
    atoms: Vec<Vec<F>>,
    /// Precomputed labels `y_k = x_kᵀ w*`.
    labels: Vec<F>,
    /// Row-major `d × d` second-moment matrix of the feature law.
    sigma: Vec<F>,
}

impl<F: Scalar> NoiselessRegression<F> {
    /// Feature dimension `d ≥ 1` with the default target `w* = 𝟏/√d`.
    pub fn new(d: usize, seed: u64) -> Result<Self, InstanceError> {
        let v = F::one() / F::of_usize(d.max(1)).sqrt();
        Self::with_target(d, seed, vec![v; d])
    }

    pub fn with_target(d: usize, seed: u64, w_star: Vec<F>) -> Result<Self, InstanceError> {
        if d == 0 {
            return Err(InstanceError::InvalidParameter(
                "regression: d must be at least 1".to_string(),
            ));
        }
        if w_star.len() != d {
            return Err(InstanceError::DimensionMismatch { expected: d, got: w_star.len() });
        }
        if w_star.iter().any(|v| !v.is_finite()) {
            return Err(InstanceError::InvalidParameter(
                "regression: w* must be finite".to_string(),
            ));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let atoms: Vec<Vec<F>> = (0..4 * d).map(|_| unit_atom(d, &mut rng)).collect();
        let labels = atoms.iter().map(|x| dot(x, &w_star)).collect();

        // Σ = (1/4d)·Σ_k x_k x_kᵀ, accumulated in atom order.
        let mut sigma = vec![F::zero(); d * d];
        for x in &atoms {
            for i in 0..d {
                for j in 0..d {
                    sigma[i * d + j] += x[i] * x[j];
                }
            }
        }
        let inv = F::one() / F::of_usize(4 * d);
        for s in sigma.iter_mut() {
            *s *= inv;
        }

        Ok(Self { d, seed, w_star, atoms, labels, sigma })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn atoms(&self) -> &[Vec<F>] {
        &self.atoms
    }

    pub fn target(&self) -> &[F] {
        &self.w_star
    }

    fn atom_of(&self, z: &Sample) -> Result<usize, InstanceError> {
        match z {
            Sample::Index(i) if (1..=self.atoms.len()).contains(i) => Ok(*i - 1),
            other => Err(InstanceError::SampleDomain(format!(
                "regression expects an atom index in 1..={}, got {other}",
                self.atoms.len()
            ))),
        }
    }
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    let mut s = F::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

/// A standard-normal direction normalized to unit length; redraws on the
/// (measure-zero, but cheap to guard) event of a numerically tiny norm.
fn unit_atom<F: Scalar>(d: usize, rng: &mut ChaCha8Rng) -> Vec<F> {
    loop {
        let raw: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1e-6 {
            return raw.into_iter().map(|v| F::of(v / norm)).collect();
        }
    }
}

impl<F: Scalar> LossInstance<F> for NoiselessRegression<F> {
    fn name(&self) -> String {
        format!("regression{{d={},seed={}}}", self.d, self.seed)
    }

    fn family(&self) -> &'static str {
        "regression"
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn smoothness(&self) -> F {
        F::of(2.0)
    }

    fn realizable(&self) -> bool {
        true
    }

    fn sample_space(&self) -> String {
        format!("index uniform on {{1..{}}} fixed unit-norm feature atoms", self.atoms.len())
    }

    fn minimizer(&self) -> Vec<F> {
        self.w_star.clone()
    }

    fn default_init(&self) -> Vec<F> {
        vec![F::zero(); self.d]
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::Index(rng.random_range(1..=self.atoms.len()))
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Index(i) if (1..=self.atoms.len()).contains(i))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let k = self.atom_of(z)?;
        let r = self.labels[k] - dot(&self.atoms[k], w);
        Ok(r * r)
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != self.d {
            return Err(InstanceError::DimensionMismatch { expected: self.d, got: acc.len() });
        }
        let k = self.atom_of(z)?;
        let x = &self.atoms[k];
        let r = self.labels[k] - dot(x, w);
        let c = scale * F::of(-2.0) * r;
        for (a, &xi) in acc.iter_mut().zip(x) {
            *a += c * xi;
        }
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let v: Vec<F> = w.iter().zip(&self.w_star).map(|(&a, &b)| a - b).collect();
        let mut total = F::zero();
        for i in 0..self.d {
            let row = &self.sigma[i * self.d..(i + 1) * self.d];
            total += v[i] * dot(row, &v);
        }
        Ok(total)
    }
}
