//! The coupled family: one strong coordinate feeding n weak ones, plus the
//! product wrapper that runs m independent copies side by side.

use rand::{Rng, RngCore};

use super::{check_dim, InstanceError, LossInstance, Sample};
use crate::Scalar;

/// Scalar budget for product instances; above this, construction is refused.
pub const DEFAULT_SCALAR_BUDGET: u128 = 100_000_000;

/// `f(w, z=i) = (1/2)(√α·x − y(i))²` on `w = (x, y) ∈ R^{n+1}`, `i` uniform
/// on {1..n}.
///
/// Each sample couples the shared coordinate `x` to one of the `n` weak
/// coordinates `y(i)`. The population risk `G(w) = (1/2n)·‖y − √α·x·𝟏‖²` is
/// minimized on the subspace `y = √α·x·𝟏`; we fix `w* = 0` as the canonical
/// minimizer. Starting from `x = 1, y = 0`, gradient steps bleed mass from
/// `x` into the y block at rate `η√α/n` per visit, and the y block is what
/// the averaged iterate cannot shed on mid-range horizons.
///
/// The per-sample Hessian is the rank-one matrix `v·vᵀ` with
/// `v = (√α, −e_i)`, so the gradient-Lipschitz constant is exactly `1 + α`
/// and the weak-growth inequality `‖∇f‖² ≤ 2L·f` holds with equality.
#[derive(Clone, Debug)]
pub struct CoupledRealizable<F: Scalar> {
    n: usize,
    alpha: F,
    c: F,
    sqrt_alpha: F,
}

impl<F: Scalar> CoupledRealizable<F> {
    /// `n ≥ 1` weak coordinates, coupling curvature `alpha ∈ (0, 1]`, and
    /// the constant `c ∈ (0, 1]` the curvature was derived from.
    pub fn new(n: usize, alpha: F, c: F) -> Result<Self, InstanceError> {
        if n == 0 {
            return Err(InstanceError::InvalidParameter(
                "coupled: n must be at least 1".to_string(),
            ));
        }
        if !(alpha > F::zero() && alpha <= F::one()) {
            return Err(InstanceError::InvalidParameter(format!(
                "coupled: alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !(c > F::zero() && c <= F::one()) {
            return Err(InstanceError::InvalidParameter(format!(
                "coupled: C must lie in (0, 1], got {c}"
            )));
        }
        Ok(Self { n, alpha, c, sqrt_alpha: alpha.sqrt() })
    }

    /// The canonical parameterization `alpha = C/(η·T)` for a run of `T`
    /// iterations at step size `η`.
    pub fn with_horizon(n: usize, c: F, eta: F, t_iters: usize) -> Result<Self, InstanceError> {
        if eta <= F::zero() || !eta.is_finite() {
            return Err(InstanceError::InvalidParameter(format!(
                "coupled: eta must be a positive finite number, got {eta}"
            )));
        }
        if t_iters == 0 {
            return Err(InstanceError::InvalidParameter(
                "coupled: T must be at least 1".to_string(),
            ));
        }
        let alpha = c / (eta * F::of_usize(t_iters));
        Self::new(n, alpha, c)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> F {
        self.alpha
    }

    /// The constant `C` behind `alpha = C/(ηT)`.
    pub fn constant(&self) -> F {
        self.c
    }

    fn index_of(&self, z: &Sample) -> Result<usize, InstanceError> {
        match z {
            Sample::Index(i) if (1..=self.n).contains(i) => Ok(*i),
            other => Err(InstanceError::SampleDomain(format!(
                "coupled expects an index in 1..={}, got {other}",
                self.n
            ))),
        }
    }
}

impl<F: Scalar> LossInstance<F> for CoupledRealizable<F> {
    fn name(&self) -> String {
        format!("coupled{{C={},alpha={},n={}}}", self.c, self.alpha, self.n)
    }

    fn family(&self) -> &'static str {
        "coupled"
    }

    fn dim(&self) -> usize {
        self.n + 1
    }

    fn smoothness(&self) -> F {
        F::one() + self.alpha
    }

    fn realizable(&self) -> bool {
        true
    }

    fn sample_space(&self) -> String {
        format!("index uniform on {{1..{}}}", self.n)
    }

    fn minimizer(&self) -> Vec<F> {
        vec![F::zero(); self.n + 1]
    }

    fn default_init(&self) -> Vec<F> {
        let mut w = vec![F::zero(); self.n + 1];
        w[0] = F::one();
        w
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::Index(rng.random_range(1..=self.n))
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Index(i) if (1..=self.n).contains(i))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let i = self.index_of(z)?;
        // w is laid out as (x, y(1), .., y(n)), so sample i addresses w[i].
        let r = self.sqrt_alpha * w[0] - w[i];
        Ok(F::of(0.5) * r * r)
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != self.dim() {
            return Err(InstanceError::DimensionMismatch { expected: self.dim(), got: acc.len() });
        }
        let i = self.index_of(z)?;
        acc[0] += scale * (self.alpha * w[0] - self.sqrt_alpha * w[i]);
        acc[i] += scale * (w[i] - self.sqrt_alpha * w[0]);
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let target = self.sqrt_alpha * w[0];
        let mut sum = F::zero();
        for &y in &w[1..] {
            let r = y - target;
            sum += r * r;
        }
        Ok(sum / (F::of(2.0) * F::of_usize(self.n)))
    }
}

/// `m` independent copies of a [`CoupledRealizable`] base, summed:
/// `f(W, Z) = Σ_j g(w^(j), z^(j))` with `Z` an m-tuple of independent
/// uniform indices.
///
/// With `m = Θ(eⁿ/√n)` copies, at least one copy sees each of its n indices
/// exactly once with constant probability, which upgrades a per-copy
/// conditional bound to an unconditional one. Construction is refused when
/// `(n+1)·m` exceeds the scalar budget; beyond toy n the intended route is
/// the single-copy conditional mode in the experiments layer.
///
/// The default initialization puts `x = 1` on copy 1 and zero elsewhere, so
/// the starting distance to the minimizer stays 1 regardless of `m`.
#[derive(Clone, Debug)]
pub struct MultiCopyRealizable<F: Scalar> {
    base: CoupledRealizable<F>,
    m: usize,
}

impl<F: Scalar> MultiCopyRealizable<F> {
    pub fn new(base: CoupledRealizable<F>, m: usize) -> Result<Self, InstanceError> {
        Self::with_budget(base, m, DEFAULT_SCALAR_BUDGET)
    }

    pub fn with_budget(
        base: CoupledRealizable<F>,
        m: usize,
        budget: u128,
    ) -> Result<Self, InstanceError> {
        if m == 0 {
            return Err(InstanceError::InvalidParameter(
                "multicopy: m must be at least 1".to_string(),
            ));
        }
        let needed = (base.n as u128 + 1) * m as u128;
        if needed > budget {
            return Err(InstanceError::MemoryBudget { needed, budget });
        }
        Ok(Self { base, m })
    }

    /// The copy count that makes the all-indices-once event Θ(1)-likely:
    /// `⌈eⁿ/√n⌉`. Saturates instead of overflowing; the budget check in the
    /// constructors is what actually rejects infeasible sizes.
    pub fn copies_for(n: usize) -> u128 {
        let nf = n as f64;
        let m = (nf.exp() / nf.sqrt()).ceil();
        if m.is_finite() && m < u128::MAX as f64 {
            m as u128
        } else {
            u128::MAX
        }
    }

    /// Builds with `m = ⌈eⁿ/√n⌉` under the default budget.
    pub fn with_default_copies(base: CoupledRealizable<F>) -> Result<Self, InstanceError> {
        let m = Self::copies_for(base.n);
        let needed = (base.n as u128 + 1).saturating_mul(m);
        if needed > DEFAULT_SCALAR_BUDGET {
            return Err(InstanceError::MemoryBudget { needed, budget: DEFAULT_SCALAR_BUDGET });
        }
        Self::with_budget(base, m as usize, DEFAULT_SCALAR_BUDGET)
    }

    pub fn base(&self) -> &CoupledRealizable<F> {
        &self.base
    }

    pub fn copies(&self) -> usize {
        self.m
    }

    fn stride(&self) -> usize {
        self.base.n + 1
    }

    fn indices_of<'z>(&self, z: &'z Sample) -> Result<&'z [usize], InstanceError> {
        match z {
            Sample::Tuple(v) if v.len() == self.m && v.iter().all(|i| (1..=self.base.n).contains(i)) => {
                Ok(v)
            }
            other => Err(InstanceError::SampleDomain(format!(
                "multicopy expects a {}-tuple of indices in 1..={}, got {other}",
                self.m, self.base.n
            ))),
        }
    }
}

impl<F: Scalar> LossInstance<F> for MultiCopyRealizable<F> {
    fn name(&self) -> String {
        format!(
            "multicopy{{C={},alpha={},m={},n={}}}",
            self.base.c, self.base.alpha, self.m, self.base.n
        )
    }

    fn family(&self) -> &'static str {
        "multicopy"
    }

    fn dim(&self) -> usize {
        self.stride() * self.m
    }

    fn smoothness(&self) -> F {
        // Copies do not interact: the Hessian is block diagonal with the
        // base's blocks on the diagonal.
        self.base.smoothness()
    }

    fn realizable(&self) -> bool {
        true
    }

    fn sample_space(&self) -> String {
        format!("{}-tuples of indices uniform on {{1..{}}}", self.m, self.base.n)
    }

    fn minimizer(&self) -> Vec<F> {
        vec![F::zero(); self.dim()]
    }

    fn default_init(&self) -> Vec<F> {
        let mut w = vec![F::zero(); self.dim()];
        w[0] = F::one();
        w
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Sample {
        Sample::Tuple((0..self.m).map(|_| rng.random_range(1..=self.base.n)).collect())
    }

    fn in_sample_space(&self, z: &Sample) -> bool {
        matches!(z, Sample::Tuple(v)
            if v.len() == self.m && v.iter().all(|i| (1..=self.base.n).contains(i)))
    }

    fn loss(&self, w: &[F], z: &Sample) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let idx = self.indices_of(z)?;
        let sa = self.base.sqrt_alpha;
        let stride = self.stride();
        let mut total = F::zero();
        for (j, &i) in idx.iter().enumerate() {
            let wj = &w[j * stride..(j + 1) * stride];
            let r = sa * wj[0] - wj[i];
            total += F::of(0.5) * r * r;
        }
        Ok(total)
    }

    fn grad_accum(&self, w: &[F], z: &Sample, scale: F, acc: &mut [F]) -> Result<(), InstanceError> {
        check_dim(self, w)?;
        if acc.len() != self.dim() {
            return Err(InstanceError::DimensionMismatch { expected: self.dim(), got: acc.len() });
        }
        let idx = self.indices_of(z)?;
        let (alpha, sa) = (self.base.alpha, self.base.sqrt_alpha);
        let stride = self.stride();
        for (j, &i) in idx.iter().enumerate() {
            let off = j * stride;
            let (x, y) = (w[off], w[off + i]);
            acc[off] += scale * (alpha * x - sa * y);
            acc[off + i] += scale * (y - sa * x);
        }
        Ok(())
    }

    fn population_risk(&self, w: &[F]) -> Result<F, InstanceError> {
        check_dim(self, w)?;
        let sa = self.base.sqrt_alpha;
        let stride = self.stride();
        let mut sum = F::zero();
        for j in 0..self.m {
            let wj = &w[j * stride..(j + 1) * stride];
            let target = sa * wj[0];
            for &y in &wj[1..] {
                let r = y - target;
                sum += r * r;
            }
        }
        Ok(sum / (F::of(2.0) * F::of_usize(self.base.n)))
    }
}
