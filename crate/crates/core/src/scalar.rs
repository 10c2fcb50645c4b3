use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the math layers are generic over.
///
/// Implemented by `f32` and `f64` through the blanket impl. The two
/// constructors exist because instance definitions are full of small decimal
/// constants and dimension-derived factors like `1/n`.
pub trait Scalar:
    Float + FromPrimitive + core::ops::AddAssign + core::ops::SubAssign + core::ops::MulAssign
    + core::iter::Sum + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` constant.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant converts to the scalar type")
    }

    /// Conversion from a count or dimension.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to the scalar type")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + core::ops::AddAssign + core::ops::SubAssign + core::ops::MulAssign
        + core::iter::Sum + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
}
