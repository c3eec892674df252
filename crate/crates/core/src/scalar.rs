use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for ratios, percentages and curve points.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {
    fn from_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize fits a float")
    }

    fn from_u64(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("u64 fits a float")
    }

    /// `num / den`, zero when `den` is zero.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Self::zero()
        } else {
            <Self as Scalar>::from_usize(num) / <Self as Scalar>::from_usize(den)
        }
    }

    fn hundred() -> Self {
        <Self as Scalar>::from_usize(100)
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {}
