//! Scalar abstractions shared by the numeric modules.
//!
//! Utility fusion and hit-ratio arithmetic only need field operations, so they
//! are written against [`Scalar`] and run on `f32`, `f64` or exact rationals.
//! Anything that needs logarithms, square roots or finiteness checks (matrix
//! factorization, k-means, sampling weights, NDCG) is written against [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// A number type closed under `+ - * /` with a total-enough order for ranking.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable in scalar type")
    }

    /// Converts a literal such as `0.05` into the scalar type.
    ///
    /// Rational implementations approximate to the simplest fraction, so
    /// `0.05` becomes exactly `1/20`.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

/// Floating-point scalars.
pub trait Real: Scalar + Float + Sum + FromStr + Default {}

impl<T> Real for T where T: Scalar + Float + Sum + FromStr + Default {}
