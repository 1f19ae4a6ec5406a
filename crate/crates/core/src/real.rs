//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A point in the plane.
pub type Point<T> = [T; 2];

/// A 2x2 matrix stored row-major.
pub type Mat2<T> = [[T; 2]; 2];

#[inline]
pub(crate) fn mat_vec<T: Real>(a: &Mat2<T>, v: [T; 2]) -> [T; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

#[inline]
pub(crate) fn dot<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub(crate) fn sym_eigenvalues<T: Real>(a: &Mat2<T>) -> (T, T) {
    let half = T::lit(0.5);
    let mean = half * (a[0][0] + a[1][1]);
    let diff = half * (a[0][0] - a[1][1]);
    let off = half * (a[0][1] + a[1][0]);
    let rad = (diff * diff + off * off).sqrt();
    (mean - rad, mean + rad)
}

/// Spectral norm of a symmetric 2x2 matrix.
pub(crate) fn sym_norm<T: Real>(a: &Mat2<T>) -> T {
    let (lo, hi) = sym_eigenvalues(a);
    lo.abs().max(hi.abs())
}
