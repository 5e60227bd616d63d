//! Floating-point scalar abstraction shared by every state array.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Scalar type of the simulation state: `f64` for the reference path,
/// `f32` for the fast path.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Name used in config files and checkpoints.
    const NAME: &'static str;

    /// Converts a config constant, rounding to nearest for `f32`.
    fn of(v: f64) -> Self;

    /// Exact widening to `f64`.
    fn wide(self) -> f64;
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    #[inline(always)]
    fn of(v: f64) -> Self {
        v
    }

    #[inline(always)]
    fn wide(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    #[inline(always)]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline(always)]
    fn wide(self) -> f64 {
        self as f64
    }
}

/// Dot product with a fixed accumulation order: four interleaved lanes
/// summed as `(l0 + l1) + (l2 + l3)`, then the tail left to right.
#[inline]
pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut l = [S::zero(); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        l[0] += x[0] * y[0];
        l[1] += x[1] * y[1];
        l[2] += x[2] * y[2];
        l[3] += x[3] * y[3];
    }
    let mut acc = (l[0] + l[1]) + (l[2] + l[3]);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        acc += *x * *y;
    }
    acc
}

/// Sum of `f64` partials in index order. Parallel reductions collect their
/// partials in a `Vec` first and then call this, so the result does not
/// depend on how work was split across threads.
#[inline]
pub(crate) fn ordered_sum(parts: &[f64]) -> f64 {
    parts.iter().fold(0.0, |acc, v| acc + v)
}
