use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the routing model and the policy network are generic over.
///
/// Implemented for `f32` (the working precision of the learned policy) and `f64`
/// (used where exact arithmetic checks matter, e.g. hypervolume and window oracles).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; every finite `f64` maps to the nearest representable value.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 converts to every Scalar")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// `c ← alpha·a·b + beta·c` for `a: [m, k]`, `b: [k, n]`, `c: [m, n]`, each given by
    /// a slice and its (row, column) strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(m: usize, k: usize, n: usize, alpha: Self, a: Strided<'_, Self>, b: Strided<'_, Self>, beta: Self, c: &mut [Self], rsc: usize);
}

/// Below this many rows the packing done by the blocked kernel costs more than it saves.
pub const GEMM_MIN_ROWS: usize = 8;

/// Read-only matrix view: data, row stride, column stride.
pub type Strided<'a, S> = (&'a [S], usize, usize);

fn check_gemm<S>(m: usize, k: usize, n: usize, a: Strided<'_, S>, b: Strided<'_, S>, c: &[S], rsc: usize) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| if rows == 0 || cols == 0 { 0 } else { (rows - 1) * rs + (cols - 1) * cs + 1 };
    assert!(a.0.len() >= last(m, k, a.1, a.2), "gemm: a too short");
    assert!(b.0.len() >= last(k, n, b.1, b.2), "gemm: b too short");
    assert!(c.len() >= last(m, n, rsc, 1), "gemm: c too short");
}

impl Scalar for f32 {
    fn gemm(m: usize, k: usize, n: usize, alpha: f32, a: Strided<'_, f32>, b: Strided<'_, f32>, beta: f32, c: &mut [f32], rsc: usize) {
        check_gemm(m, k, n, a, b, c, rsc);
        // SAFETY: the extents of all three views were checked above.
        unsafe {
            matrixmultiply::sgemm(
                m, k, n, alpha,
                a.0.as_ptr(), a.1 as isize, a.2 as isize,
                b.0.as_ptr(), b.1 as isize, b.2 as isize,
                beta, c.as_mut_ptr(), rsc as isize, 1,
            );
        }
    }
}

impl Scalar for f64 {
    fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: Strided<'_, f64>, b: Strided<'_, f64>, beta: f64, c: &mut [f64], rsc: usize) {
        check_gemm(m, k, n, a, b, c, rsc);
        // SAFETY: the extents of all three views were checked above.
        unsafe {
            matrixmultiply::dgemm(
                m, k, n, alpha,
                a.0.as_ptr(), a.1 as isize, a.2 as isize,
                b.0.as_ptr(), b.1 as isize, b.2 as isize,
                beta, c.as_mut_ptr(), rsc as isize, 1,
            );
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorises.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let xa = &a[c * 8..c * 8 + 8];
        let xb = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += xa[k] * xb[k];
        }
    }
    let mut total = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for k in chunks * 8..a.len() {
        total += a[k] * b[k];
    }
    total
}

/// `out += alpha * x`
#[inline]
pub fn axpy<S: Scalar>(alpha: S, x: &[S], out: &mut [S]) {
    debug_assert_eq!(x.len(), out.len());
    for (o, &v) in out.iter_mut().zip(x) {
        *o += alpha * v;
    }
}
