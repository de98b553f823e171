//! Real scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the whole crate is generic over.
///
/// Besides the usual arithmetic, a scalar knows how to run a dense
/// general matrix multiply, so that `matmul` dispatches to a blocked
/// kernel for both `f32` and `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Name written into checkpoints and dataset headers.
    const NAME: &'static str;

    /// `c = a·b (+ c if accumulate)` where `a` is `m×k` and `b` is `k×n`,
    /// both stored row-major, optionally read transposed.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_transposed: bool,
        b: &[Self],
        b_transposed: bool,
        c: &mut [Self],
        accumulate: bool,
    );

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

fn strides(rows: usize, cols: usize, transposed: bool) -> (isize, isize) {
    // Logical matrix is rows×cols; storage is cols×rows when transposed.
    if transposed {
        (1, rows as isize)
    } else {
        (cols as isize, 1)
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal, $kernel:path) => {
        impl Scalar for $t {
            const NAME: &'static str = $name;

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_transposed: bool,
                b: &[Self],
                b_transposed: bool,
                c: &mut [Self],
                accumulate: bool,
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                let (rsa, csa) = strides(m, k, a_transposed);
                let (rsb, csb) = strides(k, n, b_transposed);
                let beta = if accumulate { 1.0 } else { 0.0 };
                // SAFETY: slice lengths were checked above and the strides
                // describe in-bounds row-major (or transposed) layouts.
                unsafe {
                    $kernel(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        rsa,
                        csa,
                        b.as_ptr(),
                        rsb,
                        csb,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

impl_scalar!(f64, "f64", matrixmultiply::dgemm);
impl_scalar!(f32, "f32", matrixmultiply::sgemm);

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_product_with_transposes() {
        let a: Vec<f64> = (0..12).map(|x| x as f64 * 0.5 - 2.0).collect(); // 3×4
        let b: Vec<f64> = (0..8).map(|x| (x as f64).sin()).collect(); // 4×2
        let expect = naive(3, 4, 2, &a, &b);
        let mut c = vec![0.0; 6];
        f64::gemm(3, 4, 2, &a, false, &b, false, &mut c, false);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-12);
        }

        // aᵀ stored as 4×3, bᵀ stored as 2×4
        let mut at = vec![0.0; 12];
        for i in 0..3 {
            for j in 0..4 {
                at[j * 3 + i] = a[i * 4 + j];
            }
        }
        let mut bt = vec![0.0; 8];
        for i in 0..4 {
            for j in 0..2 {
                bt[j * 4 + i] = b[i * 2 + j];
            }
        }
        let mut c2 = vec![1.0; 6];
        f64::gemm(3, 4, 2, &at, true, &bt, true, &mut c2, true);
        for (x, y) in c2.iter().zip(&expect) {
            assert!((x - (y + 1.0)).abs() < 1e-12);
        }
    }
}
