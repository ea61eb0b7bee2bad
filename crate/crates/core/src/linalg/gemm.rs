//! Matrix products.
//!
//! All products go through one strided kernel so that transposed operands
//! never need to be materialized. The kernel is `matrixmultiply`'s blocked
//! pure-Rust dgemm; swapping in a BLAS only touches [`gemm_into`].

use super::{DenseMatrix, LinalgError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    N,
    T,
}

struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: isize,
    cs: isize,
}

fn view(m: &DenseMatrix, op: Op) -> View<'_> {
    let r = m.rows() as isize;
    match op {
        Op::N => View {
            data: m.as_slice(),
            rows: m.rows(),
            cols: m.cols(),
            rs: 1,
            cs: r,
        },
        Op::T => View {
            data: m.as_slice(),
            rows: m.cols(),
            cols: m.rows(),
            rs: r,
            cs: 1,
        },
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` for column-major `c`.
fn gemm_into(alpha: f64, a: &View<'_>, b: &View<'_>, beta: f64, c: &mut DenseMatrix) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    debug_assert_eq!(k, b.rows);
    debug_assert_eq!((m, n), c.shape());
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.scale_mut(beta);
        return;
    }
    let ldc = m as isize;
    // SAFETY: every view describes an in-bounds strided layout over its
    // backing slice (checked by construction in `view`), and `c` is an
    // exclusively borrowed m x n column-major buffer.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs,
            a.cs,
            b.data.as_ptr(),
            b.rs,
            b.cs,
            beta,
            c.as_mut_slice().as_mut_ptr(),
            1,
            ldc,
        );
    }
}

fn product(a: &DenseMatrix, opa: Op, b: &DenseMatrix, opb: Op, name: &'static str) -> Result<DenseMatrix, LinalgError> {
    let va = view(a, opa);
    let vb = view(b, opb);
    if va.cols != vb.rows {
        return Err(LinalgError::DimensionMismatch {
            op: name,
            left: (va.rows, va.cols),
            right: (vb.rows, vb.cols),
        });
    }
    let mut c = DenseMatrix::zeros(va.rows, vb.cols);
    gemm_into(1.0, &va, &vb, 0.0, &mut c);
    Ok(c)
}

impl DenseMatrix {
    /// `self * other`
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        product(self, Op::N, other, Op::N, "matmul")
    }

    /// `selfᵀ * other`
    pub fn t_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        product(self, Op::T, other, Op::N, "t_matmul")
    }

    /// `self * otherᵀ`
    pub fn matmul_t(&self, other: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        product(self, Op::N, other, Op::T, "matmul_t")
    }

    /// `self * selfᵀ`
    pub fn gram_outer(&self) -> DenseMatrix {
        let mut g = product(self, Op::N, self, Op::T, "gram_outer").expect("conformable by construction");
        // Exact symmetry; the blocked kernel may round the two triangles differently.
        let n = g.rows();
        for j in 0..n {
            for i in 0..j {
                let v = 0.5 * (g[(i, j)] + g[(j, i)]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// `c <- alpha * self * other + beta * c`
    pub fn matmul_acc(
        &self,
        other: &DenseMatrix,
        alpha: f64,
        beta: f64,
        c: &mut DenseMatrix,
    ) -> Result<(), LinalgError> {
        let va = view(self, Op::N);
        let vb = view(other, Op::N);
        if va.cols != vb.rows || c.shape() != (va.rows, vb.cols) {
            return Err(LinalgError::DimensionMismatch {
                op: "matmul_acc",
                left: self.shape(),
                right: other.shape(),
            });
        }
        gemm_into(alpha, &va, &vb, beta, c);
        Ok(())
    }
}

/// Chains several products left to right.
pub fn multiply_chain(factors: &[&DenseMatrix]) -> Result<DenseMatrix, LinalgError> {
    let (first, rest) = factors.split_first().expect("empty product chain");
    let mut acc = (*first).clone();
    for f in rest {
        acc = acc.matmul(f)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        DenseMatrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    fn sample(r: usize, c: usize, salt: f64) -> DenseMatrix {
        DenseMatrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64 + salt).sin())
    }

    #[test]
    fn products_match_triple_loop() {
        let a = sample(5, 3, 0.1);
        let b = sample(3, 4, 0.7);
        let c = a.matmul(&b).unwrap();
        assert!(c.sub(&naive(&a, &b)).unwrap().max_abs() < 1e-14);

        let at = a.transpose();
        let tn = at.t_matmul(&b).unwrap();
        assert!(tn.sub(&c).unwrap().max_abs() < 1e-14);

        let bt = b.transpose();
        let nt = a.matmul_t(&bt).unwrap();
        assert!(nt.sub(&c).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn mismatch_is_an_error() {
        let a = sample(2, 3, 0.0);
        assert!(a.matmul(&a).is_err());
    }

    #[test]
    fn empty_inner_dimension_gives_zero() {
        let a = DenseMatrix::zeros(3, 0);
        let b = DenseMatrix::zeros(0, 2);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.shape(), (3, 2));
        assert_eq!(c.max_abs(), 0.0);
    }

    #[test]
    fn gram_outer_is_exactly_symmetric() {
        let a = sample(6, 9, 0.3);
        let g = a.gram_outer();
        assert_eq!(g.asymmetry(), 0.0);
        assert!(g.sub(&naive(&a, &a.transpose())).unwrap().max_abs() < 1e-13);
    }
}
