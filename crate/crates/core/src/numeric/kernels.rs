/// Stride description of a matrix operand: `(row stride, col stride)`.
/// A transposed view is the same buffer with the strides swapped.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    pub fn row_major(cols: usize) -> Self {
        Layout { rs: cols, cs: 1 }
    }

    pub fn transposed(cols: usize) -> Self {
        Layout { rs: 1, cs: cols }
    }

    fn extent(&self, rows: usize, cols: usize) -> usize {
        if rows == 0 || cols == 0 {
            0
        } else {
            (rows - 1) * self.rs + (cols - 1) * self.cs + 1
        }
    }
}

/// `c = alpha · a·b + beta · c` for `a: [m×k]`, `b: [k×n]`, `c: [m×n]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
    lc: Layout,
) {
    assert!(a.len() >= la.extent(m, k), "gemm: lhs buffer too small");
    assert!(b.len() >= lb.extent(k, n), "gemm: rhs buffer too small");
    assert!(c.len() >= lc.extent(m, n), "gemm: output buffer too small");
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: extents of all three operands were checked above, and `c`
    // is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            lc.rs as isize,
            lc.cs as isize,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transposed_layouts_agree_with_naive_product() {
        // a: 2x3, b: 3x2
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0];
        let mut c = [0.0; 4];
        gemm(2, 3, 2, 1.0, &a, Layout::row_major(3), &b, Layout::row_major(2), 0.0, &mut c, Layout::row_major(2));
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);

        // aᵀ·a using the transposed view of a (3x2 stored as 2x3)
        let mut ata = [0.0; 9];
        gemm(3, 2, 3, 1.0, &a, Layout::transposed(3), &a, Layout::row_major(3), 0.0, &mut ata, Layout::row_major(3));
        assert_eq!(ata, [17.0, 22.0, 27.0, 22.0, 29.0, 36.0, 27.0, 36.0, 45.0]);
    }

    #[test]
    fn zero_inner_dimension_scales_output() {
        let mut c = [1.0, 2.0];
        gemm(1, 0, 2, 1.0, &[], Layout::row_major(0), &[], Layout::row_major(2), 0.5, &mut c, Layout::row_major(2));
        assert_eq!(c, [0.5, 1.0]);
    }
}
