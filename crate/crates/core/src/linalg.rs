//! Tiny dense linear algebra over [`Dual`] entries, used by the path solvers.

use crate::autodiff::Dual;

/// Solves `a x = b` by Gaussian elimination with partial pivoting (pivoting
/// on values only). `a` is row-major `n x n`. Returns `None` when a pivot is
/// negligible relative to the largest entry.
pub(crate) fn solve(mut a: Vec<Dual>, mut b: Vec<Dual>) -> Option<Vec<Dual>> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().map(|v| v.value().abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[j * n + col].value().abs())
            })
            .unwrap();
        if a[piv * n + col].value().abs() <= 1e-14 * scale {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let inv = a[col * n + col].recip();
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f.value() == 0.0 && f.grad().iter().all(|g| *g == 0.0) {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= f * v;
            }
            let bc = b[col];
            b[row] -= f * bc;
        }
    }
    let mut x = vec![Dual::constant(0.0); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Some(x)
}
