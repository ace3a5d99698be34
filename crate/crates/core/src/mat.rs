//! Small helpers over row-major `ndarray` matrices.

use ndarray::Array2;

/// Contiguous view of row `i`. All matrices in this crate are standard
/// (row-major) layout, so rows are contiguous slices.
pub(crate) fn row(m: &Array2<f64>, i: usize) -> &[f64] {
    let d = m.ncols();
    let flat = m.as_slice().expect("standard layout");
    &flat[i * d..(i + 1) * d]
}

pub(crate) fn row_mut(m: &mut Array2<f64>, i: usize) -> &mut [f64] {
    let d = m.ncols();
    let flat = m.as_slice_mut().expect("standard layout");
    &mut flat[i * d..(i + 1) * d]
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = x - y;
        acc += diff * diff;
    }
    acc
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
