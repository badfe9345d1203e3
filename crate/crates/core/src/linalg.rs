//! Dense row-major matrix-vector kernels.

use ndarray::{Array1, ArrayView1, ArrayView2};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `A v` for a standard-layout `A`.
pub fn matvec(a: ArrayView2<f64>, v: ArrayView1<f64>) -> Array1<f64> {
    let n = a.ncols();
    let vs = v.to_slice().map(|s| s.to_vec()).unwrap_or_else(|| v.to_vec());
    match a.as_slice() {
        Some(data) => data.chunks_exact(n.max(1)).map(|row| dot(row, &vs)).collect(),
        None => a.dot(&v),
    }
}

/// `A^T w` for a standard-layout `A`.
pub fn matvec_t(a: ArrayView2<f64>, w: ArrayView1<f64>) -> Array1<f64> {
    let n = a.ncols();
    match a.as_slice() {
        Some(data) => {
            let mut out = vec![0.0; n];
            for (row, &wi) in data.chunks_exact(n.max(1)).zip(w.iter()) {
                if wi != 0.0 {
                    for (o, r) in out.iter_mut().zip(row) {
                        *o += wi * r;
                    }
                }
            }
            Array1::from(out)
        }
        None => a.t().dot(&w),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn kernels_match_ndarray() {
        let a = Array2::from_shape_fn((7, 5), |(i, j)| ((i * 5 + j) as f64).sin());
        let v = Array1::from_shape_fn(5, |i| i as f64 - 2.0);
        let w = Array1::from_shape_fn(7, |i| (i as f64).cos());
        let d1 = &matvec(a.view(), v.view()) - &a.dot(&v);
        let d2 = &matvec_t(a.view(), w.view()) - &a.t().dot(&w);
        assert!(d1.iter().chain(d2.iter()).all(|x| x.abs() < 1e-13));
        let at = a.t();
        let d3 = &matvec(at, w.view()) - &at.dot(&w);
        assert!(d3.iter().all(|x| x.abs() < 1e-13));
    }
}
