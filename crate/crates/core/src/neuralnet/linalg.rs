//! Matrix products used by the layers. Small batches skip the packed gemm
//! path, whose packing cost dominates for a handful of rows.

use ndarray::{Array2, ArrayView2};

const SMALL_BATCH: usize = 8;

/// `x · w`
pub(crate) fn mul(x: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    if x.nrows() > SMALL_BATCH || !w.is_standard_layout() {
        return x.dot(&w);
    }
    let (n, k) = x.dim();
    let m = w.ncols();
    let ws = w.as_slice().expect("standard layout");
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for kk in 0..k {
            let a = x[[i, kk]];
            if a == 0.0 {
                continue;
            }
            let wr = &ws[kk * m..(kk + 1) * m];
            for (o, &b) in row.iter_mut().zip(wr) {
                *o += a * b;
            }
        }
    }
    Array2::from_shape_vec((n, m), out).expect("shape")
}

/// `d · wᵀ`
pub(crate) fn mul_bt(d: ArrayView2<'_, f64>, w: ArrayView2<'_, f64>) -> Array2<f64> {
    if d.nrows() > SMALL_BATCH || !w.is_standard_layout() || !d.is_standard_layout() {
        return d.dot(&w.t());
    }
    let (n, m) = d.dim();
    let k = w.nrows();
    let ws = w.as_slice().expect("standard layout");
    let ds = d.as_slice().expect("standard layout");
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let dr = &ds[i * m..(i + 1) * m];
        for kk in 0..k {
            let wr = &ws[kk * m..(kk + 1) * m];
            out[i * k + kk] = dr.iter().zip(wr).map(|(a, b)| a * b).sum();
        }
    }
    Array2::from_shape_vec((n, k), out).expect("shape")
}

/// `xᵀ · d`
pub(crate) fn mul_at(x: ArrayView2<'_, f64>, d: ArrayView2<'_, f64>) -> Array2<f64> {
    if x.nrows() > SMALL_BATCH || !d.is_standard_layout() {
        return x.t().dot(&d);
    }
    let (n, k) = x.dim();
    let m = d.ncols();
    let ds = d.as_slice().expect("standard layout");
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let dr = &ds[i * m..(i + 1) * m];
        for kk in 0..k {
            let a = x[[i, kk]];
            if a == 0.0 {
                continue;
            }
            for (o, &b) in out[kk * m..(kk + 1) * m].iter_mut().zip(dr) {
                *o += a * b;
            }
        }
    }
    Array2::from_shape_vec((k, m), out).expect("shape")
}
