//! Small dense-vector helpers. Vectors are plain `[f64]` slices of length p.

pub fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn add_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

pub fn sub_assign(y: &mut [f64], x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi -= xi;
    }
}

pub fn scale(y: &mut [f64], a: f64) {
    for yi in y.iter_mut() {
        *yi *= a;
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2_sq(x: &[f64]) -> f64 {
    x.iter().map(|a| a * a).sum()
}

pub fn dist2_sq(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|a| a.is_finite())
}

/// Column sum of a list of p-vectors.
pub fn sum_rows(rows: &[Vec<f64>], p: usize) -> Vec<f64> {
    let mut acc = vec![0.0; p];
    for r in rows {
        add_assign(&mut acc, r);
    }
    acc
}

pub fn mean_rows(rows: &[Vec<f64>], p: usize) -> Vec<f64> {
    let mut acc = sum_rows(rows, p);
    if !rows.is_empty() {
        scale(&mut acc, 1.0 / rows.len() as f64);
    }
    acc
}
