//! Savitzky-Golay smoothing: per-sample least-squares polynomial fit over a
//! sliding window. Interior samples use the center of the fit; boundary
//! samples evaluate the first/last window's polynomial at their own offset,
//! which keeps the filter exact on polynomials up to the fit degree.

use crate::error::{Error, Result};

/// Smooth `signal` with the given odd window and polynomial degree.
/// Output length equals input length.
pub fn savitzky_golay(signal: &[f64], window: usize, degree: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 {
        return Err(Error::Domain(format!("window must be odd, got {window}")));
    }
    if window <= degree {
        return Err(Error::Domain(format!(
            "window {window} must exceed degree {degree}"
        )));
    }
    let n = signal.len();
    if n < window {
        return Err(Error::Domain(format!(
            "signal length {n} shorter than window {window}"
        )));
    }
    let half = window / 2;
    // Projection matrix M = (XᵀX)⁻¹Xᵀ for offsets -half..=half; the smoothed
    // value at offset t is Σ_j t^j (M y)_j.
    let proj = projection_matrix(window, degree);
    let eval = |window_start: usize, t: f64| -> f64 {
        let mut coeffs = vec![0.0; degree + 1];
        for (j, c) in coeffs.iter_mut().enumerate() {
            let row = &proj[j];
            let mut acc = 0.0;
            for (i, w) in row.iter().enumerate() {
                acc += w * signal[window_start + i];
            }
            *c = acc;
        }
        let mut acc = 0.0;
        let mut tp = 1.0;
        for c in coeffs {
            acc += c * tp;
            tp *= t;
        }
        acc
    };

    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let v = if k < half {
            eval(0, k as f64 - half as f64)
        } else if k + half >= n {
            eval(n - window, (k + window - n) as f64 - half as f64)
        } else {
            eval(k - half, 0.0)
        };
        out.push(v);
    }
    Ok(out)
}

/// (XᵀX)⁻¹Xᵀ with X[i][j] = offset_i^j, returned row-major by coefficient.
fn projection_matrix(window: usize, degree: usize) -> Vec<Vec<f64>> {
    let half = (window / 2) as i64;
    let d = degree + 1;
    // Gram matrix G[j][k] = Σ_i offset^ (j+k)
    let mut g = vec![vec![0.0; d]; d];
    for j in 0..d {
        for k in 0..d {
            let mut acc = 0.0;
            for i in -half..=half {
                acc += (i as f64).powi((j + k) as i32);
            }
            g[j][k] = acc;
        }
    }
    let g_inv = invert(&g);
    // M[j][i] = Σ_k G⁻¹[j][k] · offset_i^k
    let mut m = vec![vec![0.0; window]; d];
    for j in 0..d {
        for (col, i) in (-half..=half).enumerate() {
            let mut acc = 0.0;
            for k in 0..d {
                acc += g_inv[j][k] * (i as f64).powi(k as i32);
            }
            m[j][col] = acc;
        }
    }
    m
}

/// Gauss-Jordan inverse of a small symmetric positive-definite matrix.
fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| aug[i][col].abs().partial_cmp(&aug[j][col].abs()).unwrap())
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p.abs() > 0.0, "singular Gram matrix");
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = aug[row][col];
                if f != 0.0 {
                    let (head, tail) = aug.split_at_mut(row.max(col));
                    let (src, dst) = if row < col {
                        (&tail[0], &mut head[row])
                    } else {
                        (&head[col], &mut tail[0])
                    };
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d -= f * s;
                    }
                }
            }
        }
    }
    aug.into_iter().map(|r| r[n..].to_vec()).collect()
}
