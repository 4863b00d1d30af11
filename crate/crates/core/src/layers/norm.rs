use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-row statistics and normalized output saved for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub mean: Vec<f64>,
    /// sqrt(population variance + eps), one per row.
    pub std: Vec<f64>,
    pub normalized: Matrix,
}

/// Row-wise standardization y = (x - mu) / sqrt(var + eps), with mu and var
/// the per-row mean and population variance. No learned gain or bias.
pub fn layernorm_forward(x: &Matrix, eps: f64) -> Result<(Matrix, LayerNormCache)> {
    if eps <= 0.0 {
        return Err(Error::Argument(format!("layernorm eps must be > 0, got {}", eps)));
    }
    let n = x.cols() as f64;
    let mut y = x.clone();
    let mut mean = Vec::with_capacity(x.rows());
    let mut std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let row = y.row_mut(i);
        let mu = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        let s = (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mu) / s;
        }
        mean.push(mu);
        std.push(s);
    }
    let cache = LayerNormCache {
        mean,
        std,
        normalized: y.clone(),
    };
    Ok((y, cache))
}

/// Exact gradient of the normalization including the dependence of mu and
/// sigma on x: dx = (dy - mean(dy) - y * mean(dy .* y)) / std, per row.
pub fn layernorm_backward(cache: &LayerNormCache, dy: &Matrix) -> Result<Matrix> {
    let rows = cache.normalized.rows();
    let cols = cache.normalized.cols();
    if dy.rows() != rows || dy.cols() != cols {
        return Err(Error::Shape(format!(
            "layernorm_backward: dy {}x{} vs cache {}x{}",
            dy.rows(),
            dy.cols(),
            rows,
            cols
        )));
    }
    let n = cols as f64;
    let mut dx = Matrix::zeros(rows, cols);
    for i in 0..rows {
        let y = cache.normalized.row(i);
        let g = dy.row(i);
        let mean_g = g.iter().sum::<f64>() / n;
        let mean_gy = g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / n;
        let s = cache.std[i];
        for j in 0..cols {
            dx.set(i, j, (g[j] - mean_g - y[j] * mean_gy) / s);
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{rng_matrix, SeededRng};

    #[test]
    fn constant_row_normalizes_to_zero() {
        let x = Matrix::from_rows(&[vec![5.0, 5.0, 5.0]]).unwrap();
        let (y, _) = layernorm_forward(&x, 1e-5).unwrap();
        assert!(y.as_slice().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn hand_computed_row() {
        // mu = 2, sigma = sqrt(2/3)
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let (y, _) = layernorm_forward(&x, 1e-12).unwrap();
        assert!((y.get(0, 0) + 1.22474).abs() < 1e-4);
        assert!(y.get(0, 1).abs() < 1e-4);
        assert!((y.get(0, 2) - 1.22474).abs() < 1e-4);
    }

    #[test]
    fn output_rows_centered() {
        let mut rng = SeededRng::new(4);
        let x = rng_matrix(&mut rng, 6, 9, -3.0, 3.0).unwrap();
        let (y, _) = layernorm_forward(&x, 1e-5).unwrap();
        for i in 0..6 {
            let mean: f64 = y.row(i).iter().sum::<f64>() / 9.0;
            assert!(mean.abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_nonpositive_eps() {
        let x = Matrix::zeros(1, 2);
        assert!(layernorm_forward(&x, 0.0).is_err());
    }

    #[test]
    fn backward_zero_upstream() {
        let x = Matrix::from_rows(&[vec![1.0, -2.0, 0.5]]).unwrap();
        let (_, cache) = layernorm_forward(&x, 1e-5).unwrap();
        let dx = layernorm_backward(&cache, &Matrix::zeros(1, 3)).unwrap();
        assert_eq!(dx, Matrix::zeros(1, 3));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = SeededRng::new(8);
        let x = rng_matrix(&mut rng, 2, 5, -2.0, 2.0).unwrap();
        let dy = rng_matrix(&mut rng, 2, 5, -1.0, 1.0).unwrap();
        let eps = 1e-5;
        let loss = |x: &Matrix| -> f64 {
            let (y, _) = layernorm_forward(x, eps).unwrap();
            y.as_slice()
                .iter()
                .zip(dy.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        };
        let (_, cache) = layernorm_forward(&x, eps).unwrap();
        let dx = layernorm_backward(&cache, &dy).unwrap();
        let h = 1e-5;
        let mut xm = x.clone();
        for i in 0..2 {
            for j in 0..5 {
                let orig = xm.get(i, j);
                xm.set(i, j, orig + h);
                let up = loss(&xm);
                xm.set(i, j, orig - h);
                let down = loss(&xm);
                xm.set(i, j, orig);
                let numeric = (up - down) / (2.0 * h);
                let analytic = dx.get(i, j);
                let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "[{},{}] {} vs {}", i, j, analytic, numeric);
            }
        }
    }

    #[test]
    fn constant_upstream_rows_give_zero_sum_gradient() {
        let mut rng = SeededRng::new(17);
        let x = rng_matrix(&mut rng, 3, 7, -2.0, 2.0).unwrap();
        let (_, cache) = layernorm_forward(&x, 1e-5).unwrap();
        let mut dy = Matrix::zeros(3, 7);
        for i in 0..3 {
            for j in 0..7 {
                dy.set(i, j, 1.7 * (i as f64 + 1.0));
            }
        }
        let dx = layernorm_backward(&cache, &dy).unwrap();
        for i in 0..3 {
            let sum: f64 = dx.row(i).iter().sum();
            assert!(sum.abs() < 1e-9, "row {} sum {}", i, sum);
        }
    }

    #[test]
    fn near_zero_eps_gives_unit_variance() {
        let mut rng = SeededRng::new(23);
        let x = rng_matrix(&mut rng, 4, 8, -5.0, 5.0).unwrap();
        let (y, _) = layernorm_forward(&x, 1e-12).unwrap();
        for i in 0..4 {
            let var: f64 = y.row(i).iter().map(|v| v * v).sum::<f64>() / 8.0;
            assert!((var - 1.0).abs() < 1e-6, "row {} var {}", i, var);
        }
    }
}
